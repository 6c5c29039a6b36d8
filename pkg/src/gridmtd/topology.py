"""Branch-graph structure: bridges, spanning trees, cycles and cuts.

The measurement graph treats buses as vertices and in-service branches as
edges, keeping parallel branches distinct (they are separate measurements
and separate cycle-space coordinates, so a multigraph is required). All
public branch indices are 1-based file-order positions, matching case_io.

Sign conventions, used consistently everywhere downstream:

* A fundamental cycle is traversed in the direction of its defining cotree
  branch (from-bus toward to-bus). A branch picked up along the cycle gets
  +1 when traversed from its own from-bus to its to-bus, -1 the other way.
* A fundamental cut row carries +1 for branches leaving the from-side of
  the severed tree branch and -1 for branches entering it. The tree branch
  itself therefore always gets +1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .case_io import GridCase

__all__ = [
    "Topology",
    "SpanningForest",
    "LoopMatrix",
    "CutBasis",
    "DeploymentPlan",
    "find_bridges",
    "spanning_forest",
    "fundamental_cycles",
    "fundamental_cuts",
    "deployment_plan",
    "analyze_deployment",
]


@dataclass(frozen=True)
class Topology:
    """Multigraph view of a case: bus ids, reference bus, branch endpoints."""

    bus_ids: tuple[int, ...]
    ref_bus: int
    branches: tuple[tuple[int, int], ...]  # (from_bus, to_bus) per branch

    @classmethod
    def from_case(cls, case: GridCase) -> "Topology":
        return cls(
            bus_ids=tuple(b.id for b in case.buses),
            ref_bus=case.ref_bus,
            branches=tuple((br.from_bus, br.to_bus) for br in case.branches),
        )

    @property
    def m(self) -> int:
        return len(self.branches)

    @property
    def n(self) -> int:
        return len(self.bus_ids) - 1

    @cached_property
    def _bus_pos(self) -> dict[int, int]:
        return {b: i for i, b in enumerate(self.bus_ids)}

    @cached_property
    def _adjacency(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """Per bus position: (neighbor position, 1-based branch index) pairs."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.bus_ids]
        pos = self._bus_pos
        for idx, (f, t) in enumerate(self.branches, start=1):
            adj[pos[f]].append((pos[t], idx))
            adj[pos[t]].append((pos[f], idx))
        return tuple(tuple(a) for a in adj)


def find_bridges(t: Topology) -> frozenset[int]:
    """1-based indices of bridge branches (removal disconnects their ends).

    Iterative DFS with low-point tracking. Parallel branches are kept
    distinct, so a doubled edge is never a bridge: the DFS skips only the
    specific branch it entered a vertex through, by branch index.
    """
    adj = t._adjacency
    n_v = len(t.bus_ids)
    disc = [-1] * n_v
    low = [0] * n_v
    bridges: set[int] = set()
    timer = 0
    for root in range(n_v):
        if disc[root] != -1:
            continue
        # stack entries: (vertex, branch index used to enter, iterator state)
        stack = [(root, 0, iter(adj[root]))]
        disc[root] = low[root] = timer
        timer += 1
        while stack:
            v, in_branch, it = stack[-1]
            advanced = False
            for w, branch in it:
                if branch == in_branch:
                    continue
                if disc[w] == -1:
                    disc[w] = low[w] = timer
                    timer += 1
                    stack.append((w, branch, iter(adj[w])))
                    advanced = True
                    break
                low[v] = min(low[v], disc[w])
            if not advanced:
                stack.pop()
                if stack:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[v])
                    if low[v] > disc[parent]:
                        bridges.add(in_branch)
    return frozenset(bridges)


@dataclass(frozen=True)
class SpanningForest:
    """Partition of the branch set into a maximal forest and its complement."""

    tree_edges: tuple[int, ...]
    cotree_edges: tuple[int, ...]


def _kruskal(t: Topology, order) -> list[int]:
    """Greedy acyclic selection over branch indices in the given order."""
    pos = t._bus_pos
    parent = list(range(len(t.bus_ids)))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    chosen = []
    for idx in order:
        f, u = t.branches[idx - 1]
        ra, rb = find(pos[f]), find(pos[u])
        if ra != rb:
            parent[ra] = rb
            chosen.append(idx)
    return chosen


def spanning_forest(t: Topology, weights=None) -> SpanningForest:
    """Minimum-weight spanning forest (Kruskal).

    ``weights`` orders the greedy scan (ascending); ties break by branch
    index, so the result is deterministic. With no weights the forest is
    simply the lexicographically first acyclic subset.
    """
    m = t.m
    if weights is None:
        order = range(1, m + 1)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (m,):
            raise ValueError(f"weights must have shape ({m},), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        order = [int(i) + 1 for i in np.lexsort((np.arange(m), w))]
    tree = sorted(_kruskal(t, order))
    tree_set = set(tree)
    cotree = tuple(i for i in range(1, m + 1) if i not in tree_set)
    return SpanningForest(tree_edges=tuple(tree), cotree_edges=cotree)


@dataclass(frozen=True)
class LoopMatrix:
    """Fundamental cycle incidence: one row per cotree branch, m columns."""

    matrix: np.ndarray
    cotree: tuple[int, ...]  # 1-based cotree branch index per row


@dataclass(frozen=True)
class CutBasis:
    """Fundamental cut incidence: one row per tree branch, m columns."""

    matrix: np.ndarray
    tree: tuple[int, ...]  # 1-based tree branch index per row
    sides: tuple[frozenset[int], ...]  # from-side bus ids per row


def _tree_structure(t: Topology, tree):
    """Rooted forest arrays (parent vertex, parent branch, depth) per vertex."""
    pos = t._bus_pos
    tree_adj: list[list[tuple[int, int]]] = [[] for _ in t.bus_ids]
    for idx in tree:
        f, u = t.branches[idx - 1]
        tree_adj[pos[f]].append((pos[u], idx))
        tree_adj[pos[u]].append((pos[f], idx))
    n_v = len(t.bus_ids)
    parent = [-1] * n_v
    parent_branch = [0] * n_v
    depth = [-1] * n_v
    for root in range(n_v):
        if depth[root] != -1:
            continue
        depth[root] = 0
        queue = [root]
        while queue:
            v = queue.pop()
            for w, idx in tree_adj[v]:
                if depth[w] == -1:
                    depth[w] = depth[v] + 1
                    parent[w] = v
                    parent_branch[w] = idx
                    queue.append(w)
    return parent, parent_branch, depth


def fundamental_cycles(t: Topology, f: SpanningForest | None = None) -> LoopMatrix:
    """Loop matrix G for the fundamental cycles of a spanning forest.

    Row k corresponds to cotree branch ``cotree[k]`` and is supported on
    that branch plus the tree path between its endpoints. Each cycle is
    traversed along its cotree branch's own orientation, so G[k, cotree[k]]
    is always +1.
    """
    if f is None:
        f = spanning_forest(t)
    tree = f.tree_edges
    cotree = f.cotree_edges
    parent, parent_branch, depth = _tree_structure(t, tree)
    pos = t._bus_pos

    def climb_sign(vertex: int, branch: int, toward_root_is_cycle_dir: bool) -> float:
        # branch is traversed root-ward from `vertex`; from->to along the
        # cycle yields +1, so compare the branch's own from-bus with the
        # vertex we are leaving
        leaving_from_bus = pos[t.branches[branch - 1][0]] == vertex
        along = leaving_from_bus == toward_root_is_cycle_dir
        return 1.0 if along else -1.0

    G = np.zeros((len(cotree), t.m))
    for row, idx in enumerate(cotree):
        fb, tb = t.branches[idx - 1]
        G[row, idx - 1] = 1.0
        a, b = pos[fb], pos[tb]
        if depth[a] == -1 or depth[b] == -1:
            raise ValueError(f"cotree branch {idx} endpoints not spanned by the forest")
        # the cycle runs from-bus -> (cotree branch) -> to-bus -> tree path
        # back to from-bus; climbing from the to-bus side follows the cycle
        # direction, climbing from the from-bus side opposes it
        while depth[a] > depth[b]:
            br = parent_branch[a]
            G[row, br - 1] = climb_sign(a, br, False)
            a = parent[a]
        while depth[b] > depth[a]:
            br = parent_branch[b]
            G[row, br - 1] = climb_sign(b, br, True)
            b = parent[b]
        while a != b:
            br = parent_branch[a]
            G[row, br - 1] = climb_sign(a, br, False)
            a = parent[a]
            br = parent_branch[b]
            G[row, br - 1] = climb_sign(b, br, True)
            b = parent[b]
    return LoopMatrix(matrix=G, cotree=cotree)


def fundamental_cuts(t: Topology, f: SpanningForest | None = None) -> CutBasis:
    """Cut matrix for the fundamental cuts of a spanning forest.

    Severing tree branch ``tree[k]`` splits its component in two; row k
    carries +1 for branches directed out of the side containing the severed
    branch's from-bus and -1 for branches directed into it.
    """
    if f is None:
        f = spanning_forest(t)
    tree = f.tree_edges
    pos = t._bus_pos
    tree_adj: list[list[tuple[int, int]]] = [[] for _ in t.bus_ids]
    for idx in tree:
        fb, tb = t.branches[idx - 1]
        tree_adj[pos[fb]].append((pos[tb], idx))
        tree_adj[pos[tb]].append((pos[fb], idx))

    rows = []
    sides = []
    for idx in tree:
        fb, _tb = t.branches[idx - 1]
        # flood fill from the from-bus without crossing the severed branch
        side = {pos[fb]}
        queue = [pos[fb]]
        while queue:
            v = queue.pop()
            for w, br in tree_adj[v]:
                if br == idx or w in side:
                    continue
                side.add(w)
                queue.append(w)
        row = np.zeros(t.m)
        for j, (a, b) in enumerate(t.branches, start=1):
            fa, fbq = pos[a] in side, pos[b] in side
            if fa and not fbq:
                row[j - 1] = 1.0
            elif fbq and not fa:
                row[j - 1] = -1.0
        rows.append(row)
        sides.append(frozenset(t.bus_ids[v] for v in side))
    matrix = np.vstack(rows) if rows else np.zeros((0, t.m))
    return CutBasis(matrix=matrix, tree=tuple(tree), sides=tuple(sides))


@dataclass(frozen=True)
class DeploymentPlan:
    """Where perturbation hardware goes and what that limits.

    ``single_cuts`` records the branches that form one-line cuts of the
    system: they lie on no cycle, so no reactance setting ever exposes an
    attack confined to them, and deploying hardware there buys nothing.
    ``supremum`` is the largest composite rank any schedule on this
    deployment can reach: m - n + m_d - m_sc_d.
    """

    deployment: tuple[int, ...]
    single_cuts: frozenset[int]
    m_d: int
    m_sc_d: int
    supremum: int


def deployment_plan(t: Topology, weights=None) -> DeploymentPlan:
    """Plan a deployment: spanning forest minus one-line cuts.

    Perturbing a branch that is alone in a cut never hides or reveals any
    other branch, so such branches are excluded up front. What remains is
    acyclic and shares every fundamental cut with cotree branches, which
    makes the supremum the best possible for the whole system: m - m_sc.
    """
    bridges = find_bridges(t)
    forest = spanning_forest(t, weights)
    deployment = tuple(i for i in forest.tree_edges if i not in bridges)
    return analyze_deployment(t, deployment)


def analyze_deployment(t: Topology, deployment) -> DeploymentPlan:
    """Evaluate an arbitrary deployment set.

    m_d counts a maximal forest inside the deployment (a cycle within the
    deployment adds nothing: its branches' perturbations are not jointly
    independent), m_sc_d counts the one-line cuts inside that forest, and
    the achievable supremum is m - n + m_d - m_sc_d.
    """
    deployment = tuple(sorted(set(int(d) for d in deployment)))
    if deployment and (deployment[0] < 1 or deployment[-1] > t.m):
        raise ValueError(f"deployment indices must lie in 1..{t.m}")
    bridges = find_bridges(t)
    forest_in_deployment = _kruskal(t, deployment)
    m_d = len(forest_in_deployment)
    m_sc_d = sum(1 for i in forest_in_deployment if i in bridges)
    supremum = t.m - t.n + m_d - m_sc_d
    return DeploymentPlan(
        deployment=deployment,
        single_cuts=bridges,
        m_d=m_d,
        m_sc_d=m_sc_d,
        supremum=supremum,
    )
