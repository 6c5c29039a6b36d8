"""Reactance-perturbation engine: circuit bases, attack-space dimension,
deployment suprema and the multi-stage schedule search.

Core identity: with G the fundamental loop matrix and X = diag(x), the
circuit basis F = GX annihilates every consistent flow pattern (Kirchhoff's
voltage law), so an attack a is invisible at reactance setting x exactly
when F a = 0. Stacking the bases of several settings into a composite L,
the attacks invisible at every setting form ker(L), and the surviving
attack-space dimension is m - rank(L).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .topology import DeploymentPlan, LoopMatrix, Topology, find_bridges

__all__ = [
    "RANK_REL_EPS",
    "CircuitBasis",
    "CompositeMatrix",
    "MtdSchedule",
    "Completeness",
    "SearchError",
    "circuit_basis",
    "composite_matrix",
    "numerical_rank",
    "doa",
    "supremum",
    "plan_mmtd",
    "stealthy_basis",
    "verify_completeness",
]

# relative SVD cutoff for every rank decision in this package; acceptance
# values are pinned against this constant
RANK_REL_EPS = 1e-12


class SearchError(RuntimeError):
    """Schedule search exhausted its retry budget without a usable stage."""


@dataclass(frozen=True)
class CircuitBasis:
    """F = G diag(x): one Kirchhoff voltage row per fundamental cycle."""

    matrix: np.ndarray  # (m-n) x m
    x: np.ndarray


@dataclass(frozen=True)
class CompositeMatrix:
    """Vertically stacked circuit bases of the stage reactance settings."""

    matrix: np.ndarray
    stages: int  # number of stacked bases


def circuit_basis(loops: LoopMatrix, x) -> CircuitBasis:
    x = np.asarray(x, dtype=float)
    m = loops.matrix.shape[1]
    if x.shape != (m,):
        raise ValueError(f"x must have shape ({m},), got {x.shape}")
    if np.any(x <= 0):
        raise ValueError("reactances must be positive")
    return CircuitBasis(matrix=loops.matrix * x[None, :], x=x)


def composite_matrix(loops: LoopMatrix, stage_xs) -> CompositeMatrix:
    stage_xs = list(stage_xs)
    if not stage_xs:
        raise ValueError("at least one reactance setting required")
    blocks = [circuit_basis(loops, x).matrix for x in stage_xs]
    return CompositeMatrix(matrix=np.vstack(blocks), stages=len(blocks))


def numerical_rank(M, rel_eps: float = RANK_REL_EPS) -> int:
    """SVD rank with tolerance max(rows, cols) * sigma_max * rel_eps."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    tol = max(M.shape) * s[0] * rel_eps
    return int(np.sum(s > tol))


def doa(stage_xs, loops: LoopMatrix) -> int:
    """Attack-space dimension surviving every stage: m - rank(L)."""
    comp = composite_matrix(loops, stage_xs)
    return comp.matrix.shape[1] - numerical_rank(comp.matrix)


def supremum(plan: DeploymentPlan) -> int:
    """Largest composite rank any schedule on this deployment can reach."""
    return plan.supremum


@dataclass(frozen=True)
class MtdSchedule:
    """Planned perturbation stages with their rank bookkeeping.

    ``rank_trajectory[0]`` is the rank of the unperturbed basis (m - n);
    entry k is the composite rank after stage k. ``complete`` records
    whether the deployment supremum was reached within the stage budget.
    """

    x0: np.ndarray
    stages: tuple[np.ndarray, ...]
    deployment: tuple[int, ...]
    tau: float
    rank_trajectory: tuple[int, ...]
    supremum: int
    complete: bool

    @property
    def final_doa(self) -> int:
        return len(self.x0) - self.rank_trajectory[-1]

    def all_settings(self) -> list[np.ndarray]:
        return [self.x0, *self.stages]


def plan_mmtd(
    x0,
    plan: DeploymentPlan,
    loops: LoopMatrix,
    tau: float,
    rng: np.random.Generator,
    max_stages: int = 8,
    min_shift: float = 0.0,
    candidates: int = 8,
    batches: int = 16,
) -> MtdSchedule:
    """Greedy multi-stage schedule search.

    Each stage samples ``candidates`` reactance vectors uniformly in the
    tau-box around x0 on the deployment branches (magnitude at least
    ``min_shift`` when given, sign random), discards the ones linearly
    dependent on earlier settings when restricted to deployment
    coordinates, and accepts the lowest-index candidate with the largest
    strictly positive composite-rank gain. A stage with no acceptable
    candidate is resampled up to ``batches`` times before giving up.

    Stops once the composite rank reaches the deployment supremum; hitting
    ``max_stages`` first yields a schedule flagged incomplete.
    """
    x0 = np.asarray(x0, dtype=float)
    m = loops.matrix.shape[1]
    if x0.shape != (m,):
        raise ValueError(f"x0 must have shape ({m},), got {x0.shape}")
    if np.any(x0 <= 0):
        raise ValueError("reactances must be positive")
    if not (0 < tau < 1):
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    if not (0 <= min_shift < tau):
        raise ValueError(f"min_shift must be in [0, tau), got {min_shift}")
    if max_stages < 1:
        raise ValueError("max_stages must be at least 1")

    kd = np.array([d - 1 for d in plan.deployment], dtype=int)
    target = plan.supremum
    blocks = [loops.matrix * x0[None, :]]
    rank_now = numerical_rank(blocks[0])
    trajectory = [rank_now]
    history = [x0[kd]] if kd.size else []
    stages: list[np.ndarray] = []

    while rank_now < target and len(stages) < max_stages:
        if kd.size == 0:
            raise SearchError("deployment is empty but supremum not yet reached")
        accepted = None
        for _ in range(batches):
            best_gain = 0
            best = None
            for _ in range(candidates):
                mag = rng.uniform(min_shift, tau, size=kd.size)
                sign = rng.choice((-1.0, 1.0), size=kd.size)
                x_c = x0.copy()
                x_c[kd] = x0[kd] * (1.0 + sign * mag)
                restricted = np.column_stack(history + [x_c[kd]])
                if numerical_rank(restricted) != len(history) + 1:
                    continue
                gain = numerical_rank(np.vstack(blocks + [loops.matrix * x_c[None, :]])) - rank_now
                if gain > best_gain:
                    best_gain = gain
                    best = x_c
            if best is not None:
                accepted = (best, best_gain)
                break
        if accepted is None:
            raise SearchError(
                f"no rank-improving stage found after {batches} batches of {candidates} "
                f"candidates (rank {rank_now} of {target})"
            )
        x_k, gain = accepted
        stages.append(x_k)
        blocks.append(loops.matrix * x_k[None, :])
        history.append(x_k[kd])
        rank_now += gain
        trajectory.append(rank_now)

    return MtdSchedule(
        x0=x0,
        stages=tuple(stages),
        deployment=plan.deployment,
        tau=tau,
        rank_trajectory=tuple(trajectory),
        supremum=target,
        complete=rank_now == target,
    )


def _canonical_rows(B: np.ndarray) -> np.ndarray:
    """Reduced row echelon form with pivots preferred in the LAST coordinates.

    Rows of B span a subspace; the result spans the same subspace with each
    row scaled to +1 at its pivot and zeros in other rows' pivot columns,
    rows ordered by pivot coordinate ascending. Pivoting from the right
    yields the conventional presentation of attack vectors (trailing
    coordinates normalized to 1).
    """
    A = np.array(B[:, ::-1], dtype=float)
    rows, cols = A.shape
    if rows == 0:
        return A
    tol = 1e-10 * max(1.0, float(np.max(np.abs(A))))
    pivots: list[tuple[int, int]] = []  # (row, flipped column)
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        pick = r + int(np.argmax(np.abs(A[r:, c])))
        if abs(A[pick, c]) <= tol:
            continue
        A[[r, pick]] = A[[pick, r]]
        A[r] = A[r] / A[r, c]
        for other in range(rows):
            if other != r and A[other, c] != 0.0:
                A[other] = A[other] - A[other, c] * A[r]
        pivots.append((r, c))
        r += 1
    # flip back and order rows by original pivot coordinate ascending;
    # adding 0.0 folds negative zeros from the elimination into plain zeros
    out = A[:, ::-1] + 0.0
    order = sorted(range(len(pivots)), key=lambda i: cols - 1 - pivots[i][1])
    return np.vstack([out[pivots[i][0]] for i in order]) if pivots else out[:0]


def stealthy_basis(stage_xs, loops: LoopMatrix) -> np.ndarray:
    """Canonical basis of the attack space invisible at every stage.

    Returns one attack vector per row (possibly zero rows), normalized so
    each has a +1 pivot in its last nonzero coordinate and the rows are
    zero in each other's pivot coordinates.
    """
    comp = composite_matrix(loops, stage_xs)
    M = comp.matrix
    u, s, vt = np.linalg.svd(M)
    if s.size and s[0] > 0:
        tol = max(M.shape) * s[0] * RANK_REL_EPS
        rank = int(np.sum(s > tol))
    else:
        rank = 0
    kernel = vt[rank:]
    return _canonical_rows(kernel)


@dataclass(frozen=True)
class Completeness:
    """Whether perturbation can in principle expose every attack."""

    complete: bool
    doi: int  # count of one-line cuts, each an irreducibly stealthy line
    bridges: frozenset[int]


def verify_completeness(t: Topology) -> Completeness:
    bridges = find_bridges(t)
    return Completeness(complete=not bridges, doi=len(bridges), bridges=bridges)
