import numpy as np
import pytest

from gridmtd.case_io import load_bundled_case
from gridmtd.mtd import numerical_rank
from gridmtd.topology import (
    Topology,
    analyze_deployment,
    deployment_plan,
    find_bridges,
    fundamental_cuts,
    fundamental_cycles,
    spanning_forest,
)

from _oracles import (
    bruteforce_bridges,
    random_multigraph,
    supremum_by_components,
)

BUNDLED_BRIDGES = {
    "bus3": frozenset(),
    "bus6": frozenset(),
    "bus14": frozenset({14}),
    "bus39": frozenset({5, 14, 20, 27, 32, 33, 34, 37, 39, 41, 46}),
    "bus57": frozenset({45}),
    "bus118": frozenset({7, 9, 113, 133, 134, 176, 177, 183, 184}),
}

TREE_DEPLOYMENT_SIZES = {"bus6": 5, "bus14": 12, "bus39": 27, "bus57": 55, "bus118": 108}


def topo(name):
    return Topology.from_case(load_bundled_case(name))


def test_bridges_on_bundled_cases():
    for name, expected in BUNDLED_BRIDGES.items():
        assert find_bridges(topo(name)) == expected, name


def test_bridges_match_bruteforce_on_random_multigraphs():
    rng = np.random.default_rng(42)
    for _ in range(200):
        t, _ = random_multigraph(rng)
        assert find_bridges(t) == bruteforce_bridges(t)


def test_parallel_branches_are_never_bridges():
    t = Topology(bus_ids=(1, 2, 3), ref_bus=1, branches=((1, 2), (1, 2), (2, 3)))
    assert find_bridges(t) == frozenset({3})


def test_spanning_forest_is_acyclic_and_maximal():
    rng = np.random.default_rng(7)
    for _ in range(100):
        t, _ = random_multigraph(rng)
        f = spanning_forest(t)
        assert sorted(f.tree_edges + f.cotree_edges) == list(range(1, t.m + 1))
        # tree has n edges on a connected graph and contains every bridge
        assert len(f.tree_edges) == t.n
        assert bruteforce_bridges(t) <= set(f.tree_edges)
        G = fundamental_cycles(t, f).matrix
        assert G.shape == (t.m - t.n, t.m)


def test_spanning_forest_respects_injected_weights():
    # the 6-bus system with priority weights on branches {2,3,5,8,9}
    t = topo("bus6")
    weights = np.ones(t.m)
    for idx in (2, 3, 5, 8, 9):
        weights[idx - 1] = 0.0
    f = spanning_forest(t, weights=weights)
    assert f.tree_edges == (2, 3, 5, 8, 9)
    assert f.cotree_edges == (1, 4, 6, 7, 10, 11)


def test_spanning_forest_rejects_bad_weights():
    t = topo("bus3")
    with pytest.raises(ValueError):
        spanning_forest(t, weights=[1.0, 2.0])  # wrong length
    with pytest.raises(ValueError):
        spanning_forest(t, weights=[1.0, np.inf, 2.0])


def test_bus3_cycle_matrix_convention():
    t = topo("bus3")
    loops = fundamental_cycles(t)
    assert loops.cotree == (3,)
    # cycle traversed along branch 3 (2->3): forward on 3, forward on 1,
    # against 2
    np.testing.assert_allclose(loops.matrix, [[1.0, -1.0, 1.0]])


def test_cut_rows_carry_plus_one_on_their_tree_branch():
    rng = np.random.default_rng(11)
    for _ in range(50):
        t, _ = random_multigraph(rng)
        cuts = fundamental_cuts(t)
        for row, idx in enumerate(cuts.tree):
            assert cuts.matrix[row, idx - 1] == 1.0
            fb = t.branches[idx - 1][0]
            assert fb in cuts.sides[row]


def test_cycle_space_orthogonal_to_cut_space():
    rng = np.random.default_rng(3)
    for _ in range(100):
        t, _ = random_multigraph(rng)
        f = spanning_forest(t)
        G = fundamental_cycles(t, f).matrix
        D = fundamental_cuts(t, f).matrix
        assert np.max(np.abs(G @ D.T), initial=0.0) < 1e-12


def test_tree_deployment_sizes():
    for name, size in TREE_DEPLOYMENT_SIZES.items():
        plan = deployment_plan(topo(name))
        assert plan.m_d == size
        assert len(plan.deployment) == size


def test_deployment_plan_excludes_bridges_and_reports_them():
    for name, bridges in BUNDLED_BRIDGES.items():
        plan = deployment_plan(topo(name))
        assert plan.single_cuts == bridges
        assert not (set(plan.deployment) & bridges)
        assert plan.m_sc_d == 0  # tree deployments drop every bridge


def test_analyze_deployment_edge_cases():
    t = topo("bus14")  # m=20, n=13, one bridge
    full = analyze_deployment(t, range(1, t.m + 1))
    assert full.m_d == t.n
    assert full.m_sc_d == 1
    assert full.supremum == t.m - 1  # m - #bridges

    empty = analyze_deployment(t, ())
    assert empty.supremum == t.m - t.n  # rank comes from the base setting alone

    only_bridge = analyze_deployment(t, (14,))
    assert only_bridge.m_d == 1 and only_bridge.m_sc_d == 1
    assert only_bridge.supremum == t.m - t.n  # a bridge buys nothing

    with pytest.raises(ValueError):
        analyze_deployment(t, (0,))
    with pytest.raises(ValueError):
        analyze_deployment(t, (21,))


def test_analyze_deployment_on_a_plain_cycle():
    # 4-cycle: deploying every line exposes the full measurement space
    t = Topology(bus_ids=(1, 2, 3, 4), ref_bus=1,
                 branches=((1, 2), (2, 3), (3, 4), (4, 1)))
    plan = analyze_deployment(t, (1, 2, 3, 4))
    assert plan.m_d == 3 and plan.m_sc_d == 0
    assert plan.supremum == 4


def test_supremum_matches_component_count_oracle():
    rng = np.random.default_rng(19)
    for _ in range(200):
        t, _ = random_multigraph(rng)
        k = int(rng.integers(0, t.m + 1))
        deployment = sorted(rng.choice(t.m, size=k, replace=False) + 1)
        plan = analyze_deployment(t, deployment)
        assert plan.supremum == supremum_by_components(t, deployment)


def test_supremum_is_reached_by_random_schedules():
    # enough random stages on the deployment drive the composite rank to
    # exactly the predicted supremum, never past it
    rng = np.random.default_rng(23)
    for _ in range(60):
        t, x0 = random_multigraph(rng)
        loops = fundamental_cycles(t)
        k = int(rng.integers(1, t.m + 1))
        deployment = sorted(int(v) for v in rng.choice(t.m, size=k, replace=False) + 1)
        plan = analyze_deployment(t, deployment)
        blocks = [loops.matrix * x0[None, :]]
        for _ in range(t.m + 2):  # more stages than any supremum needs
            x = x0.copy()
            for d in deployment:
                x[d - 1] = x0[d - 1] * (1 + rng.uniform(0.05, 0.2) * rng.choice((-1, 1)))
            blocks.append(loops.matrix * x[None, :])
        achieved = numerical_rank(np.vstack(blocks))
        assert achieved == plan.supremum
