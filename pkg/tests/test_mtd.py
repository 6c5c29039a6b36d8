import numpy as np
import pytest

from gridmtd.case_io import load_bundled_case
from gridmtd.dc import measurement_matrix
from gridmtd.mtd import (
    SearchError,
    circuit_basis,
    composite_matrix,
    doa,
    numerical_rank,
    plan_mmtd,
    stealthy_basis,
    verify_completeness,
)
from gridmtd.topology import (
    Topology,
    analyze_deployment,
    deployment_plan,
    fundamental_cycles,
    spanning_forest,
)

from _oracles import random_multigraph


def case_setup(name):
    case = load_bundled_case(name)
    t = Topology.from_case(case)
    return case, t, fundamental_cycles(t, spanning_forest(t))


def test_bus3_circuit_basis_is_the_reactance_cycle():
    case, t, loops = case_setup("bus3")
    F = circuit_basis(loops, case.reactances())
    np.testing.assert_allclose(F.matrix, [[0.0504, -0.0572, 0.0636]], atol=1e-12)


def test_circuit_basis_annihilates_measurement_matrix():
    rng = np.random.default_rng(2)
    for _ in range(50):
        t, x = random_multigraph(rng)
        loops = fundamental_cycles(t)
        F = circuit_basis(loops, x)
        H = measurement_matrix(t, x)
        # trees have no cycles, so F can be empty; initial covers that
        assert np.max(np.abs(F.matrix @ H.matrix), initial=0.0) < 1e-12


def test_circuit_basis_rejects_nonpositive_reactance():
    _, t, loops = case_setup("bus3")
    with pytest.raises(ValueError):
        circuit_basis(loops, [0.05, 0.0, 0.06])
    with pytest.raises(ValueError):
        circuit_basis(loops, [0.05, -0.01, 0.06])


def test_composite_matrix_stacks_stage_bases():
    case, t, loops = case_setup("bus6")
    x0 = case.reactances()
    x1 = np.asarray(x0) * 1.1
    comp = composite_matrix(loops, [x0, x1])
    assert comp.stages == 2
    assert comp.matrix.shape == (2 * (t.m - t.n), t.m)
    np.testing.assert_array_equal(comp.matrix[: t.m - t.n], circuit_basis(loops, x0).matrix)
    np.testing.assert_array_equal(comp.matrix[t.m - t.n :], circuit_basis(loops, x1).matrix)


def test_numerical_rank_edges():
    assert numerical_rank(np.zeros((3, 4))) == 0
    assert numerical_rank(np.zeros((0, 4))) == 0
    assert numerical_rank(np.eye(5)) == 5
    # a singular value at 1e-15 of the largest is numerically zero
    M = np.diag([1.0, 1e-15])
    assert numerical_rank(M) == 1
    assert numerical_rank(np.diag([1.0, 1e-6])) == 2


def test_three_bus_doa_chain():
    # the demonstration sequence: 2 stealthy dims, then 1, 1, 0
    case, t, loops = case_setup("bus3")
    x0 = np.asarray(case.reactances())
    x_i = np.array([0.0605, 0.0572, 0.0636])
    x_ii = np.array([0.04788, 0.0572, 0.06042])
    assert doa([x0], loops) == 2
    assert doa([x0, x_i], loops) == 1
    assert doa([x0, x_ii], loops) == 1
    assert doa([x0, x_i, x_ii], loops) == 0


def test_stealthy_basis_three_bus_canonical_rows():
    case, t, loops = case_setup("bus3")
    x0 = np.asarray(case.reactances())
    basis0 = stealthy_basis([x0], loops)
    np.testing.assert_allclose(
        basis0, [[1.1349, 1.0, 0.0], [-1.2619, 0.0, 1.0]], atol=1e-3
    )
    basis_i = stealthy_basis([x0, np.array([0.0605, 0.0572, 0.0636])], loops)
    np.testing.assert_allclose(basis_i, [[0.0, 1.1119, 1.0]], atol=1e-3)
    full = stealthy_basis(
        [x0, np.array([0.0605, 0.0572, 0.0636]), np.array([0.04788, 0.0572, 0.06042])],
        loops,
    )
    assert full.shape == (0, 3)


def test_stealthy_basis_rows_are_stealthy_attacks():
    rng = np.random.default_rng(21)
    for _ in range(30):
        t, x = random_multigraph(rng)
        loops = fundamental_cycles(t)
        x1 = x * rng.uniform(0.85, 1.15, size=t.m)
        basis = stealthy_basis([x, x1], loops)
        assert basis.shape[0] == doa([x, x1], loops)
        for setting in (x, x1):
            F = circuit_basis(loops, setting)
            # kernel of the composite: every row killed by every stage basis
            assert np.max(np.abs(F.matrix @ basis.T), initial=0.0) < 1e-9


def test_plan_validation_errors():
    case, t, loops = case_setup("bus6")
    x0 = case.reactances()
    plan = deployment_plan(t)
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        plan_mmtd(x0, plan, loops, tau=0.0, rng=rng)
    with pytest.raises(ValueError):
        plan_mmtd(x0, plan, loops, tau=1.0, rng=rng)
    with pytest.raises(ValueError):
        plan_mmtd(x0, plan, loops, tau=0.2, rng=rng, min_shift=0.2)
    with pytest.raises(ValueError):
        plan_mmtd(np.asarray(x0)[:-1], plan, loops, tau=0.2, rng=rng)
    with pytest.raises(ValueError):
        plan_mmtd(-np.asarray(x0), plan, loops, tau=0.2, rng=rng)
    with pytest.raises(ValueError):
        plan_mmtd(x0, plan, loops, tau=0.2, rng=rng, max_stages=0)


def test_plan_three_bus_reaches_full_rank():
    case, t, loops = case_setup("bus3")
    plan = analyze_deployment(t, (1, 2, 3))
    sched = plan_mmtd(case.reactances(), plan, loops, tau=0.2, rng=np.random.default_rng(7))
    assert sched.complete
    assert sched.supremum == 3
    assert sched.rank_trajectory == (1, 2, 3)
    assert sched.final_doa == 0


def test_plan_gives_up_when_restriction_space_is_spent():
    # the 2-branch tree deployment admits only one restricted vector beyond
    # x0, so the search stalls at rank 2 although the supremum is 3
    case, t, loops = case_setup("bus3")
    plan = deployment_plan(t)
    assert plan.deployment == (1, 2) and plan.supremum == 3
    with pytest.raises(SearchError, match="rank 2 of 3"):
        plan_mmtd(case.reactances(), plan, loops, tau=0.2, rng=np.random.default_rng(7))


def test_planned_stages_respect_the_tau_box():
    case, t, loops = case_setup("bus14")
    x0 = np.asarray(case.reactances())
    plan = deployment_plan(t)
    tau, min_shift = 0.25, 0.05
    sched = plan_mmtd(x0, plan, loops, tau=tau, rng=np.random.default_rng(3), min_shift=min_shift)
    assert sched.complete
    deployed = np.array([d - 1 for d in plan.deployment])
    off = np.setdiff1d(np.arange(t.m), deployed)
    for x_k in sched.stages:
        rel = np.abs(x_k - x0) / x0
        assert np.all(rel[deployed] <= tau + 1e-12)
        assert np.all(rel[deployed] >= min_shift - 1e-12)
        np.testing.assert_array_equal(x_k[off], x0[off])
    ranks = sched.rank_trajectory
    assert all(b > a for a, b in zip(ranks, ranks[1:]))
    assert ranks[-1] == plan.supremum


def test_rank_gain_per_stage_is_bounded_by_cycle_count():
    # each stage stacks m-n rows, so rank grows by at most m-n per stage;
    # perturbing every branch keeps the restricted-independence rule slack
    rng = np.random.default_rng(31)
    checked = 0
    for _ in range(40):
        t, x = random_multigraph(rng)
        if t.m <= t.n:
            continue
        loops = fundamental_cycles(t)
        plan = analyze_deployment(t, tuple(range(1, t.m + 1)))
        sched = plan_mmtd(x, plan, loops, tau=0.3, rng=rng, max_stages=10)
        assert sched.complete
        ranks = sched.rank_trajectory
        assert ranks[0] == t.m - t.n
        for a, b in zip(ranks, ranks[1:]):
            assert 1 <= b - a <= t.m - t.n
        assert ranks[-1] == plan.supremum
        checked += 1
    assert checked >= 20


def test_completeness_reports():
    t6 = Topology.from_case(load_bundled_case("bus6"))
    c6 = verify_completeness(t6)
    assert c6.complete and c6.doi == 0 and c6.bridges == frozenset()
    t39 = Topology.from_case(load_bundled_case("bus39"))
    c39 = verify_completeness(t39)
    assert not c39.complete
    assert c39.doi == 11
    assert c39.bridges == frozenset({5, 14, 20, 27, 32, 33, 34, 37, 39, 41, 46})
    # a pure tree: every line is a bridge, nothing is ever exposable
    tree = Topology(bus_ids=(1, 2, 3, 4), ref_bus=1, branches=((1, 2), (2, 3), (2, 4)))
    ct = verify_completeness(tree)
    assert not ct.complete and ct.doi == 3
