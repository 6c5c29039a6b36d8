import numpy as np
import pytest
from scipy import stats

from gridmtd.attacks import construct_attack, is_stealthy, random_cut_attack
from gridmtd.case_io import load_bundled_case
from gridmtd.dc import measurement_matrix
from gridmtd.topology import (
    Topology,
    find_bridges,
    fundamental_cuts,
    spanning_forest,
)


def case_matrix(name, x=None):
    case = load_bundled_case(name)
    t = Topology.from_case(case)
    return case, t, measurement_matrix(t, case.reactances() if x is None else x)


def test_construct_attack_is_exactly_h_times_c():
    rng = np.random.default_rng(3)
    _, t, H = case_matrix("bus14")
    for _ in range(100):
        c = rng.normal(size=t.n)
        atk = construct_attack(H, c)
        np.testing.assert_array_equal(atk.a, H.matrix @ c)
        np.testing.assert_array_equal(atk.c, c)
        assert atk.cut_branch is None
        assert atk.magnitude == np.max(np.abs(atk.a))


def test_cut_attack_support_and_peak():
    rng = np.random.default_rng(4)
    _, t, H = case_matrix("bus57")
    forest = spanning_forest(t)
    cuts = fundamental_cuts(t, forest)
    tree_index = {b: i for i, b in enumerate(cuts.tree)}
    for _ in range(200):
        atk = random_cut_attack(H, cuts, rng, target_deviation_mw=10.0)
        assert atk.cut_branch in cuts.tree
        row = cuts.matrix[tree_index[atk.cut_branch]]
        # nonzero exactly where the chosen cut is, peak at 10 MW = 0.1 p.u.
        assert np.all((np.abs(atk.a) > 1e-12) == (row != 0))
        assert abs(np.max(np.abs(atk.a)) - 0.1) < 1e-12
        assert is_stealthy(atk.a, H)


def test_cut_attack_choice_is_uniform():
    rng = np.random.default_rng(8)
    _, t, H = case_matrix("bus39")
    cuts = fundamental_cuts(t, spanning_forest(t))
    counts = {b: 0 for b in cuts.tree}
    draws = 10000
    for _ in range(draws):
        counts[random_cut_attack(H, cuts, rng).cut_branch] += 1
    observed = np.array([counts[b] for b in cuts.tree])
    _, p = stats.chisquare(observed)
    assert p > 0.01


def test_cut_attack_sign_is_symmetric():
    rng = np.random.default_rng(11)
    _, t, H = case_matrix("bus6")
    cuts = fundamental_cuts(t, spanning_forest(t))
    signs = [np.sign(np.sum(random_cut_attack(H, cuts, rng).c)) for _ in range(400)]
    pos = signs.count(1.0)
    assert 140 <= pos <= 260


def test_zero_attack_is_stealthy_and_scale_invariant():
    rng = np.random.default_rng(12)
    _, t, H = case_matrix("bus14")
    assert is_stealthy(np.zeros(t.m), H)
    a = H.matrix @ rng.normal(size=t.n)
    for s in (1e-8, 1.0, 1e8):
        assert is_stealthy(s * a, H)
    bad = rng.normal(size=t.m)
    for s in (1e-8, 1.0, 1e8):
        assert not is_stealthy(s * bad, H)


def test_three_bus_attacks_against_shifted_settings():
    case, t, H0 = case_matrix("bus3")
    x_i = np.array(case.reactances(), dtype=float)
    x_i[0] *= 1.2  # the first branch shifted by +20%
    H_i = measurement_matrix(t, x_i)
    # both base-setting stealthy directions, but only one survives the shift
    for vec in ([1.1349, 1.0, 0.0], [-1.2619, 0.0, 1.0]):
        assert is_stealthy(np.array(vec), H0, tol=1e-3)
    assert not is_stealthy(np.array([1.1349, 1.0, 0.0]), H_i, tol=1e-3)
    assert not is_stealthy(np.array([-1.2619, 0.0, 1.0]), H_i, tol=1e-3)
    # the direction avoiding the moved branch stays stealthy under both
    mutual = np.array([0.0, 1.1119, 1.0])
    assert is_stealthy(mutual, H0, tol=1e-3)
    assert is_stealthy(mutual, H_i, tol=1e-3)


def test_bridge_cut_attack_survives_every_setting():
    # an attack confined to a bridge cut lies on no cycle: no reactance
    # perturbation anywhere in the grid can expose it
    case, t, H0 = case_matrix("bus57")
    bridges = find_bridges(t)
    assert 45 in bridges
    cuts = fundamental_cuts(t, spanning_forest(t))
    tree_index = {b: i for i, b in enumerate(cuts.tree)}
    row = cuts.matrix[tree_index[45]]
    c = np.zeros(t.n)
    side = cuts.sides[tree_index[45]]
    if t.ref_bus in side:
        # shift the complement instead: same cut attack, opposite sign
        side = frozenset(t.bus_ids) - side
    pos = {b: i for i, b in enumerate(H0.bus_order)}
    for b in side:
        c[pos[b]] = 0.2
    atk = construct_attack(H0, c)
    assert np.all((np.abs(atk.a) > 1e-12) == (row != 0))
    rng = np.random.default_rng(19)
    x0 = np.array(case.reactances(), dtype=float)
    for _ in range(25):
        x = x0 * rng.uniform(0.7, 1.3, size=t.m)
        assert is_stealthy(atk.a, measurement_matrix(t, x))


def test_cut_attack_rejects_bad_magnitude():
    rng = np.random.default_rng(1)
    _, t, H = case_matrix("bus6")
    cuts = fundamental_cuts(t, spanning_forest(t))
    with pytest.raises(ValueError):
        random_cut_attack(H, cuts, rng, target_deviation_mw=0.0)
    with pytest.raises(ValueError):
        random_cut_attack(H, cuts, rng, target_deviation_mw=-5.0)
