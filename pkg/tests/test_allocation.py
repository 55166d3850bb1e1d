import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccpilot.allocation import (
    canonical_assignments, cmd_allocate, contamination_objective, exhaustive_search,
    greedy_chain, nn_greedy_allocate, pilot_counts, random_allocate,
    real_position_allocate, write_assignment_csv,
)
from ccpilot.config import ConfigError, SystemConfig
from ccpilot.geometry import make_ue


def _random_corr(rng, n):
    A = rng.uniform(0, 1, (n, n))
    A = (A + A.T) / 2
    np.fill_diagonal(A, 1.0)
    return A


def test_objective_examples():
    delta = np.array([[1, 0.3], [0.3, 1]])
    assert contamination_objective([0, 1], delta) == 0.0
    assert math.isclose(contamination_objective([0, 0], delta), 0.3)
    assert contamination_objective([0], np.ones((1, 1))) == 0.0


def test_objective_brute_force():
    rng = np.random.default_rng(0)
    delta = _random_corr(rng, 7)
    a = rng.integers(0, 3, 7)
    ref = sum(delta[i, j] for i, j in itertools.combinations(range(7), 2) if a[i] == a[j])
    assert math.isclose(contamination_objective(a, delta), ref * 2 / (7 * 6))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 20), st.sampled_from([2, 4, 8]), st.integers(0, 2**32 - 1))
def test_objective_relabel_invariant(n, tau, seed):
    rng = np.random.default_rng(seed)
    delta = _random_corr(rng, n)
    a = rng.integers(0, tau, n)
    perm = rng.permutation(tau)
    assert math.isclose(contamination_objective(a, delta), contamination_objective(perm[a], delta))


def test_greedy_line_alternates():
    pts = np.arange(6.0)[None, :]
    assert list(nn_greedy_allocate(pts, 2, 0)) == [0, 1, 0, 1, 0, 1]


def test_greedy_n_equals_tau_distinct():
    rng = np.random.default_rng(1)
    a = nn_greedy_allocate(rng.standard_normal((2, 8)), 8, 3)
    assert sorted(a) == list(range(8))
    assert a[3] == 0


def test_greedy_tie_break_lower_index():
    # from 0, UEs 1 and 2 tie; from 1, UEs 2 and 3 tie
    pts = np.array([[0.0, 1.0, -1.0, 3.0]])
    assert list(nn_greedy_allocate(pts, 4, 0)) == [0, 1, 2, 3]
    assert list(nn_greedy_allocate(pts[:, ::-1].copy(), 4, 3)) == [3, 1, 2, 0]


def test_greedy_start_out_of_range():
    with pytest.raises(ValueError):
        greedy_chain(np.zeros((3, 3)), 2, 3)


def test_cmd_constant_features_cycle_in_index_order():
    F = np.ones((7, 7)) - np.eye(7)
    assert list(cmd_allocate(F, 3, 0)) == [0, 1, 2, 0, 1, 2, 0]
    assert list(cmd_allocate(F, 3, 4)) == [1, 2, 0, 1, 0, 2, 0]


def test_cmd_matches_chart_on_same_metric():
    rng = np.random.default_rng(2)
    pts = rng.standard_normal((2, 15))
    F = np.sqrt(((pts[:, :, None] - pts[:, None, :]) ** 2).sum(0))
    assert np.array_equal(cmd_allocate(F, 4, 5), nn_greedy_allocate(pts, 4, 5))


def test_real_position_examples():
    cfg = SystemConfig()
    ues = [make_ue(i, 100 * math.cos(t), 100 * math.sin(t), cfg)
           for i, t in enumerate(np.arange(6) * np.pi / 3)]
    assert list(real_position_allocate(ues, 2, 0)) == [0, 1, 0, 1, 0, 1]
    same = [make_ue(0, 100.0, 50.0, cfg), make_ue(1, 300.0, 150.0, cfg),
            make_ue(2, -100.0, -50.0, cfg)]
    a = real_position_allocate(same, 4, 0)
    assert a[0] == 0 and a[1] == 1 and a[2] == 2   # co-azimuth UE is nearest, antipode last


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 60), st.sampled_from([1, 2, 4, 8, 16]), st.integers(0, 2**32 - 1))
def test_allocators_balanced(n, tau, seed):
    rng = np.random.default_rng(seed)
    lo, hi = n // tau, -(-n // tau)
    for a in (random_allocate(n, tau, rng),
              nn_greedy_allocate(rng.standard_normal((3, n)), tau, int(rng.integers(n)))):
        counts = pilot_counts(a, tau)
        assert counts.sum() == n
        assert counts.min() >= lo and counts.max() <= hi


def test_random_allocate_examples():
    a = random_allocate(10, 4, np.random.default_rng(0))
    assert sorted(pilot_counts(a, 4)) == [2, 2, 3, 3]
    b = random_allocate(8, 8, np.random.default_rng(1))
    assert sorted(b) == list(range(8))
    assert np.array_equal(random_allocate(30, 4, np.random.default_rng(5)),
                          random_allocate(30, 4, np.random.default_rng(5)))


def _stirling2(n, k):
    return sum((-1) ** j * math.comb(k, j) * (k - j) ** n for j in range(k + 1)) // math.factorial(k)


@pytest.mark.parametrize("n,tau", [(1, 3), (4, 2), (6, 3), (10, 4)])
def test_canonical_assignment_count(n, tau):
    rows = canonical_assignments(n, tau)
    assert len(rows) == sum(_stirling2(n, k) for k in range(1, tau + 1))
    assert len({tuple(r) for r in rows}) == len(rows)
    assert rows.max() < tau


def test_exhaustive_matches_brute_force():
    rng = np.random.default_rng(3)
    delta = _random_corr(rng, 7)
    best = min(contamination_objective(a, delta) for a in itertools.product(range(3), repeat=7))
    a, val = exhaustive_search(delta, 3)
    assert math.isclose(val, best)
    assert math.isclose(contamination_objective(a, delta), val)


def test_exhaustive_small_cases():
    delta = np.array([[1, 0.8], [0.8, 1]])
    a, val = exhaustive_search(delta, 2)
    assert val == 0.0 and a[0] != a[1]
    assert exhaustive_search(np.ones((1, 1)), 2)[1] == 0.0


def test_exhaustive_not_worse_than_greedy():
    rng = np.random.default_rng(4)
    for _ in range(20):
        pts = rng.standard_normal((2, 9))
        F = np.sqrt(((pts[:, :, None] - pts[:, None, :]) ** 2).sum(0))
        delta = np.exp(-F)
        _, best = exhaustive_search(delta, 3)
        assert best <= contamination_objective(cmd_allocate(1 - delta, 3, 0), delta) + 1e-12
        assert best <= contamination_objective(random_allocate(9, 3, rng), delta) + 1e-12


@pytest.mark.parametrize("n,tau", [(13, 4), (10, 8), (512, 64)])
def test_exhaustive_guard(n, tau):
    with pytest.raises(ConfigError):
        exhaustive_search(np.eye(n), tau)


def test_write_assignment_csv(tmp_path):
    path = tmp_path / "a.csv"
    write_assignment_csv(path, np.array([2, 0, 1]))
    assert path.read_bytes() == b"ue_id,pilot_index\n0,2\n1,0\n2,1\n"
