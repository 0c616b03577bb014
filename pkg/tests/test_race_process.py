import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmllab.core_prob import AbsoluteContinuityError, FiniteMeasure, Pmf, ProbError
from pmllab.race_process import (
    RaceProcess,
    batch_first,
    batch_rank,
    batch_select,
    counter_uniform,
    density,
    match_rank,
    pfr_list,
    pfr_nth,
    pfr_select,
    substream,
    trial_seeds,
)
from strategies import pmf_arrays, pmf_pairs


def test_counter_uniform_range_and_determinism():
    u = counter_uniform(7, np.arange(1000), 3)
    assert np.all((u > 0) & (u <= 1))
    np.testing.assert_array_equal(u, counter_uniform(7, np.arange(1000), 3))
    assert abs(u.mean() - 0.5) < 0.05


def test_trial_seeds_are_prefix_stable():
    a = trial_seeds(5, 10)
    b = trial_seeds(5, 4, start=6)
    np.testing.assert_array_equal(a[6:], b)
    assert len(set(a.tolist())) == 10
    assert not np.array_equal(substream(a, 1), substream(a, 2))


def test_streams_do_not_depend_on_query_order():
    mu = FiniteMeasure(np.array([1.0, 2.0, 0.5]))
    one, two = RaceProcess(mu, 11), RaceProcess(mu, 11)
    one.times(2, 5)
    t1 = one.times(0, 8)
    t2 = two.times(0, 8)
    np.testing.assert_array_equal(t1, t2)
    assert np.all(np.diff(t1) > 0)


def test_select_in_support_and_null_view_rejected():
    mu = FiniteMeasure(np.array([1.0, 1.0, 0.0]))
    proc = RaceProcess(mu, 3)
    p = Pmf(np.array([0.0, 1.0, 0.0]))
    assert pfr_select(proc, p).atom == 1
    with pytest.raises(AbsoluteContinuityError):
        density(mu, Pmf(np.array([0.5, 0.0, 0.5])))
    with pytest.raises(ProbError):
        pfr_nth(proc, p, 0)


def test_rank_infinite_when_q_misses():
    mu = FiniteMeasure(np.ones(2))
    p, q = Pmf(np.array([1.0, 0.0])), Pmf(np.array([0.0, 1.0]))
    assert math.isinf(match_rank(RaceProcess(mu, 0), p, q, 1))


def test_rank_of_identical_views_is_identity():
    mu = FiniteMeasure(np.array([0.3, 0.5, 0.2]))
    p = Pmf(np.array([0.2, 0.3, 0.5]))
    for seed in range(20):
        proc = RaceProcess(mu, seed)
        for j in (1, 2, 5):
            assert match_rank(proc, p, p, j) == j


@given(pmf_arrays(2, 5, allow_zero=True), st.integers(0, 2**32), st.integers(1, 6))
def test_batch_first_matches_single_process(p, seed, k):
    mu = FiniteMeasure(np.linspace(0.5, 1.5, p.size))
    seeds = trial_seeds(seed, 6)
    f = density(mu, Pmf(p))
    pos, idx, times, _ = batch_first(seeds, f, mu.weights, k)
    for b, s in enumerate(seeds):
        pts = pfr_list(RaceProcess(mu, int(s)), Pmf(p), k)
        assert pos[b].tolist() == [pt.atom for pt in pts]
        assert idx[b].tolist() == [pt.arrival_index for pt in pts]
        np.testing.assert_array_equal(times[b], [pt.time for pt in pts])


@given(pmf_pairs(2, 5), st.integers(0, 2**32), st.integers(1, 3))
def test_batch_rank_matches_single_process(pq, seed, j):
    p, q = pq
    mu = FiniteMeasure(np.ones(p.size))
    seeds = trial_seeds(seed, 8)
    pos, ranks = batch_rank(seeds, density(mu, Pmf(p)), density(mu, Pmf(q)), mu.weights, j)
    for b, s in enumerate(seeds):
        proc = RaceProcess(mu, int(s))
        assert pos[b] == proc.nth(Pmf(p), j).atom
        assert ranks[b] == proc.rank(Pmf(p), Pmf(q), j)


def test_batch_select_matches_single_process():
    mu = FiniteMeasure(np.array([0.2, 0.3, 0.5]))
    p = Pmf(np.array([0.5, 0.25, 0.25]))
    seeds = trial_seeds(99, 50)
    got = batch_select(seeds, density(mu, p), mu.weights)
    want = [RaceProcess(mu, int(s)).select(p).atom for s in seeds]
    assert got.tolist() == want


def test_batch_first_per_row_densities_and_atom_subsets():
    mu = FiniteMeasure(np.ones(6))
    seeds = trial_seeds(4, 5)
    atoms = np.array([[0, 1, 2], [3, 4, 5], [0, 1, 2], [3, 4, 5], [0, 2, 4]])
    dens = np.array([[1.0, 2.0, 0.0]] * 5)
    pos, _, _, _ = batch_first(seeds, dens, mu.weights, 2, atoms=atoms)
    for b, s in enumerate(seeds):
        f = np.zeros(6)
        f[atoms[b]] = dens[b]
        view = f / f.sum()
        pts = RaceProcess(mu, int(s)).first(Pmf(view), 2)
        assert [atoms[b][p] for p in pos[b]] == [pt.atom for pt in pts]


def test_missing_points_flagged():
    mu = FiniteMeasure(np.ones(3))
    pos, _, _, keys = batch_first(trial_seeds(0, 2), np.array([1.0, 0.0, 0.0]), mu.weights, 3, depth=1)
    assert pos.shape == (2, 3) and np.all(pos[:, :3] == 0)
    assert np.all(np.isfinite(keys))


def test_trace_lists_points_in_time_order():
    mu = FiniteMeasure(np.ones(3))
    rows = RaceProcess(mu, 1).trace(6, [Pmf(np.array([0.5, 0.5, 0.0]))])
    times = [r["time"] for r in rows]
    assert times == sorted(times)
    assert all(r["p_key"] is None for r in rows if r["atom"] == 2)
