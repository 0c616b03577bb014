import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmllab.core_prob import FiniteMeasure, Pmf, ProbError
from pmllab.pml_analytics import (
    BoundForm,
    alpha_beta,
    moment_bounds,
    phi,
    phi_constant,
    phi_inequality,
    pml_bound,
    rank_law,
    sfrl_chain,
)
from strategies import pmf_pairs

# phi normalizer from an independent route: 30-digit mpmath partial sum to
# 1e5, tail integral from 1e5 + 1/2 in the variable t = ln x, plus the
# first Euler-Maclaurin midpoint correction f'(a)/24 (agrees at 1e4 to 1e-20)
PHI_C_ORACLE = 1.10241891516969049

MU2 = FiniteMeasure(np.ones(2))
P2 = Pmf(np.array([0.75, 0.25]))
Q2 = Pmf(np.array([0.5, 0.5]))


def test_canonical_alpha_beta():
    a, b = alpha_beta(MU2, P2, Q2, 0), alpha_beta(MU2, P2, Q2, 1)
    assert (a.alpha, a.beta) == pytest.approx((0.5, 1.0))
    assert (b.alpha, b.beta) == pytest.approx((0.0, 0.5))


def test_canonical_rank_law():
    law = rank_law(MU2, P2, Q2, 0, 1)
    assert law.exceed(1) == pytest.approx(1 / 3, abs=1e-12)
    assert law.exceed(2) == pytest.approx(1 / 9, abs=1e-12)
    assert pml_bound(1.5) == pytest.approx(0.6)
    assert rank_law(MU2, P2, Q2, 1, 1).exceed(1) == pytest.approx(0.0, abs=1e-15)


def _first_match_oracle(mu, f, g, u):
    """P{Q-first point != P-first point | P-first at u}, from first arrivals only."""
    w = mu.weights
    others = [v for v in range(w.size) if v != u]
    both = w[u] / (w[u] + sum(w[v] * max(f[v] / f[u], g[v] / g[u]) for v in others))
    p_sel = w[u] * f[u] / float(w @ f)
    return 1.0 - both / p_sel


@given(pmf_pairs(2, 6), st.data())
def test_rank_law_first_point_oracle(pq, data):
    p, q = pq
    mu = FiniteMeasure(np.array(data.draw(st.lists(st.floats(0.2, 2.0), min_size=p.size, max_size=p.size))))
    f, g = p / mu.weights, q / mu.weights
    u = data.draw(st.integers(0, p.size - 1))
    law = rank_law(mu, Pmf(p), Pmf(q), u, 1)
    assert law.exceed(1) == pytest.approx(_first_match_oracle(mu, f, g, u), abs=1e-10)


@given(pmf_pairs(2, 6), st.integers(1, 4), st.data())
def test_rank_law_moments_and_tail(pq, j, data):
    p, q = pq
    u = data.draw(st.integers(0, p.size - 1))
    law = rank_law(FiniteMeasure(np.ones(p.size)), Pmf(p), Pmf(q), u, j)
    assert math.fsum(law.pmf) + law.tail == pytest.approx(1.0, abs=1e-12)
    k = np.arange(law.pmf.size)
    assert float(k @ law.pmf) == pytest.approx(law.mean, rel=1e-6, abs=1e-9)
    if j == 1:
        for kk in (1, 2, 5):
            assert law.exceed(kk) == pytest.approx(law.exceed_closed(kk), abs=1e-10)


@given(pmf_pairs(2, 6), st.integers(1, 4), st.integers(1, 6), st.data())
def test_lemma_forms_dominate_exact_law(pq, j, k, data):
    p, q = pq
    u = data.draw(st.integers(0, p.size - 1))
    law = rank_law(FiniteMeasure(np.ones(p.size)), Pmf(p), Pmf(q), u, j)
    r = p[u] / q[u]
    exact = law.exceed(k)
    slack = 1e-10
    assert exact <= pml_bound(r, j, k, BoundForm.TAIL) + slack
    assert law.mean + 1 <= pml_bound(r, j, k, BoundForm.MEAN) + 1e-9
    if j == 1:
        assert exact <= pml_bound(r, 1, k, BoundForm.J1) + slack
        assert pml_bound(r, 1, k, BoundForm.J1) <= pml_bound(r, 1, k, BoundForm.J1_WEAK) + slack
    if k == 1:
        assert exact <= pml_bound(r, j, 1, BoundForm.K1) + slack
    if j == k == 1:
        assert exact <= pml_bound(r) + slack


def test_pml_bound_edges():
    assert pml_bound(1.0) == 0.5
    assert pml_bound(math.inf) == 1.0
    assert math.isinf(pml_bound(math.inf, form="mean"))
    assert pml_bound(0.0, 3, 2, "k1") == 0.0
    with pytest.raises(ProbError):
        pml_bound(-1.0)


def test_rank_law_infinite_alpha():
    p, q = Pmf(np.array([0.5, 0.5])), Pmf(np.array([0.0, 1.0]))
    law = rank_law(MU2, p, q, 0, 1)
    assert math.isinf(law.ab.alpha) and law.tail == 1.0


def test_moment_bounds_closed_form():
    mb = moment_bounds(P2, Q2)
    kl = 0.75 * math.log2(1.5) + 0.25 * math.log2(0.5)
    assert mb.log_bound == pytest.approx(kl + math.log2(math.e))
    renyi = 2 * math.log2(0.75**1.5 * 0.5**-0.5 + 0.25**1.5 * 0.5**-0.5)
    assert mb.power_bound == pytest.approx(2 ** (0.5 * renyi) + 0.5)
    with pytest.raises(ProbError):
        moment_bounds(P2, Q2, gamma=1.5)


def test_sfrl_chain_holds_on_grid():
    for info in np.linspace(0, 50, 501):
        lhs, rhs = sfrl_chain(float(info))
        assert lhs <= rhs


def test_phi_constant_matches_independent_oracle():
    d = phi_constant()
    assert d.c_low <= PHI_C_ORACLE <= d.c_high
    assert d.width < 1e-10
    assert 1.0 <= d.c_low and d.c_high <= 2.0


def test_phi_values():
    d = phi_constant()
    assert phi(1) == pytest.approx(d.c / math.log2(3) ** 2)
    assert d.inverse(7) == pytest.approx(1 / phi(7))
    assert d.truncated(64).sum() == pytest.approx(1.0)
    assert phi(np.arange(1, 10)).sum() < 1.0


@given(st.integers(1, 20), st.integers(1, 1024))
def test_phi_inequality_property(e, t):
    r = phi_inequality(2.0**-e, float(t))
    assert r.holds and r.lhs <= r.mid * (1 + 1e-12)
    if r.precondition:
        assert r.mid <= r.rhs * (1 + 1e-12)


def test_phi_inequality_rejects_bad_input():
    with pytest.raises(ProbError):
        phi_inequality(0.0, 2.0)
