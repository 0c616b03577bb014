"""Closed-form laws for matching ranks and the bounds derived from them."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, stats

from .core_prob import FiniteMeasure, Pmf, ProbError, divergences
from .race_process import density

LOG2E = math.log2(math.e)
RANK_TAIL = 1e-12


@dataclass(frozen=True)
class AlphaBeta:
    atom: int
    alpha: float
    beta: float


def alpha_beta(mu: FiniteMeasure, p: Pmf, q: Pmf, u: int) -> AlphaBeta:
    """Rates of the negative binomial and binomial parts of the rank law at ``u``.

    ``alpha`` is infinite when ``q`` has no mass at ``u`` (the q-ordering never
    reaches the selected point).
    """
    f, g = density(mu, p), density(mu, q)
    if f[u] <= 0:
        raise ProbError(f"atom {u} is outside the support of p")
    if g[u] <= 0:
        return AlphaBeta(u, math.inf, 0.0)
    w = mu.weights
    gr, fr = g / g[u], f / f[u]
    alpha = f[u] * math.fsum(np.maximum(gr - fr, 0.0) * w)
    beta = f[u] * math.fsum(np.minimum(gr, fr) * w)
    return AlphaBeta(u, float(alpha), float(min(beta, 1.0)))


@dataclass(frozen=True)
class RankLaw:
    """Law of ``rank - 1`` given the selected atom; ``pmf[k]`` = P{rank - 1 = k}."""

    j: int
    ab: AlphaBeta
    pmf: np.ndarray
    tail: float

    @property
    def mean(self) -> float:
        if math.isinf(self.ab.alpha):
            return math.inf
        return self.j * self.ab.alpha + (self.j - 1) * self.ab.beta

    def exceed(self, k: int) -> float:
        """P{rank > k}."""
        if k <= 0:
            return 1.0
        return max(0.0, 1.0 - math.fsum(self.pmf[:k]))

    def exceed_closed(self, k: int) -> float:
        """P{rank > k} for j = 1 from the geometric tail."""
        if self.j != 1:
            raise ProbError("closed-form tail is for j = 1")
        a = self.ab.alpha
        return 1.0 if math.isinf(a) else (a / (1.0 + a)) ** k


def rank_law(mu: FiniteMeasure, p: Pmf, q: Pmf, u: int, j: int) -> RankLaw:
    """Exact conditional law of the matching rank (minus one) at atom ``u``.

    The law is a convolution of NegBin (failures before the j-th success,
    success probability 1/(1+alpha)) with Bin(j-1, beta), truncated once the
    remaining mass falls below 1e-12.
    """
    if j < 1:
        raise ProbError("j must be a positive integer")
    ab = alpha_beta(mu, p, q, u)
    if math.isinf(ab.alpha):
        return RankLaw(j, ab, np.zeros(0), 1.0)
    nb = stats.nbinom(j, 1.0 / (1.0 + ab.alpha))
    top = int(nb.isf(RANK_TAIL / 2)) + j + 1
    nb_pmf = nb.pmf(np.arange(top + 1))
    bin_pmf = stats.binom(j - 1, ab.beta).pmf(np.arange(j))
    law = np.convolve(nb_pmf, bin_pmf)
    cum = np.cumsum(law)
    cut = int(np.searchsorted(cum, 1.0 - RANK_TAIL)) + 1
    law = law[:cut]
    return RankLaw(j, ab, law, max(0.0, 1.0 - math.fsum(law)))


class BoundForm(enum.Enum):
    BASIC = "basic"
    MEAN = "mean"
    TAIL = "tail"
    K1 = "k1"
    J1 = "j1"
    J1_WEAK = "j1_weak"


def pml_bound(r: float, j: int = 1, k: int = 1, form: BoundForm | str = BoundForm.BASIC) -> float:
    """Bound as a function of the likelihood ratio ``r`` = dP/dQ at the selected atom.

    BASIC and the probability forms bound P{rank > k} (j-th p-point); MEAN
    bounds the conditional mean of the rank.
    """
    form = BoundForm(form)
    if r < 0:
        raise ProbError("ratio must be nonnegative")
    if j < 1 or k < 1:
        raise ProbError("j and k must be positive integers")
    if math.isinf(r):
        return math.inf if form is BoundForm.MEAN else 1.0
    if form is BoundForm.BASIC:
        return 1.0 - 1.0 / (1.0 + r)
    if form is BoundForm.MEAN:
        return j * r + 1.0
    if form is BoundForm.TAIL:
        return min(j / k * r, 1.0)
    if form is BoundForm.K1:
        return 1.0 - (1.0 - min(r, 1.0)) ** j
    if form is BoundForm.J1:
        return (1.0 - 1.0 / (1.0 + r)) ** k
    return 1.0 - 1.0 / (1.0 + r / k)


@dataclass(frozen=True)
class MomentBounds:
    log_bound: float
    power_bound: float


def moment_bounds(p: Pmf, q: Pmf, j: int = 1, gamma: float = 0.5) -> MomentBounds:
    """Upper bounds on E[log2 rank] and E[rank**gamma] for the j-th p-point."""
    if not 0 < gamma < 1:
        raise ProbError("gamma must lie in (0, 1)")
    dv = divergences(p, q, order=gamma + 1.0)
    if math.isinf(dv.kl):
        return MomentBounds(math.inf, math.inf)
    log_bound = dv.kl + math.log2(j) + LOG2E / j
    power_bound = j**gamma * 2.0 ** (gamma * dv.renyi) + gamma * j ** (gamma - 1.0)
    return MomentBounds(log_bound, power_bound)


def sfrl_chain(info: float) -> tuple[float, float]:
    """Both sides of the strong functional representation constant comparison."""
    lhs = info + LOG2E + math.log2(info + LOG2E + 1.0) + 1.0
    rhs = info + math.log2(info + 1.0) + 3.732
    return lhs, rhs


# ---------------------------------------------------------------------------
# the phi distribution over positive integers


def _h(x):
    return 1.0 / (x * np.log2(x + 2.0) ** 2)


def _h_tail(a: float) -> float:
    """Integral of h over [a, inf) after substituting w = 1/ln(x+2)."""
    ln2sq = math.log(2.0) ** 2
    top = 1.0 / math.log(a + 2.0)
    val, _ = integrate.quad(lambda w: ln2sq / (1.0 - 2.0 * math.exp(-1.0 / w)), 0.0, top,
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return val


@dataclass(frozen=True)
class PhiDist:
    """phi(k) = c / (k log2(k+2)^2) with a certified bracket on c."""

    c: float
    c_low: float
    c_high: float
    terms: int

    @property
    def width(self) -> float:
        return self.c_high - self.c_low

    def __call__(self, k):
        k = np.asarray(k, dtype=np.float64)
        out = self.c * _h(k)
        return float(out) if out.ndim == 0 else out

    def inverse(self, k):
        """1 / phi(k)."""
        k = np.asarray(k, dtype=np.float64)
        out = k * np.log2(k + 2.0) ** 2 / self.c
        return float(out) if out.ndim == 0 else out

    def truncated(self, kmax: int) -> np.ndarray:
        """phi(1..kmax) renormalized to sum to one."""
        w = self(np.arange(1, kmax + 1))
        return w / w.sum()


@lru_cache(maxsize=None)
def phi_constant(terms: int = 10**6) -> PhiDist:
    """Normalizing constant of phi, bracketed via the convexity of the summand.

    With S_N the partial sum of h(k) = 1/(k log2^2(k+2)), the tail sum over
    k > N lies between the integral from N+1 plus h(N+1)/2 (trapezoid rule
    overestimates a convex decreasing integrand) and the integral from N+1/2
    (midpoint rule underestimates it).
    """
    k = np.arange(1, terms + 1, dtype=np.float64)
    s_n = math.fsum(_h(k))
    a = terms + 1.0
    upper_from = _h_tail(a)
    mid_from = _h_tail(a - 0.5)
    low_sum = s_n + upper_from + float(_h(a)) / 2.0
    high_sum = s_n + mid_from
    # per-term rounding in h and relative quadrature error
    slack = 8 * np.finfo(float).eps * s_n + 1e-13 * (upper_from + mid_from)
    lo, hi = min(low_sum, high_sum) - slack, max(low_sum, high_sum) + slack
    c_mid = 2.0 / (lo + hi)
    return PhiDist(c=float(c_mid), c_low=float(1.0 / hi), c_high=float(1.0 / lo), terms=terms)


def phi(k, dist: PhiDist | None = None):
    return (dist or phi_constant())(k)


@dataclass(frozen=True)
class PhiInequality:
    lhs: float
    mid: float
    rhs: float
    precondition: bool
    holds: bool


def phi_inequality(s: float, t: float, alpha: float | None = None, beta: float | None = None,
                   alpha_tilde: float | None = None, dist: PhiDist | None = None,
                   rtol: float = 1e-12) -> PhiInequality:
    """Evaluate the three-term phi inequality at (s, t).

    Missing parameters default to the tightest admissible choice:
    alpha = -log2(st), alpha_tilde = max(alpha, 0), beta = log2(t-1)
    (or -alpha_tilde when t = 1).
    """
    if s <= 0 or t < 1:
        raise ProbError("need s > 0 and t >= 1")
    d = dist or phi_constant()
    if alpha is None:
        alpha = -math.log2(s * t)
    if alpha_tilde is None:
        alpha_tilde = max(alpha, 0.0)
    if beta is None:
        beta = math.log2(t - 1.0) if t > 1 else -alpha_tilde
    lhs = min(s * d.inverse(t), 1.0)
    mid = min(s * t * (math.log2(1.0 / s + 1.0) + 1.0) ** 2, 1.0)
    rhs = 2.0**-alpha * (2.0 * (alpha_tilde + beta) ** 2 + 2.0 * alpha_tilde**2 + 14.0)
    pre = (s * t <= 2.0**-alpha * (1 + rtol)) and (t - 1.0 <= 2.0**beta * (1 + rtol)) and alpha_tilde >= max(alpha, 0.0)
    first = lhs <= mid * (1 + rtol)
    holds = first and (not pre or mid <= rhs * (1 + rtol))
    return PhiInequality(lhs, mid, rhs, pre, holds)
