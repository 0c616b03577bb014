"""Second-order quantities: Q-function, dispersion-style rates, rate-distortion.

All logarithms are base 2.  Berry-Esseen style constants are inputs: only
their existence is known, so every formula here takes them as parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize, stats

from .core_prob import JointPmf, Pmf, ProbError

BA_MAX_ITER = 10**4
BA_TOL = 1e-13
SUPPORT_FLOOR = 1e-12
BISECT_TOL = 1e-11
POLISH_EVERY = 50
POLISH_STEPS = 50
POLISH_FLOOR = 1e-10


def qfunc(x):
    """Standard normal upper tail."""
    out = stats.norm.sf(x)
    return float(out) if np.ndim(out) == 0 else out


def qinv(eps):
    """Inverse of :func:`qfunc` on (0, 1)."""
    e = np.asarray(eps, dtype=np.float64)
    if np.any((e <= 0) | (e >= 1)):
        raise ProbError("Q inverse needs an argument in (0, 1)")
    out = stats.norm.isf(e)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# state-dependent channel rate


@dataclass(frozen=True)
class GpRate:
    log_L: float
    C: float
    V: float
    n: int
    eps: float
    alpha: float

    @property
    def L(self) -> int:
        return int(math.floor(2.0**self.log_L)) if self.log_L < 1023 else math.inf


def gp_moments(joint: JointPmf) -> tuple[float, float]:
    """Mean and variance of iota(U;Y) - iota(U;S) under a joint with axes u, s, y."""
    g = joint.info_density("u", "y") - joint.info_density("u", "s")
    mean = joint.expect(g)
    var = max(joint.expect((g - mean) ** 2), 0.0)
    return mean, var


def gp_rate(n: int, eps: float, joint: JointPmf, alpha_const: float = 1.0) -> GpRate:
    """log L = nC - sqrt(nV) Qinv(eps - alpha/sqrt(n)) - (1/2) log n."""
    if n < 1:
        raise ProbError("n must be a positive integer")
    if not 0 < eps < 1:
        raise ProbError("eps must lie in (0, 1)")
    shifted = eps - alpha_const / math.sqrt(n)
    if shifted <= 0:
        raise ProbError(f"n = {n} is too small: need n > alpha^2 / eps^2 = {alpha_const**2 / eps**2:.6g}")
    C, V = gp_moments(joint)
    spread = math.sqrt(n * V) * qinv(shifted) if V > 0 else 0.0
    return GpRate(n * C - spread - 0.5 * math.log2(n), C, V, n, eps, alpha_const)


# ---------------------------------------------------------------------------
# rate-distortion


@dataclass(frozen=True)
class RdSolution:
    D: float
    rate: float
    kernel: np.ndarray          # P(z | w), rows indexed by w
    p_z: np.ndarray
    slope: float                # nu* = -R'(D) in bits per unit distortion
    distortion: float           # achieved E[d(W, Z)]
    dual: float
    residual: float
    iterations: int
    d_fn: np.ndarray

    @property
    def dual_gap(self) -> float:
        return abs(self.rate - self.dual)


def _weights(p) -> np.ndarray:
    return p.weights if isinstance(p, Pmf) else np.asarray(p, dtype=np.float64)


def distortion_range(p_w, d_fn) -> tuple[float, float]:
    """(D_min, D_max): E[min_z d(W,z)] and min_z E[d(W,z)]."""
    p, d = _weights(p_w), np.asarray(d_fn, dtype=np.float64)
    return float(p @ d.min(axis=1)), float((p @ d).min())


class _Slope(NamedTuple):
    kern: np.ndarray
    q: np.ndarray
    residual: float
    iterations: int
    distortion: float


def _ba_fixed_slope(p: np.ndarray, d: np.ndarray, beta: float, max_iter: int = BA_MAX_ITER) -> _Slope:
    """Alternating minimization at slope beta (kernel proportional to q(z) 2^(-beta d)).

    Letters stay positive while iterating (a letter floored early could never
    return); the support floor is applied to the converged output only.
    Convergence is judged by the multipliers c(z) = sum_w p(w) 2^(-beta d(w,z)) /
    sum_z' q(z') 2^(-beta d(w,z')), which equal 1 on the optimal support and
    stay at most 1 off it.
    """
    shift = d.min(axis=1, keepdims=True)
    tilt = np.exp2(-beta * (d - shift))
    q = np.full(d.shape[1], 1.0 / d.shape[1])

    def mult(q):
        return (p / (tilt @ q)) @ tilt

    def update(q):
        q_new = q * mult(q)
        return q_new / q_new.sum()

    def objective(q):
        return -float(p @ np.log(tilt @ q))

    def kkt(q):
        c = mult(q)
        on = q > SUPPORT_FLOOR
        return max(float(np.abs(c[on] - 1.0).max()), float(np.maximum(c[~on] - 1.0, 0.0).max(initial=0.0)))

    def polish(q):
        # Newton on c(z) = 1 over the live letters, with a backtracking line
        # search on the Lagrangian -E log E_q 2^(-beta d) + sum q
        live = q > POLISH_FLOOR
        x, t = q[live], tilt[:, live]

        def lagr(x):
            return -float(p @ np.log(t @ x)) + float(x.sum())

        for _ in range(POLISH_STEPS):
            y = t @ x
            g = (p / y) @ t - 1.0
            if np.abs(g).max() < BA_TOL:
                break
            delta = np.linalg.lstsq(t.T @ ((p / y**2)[:, None] * t), g, rcond=None)[0]
            base, step = lagr(x), 1.0
            while step > 1e-12:
                xn = x + step * delta
                if np.all(xn > 0) and lagr(xn) <= base:
                    break
                step *= 0.5
            else:
                break
            x = xn
        out = np.zeros_like(q)
        out[live] = x
        return out / out.sum()

    # plain updates stall when reproduction letters nearly tie; SQUAREM
    # extrapolation speeds them up.  The step backtracks toward -1 (two
    # plain updates) until the point stays positive and does not raise the
    # objective, so the iteration remains monotone.  Where the optimal support
    # changes the problem is ill-conditioned and even extrapolation crawls, so a
    # Newton polish on the live letters is tried periodically
    residual = math.inf
    for it in range(1, max_iter + 1):
        q1 = update(q)
        q2 = update(q1)
        r, v = q1 - q, q2 - 2 * q1 + q
        nv = float(np.linalg.norm(v))
        q_new = q2
        if nv > 0:
            step = min(-float(np.linalg.norm(r)) / nv, -1.0)
            base = objective(q2)
            while step < -1.0 - 1e-3:
                ext = q - 2 * step * r + step * step * v
                if np.all(ext > 0):
                    ext /= ext.sum()
                    if objective(ext) <= base:
                        q_new = update(ext)
                        break
                step = 0.5 * (step - 1.0)
        q = q_new
        residual = kkt(q)
        if residual < BA_TOL:
            break
        if it % POLISH_EVERY == 0:
            cand = polish(q)
            res_c = kkt(cand)
            if res_c < residual:
                q, residual = cand, res_c
                if residual < BA_TOL:
                    break
    q = np.where(q > SUPPORT_FLOOR, q, 0.0)
    q /= q.sum()
    a = q * tilt
    kern = a / a.sum(axis=1, keepdims=True)
    return _Slope(kern, q, residual, it, float(p @ (kern * d).sum(axis=1)))


def _rate(p: np.ndarray, kern: np.ndarray, q: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(kern > 0, kern * np.log2(kern / np.where(q > 0, q, 1.0)), 0.0)
    return float(p @ terms.sum(axis=1))


def ba_rd(p_w, d_fn, D: float, beta_max: float | None = None) -> RdSolution:
    """Rate-distortion function R(D) in bits via Blahut-Arimoto with slope bisection.

    ``D`` at or above D_max gives rate 0 with a constant reproduction;
    ``D`` below D_min is infeasible.  Strictly inside (D_min, D_max) the
    infimum is attained with a finite slope, which d-tilted information needs.
    The slope search stops at ``beta_max``, by default 200 bits per unit of
    the smallest nonzero distortion gap within a row.

    Where R(D) has a straight piece, distortion jumps across one critical
    slope; the bisection then closes on that slope and the optimal laws on
    either side are time-shared to meet D.
    """
    p, d = _weights(p_w), np.asarray(d_fn, dtype=np.float64)
    if d.shape[0] != p.size:
        raise ProbError("distortion rows must match the source alphabet")
    dmin, dmax = distortion_range(p, d)
    if D < dmin - 1e-12:
        raise ProbError(
            f"D = {D} is below the smallest achievable distortion {dmin}; the rate-distortion "
            f"infimum is attained with finite slope only for D_min < D < D_max = {dmax}"
        )
    if D >= dmax:
        z = int(np.argmin(p @ d))
        kern = np.zeros_like(d)
        kern[:, z] = 1.0
        return RdSolution(D, 0.0, kern, kern[0].copy(), 0.0, dmax, 0.0, 0.0, 0, d)

    if beta_max is None:
        gaps = (d - d.min(axis=1, keepdims=True))[p > 0]
        gaps = gaps[gaps > 0]
        beta_max = 200.0 / min(1.0, float(gaps.min())) if gaps.size else 200.0
    lo, hi = 0.0, 1.0
    sol = _ba_fixed_slope(p, d, hi)
    while sol.distortion > D and hi < beta_max:
        lo, hi = hi, min(2.0 * hi, beta_max)
        sol = _ba_fixed_slope(p, d, hi)
    beta, lo_sol = hi, None
    if sol.distortion <= D + 1e-12:
        lo_sol = _ba_fixed_slope(p, d, lo)
        for _ in range(200):
            if hi - lo < BISECT_TOL * max(1.0, hi) or abs(sol.distortion - D) < 1e-13:
                break
            mid = 0.5 * (lo + hi)
            val = _ba_fixed_slope(p, d, mid)
            if val.distortion > D:
                lo, lo_sol = mid, val
            else:
                hi, sol = mid, val
        beta = hi
    kern, q, achieved, res = sol.kern, sol.q, sol.distortion, sol.residual
    if lo_sol is not None and abs(achieved - D) > 1e-10 and lo_sol.distortion > achieved:
        # time-share the two optimal laws of the shared slope to meet D
        lam = min(max((D - achieved) / (lo_sol.distortion - achieved), 0.0), 1.0)
        kern = lam * lo_sol.kern + (1.0 - lam) * kern
        q = p @ kern
        achieved = float(p @ (kern * d).sum(axis=1))
        res = max(res, lo_sol.residual)
    rate = _rate(p, kern, q)
    shift = d.min(axis=1)
    inner = (q * np.exp2(-beta * (d - shift[:, None]))).sum(axis=1)
    dual = float(-beta * achieved - p @ (np.log2(inner) - beta * shift))
    return RdSolution(D, rate, kern, q, beta, achieved, dual, res, sol.iterations, d)


def d_tilted(p_w, rd: RdSolution, w, D: float | None = None):
    """j_W(w, D) = -log E[2^(nu* (D - d(w, Z)))] with Z from the optimal output law."""
    D = rd.D if D is None else D
    d = rd.d_fn
    w = np.asarray(w, dtype=np.int64)
    vals = -np.log2(np.exp2(rd.slope * (D - d[w])) @ rd.p_z)
    return float(vals) if vals.ndim == 0 else vals


def source_dispersion(p_w, d_fn, D: float) -> tuple[float, float, RdSolution]:
    """(R(D), Var[j_W(W, D)], solution)."""
    p = _weights(p_w)
    rd = ba_rd(p, d_fn, D)
    j = d_tilted(p, rd, np.arange(p.size), D)
    mean = float(p @ j)
    return rd.rate, max(float(p @ (j - mean) ** 2), 0.0), rd


def channel_dispersion(p_x, ch) -> tuple[float, float]:
    """Mean and variance of iota(X;Y)."""
    p = _weights(p_x)
    k = np.asarray(ch, dtype=np.float64)
    joint = JointPmf(p[:, None] * k, ("x", "y"))
    i = joint.info_density("x", "y")
    mean = joint.expect(i)
    return mean, max(joint.expect((i - mean) ** 2), 0.0)


# ---------------------------------------------------------------------------
# joint source-channel blocklength condition


@dataclass(frozen=True)
class DispersionInputs:
    C: float
    V: float
    R: float
    Vs: float        # source dispersion Var[j_W(W, D)]
    eps: float
    n: float
    k: float
    eta: float = 1.0
    alpha: float = 1.0
    beta: float = 0.0
    k0: int = 1

    def __post_init__(self):
        if self.V < 0 or self.Vs < 0:
            raise ProbError("dispersions must be nonnegative")
        if not 0 < self.eps < 1:
            raise ProbError("eps must lie in (0, 1)")
        if self.n <= 0 or self.k < 0:
            raise ProbError("need n > 0 and k >= 0")


@dataclass(frozen=True)
class BlocklengthCheck:
    lhs: float
    rhs: float
    satisfied: bool
    applicable: bool     # k >= k0 (or the source-free limit)


def jscc_blocklength_check(inp: DispersionInputs) -> BlocklengthCheck:
    """nC - kR >= sqrt(nV + kVs) Qinv(eps - eta/sqrt(min(n, k))) + alpha log k + (1/2) log n + beta.

    With k = 0 the source terms vanish: the minimum uses n and the
    alpha log k term is dropped.
    """
    m = inp.n if inp.k == 0 else min(inp.n, inp.k)
    shifted = inp.eps - inp.eta / math.sqrt(m)
    if shifted <= 0:
        raise ProbError(f"eps - eta/sqrt(min(n,k)) = {shifted:.6g} must be positive")
    spread = math.sqrt(inp.n * inp.V + inp.k * inp.Vs)
    rhs = spread * qinv(shifted) if spread > 0 else 0.0
    rhs += 0.5 * math.log2(inp.n) + inp.beta
    if inp.k > 0:
        rhs += inp.alpha * math.log2(inp.k)
    lhs = inp.n * inp.C - inp.k * inp.R
    return BlocklengthCheck(lhs, rhs, lhs >= rhs, inp.k == 0 or inp.k >= inp.k0)


def solve_blocklength(inp: DispersionInputs, n_max: float = 1e9) -> float:
    """Smallest real n at which the condition holds with equality (k fixed)."""
    def gap(n):
        shifted = inp.eps - inp.eta / math.sqrt(n if inp.k == 0 else min(n, inp.k))
        if shifted <= 0:
            return -math.inf
        c = jscc_blocklength_check(DispersionInputs(inp.C, inp.V, inp.R, inp.Vs, inp.eps, n, inp.k,
                                                    inp.eta, inp.alpha, inp.beta, inp.k0))
        return c.lhs - c.rhs

    lo = max((inp.eta / inp.eps) ** 2 * (1 + 1e-9), 1e-9)
    if inp.k:
        lo = max(lo, 1e-9)
    # find a bracket where the gap is finite and negative, then positive
    hi = max(lo * 2, 1.0)
    while gap(hi) < 0:
        hi *= 2
        if hi > n_max:
            raise ProbError("condition not met for any n up to n_max")
    a = hi / 2
    while a > lo and gap(a) >= 0:
        a /= 2
    if gap(a) >= 0 or not math.isfinite(gap(a)):
        a = lo
        while not math.isfinite(gap(a)):
            a = 0.5 * (a + hi)
    return float(optimize.brentq(gap, a, hi, xtol=1e-10, rtol=1e-14))
