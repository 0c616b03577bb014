"""Exact evaluation of one-shot achievability bounds and their comparators.

Every bound here is an expectation of a function of a few additive
per-letter quantities (information densities, distortions).  A joint pmf is
therefore reduced to a :class:`Profile`: the finite law of that vector.  The
n-fold i.i.d. extension of a profile is computed by exact convolution, or by
sampling letter sums when the convolution would be too large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .core_prob import (
    AbsoluteContinuityError,
    CapacityError,
    JointPmf,
    Kernel,
    Pmf,
    ProbError,
    power_distortion,
    product_pmf,
)
from .race_process import counter_uniform

EXACT_THRESHOLD = 10**7
DIST_TOL = 1e-12
Z95 = 1.959963984540054


# ---------------------------------------------------------------------------
# profiles


def _merge(values: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keep = probs > 0
    values, probs = values[keep], probs[keep]
    key = np.round(values, 9)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    merged = np.bincount(inverse.ravel(), weights=probs, minlength=first.size)
    return values[first], merged


@dataclass(frozen=True, eq=False)
class Profile:
    """Law of a vector of additive quantities, one column per quantity.

    ``n`` counts how many i.i.d. letters were summed.  In Monte Carlo mode the
    rows are equally weighted samples.
    """

    columns: tuple[str, ...]
    values: np.ndarray
    probs: np.ndarray
    n: int = 1
    mode: str = "exact"

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    @property
    def size(self) -> int:
        return self.probs.size

    @classmethod
    def from_joint(cls, joint: JointPmf, fields: Mapping[str, np.ndarray]) -> "Profile":
        mask = joint.p > 0
        cols = tuple(fields)
        vals = np.stack([np.broadcast_to(fields[c], joint.shape)[mask] for c in cols], axis=1)
        v, p = _merge(vals, joint.p[mask])
        return cls(cols, v, p / math.fsum(p))

    def power(self, n: int, threshold: int = EXACT_THRESHOLD) -> "Profile":
        """Exact law of the sum of n i.i.d. copies."""
        if n < 1:
            raise ProbError("n must be a positive integer")
        if self.n != 1 or self.mode != "exact":
            raise ProbError("power applies to an exact single-letter profile")
        vals, probs = self.values, self.probs
        for _ in range(n - 1):
            if probs.size * self.size > threshold:
                raise CapacityError(f"convolution would hold {probs.size * self.size} atoms")
            vals = (vals[:, None, :] + self.values[None, :, :]).reshape(-1, len(self.columns))
            probs = (probs[:, None] * self.probs[None, :]).ravel()
            vals, probs = _merge(vals, probs)
        return Profile(self.columns, vals, probs / math.fsum(probs), n, "exact")

    def sample(self, n: int, trials: int, seed: int = 0) -> "Profile":
        """Monte Carlo law of the n-letter sum from ``trials`` draws."""
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        u = counter_uniform(seed, np.arange(n, dtype=np.uint64)[None, :], np.arange(trials, dtype=np.uint64)[:, None])
        rows = np.minimum(np.searchsorted(cdf, u, side="left"), self.size - 1)
        vals = self.values[rows].sum(axis=1)
        return Profile(self.columns, vals, np.full(trials, 1.0 / trials), n, "monte-carlo")

    def extend(self, n: int, mode: str = "auto", threshold: int = EXACT_THRESHOLD,
               trials: int = 10**5, seed: int = 0) -> "Profile":
        if n == 1 and mode != "monte-carlo":
            return self
        if mode == "exact":
            return self.power(n, threshold)
        if mode == "monte-carlo":
            return self.sample(n, trials, seed)
        try:
            return self.power(n, threshold)
        except CapacityError:
            return self.sample(n, trials, seed)

    def mean(self, g: np.ndarray) -> tuple[float, float]:
        """Expectation of per-row values ``g`` and a 95% half-width (0 if exact)."""
        g = np.broadcast_to(np.asarray(g, dtype=np.float64), self.probs.shape)
        value = math.fsum(self.probs * g)
        if self.mode == "exact":
            return value, 0.0
        sd = float(np.std(g, ddof=1)) if g.size > 1 else 0.0
        return value, Z95 * sd / math.sqrt(g.size)

    def prob(self, event: np.ndarray) -> tuple[float, float]:
        return self.mean(np.asarray(event, dtype=np.float64))


# ---------------------------------------------------------------------------
# reports


@dataclass
class BoundReport:
    setting: str
    values: dict[str, float]
    params: dict
    mode: str = "exact"
    halfwidths: dict[str, float] = field(default_factory=dict)
    weight: float = 1.0

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def to_json(self) -> dict:
        return {
            "setting": self.setting,
            "mode": self.mode,
            "params": self.params,
            "values": self.values,
            "halfwidths": self.halfwidths,
            "weight": self.weight,
        }

    def rows(self) -> list[tuple[str, float]]:
        return sorted(self.values.items())


def _report(setting: str, prof: Profile, terms: Mapping[str, tuple[float, float]], params: dict,
            cap: Sequence[str] = ()) -> BoundReport:
    values, hw = {}, {}
    for name, (v, h) in terms.items():
        values[name] = min(v, 1.0) if name in cap else v
        if prof.mode != "exact":
            hw[name] = h
    return BoundReport(setting, values, dict(params, n=prof.n), prof.mode, hw, math.fsum(prof.probs))


def _scaled(coef, exponent) -> np.ndarray:
    """coef * 2**exponent with a zero coefficient dropping the term entirely."""
    exponent = np.asarray(exponent, dtype=np.float64)
    if np.all(np.asarray(coef) == 0):
        return np.zeros_like(exponent)
    with np.errstate(over="ignore"):
        return coef * np.exp2(exponent)


def _cap(x) -> np.ndarray:
    return np.minimum(x, 1.0)


def _field(joint: JointPmf, table: np.ndarray, args: Sequence[str]) -> np.ndarray:
    """Broadcast ``table[args...]`` to the joint's axes."""
    axes = joint.axes(args)
    order = sorted(range(len(axes)), key=lambda i: axes[i])
    t = np.transpose(np.asarray(table), order)
    shape = [1] * len(joint.shape)
    for i in order:
        shape[axes[i]] = joint.shape[axes[i]]
    return t.reshape(shape)


def _dens(joint: JointPmf, a, b, given=()) -> np.ndarray:
    try:
        return joint.info_density(a, b, given)
    except AbsoluteContinuityError as exc:
        raise AbsoluteContinuityError(f"{exc} (term iota({a};{b}|{given}))") from exc


def _as_kernel(k) -> Kernel:
    return k if isinstance(k, Kernel) else Kernel(np.asarray(k, dtype=np.float64))


def _as_pmf(p) -> Pmf:
    return p if isinstance(p, Pmf) else Pmf(np.asarray(p, dtype=np.float64))


def _exceeds(d: np.ndarray, n: int, level: float) -> np.ndarray:
    return d / n > level + DIST_TOL


# ---------------------------------------------------------------------------
# point-to-point channel


def channel_joint(p_x, ch) -> JointPmf:
    return _as_kernel(ch).joint(_as_pmf(p_x), ("x", "y"))


def channel_profile(p_x, ch) -> Profile:
    j = channel_joint(p_x, ch)
    return Profile.from_joint(j, {"i": _dens(j, "x", "y")})


def channel_bounds(p_x, ch, L: int, J: int = 1, n: int = 1, mode: str = "auto",
                   trials: int = 10**5, seed: int = 0) -> BoundReport:
    """Matching-lemma bounds for a point-to-point channel with L messages.

    ``prop1`` and ``thm2`` bound the unique-decoding error, ``dt`` is the
    dependence-testing comparator, ``dt_plus`` the same with (L+1)/2 and
    ``list`` the error of list decoding with list size J.
    """
    prof = channel_profile(p_x, ch).extend(n, mode, trials=trials, seed=seed)
    i = prof["i"]
    with np.errstate(over="ignore"):
        g = np.exp2(-i)
    terms = {
        "prop1": prof.mean(1.0 - 1.0 / (1.0 + L * g)),
        "thm2": prof.mean(1.0 - (1.0 - np.minimum(g, 1.0)) ** ((L + 1) / 2)),
        "dt": prof.mean(_cap((L - 1) / 2 * g) if L > 1 else np.zeros_like(g)),
        "dt_plus": prof.mean(_cap((L + 1) / 2 * g)),
        "list": prof.mean((1.0 - 1.0 / (1.0 + L * g)) ** J),
    }
    return _report("channel", prof, terms, {"L": L, "J": J})


# ---------------------------------------------------------------------------
# state at the encoder


def gp_joint(p_s, p_u_given_s, x_fn, ch) -> JointPmf:
    """Joint of (S, U, X, Y); ``ch`` is indexed [x, s, y] or has rows x * |S| + s."""
    p_s, k_us = _as_pmf(p_s), _as_kernel(p_u_given_s)
    x_fn = np.asarray(x_fn, dtype=np.int64)
    rows = np.asarray(ch.matrix if isinstance(ch, Kernel) else ch, dtype=np.float64)
    if rows.ndim == 2:
        rows = rows.reshape(rows.shape[0] // p_s.size, p_s.size, rows.shape[1])
    _as_kernel(rows.reshape(-1, rows.shape[2]))
    j = JointPmf(p_s.weights, ("s",)).extend(k_us.matrix, ("s",), "u")
    j = j.add_function(x_fn, ("u", "s"), "x", rows.shape[0])
    return j.extend(rows, ("x", "s"), "y")


def gp_profile(p_s, p_u_given_s, x_fn, ch) -> Profile:
    j = gp_joint(p_s, p_u_given_s, x_fn, ch)
    return Profile.from_joint(j, {"i_us": _dens(j, "u", "s"), "i_uy": _dens(j, "u", "y")})


def verdu_gp(prof: Profile, L: int, gamma: float, J: int) -> float:
    a, _ = prof.prob(prof["i_us"] > math.log2(J) - gamma)
    b, _ = prof.prob(prof["i_uy"] <= math.log2(L * J) + gamma)
    return a + b + 2.0**-gamma + math.exp(-(2.0**gamma))


def gp_bound(p_s, p_u_given_s, x_fn, ch, L: int, gamma: float = 1.0, J: int = 1, n: int = 1,
             mode: str = "auto", trials: int = 10**5, seed: int = 0) -> BoundReport:
    prof = gp_profile(p_s, p_u_given_s, x_fn, ch).extend(n, mode, trials=trials, seed=seed)
    r = _scaled(L, prof["i_us"] - prof["i_uy"])
    terms = {"thm3": prof.mean(1.0 - 1.0 / (1.0 + r)), "verdu": (verdu_gp(prof, L, gamma, J), 0.0)}
    return _report("gp", prof, terms, {"L": L, "gamma": gamma, "J": J})


# ---------------------------------------------------------------------------
# lossy source coding with decoder side information


def wz_joint(p_x, side, p_u_given_x, z_fn) -> JointPmf:
    p_x, side, k_ux = _as_pmf(p_x), _as_kernel(side), _as_kernel(p_u_given_x)
    z_fn = np.asarray(z_fn, dtype=np.int64)
    j = JointPmf(p_x.weights, ("x",)).extend(side.matrix, ("x",), "y")
    j = j.extend(k_ux.matrix, ("x",), "u")
    return j.add_function(z_fn, ("u", "y"), "z", int(z_fn.max()) + 1)


def wz_profile(p_x, side, p_u_given_x, z_fn, d_fn) -> Profile:
    j = wz_joint(p_x, side, p_u_given_x, z_fn)
    d_fn = np.asarray(d_fn, dtype=np.float64)
    d = _field(j, d_fn[:, : j.shape[j.axes("z")[0]]], ("x", "z"))
    return Profile.from_joint(j, {"i_ux": _dens(j, "u", "x"), "i_uy": _dens(j, "u", "y"), "d": d})


def watanabe_wz(prof: Profile, L: int, D: float, gamma_p: float, gamma_c: float, J: int) -> float:
    ev = (prof["i_ux"] > gamma_c) | (prof["i_uy"] < gamma_p) | _exceeds(prof["d"], prof.n, D)
    p, _ = prof.prob(ev)
    return p + J / (2.0**gamma_p * L) + 0.5 * math.sqrt(2.0**gamma_c / J)


def wz_bound(p_x, side, p_u_given_x, z_fn, d_fn, D: float, L: int, gamma_p: float = 1.0,
             gamma_c: float = 1.0, J: int = 1, n: int = 1, mode: str = "auto",
             trials: int = 10**5, seed: int = 0) -> BoundReport:
    prof = wz_profile(p_x, side, p_u_given_x, z_fn, d_fn).extend(n, mode, trials=trials, seed=seed)
    ok = ~_exceeds(prof["d"], prof.n, D)
    r = _scaled(1.0 / L, prof["i_ux"] - prof["i_uy"])
    terms = {
        "thm4": prof.mean(1.0 - ok / (1.0 + r)),
        "watanabe": (watanabe_wz(prof, L, D, gamma_p, gamma_c, J), 0.0),
    }
    return _report("wz", prof, terms, {"L": L, "D": D, "gamma_p": gamma_p, "gamma_c": gamma_c, "J": J})


# ---------------------------------------------------------------------------
# joint source-channel coding


def ball_mass(p_z, d_fn, D: float) -> np.ndarray:
    """rho(w) = P_Z{z : d(w, z) <= D} for every source letter w."""
    d_fn = np.asarray(d_fn, dtype=np.float64)
    return (d_fn <= D + DIST_TOL) @ _as_pmf(p_z).weights


def jscc_bound(p_w, p_x, ch, p_z, d_fn, D: float, J: int = 1, n: int = 1, mode: str = "auto",
               trials: int = 10**5, seed: int = 0) -> BoundReport:
    """Excess-distortion bound for sending W over the channel with n uses per n source letters."""
    p_w, p_z = _as_pmf(p_w), _as_pmf(p_z)
    d_fn = np.asarray(d_fn, dtype=np.float64)
    if n > 1:
        p_w = product_pmf(*([p_w] * n))
        p_z = product_pmf(*([p_z] * n))
        d_fn = power_distortion(d_fn, n)
    rho = ball_mass(p_z, d_fn, D)
    prof = channel_profile(p_x, ch).extend(n, mode, trials=trials, seed=seed)
    w_rho, w_p = np.unique(rho, return_inverse=True)
    w_prob = np.bincount(w_p, weights=p_w.weights)
    i = prof["i"][:, None]
    with np.errstate(over="ignore"):
        t5 = 1.0 / (1.0 + w_rho[None, :] * np.exp2(i))
    thm5 = prof.mean(t5 @ w_prob)
    ch_term = prof.mean(_cap(_scaled(J, -prof["i"])))
    src_term = math.fsum(w_prob * (1.0 - w_rho) ** J)
    terms = {"thm5": thm5, "kostina": (ch_term[0] + src_term, ch_term[1])}
    return _report("jscc", prof, terms, {"D": D, "J": J})


# ---------------------------------------------------------------------------
# broadcast channels


def _split_output(ch2, y_sizes: tuple[int, int] | None) -> np.ndarray:
    """Channel with two outputs as an array indexed [x, y1, y2]."""
    arr = np.asarray(ch2.matrix if isinstance(ch2, Kernel) else ch2, dtype=np.float64)
    if arr.ndim == 3:
        _as_kernel(arr.reshape(arr.shape[0], -1))
        return arr
    ch2 = _as_kernel(arr)
    if y_sizes is None:
        raise ProbError("two-output channel needs y_sizes or a 3-d array")
    n1, n2 = y_sizes
    if n1 * n2 != ch2.n_out:
        raise ProbError("output sizes do not match the kernel")
    return ch2.matrix.reshape(ch2.n_in, n1, n2)


def _two_stage(j: JointPmf, rows: np.ndarray, names: tuple[str, str]) -> JointPmf:
    """Append (y1, y2) ~ rows[x] as y1 then y2 given (x, y1)."""
    j = j.extend(rows.sum(axis=2), ("x",), names[0])
    marg = rows.sum(axis=2, keepdims=True)
    cond = np.where(marg > 0, rows / np.maximum(marg, 1e-300), 1.0 / rows.shape[2])
    return j.extend(cond, ("x", names[0]), names[1])


def marton_joint(p_u12, x_fn, ch2, y_sizes=None) -> JointPmf:
    rows = _split_output(ch2, y_sizes)
    j = JointPmf(np.asarray(p_u12, dtype=np.float64), ("u1", "u2"))
    j = j.add_function(np.asarray(x_fn), ("u1", "u2"), "x", rows.shape[0])
    return _two_stage(j, rows, ("y1", "y2"))


def marton_profile(p_u12, x_fn, ch2, y_sizes=None) -> Profile:
    j = marton_joint(p_u12, x_fn, ch2, y_sizes)
    return Profile.from_joint(j, {
        "i1": _dens(j, "u1", "y1"),
        "i2": _dens(j, "u2", "y2"),
        "i12": _dens(j, "u1", "u2"),
    })


def marton_bound(p_u12, x_fn, ch2, y_sizes, L1: int, L2: int, J: int = 1, n: int = 1,
                 mode: str = "auto", trials: int = 10**5, seed: int = 0) -> BoundReport:
    prof = marton_profile(p_u12, x_fn, ch2, y_sizes).extend(n, mode, trials=trials, seed=seed)
    s = (_scaled(L1 * J, -prof["i1"]) + _scaled(L2 * (1 - 1 / J), -prof["i2"])
         + _scaled(L2 / J, prof["i12"] - prof["i2"]))
    return _report("marton", prof, {"thm8": prof.mean(_cap(s))}, {"L1": L1, "L2": L2, "J": J})


def bc_common_joint(p_u012, x_fn, ch2, y_sizes=None) -> JointPmf:
    rows = _split_output(ch2, y_sizes)
    j = JointPmf(np.asarray(p_u012, dtype=np.float64), ("u0", "u1", "u2"))
    j = j.add_function(np.asarray(x_fn), ("u0", "u1", "u2"), "x", rows.shape[0])
    return _two_stage(j, rows, ("y1", "y2"))


def bc_common_profile(p_u012, x_fn, ch2, y_sizes=None) -> Profile:
    j = bc_common_joint(p_u012, x_fn, ch2, y_sizes)
    return Profile.from_joint(j, {
        "a": _dens(j, ("u0", "u1"), "y1"),
        "b": _dens(j, "u1", "y1", "u0"),
        "c": _dens(j, "u1", "u2", "u0"),
        "d": _dens(j, ("u0", "u2"), "y2"),
        "e": _dens(j, "u2", "y2", "u0"),
    })


def bc_terms(prof: Profile, L0: int, L1: int, L2: int, J: int, K1: int, K2: int, gamma: float):
    lt0 = L0 * K1 * K2
    lt1 = math.ceil(L1 / K1)
    lt2 = math.ceil(L2 / K2)
    a, b, c, d, e = (prof[k] for k in "abcde")
    with np.errstate(over="ignore", divide="ignore"):
        A = (np.log2(_scaled(1.0 / (lt1 * J), b) + 1.0) + 1.0) ** 2
        inner = _scaled(lt2 / J, c - e) + _scaled(lt2 * (1 - 1 / J), -e)
        B = (np.log2(1.0 / inner + 1.0) + 1.0) ** 2
    s = (lt0 * lt1 * J * A * np.exp2(-a) + lt1 * J * A * np.exp2(-b)
         + B * (_scaled(lt0 * lt2 / J, c - d) + _scaled(lt0 * lt2 * (1 - 1 / J), -d)
                + _scaled(lt2 / J, c - e) + _scaled(lt2 * (1 - 1 / J), -e)))
    thm7 = prof.mean(_cap(s))
    lg = math.log2
    ev = ((lg(lt1 * J) > b - gamma) | (lg(lt2) > e - gamma) | (lg(lt2 / J) > e - c - gamma)
          | (lg(lt0 * lt1 * J) > a - gamma) | (lg(lt0 * lt2) > d - gamma)
          | (lg(lt0 * lt2 / J) > d - c - gamma))
    p_ev = prof.prob(ev)
    sq = prof.mean(b**2 + e**2)
    pe2 = p_ev[0] + 2.0**-gamma * (8.0 * sq[0] + 12.0 * gamma**2 + 84.0)
    return thm7, (pe2, p_ev[1] + 2.0**-gamma * 8.0 * sq[1])


def bc_bounds(p_u012, x_fn, ch2, y_sizes, L0: int, L1: int, L2: int, J: int = 1, K1: int = 1,
              K2: int = 1, gamma: float = 1.0, n: int = 1, mode: str = "auto",
              trials: int = 10**5, seed: int = 0) -> BoundReport:
    """Common-message broadcast bound and its event-plus-penalty weakening."""
    prof = bc_common_profile(p_u012, x_fn, ch2, y_sizes).extend(n, mode, trials=trials, seed=seed)
    thm7, pe2 = bc_terms(prof, L0, L1, L2, J, K1, K2, gamma)
    params = {"L0": L0, "L1": L1, "L2": L2, "J": J, "K1": K1, "K2": K2, "gamma": gamma}
    return _report("bc_common", prof, {"thm7": thm7, "thm7_pe2": pe2}, params, cap=("thm7_pe2",))


# ---------------------------------------------------------------------------
# distributed lossy source coding


def dlsc_joint(p_x12, k1, k2, z_fns) -> JointPmf:
    k1, k2 = _as_kernel(k1), _as_kernel(k2)
    z1, z2 = (np.asarray(z, dtype=np.int64) for z in z_fns)
    j = JointPmf(np.asarray(p_x12, dtype=np.float64), ("x1", "x2"))
    j = j.extend(k1.matrix, ("x1",), "u1").extend(k2.matrix, ("x2",), "u2")
    j = j.add_function(z1, ("u1", "u2"), "z1", int(z1.max()) + 1)
    return j.add_function(z2, ("u1", "u2"), "z2", int(z2.max()) + 1)


def dlsc_profile(p_x12, k1, k2, z_fns, d_fns) -> Profile:
    j = dlsc_joint(p_x12, k1, k2, z_fns)
    d1, d2 = (np.asarray(d, dtype=np.float64) for d in d_fns)
    nz1, nz2 = j.shape[j.axes("z1")[0]], j.shape[j.axes("z2")[0]]
    return Profile.from_joint(j, {
        "i1_c": _dens(j, "u1", "x1", "u2"),
        "i2_c": _dens(j, "u2", "x2", "u1"),
        "i12": _dens(j, ("u1", "u2"), ("x1", "x2")),
        "i1": _dens(j, "u1", "x1"),
        "iu": _dens(j, "u1", "u2"),
        "d1": _field(j, d1[:, :nz1], ("x1", "z1")),
        "d2": _field(j, d2[:, :nz2], ("x2", "z2")),
    })


def dlsc_terms(prof: Profile, D1: float, D2: float, L1: int, L2: int, gamma: float, J: int) -> dict:
    exc = (_exceeds(prof["d1"], prof.n, D1) | _exceeds(prof["d2"], prof.n, D2)).astype(float)
    i1c, i2c, i12, i1, iu = prof["i1_c"], prof["i2_c"], prof["i12"], prof["i1"], prof["iu"]
    with np.errstate(over="ignore"):
        log_fac = (np.log2(_scaled(L2, -i2c) + 1.0) + 1.0) ** 2
    base = exc + _scaled(1.0 / L1, i1c)
    phi = base + (_scaled(1.0 / (L1 * L2), i12) + _scaled(1.0 / L2, i2c)) * log_fac
    lg = math.log2
    ev = (exc > 0) | (lg(L1) < i1c + gamma) | (lg(L2) < i2c + gamma) | (lg(L1 * L2) < i12 + gamma)
    p_ev = prof.prob(ev)
    sq = prof.mean(iu**2)
    pe2 = p_ev[0] + 2.0**-gamma * (4.0 * sq[0] + 4.0 * gamma**2 + 29.0)
    trunc = base + _scaled(1.0 / (L1 * J), i1) + _scaled(J / L2, i2c)
    h = math.log(J) + 1.0
    harm = base + _scaled(1.0 / (L1 * J), i1) + _scaled(h / (L1 * L2), i12) + _scaled(h / L2, i2c)
    return {
        "phi": prof.mean(_cap(phi)),
        "pe2": (pe2, p_ev[1] + 2.0**-gamma * 4.0 * sq[1]),
        "trunc": prof.mean(_cap(trunc)),
        "harmonic": prof.mean(_cap(harm)),
    }


def dlsc_bounds(p_x12, k1, k2, z_fns, d_fns, D1: float, D2: float, L1: int, L2: int,
                gamma: float = 1.0, J: int = 1024, n: int = 1, mode: str = "auto",
                trials: int = 10**5, seed: int = 0) -> BoundReport:
    """All four excess-distortion bound variants for two distributed encoders."""
    prof = dlsc_profile(p_x12, k1, k2, z_fns, d_fns).extend(n, mode, trials=trials, seed=seed)
    terms = dlsc_terms(prof, D1, D2, L1, L2, gamma, J)
    params = {"D1": D1, "D2": D2, "L1": L1, "L2": L2, "gamma": gamma, "J": J}
    return _report("dlsc", prof, terms, params, cap=("pe2",))


# ---------------------------------------------------------------------------
# multiple access


def mac_joint(p_x1, p_x2, ch) -> JointPmf:
    p_x1, p_x2 = _as_pmf(p_x1), _as_pmf(p_x2)
    rows = np.asarray(ch.matrix if isinstance(ch, Kernel) else ch, dtype=np.float64)
    rows = rows.reshape(p_x1.size, p_x2.size, rows.shape[-1])
    _as_kernel(rows.reshape(-1, rows.shape[2]))
    j = JointPmf(np.multiply.outer(p_x1.weights, p_x2.weights), ("x1", "x2"))
    return j.extend(rows, ("x1", "x2"), "y")


def mac_profile(p_x1, p_x2, ch) -> Profile:
    j = mac_joint(p_x1, p_x2, ch)
    return Profile.from_joint(j, {
        "a": _dens(j, ("x1", "x2"), "y"),
        "b": _dens(j, "x2", ("x1", "y")),
        "c": _dens(j, "x1", ("x2", "y")),
        "e": _dens(j, "x1", "y"),
        "f": _dens(j, "x1", "x2", "y"),
    })


def mac_terms(prof: Profile, L1: int, L2: int, gamma: float, J: int) -> dict:
    a, b, c, e, f = (prof[k] for k in "abcef")
    with np.errstate(over="ignore"):
        log_fac = (np.log2(_scaled(1.0 / L2, b) + 1.0) + 1.0) ** 2
    phi = (_scaled(L1 * L2, -a) + _scaled(L2, -b)) * log_fac + _scaled(L1, -c)
    lg = math.log2
    ev = (lg(L1) > c - gamma) | (lg(L2) > b - gamma) | (lg(L1 * L2) > a - gamma)
    p_ev = prof.prob(ev)
    sq = prof.mean(f**2)
    pe2 = p_ev[0] + 2.0**-gamma * (4.0 * sq[0] + 4.0 * gamma**2 + 29.0)
    trunc = _scaled(L1 / J, -e) + _scaled(L2 * J, -b) + _scaled(L1, -c)
    h = math.log(J) + 1.0
    harm = _scaled(L1 * L2 * h, -a) + _scaled(L2 * h, -b) + _scaled(L1, -c) + _scaled(L1 / J, -e)
    return {
        "phi": prof.mean(_cap(phi)),
        "pe2": (pe2, p_ev[1] + 2.0**-gamma * 4.0 * sq[1]),
        "event": p_ev,
        "trunc": prof.mean(_cap(trunc)),
        "harmonic": prof.mean(_cap(harm)),
    }


def mac_bounds(p_x1, p_x2, ch, L1: int, L2: int, gamma: float = 1.0, J: int = 1024, n: int = 1,
               mode: str = "auto", trials: int = 10**5, seed: int = 0) -> BoundReport:
    prof = mac_profile(p_x1, p_x2, ch).extend(n, mode, trials=trials, seed=seed)
    terms = mac_terms(prof, L1, L2, gamma, J)
    return _report("mac", prof, terms, {"L1": L1, "L2": L2, "gamma": gamma, "J": J}, cap=("pe2",))


# ---------------------------------------------------------------------------
# resolvability and wiretap


def resolvability_bound(p_x, ch, L: int, J: int = 1, gamma: float | None = None,
                        alpha: float | None = None, n: int = 1, mode: str = "auto",
                        trials: int = 10**5, seed: int = 0) -> BoundReport:
    """Soft-covering bounds on the expected TV of an i.i.d. codebook of size L."""
    prof = channel_profile(p_x, ch).extend(n, mode, trials=trials, seed=seed)
    i = prof["i"]
    with np.errstate(over="ignore"):
        miss = (1.0 + np.exp2(-i)) ** (-float(J))
    first = prof.mean(miss)
    terms = {"pe1": (first[0] + 0.5 * math.sqrt(J / L), first[1])}
    params: dict = {"L": L, "J": J}
    if gamma is not None:
        if not 0 < gamma <= math.log2(L):
            raise ProbError("gamma must lie in (0, log2 L]")
        ev = prof.prob(i > math.log2(L) - gamma)
        terms["pe2"] = (ev[0] + 2.0 ** (-gamma / 2) * (1 + 0.5 * math.sqrt(gamma)) + 0.5 * math.sqrt(1 / L), ev[1])
        params["gamma"] = gamma
    if alpha is not None:
        ev = prof.prob(i > math.log2(alpha))
        terms["hayashi"] = (ev[0] + 0.5 * math.sqrt(alpha / L), ev[1])
        params["alpha"] = alpha
    return _report("resolvability", prof, terms, params)


def wiretap_joint(p_ux, ch2, y_sizes=None) -> JointPmf:
    rows = _split_output(ch2, y_sizes)
    j = JointPmf(np.asarray(p_ux, dtype=np.float64), ("u", "x"))
    return _two_stage(j, rows, ("y", "z"))


def wiretap_bound(p_ux, ch2, y_sizes, L: int, K: int, J: int, nu: float = 1.0, n: int = 1,
                  mode: str = "auto", trials: int = 10**5, seed: int = 0) -> BoundReport:
    """Error-plus-secrecy bound; ``reliability`` and ``secrecy`` are its two parts."""
    j = wiretap_joint(p_ux, ch2, y_sizes)
    prof = Profile.from_joint(j, {"iy": _dens(j, "u", "y"), "iz": _dens(j, "u", "z")})
    prof = prof.extend(n, mode, trials=trials, seed=seed)
    rel = prof.mean(_cap(_scaled(L * K, -prof["iy"])))
    with np.errstate(over="ignore"):
        miss = prof.mean((1.0 + np.exp2(-prof["iz"])) ** (-float(J)))
    sec = 2.0 * miss[0] + math.sqrt(J / K)
    terms = {
        "reliability": rel,
        "secrecy": (sec, 2.0 * miss[1]),
        "total": (rel[0] + nu * sec, rel[1] + 2.0 * nu * miss[1]),
    }
    return _report("wiretap", prof, terms, {"L": L, "K": K, "J": J, "nu": nu})


def sweep(fn: Callable[..., BoundReport], grid: Mapping[str, Sequence], **fixed) -> list[BoundReport]:
    """Evaluate ``fn`` over the Cartesian product of ``grid`` values."""
    keys = list(grid)
    out = []
    for combo in np.ndindex(*(len(grid[k]) for k in keys)):
        kw = {k: grid[k][i] for k, i in zip(keys, combo)}
        out.append(fn(**fixed, **kw))
    return out
