"""Monte Carlo simulators for the coding schemes built from exponential races.

Every trial owns its race realizations (seeded from the master seed and the
trial index) and an auxiliary uniform stream for messages, sources and
channel noise, so results do not depend on chunking or worker count.

Intensity measures factor as (auxiliary pmf) x (uniform message pmf); the
atom of (message m, auxiliary index a) is ``m * |A|**n + a`` so an encoder's
message slice and a decoder's full view share arrival streams.  n-letter
tables are never materialized: rows of product kernels are formed as outer
products of letter rows, and mixtures are pushed through product kernels one
letter at a time.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import bounds as B
from .core_prob import CapacityError, JointPmf, ProbError, atom_budget, check_budget
from .instances import Instance, bound_report, primary_bound
from .pml_analytics import _h_tail, phi_constant
from .race_process import batch_first, batch_select, counter_uniform, substream, trial_seeds

Z95 = 1.959963984540054
DIST_TOL = B.DIST_TOL
CHUNK_WORK = 2**21


class Setting(str, enum.Enum):
    CHANNEL = "channel"
    CHANNEL_RANK = "channel_rank"
    LIST = "list"
    GP = "gp"
    WZ = "wz"
    JSCC = "jscc"
    MARTON = "marton"
    BC_COMMON = "bc_common"
    DLSC = "dlsc"
    MAC = "mac"
    RESOLVABILITY = "resolvability"
    WIRETAP = "wiretap"


@dataclass
class SchemeConfig:
    instance: Instance
    trials: int = 10**5
    seed: int = 0
    phi_tol: float | None = None     # overrides the instance's kmax when given
    fixed_message: int | None = None  # channel_rank: send this message every trial
    workers: int = 1
    trace: int = 0

    @property
    def setting(self) -> Setting:
        return Setting(self.instance.setting)


def wilson(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ProbError("need at least one trial")
    p = k / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass
class EmpiricalResult:
    setting: str
    trials: int
    failures: int | None
    estimate: float
    ci_lo: float
    ci_hi: float
    bound: float
    bound_name: str
    bound_halfwidth: float = 0.0
    seed: int = 0
    params: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)

    @property
    def halfwidth(self) -> float:
        return max(self.ci_hi - self.estimate, self.estimate - self.ci_lo)

    def dominated(self, sigmas: float = 3.0) -> bool:
        """Empirical value within ``sigmas`` CI half-widths of the bound."""
        return self.estimate <= self.bound + sigmas * self.halfwidth + sigmas * self.bound_halfwidth

    def to_json(self) -> dict:
        return {
            "setting": self.setting, "trials": self.trials, "failures": self.failures,
            "estimate": self.estimate, "ci_lo": self.ci_lo, "ci_hi": self.ci_hi,
            "bound": self.bound, "bound_name": self.bound_name,
            "bound_halfwidth": self.bound_halfwidth, "dominated": self.dominated(),
            "seed": self.seed, "params": self.params, "extra": self.extra, "trace": self.trace,
        }


# ---------------------------------------------------------------------------
# letter-wise helpers


def _digits(idx: np.ndarray, base: int, n: int) -> np.ndarray:
    """Mixed-radix digits (first letter most significant), shape (..., n)."""
    powers = base ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (np.asarray(idx, dtype=np.int64)[..., None] // powers) % base


def _index(digits: np.ndarray, base: int) -> np.ndarray:
    n = digits.shape[-1]
    powers = base ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (digits * powers).sum(axis=-1)


def _outer(rows: np.ndarray) -> np.ndarray:
    """(B, n, A) letter rows -> (B, A**n) product rows."""
    out = rows[:, 0]
    for i in range(1, rows.shape[1]):
        out = (out[:, :, None] * rows[:, i, None, :]).reshape(out.shape[0], -1)
    return out


def _outer_sum(rows: np.ndarray) -> np.ndarray:
    """(B, n, A) letter values -> (B, A**n) sums over letters."""
    out = rows[:, 0]
    for i in range(1, rows.shape[1]):
        out = (out[:, :, None] + rows[:, i, None, :]).reshape(out.shape[0], -1)
    return out


def _contract(w: np.ndarray, mats: np.ndarray) -> np.ndarray:
    """sum_a w[b, a] prod_i mats[b, i, a_i, c_i]; w (B, A**n), mats (B, n, A, C)."""
    b, n, a, c = mats.shape
    out = w
    for i in range(n):
        out = out.reshape(b, c**i, a, a ** (n - i - 1))
        out = np.einsum("bpaq,bac->bpcq", out, mats[:, i])
    return out.reshape(b, c**n)


def _power_pmf(p: np.ndarray, n: int) -> np.ndarray:
    return _outer(np.broadcast_to(p, (1, n, p.size)))[0]


def _aux(seeds: np.ndarray, slot: int, count: int = 1) -> np.ndarray:
    """Auxiliary uniforms (B, count) for draw ``slot``."""
    return counter_uniform(substream(seeds, 0xA0)[:, None], slot, np.arange(count, dtype=np.uint64)[None, :])


def _categorical(rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-cdf sample from probability rows (..., A) with uniforms (...)."""
    cdf = np.cumsum(rows, axis=-1)
    return np.minimum((cdf < u[..., None] * cdf[..., -1:]).sum(axis=-1), rows.shape[-1] - 1)


def _message(seeds, slot: int, L: int) -> np.ndarray:
    return np.minimum((_aux(seeds, slot)[:, 0] * L).astype(np.int64), L - 1)


def _letters(seeds, slot: int, rows: np.ndarray) -> np.ndarray:
    """Sample n letters, row ``rows[b, i]`` for letter i; returns digits (B, n)."""
    return _categorical(rows, _aux(seeds, slot, rows.shape[1]))


def _ratio(joint: JointPmf, target: str, given) -> np.ndarray:
    """Letter table P(target | given) / P(target), given axes first."""
    cond = joint.conditional(target, given)
    marg = joint.pmf(target).weights
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(marg > 0, cond / np.where(marg > 0, marg, 1.0), 0.0)


@dataclass(frozen=True)
class _Race:
    """Layout of one process: ``slices`` messages times an n-letter alphabet."""

    p: np.ndarray
    n: int
    slices: int

    @property
    def base(self) -> int:
        return self.p.size

    @property
    def size(self) -> int:
        return self.p.size**self.n

    @property
    def pn(self) -> np.ndarray:
        return _power_pmf(self.p, self.n)

    @property
    def rates(self) -> np.ndarray:
        return np.tile(self.pn, self.slices) / self.slices

    def slice_atoms(self, m: np.ndarray) -> np.ndarray:
        return m[:, None] * self.size + np.arange(self.size)[None, :]

    def full(self, dens: np.ndarray) -> np.ndarray:
        return np.tile(dens, (1, self.slices))

    def ratio_rows(self, table: np.ndarray, *digits) -> np.ndarray:
        """Product rows of a letter ratio table indexed by conditioning digits."""
        return _outer(table[digits])


def _distortion(d: np.ndarray, a_digits: np.ndarray, b_digits: np.ndarray) -> np.ndarray:
    return d[a_digits, b_digits].mean(axis=-1)


def _phi_weights(kmax: int) -> np.ndarray:
    return phi_constant().truncated(kmax)


def phi_kmax(tol: float, limit: int | None = None) -> int:
    """Smallest power of two K with phi tail mass beyond K below ``tol``.

    The tail decays like 1/ln K, so small tolerances need astronomically many
    points; a CapacityError reports the shortfall instead of looping.
    """
    limit = atom_budget() if limit is None else limit
    c = phi_constant().c
    k = 1
    while k <= limit:
        if c * _h_tail(k + 1.0) < tol:
            return k
        k *= 2
    log10_need = c * math.log(2.0) ** 2 / tol / math.log(10.0)
    raise CapacityError(f"phi tail below {tol:g} needs about 10^{log10_need:.3g} points; budget is {limit}")


def _weights_from_points(pos: np.ndarray, psi: np.ndarray, width: int) -> np.ndarray:
    """Scatter phi weights of listed points into per-atom totals (B, width)."""
    b = pos.shape[0]
    flat = (np.arange(b)[:, None] * width + np.where(pos >= 0, pos, 0)).ravel()
    w = np.where(pos >= 0, psi[None, :], 0.0).ravel()
    return np.bincount(flat, weights=w, minlength=b * width).reshape(b, width)


# ---------------------------------------------------------------------------
# settings: each prepare() returns a runner mapping a chunk of seeds to
# per-trial arrays with a "fail" (bool) or "value" (float) entry


def _prep_channel(inst: Instance, cfg: SchemeConfig):
    n, L = inst.n, inst["L"]
    ch = inst["ch"]
    joint = B.channel_joint(inst["p_x"], ch)
    rxy = _ratio(joint, "x", "y")
    race = _Race(joint.pmf("x").weights, n, L)
    list_size = inst["J"] if cfg.setting is Setting.LIST else 1

    def run(seeds):
        m = _message(seeds, 0, L)
        ps = substream(seeds, 1)
        x = batch_select(ps, np.ones(race.size), race.rates, race.slice_atoms(m))
        xd = _digits(x, race.base, n)
        yd = _letters(seeds, 1, ch[xd])
        dens = race.full(race.ratio_rows(rxy, yd))
        if list_size == 1:
            m_hat = batch_select(ps, dens, race.rates) // race.size
            return {"fail": m_hat != m, "m": m, "x": x, "y": _index(yd, ch.shape[1]), "m_hat": m_hat}
        pos = batch_first(ps, dens, race.rates, list_size)[0]
        hit = (pos // race.size == m[:, None]) & (pos >= 0)
        return {"fail": ~hit.any(axis=1), "m": m}

    return run, race.slices * race.size


def _prep_channel_rank(inst: Instance, cfg: SchemeConfig):
    n, L = inst.n, inst["L"]
    ch = inst["ch"]
    joint = B.channel_joint(inst["p_x"], ch)
    rxy = _ratio(joint, "x", "y")
    race = _Race(joint.pmf("x").weights, n, 1)
    fixed = cfg.fixed_message
    if fixed is not None and fixed < 1:
        raise ProbError("fixed_message counts from 1")
    top = fixed if fixed is not None else L

    def run(seeds):
        m = np.full(seeds.size, fixed - 1) if fixed is not None else _message(seeds, 0, L)
        ps = substream(seeds, 1)
        pos, idx, _, _ = batch_first(ps, np.ones(race.size), race.rates, top)
        rows = np.arange(seeds.size)
        x, x_idx = pos[rows, m], idx[rows, m]
        yd = _letters(seeds, 1, ch[_digits(x, race.base, n)])
        dpos, didx, _, _ = batch_first(ps, race.ratio_rows(rxy, yd), race.rates, 1)
        return {"fail": (dpos[:, 0] != x) | (didx[:, 0] != x_idx), "m": m}

    return run, race.size


def _prep_gp(inst: Instance, cfg: SchemeConfig):
    n, L = inst.n, inst["L"]
    x_fn, ch = inst["x_fn"], inst["ch"]
    joint = B.gp_joint(inst["p_s"], inst["p_u_given_s"], x_fn, ch)
    rus, ruy = _ratio(joint, "u", "s"), _ratio(joint, "u", "y")
    race = _Race(joint.pmf("u").weights, n, L)
    p_s = joint.pmf("s").weights

    def run(seeds):
        m = _message(seeds, 0, L)
        sd = _letters(seeds, 1, np.broadcast_to(p_s, (seeds.size, n, p_s.size)))
        ps = substream(seeds, 1)
        u = batch_select(ps, race.ratio_rows(rus, sd), race.rates, race.slice_atoms(m))
        xd = x_fn[_digits(u, race.base, n), sd]
        yd = _letters(seeds, 2, ch[xd, sd])
        m_hat = batch_select(ps, race.full(race.ratio_rows(ruy, yd)), race.rates) // race.size
        return {"fail": m_hat != m, "m": m}

    return run, race.slices * race.size


def _prep_wz(inst: Instance, cfg: SchemeConfig):
    n, L, D = inst.n, inst["L"], inst["D"]
    side, z_fn, d_fn = inst["side"], inst["z_fn"], inst["d_fn"]
    joint = B.wz_joint(inst["p_x"], side, inst["p_u_given_x"], z_fn)
    rux, ruy = _ratio(joint, "u", "x"), _ratio(joint, "u", "y")
    race = _Race(joint.pmf("u").weights, n, L)
    p_x = joint.pmf("x").weights

    def run(seeds):
        xd = _letters(seeds, 0, np.broadcast_to(p_x, (seeds.size, n, p_x.size)))
        yd = _letters(seeds, 1, side[xd])
        ps = substream(seeds, 1)
        pos = batch_select(ps, race.full(race.ratio_rows(rux, xd)), race.rates)
        m = pos // race.size
        u_hat = batch_select(ps, race.ratio_rows(ruy, yd), race.rates, race.slice_atoms(m))
        zd = z_fn[_digits(u_hat, race.base, n), yd]
        dist = _distortion(d_fn, xd, zd)
        return {"fail": dist > D + DIST_TOL, "m": m, "distortion": dist}

    return run, race.slices * race.size


def _prep_jscc(inst: Instance, cfg: SchemeConfig):
    n, D = inst.n, inst["D"]
    ch, d_fn = inst["ch"], inst["d_fn"]
    p_w, p_x, p_z = inst["p_w"], inst["p_x"], inst["p_z"]
    rxy = _ratio(B.channel_joint(p_x, ch), "x", "y")
    xs, zs = p_x.size**n, p_z.size**n
    pzn = _power_pmf(p_z, n)
    rates = np.multiply.outer(_power_pmf(p_x, n), pzn).ravel()

    def run(seeds):
        b = seeds.size
        wd = _letters(seeds, 0, np.broadcast_to(p_w, (b, n, p_w.size)))
        ball = _outer_sum(d_fn[wd]) / n <= D + DIST_TOL
        rho = ball @ pzn
        enc = np.where(rho[:, None] > 0, ball / np.where(rho > 0, rho, 1.0)[:, None], 1.0)
        ps = substream(seeds, 1)
        pos = batch_select(ps, np.tile(enc, (1, xs)), rates)
        xd = _digits(pos // zs, p_x.size, n)
        yd = _letters(seeds, 1, ch[xd])
        dec = np.repeat(_outer(rxy[yd]), zs, axis=1)
        z_hat = batch_select(ps, dec, rates) % zs
        dist = _distortion(d_fn, wd, _digits(z_hat, p_z.size, n))
        return {"fail": dist > D + DIST_TOL, "rho": rho}

    return run, xs * zs


def _split_pair(ch2: np.ndarray, xd: np.ndarray, seeds, slot: int):
    ny2 = ch2.shape[2]
    flat = _letters(seeds, slot, ch2.reshape(ch2.shape[0], -1)[xd])
    return flat // ny2, flat % ny2


def _resample(seeds, slot: int, weights: np.ndarray) -> np.ndarray:
    """Index k with probability proportional to weights[b, k]."""
    u = _aux(seeds, slot)[:, 0]
    return _categorical(weights, u)


def _prep_marton(inst: Instance, cfg: SchemeConfig):
    n, L1, L2, J = inst.n, inst["L1"], inst["L2"], inst["J"]
    x_fn, ch2 = inst["x_fn"], inst["ch2"]
    joint = B.marton_joint(inst["p_u12"], x_fn, ch2)
    c21 = joint.conditional("u2", "u1")
    r21 = _ratio(joint, "u2", "u1")
    r1, r2 = _ratio(joint, "u1", "y1"), _ratio(joint, "u2", "y2")
    race1 = _Race(joint.pmf("u1").weights, n, L1)
    race2 = _Race(joint.pmf("u2").weights, n, L2)

    def run(seeds):
        b = seeds.size
        m1, m2 = _message(seeds, 0, L1), _message(seeds, 1, L2)
        p1, p2 = substream(seeds, 1), substream(seeds, 2)
        cands = batch_first(p1, np.ones(race1.size), race1.rates, J, race1.slice_atoms(m1))[0]
        cd = _digits(cands, race1.base, n)                        # (B, J, n)
        mix = _outer(r21[cd.reshape(b * J, n)]).reshape(b, J, -1).mean(axis=1)
        u2 = batch_select(p2, mix, race2.rates, race2.slice_atoms(m2))
        u2d = _digits(u2, race2.base, n)
        like = np.prod(c21[cd, u2d[:, None, :]], axis=2)          # (B, J)
        k = _resample(seeds, 2, like)
        u1d = cd[np.arange(b), k]
        y1, y2 = _split_pair(ch2, x_fn[u1d, u2d], seeds, 3)
        h1 = batch_select(p1, race1.full(race1.ratio_rows(r1, y1)), race1.rates) // race1.size
        h2 = batch_select(p2, race2.full(race2.ratio_rows(r2, y2)), race2.rates) // race2.size
        return {"fail": (h1 != m1) | (h2 != m2), "k": k}

    return run, race1.slices * race1.size + race2.slices * race2.size


def _prep_bc_common(inst: Instance, cfg: SchemeConfig, kmax: int):
    if inst["K1"] != 1 or inst["K2"] != 1:
        raise ProbError("the common-message simulator implements K1 = K2 = 1; general K is a bound-level sweep")
    n, L0, L1, L2, J = inst.n, inst["L0"], inst["L1"], inst["L2"], inst["J"]
    x_fn, ch2 = inst["x_fn"], inst["ch2"]
    joint = B.bc_common_joint(inst["p_u012"], x_fn, ch2)
    r10 = _ratio(joint, "u1", "u0")
    c2_01 = joint.conditional("u2", ("u0", "u1"))
    p2 = joint.pmf("u2").weights
    with np.errstate(divide="ignore", invalid="ignore"):
        r2_01 = np.where(p2 > 0, c2_01 / np.where(p2 > 0, p2, 1.0), 0.0)
    r0 = {1: _ratio(joint, "u0", "y1"), 2: _ratio(joint, "u0", "y2")}
    ca = {1: joint.conditional("u1", ("y1", "u0")), 2: joint.conditional("u2", ("y2", "u0"))}
    race0 = _Race(joint.pmf("u0").weights, n, L0)
    race1 = _Race(joint.pmf("u1").weights, n, L0 * L1)
    race2 = _Race(p2, n, L0 * L2)
    races = {1: (race1, L1), 2: (race2, L2)}
    psi = _phi_weights(kmax)

    def decode(seeds, a, yd, procs):
        b = seeds.size
        race, la = races[a]
        pts = batch_first(procs[0], race0.full(race0.ratio_rows(r0[a], yd)), race0.rates, kmax)[0]
        w = _weights_from_points(pts, psi, race0.slices * race0.size)     # (B, L0*|U0|^n)
        mats = ca[a][yd]                                                   # (B, n, U0, Ua)
        mats = np.repeat(mats, L0, axis=0)
        mix = _contract(w.reshape(b * L0, race0.size), mats).reshape(b, L0, race.size)
        dens = mix / np.where(race.pn > 0, race.pn, 1.0) * (race.pn > 0)
        dens = np.broadcast_to(dens[:, :, None, :], (b, L0, la, race.size)).reshape(b, -1)
        pos = batch_select(procs[a], dens, race.rates)
        return pos // (la * race.size), (pos // race.size) % la

    def run(seeds):
        b = seeds.size
        m0, m1, m2 = _message(seeds, 0, L0), _message(seeds, 1, L1), _message(seeds, 2, L2)
        procs = {0: substream(seeds, 1), 1: substream(seeds, 2), 2: substream(seeds, 3)}
        u0 = batch_select(procs[0], np.ones(race0.size), race0.rates, race0.slice_atoms(m0))
        u0d = _digits(u0, race0.base, n)
        cands = batch_first(procs[1], race1.ratio_rows(r10, u0d), race1.rates, J,
                            race1.slice_atoms(m0 * L1 + m1))[0]
        cd = _digits(cands, race1.base, n)                                 # (B, J, n)
        u0r = np.repeat(u0d, J, axis=0)
        mix = _outer(r2_01[u0r, cd.reshape(b * J, n)]).reshape(b, J, -1).mean(axis=1)
        u2 = batch_select(procs[2], mix, race2.rates, race2.slice_atoms(m0 * L2 + m2))
        u2d = _digits(u2, race2.base, n)
        like = np.prod(c2_01[u0d[:, None, :], cd, u2d[:, None, :]], axis=2)
        k = _resample(seeds, 3, like)
        u1d = cd[np.arange(b), k]
        y1, y2 = _split_pair(ch2, x_fn[u0d, u1d, u2d], seeds, 4)
        h01, h1 = decode(seeds, 1, y1, procs)
        h02, h2 = decode(seeds, 2, y2, procs)
        fail = (h01 != m0) | (h02 != m0) | (h1 != m1) | (h2 != m2)
        return {"fail": fail, "k": k}

    return run, race0.slices * race0.size + race1.slices * race1.size + race2.slices * race2.size


def _prep_dlsc(inst: Instance, cfg: SchemeConfig, kmax: int):
    n, L1, L2 = inst.n, inst["L1"], inst["L2"]
    z1, z2, d1, d2 = inst["z1"], inst["z2"], inst["d1"], inst["d2"]
    D1, D2 = inst["D1"], inst["D2"]
    joint = B.dlsc_joint(inst["p_x12"], inst["k1"], inst["k2"], (z1, z2))
    r1x, r2x = _ratio(joint, "u1", "x1"), _ratio(joint, "u2", "x2")
    c21 = joint.conditional("u2", "u1")
    r12 = _ratio(joint, "u1", "u2")
    race1 = _Race(joint.pmf("u1").weights, n, L1)
    race2 = _Race(joint.pmf("u2").weights, n, L2)
    p_x12 = np.asarray(inst["p_x12"], dtype=np.float64)
    nx2 = p_x12.shape[1]
    psi = _phi_weights(kmax)

    def run(seeds):
        b = seeds.size
        pair = _letters(seeds, 0, np.broadcast_to(p_x12.ravel(), (b, n, p_x12.size)))
        x1d, x2d = pair // nx2, pair % nx2
        p1, p2 = substream(seeds, 1), substream(seeds, 2)
        e1 = batch_select(p1, race1.full(race1.ratio_rows(r1x, x1d)), race1.rates)
        e2 = batch_select(p2, race2.full(race2.ratio_rows(r2x, x2d)), race2.rates)
        m1, m2 = e1 // race1.size, e2 // race2.size
        pts = batch_first(p1, np.ones(race1.size), race1.rates, kmax, race1.slice_atoms(m1))[0]
        w = _weights_from_points(pts, psi, race1.size)
        mats = np.broadcast_to(c21, (b, n) + c21.shape)
        mix = _contract(w, mats)
        dens2 = mix / np.where(race2.pn > 0, race2.pn, 1.0) * (race2.pn > 0)
        u2 = batch_select(p2, dens2, race2.rates, race2.slice_atoms(m2))
        u2d = _digits(u2, race2.base, n)
        u1 = batch_select(p1, race1.ratio_rows(r12, u2d), race1.rates, race1.slice_atoms(m1))
        u1d = _digits(u1, race1.base, n)
        dist1 = _distortion(d1, x1d, z1[u1d, u2d])
        dist2 = _distortion(d2, x2d, z2[u1d, u2d])
        return {"fail": (dist1 > D1 + DIST_TOL) | (dist2 > D2 + DIST_TOL), "m1": m1, "m2": m2}

    return run, race1.slices * race1.size + race2.slices * race2.size


def _prep_mac(inst: Instance, cfg: SchemeConfig, kmax: int):
    n, L1, L2 = inst.n, inst["L1"], inst["L2"]
    ch = np.asarray(inst["ch"], dtype=np.float64)
    joint = B.mac_joint(inst["p_x1"], inst["p_x2"], ch)
    r1y = _ratio(joint, "x1", "y")
    c2 = joint.conditional("x2", ("y", "x1"))
    r1_2y = _ratio(joint, "x1", ("y", "x2"))
    race1 = _Race(joint.pmf("x1").weights, n, L1)
    race2 = _Race(joint.pmf("x2").weights, n, L2)
    psi = _phi_weights(kmax)

    def run(seeds):
        m1, m2 = _message(seeds, 0, L1), _message(seeds, 1, L2)
        p1, p2 = substream(seeds, 1), substream(seeds, 2)
        x1 = batch_select(p1, np.ones(race1.size), race1.rates, race1.slice_atoms(m1))
        x2 = batch_select(p2, np.ones(race2.size), race2.rates, race2.slice_atoms(m2))
        x1d, x2d = _digits(x1, race1.base, n), _digits(x2, race2.base, n)
        yd = _letters(seeds, 2, ch[x1d, x2d])
        pts = batch_first(p1, race1.full(race1.ratio_rows(r1y, yd)), race1.rates, kmax)[0]
        w = _weights_from_points(np.where(pts >= 0, pts % race1.size, -1), psi, race1.size)
        mix = _contract(w, c2[yd])
        dens2 = mix / np.where(race2.pn > 0, race2.pn, 1.0) * (race2.pn > 0)
        pos2 = batch_select(p2, race2.full(dens2), race2.rates)
        h2 = pos2 // race2.size
        x2hd = _digits(pos2 % race2.size, race2.base, n)
        h1 = batch_select(p1, race1.full(race1.ratio_rows(r1_2y, yd, x2hd)), race1.rates) // race1.size
        return {"fail": (h1 != m1) | (h2 != m2)}

    return run, race1.slices * race1.size + race2.slices * race2.size


def _prep_resolvability(inst: Instance, cfg: SchemeConfig):
    n, L = inst.n, inst["L"]
    p_x, ch = inst["p_x"], inst["ch"]
    p_y = _power_pmf(p_x @ ch, n)

    def run(seeds):
        b = seeds.size
        u = _aux(seeds, 0, L * n).reshape(b, L, n)
        xd = _categorical(np.broadcast_to(p_x, (b, L, n, p_x.size)), u)
        rows = _outer(ch[xd.reshape(b * L, n)]).reshape(b, L, -1)
        tv = 0.5 * np.abs(rows.mean(axis=1) - p_y).sum(axis=1)
        return {"value": tv}

    return run, L * p_x.size**n


def _prep_wiretap(inst: Instance, cfg: SchemeConfig):
    n, L, K, nu = inst.n, inst["L"], inst["K"], inst["nu"]
    ch2 = inst["ch2"]
    joint = B.wiretap_joint(inst["p_ux"], ch2)
    cxu = joint.conditional("x", "u")
    czu = joint.conditional("z", "u")
    ruy = _ratio(joint, "u", "y")
    race = _Race(joint.pmf("u").weights, n, L)

    def run(seeds):
        b = seeds.size
        m = _message(seeds, 0, L)
        k = _message(seeds, 1, K)
        ps = substream(seeds, 1)
        book = np.stack([batch_first(ps, np.ones(race.size), race.rates, K,
                                     race.slice_atoms(np.full(b, j)))[0] for j in range(L)], axis=1)
        u = book[np.arange(b), m, k]
        ud = _digits(u, race.base, n)
        xd = _letters(seeds, 2, cxu[ud])
        yd, _ = _split_pair(ch2, xd, seeds, 3)
        m_hat = batch_select(ps, race.full(race.ratio_rows(ruy, yd)), race.rates) // race.size
        counts = _weights_from_points(book.reshape(b * L, K), np.full(K, 1.0 / K), race.size)
        mats = np.broadcast_to(czu, (b * L, n) + czu.shape)
        pz_m = _contract(counts, mats).reshape(b, L, -1)
        pz = pz_m.mean(axis=1, keepdims=True)
        eps = 0.5 * np.abs(pz_m - pz).sum(axis=2).mean(axis=1)
        fail = m_hat != m
        return {"value": fail + nu * eps, "fail": fail, "eps": eps}

    return run, L * race.size


_PREP: dict[Setting, Callable] = {
    Setting.CHANNEL: _prep_channel,
    Setting.LIST: _prep_channel,
    Setting.CHANNEL_RANK: _prep_channel_rank,
    Setting.GP: _prep_gp,
    Setting.WZ: _prep_wz,
    Setting.JSCC: _prep_jscc,
    Setting.MARTON: _prep_marton,
    Setting.BC_COMMON: _prep_bc_common,
    Setting.DLSC: _prep_dlsc,
    Setting.MAC: _prep_mac,
    Setting.RESOLVABILITY: _prep_resolvability,
    Setting.WIRETAP: _prep_wiretap,
}
_PHI_SETTINGS = {Setting.BC_COMMON, Setting.DLSC, Setting.MAC}


# ---------------------------------------------------------------------------
# driver


def _kmax(cfg: SchemeConfig) -> int:
    if cfg.phi_tol is not None:
        return phi_kmax(cfg.phi_tol)
    return cfg.instance["kmax"]


def _bound(cfg: SchemeConfig) -> tuple[float, float, str, dict]:
    inst, setting = cfg.instance, cfg.setting
    if setting in _PHI_SETTINGS and cfg.phi_tol is not None:
        inst = inst.replace(kmax=_kmax(cfg))
    rep = bound_report(inst)
    if setting is Setting.CHANNEL_RANK and cfg.fixed_message is not None:
        prof = B.channel_profile(inst["p_x"], inst["ch"]).extend(inst.n)
        with np.errstate(over="ignore"):
            g = np.minimum(np.exp2(-prof["i"]), 1.0)
        value, hw = prof.mean(1.0 - (1.0 - g) ** cfg.fixed_message)
        return value, hw, "thm2_fixed", rep.values
    name = primary_bound(setting.value)
    return rep[name], rep.halfwidths.get(name, 0.0), name, rep.values


def simulate(cfg: SchemeConfig) -> EmpiricalResult:
    """Run ``cfg.trials`` independent trials and compare with the setting's bound."""
    if cfg.trials < 1:
        raise ProbError("trials must be at least 1")
    setting = cfg.setting
    prep = _PREP[setting]
    if setting in _PHI_SETTINGS:
        run, atoms = prep(cfg.instance, cfg, _kmax(cfg))
    else:
        run, atoms = prep(cfg.instance, cfg)
    check_budget(atoms, "race alphabet per trial")
    chunk = max(1, min(cfg.trials, CHUNK_WORK // max(atoms, 1)))
    starts = list(range(0, cfg.trials, chunk))

    def one(start):
        return run(trial_seeds(cfg.seed, min(chunk, cfg.trials - start), start))

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(one, starts))
    else:
        parts = [one(s) for s in starts]
    out = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    bound, bound_hw, bound_name, all_bounds = _bound(cfg)
    extra: dict = {"bounds": all_bounds}
    if "value" in out:
        v = out["value"].astype(np.float64)
        est = float(math.fsum(v) / v.size)
        hw = Z95 * float(np.std(v, ddof=1)) / math.sqrt(v.size) if v.size > 1 else 0.0
        failures, lo, hi = None, max(0.0, est - hw), est + hw
        if "eps" in out:
            extra["error_rate"] = float(out["fail"].mean())
            extra["secrecy_tv"] = float(out["eps"].mean())
    else:
        failures = int(np.count_nonzero(out["fail"]))
        est = failures / cfg.trials
        lo, hi = wilson(failures, cfg.trials)
    if setting in _PHI_SETTINGS:
        extra["kmax"] = _kmax(cfg)
    trace = []
    if cfg.trace:
        keys = sorted(out)
        for t in range(min(cfg.trace, cfg.trials)):
            trace.append({"trial": t, **{k: out[k][t].item() for k in keys}})
    params = dict(cfg.instance.params, n=cfg.instance.n)
    if cfg.fixed_message is not None:
        params["fixed_message"] = cfg.fixed_message
    return EmpiricalResult(setting.value, cfg.trials, failures, est, lo, hi, bound, bound_name,
                           bound_hw, cfg.seed, params, extra, trace)


def _simulate_as(setting: Setting, cfg: SchemeConfig) -> EmpiricalResult:
    if cfg.setting is not setting:
        raise ProbError(f"instance is for {cfg.setting.value}, not {setting.value}")
    return simulate(cfg)


def simulate_channel(cfg: SchemeConfig) -> EmpiricalResult:
    return _simulate_as(Setting.CHANNEL, cfg)


def simulate_channel_rank(cfg: SchemeConfig) -> EmpiricalResult:
    return _simulate_as(Setting.CHANNEL_RANK, cfg)


def simulate_channel_list(cfg: SchemeConfig) -> EmpiricalResult:
    return _simulate_as(Setting.LIST, cfg)


def simulate_gp(cfg: SchemeConfig) -> EmpiricalResult:
    return _simulate_as(Setting.GP, cfg)


def simulate_wz(cfg: SchemeConfig) -> EmpiricalResult:
    return _simulate_as(Setting.WZ, cfg)


def simulate_jscc(cfg: SchemeConfig) -> EmpiricalResult:
    return _simulate_as(Setting.JSCC, cfg)


def simulate_bc_marton(cfg: SchemeConfig) -> EmpiricalResult:
    return _simulate_as(Setting.MARTON, cfg)


def simulate_bc_common(cfg: SchemeConfig) -> EmpiricalResult:
    return _simulate_as(Setting.BC_COMMON, cfg)


def simulate_dlsc(cfg: SchemeConfig) -> EmpiricalResult:
    return _simulate_as(Setting.DLSC, cfg)


def simulate_mac(cfg: SchemeConfig) -> EmpiricalResult:
    return _simulate_as(Setting.MAC, cfg)


def simulate_resolvability(cfg: SchemeConfig) -> EmpiricalResult:
    return _simulate_as(Setting.RESOLVABILITY, cfg)


def simulate_wiretap(cfg: SchemeConfig) -> EmpiricalResult:
    return _simulate_as(Setting.WIRETAP, cfg)
