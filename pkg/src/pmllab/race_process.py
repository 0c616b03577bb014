"""Exponential races on a finite alphabet.

One realization of a Poisson process with intensity mu x Lebesgue is kept
as per-atom arrival streams.  Gap ``i`` at atom ``u`` is ``-ln(U)/mu(u)``
with ``U`` produced by a counter-based hash of ``(seed, u, i)``, so a stream
never depends on which atoms were queried first.  Several views (tilted pmfs
over the same base measure) can be evaluated against one realization.

The module also has batched helpers that evaluate the same realizations for
many seeds at once; they produce bit-identical arrival times to
:class:`RaceProcess`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core_prob import AbsoluteContinuityError, FiniteMeasure, Pmf, ProbError

INFINITE = math.inf

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1
_TWO53 = 2.0**-53


def mix64(x) -> np.ndarray:
    """SplitMix64 finalizer applied to ``x + golden``; elementwise on uint64."""
    z = np.atleast_1d(np.asarray(x, dtype=np.uint64))
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _u64(x) -> np.ndarray:
    if isinstance(x, (int, np.integer)):
        return np.atleast_1d(np.uint64(int(x) & _MASK64))
    return np.atleast_1d(np.asarray(x).astype(np.uint64))


def atom_key(seed, atom) -> np.ndarray:
    """Per-(seed, atom) stream key; broadcasts."""
    return mix64(mix64(_u64(seed)) ^ _u64(atom))


def unit_from_key(key, index) -> np.ndarray:
    """Uniform in (0, 1] from a stream key and a counter."""
    h = mix64(np.asarray(key, dtype=np.uint64) ^ _u64(index))
    return ((h >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO53


def counter_uniform(seed, atom, index) -> np.ndarray:
    return unit_from_key(atom_key(seed, atom), index)


def trial_seeds(master: int, count: int, start: int = 0) -> np.ndarray:
    """Seeds for trials ``start .. start+count-1`` derived from one master seed."""
    idx = np.arange(start, start + count, dtype=np.uint64)
    return mix64(mix64(_u64(master)) ^ idx)


def substream(seeds, tag: int) -> np.ndarray:
    """Independent child seeds (one per parent) labelled by a small tag."""
    return mix64(_u64(seeds) ^ mix64(_u64(tag + 0x5151)))


def aux_uniforms(seeds, slot: int) -> np.ndarray:
    """One auxiliary uniform per seed for draw number ``slot``."""
    return counter_uniform(substream(seeds, 0xA0), slot, 0)


def std_arrivals(seeds, atoms, depth: int, start: int = 0) -> np.ndarray:
    """Cumulative unit-rate exponential sums, shape (B, S, depth).

    ``seeds`` has shape (B,), ``atoms`` (S,) or (B, S).  Entry ``[b, s, i]``
    is the (start+i+1)-th arrival of atom ``atoms[s]`` for seed ``b`` before
    scaling by the atom's rate, assuming the first ``start`` arrivals sum to 0
    (callers add their running total).
    """
    seeds = _u64(seeds)
    atoms = np.asarray(atoms, dtype=np.int64)
    if atoms.ndim == 1:
        atoms = np.broadcast_to(atoms, (seeds.size, atoms.size))
    keys = atom_key(seeds[:, None], atoms)[..., None]
    idx = np.arange(start + 1, start + depth + 1, dtype=np.uint64)[None, None, :]
    gaps = -np.log(unit_from_key(keys, idx))
    return np.cumsum(gaps, axis=-1)


def arrival_times(seeds, atoms, rates: np.ndarray, depth: int) -> np.ndarray:
    """Arrival times (B, S, depth) for atoms with the given full-alphabet rates."""
    atoms = np.asarray(atoms, dtype=np.int64)
    r = np.asarray(rates, dtype=np.float64)[atoms]
    if r.ndim == 1:
        r = r[None, :]
    cum = std_arrivals(seeds, atoms, depth)
    with np.errstate(divide="ignore"):
        return cum / r[..., None]


@dataclass(frozen=True)
class RacePoint:
    atom: int
    arrival_index: int
    time: float
    key: float

    def key_under(self, density: float) -> float:
        return self.time / density if density > 0 else math.inf


def density(base: FiniteMeasure, p: Pmf | np.ndarray) -> np.ndarray:
    """dP/dmu on the base alphabet; rejects views not dominated by mu."""
    w = p.weights if isinstance(p, FiniteMeasure) else np.asarray(p, dtype=np.float64)
    mu = base.weights
    if w.shape != mu.shape:
        raise ProbError(f"view has {w.size} atoms, base has {mu.size}")
    if np.any((w > 0) & (mu == 0)):
        raise AbsoluteContinuityError("view puts mass on a null atom of the base measure")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(w > 0, w / np.where(mu > 0, mu, 1.0), 0.0)


class RaceProcess:
    """A single lazily materialized realization, owned by one trial."""

    def __init__(self, base: FiniteMeasure, seed: int):
        if not isinstance(base, FiniteMeasure):
            base = FiniteMeasure(np.asarray(base, dtype=np.float64))
        self.base = base
        self.seed = int(seed) & _MASK64
        self._cum: dict[int, np.ndarray] = {}
        self._keys: dict[int, np.ndarray] = {}

    def __repr__(self) -> str:
        return f"RaceProcess(atoms={self.base.size}, seed={self.seed}, materialized={self.total_materialized})"

    @property
    def total_materialized(self) -> int:
        return sum(a.size for a in self._cum.values())

    def materialized(self, atom: int) -> int:
        arr = self._cum.get(atom)
        return 0 if arr is None else arr.size

    def _extend(self, atom: int, count: int) -> None:
        have = self.materialized(atom)
        if count <= have:
            return
        if self.base.weights[atom] <= 0:
            raise ProbError(f"atom {atom} has zero base weight and never fires")
        if atom not in self._keys:
            self._keys[atom] = atom_key(self.seed, atom)
        idx = np.arange(have + 1, count + 1, dtype=np.uint64)
        gaps = -np.log(unit_from_key(self._keys[atom], idx))
        last = self._cum[atom][-1] if have else 0.0
        fresh = np.cumsum(np.concatenate(([last], gaps)))[1:]
        self._cum[atom] = fresh if not have else np.concatenate((self._cum[atom], fresh))

    def times(self, atom: int, count: int) -> np.ndarray:
        """First ``count`` arrival times at ``atom``."""
        self._extend(atom, count)
        return self._cum[atom][:count] / self.base.weights[atom]

    def _materialized_points(self, atoms: Iterable[int]):
        atom_ids, idx, times = [], [], []
        for a in atoms:
            n = self.materialized(a)
            atom_ids.append(np.full(n, a, dtype=np.int64))
            idx.append(np.arange(1, n + 1, dtype=np.int64))
            times.append(self._cum[a] / self.base.weights[a])
        return np.concatenate(atom_ids), np.concatenate(idx), np.concatenate(times)

    def _sorted_prefix(self, f: np.ndarray, j: int):
        """Materialize enough arrivals that the j smallest f-keys are known."""
        support = [int(a) for a in np.flatnonzero(f > 0)]
        if not support:
            raise ProbError("view has empty support")
        for a in support:
            self._extend(a, 1)
        while True:
            atoms, idx, times = self._materialized_points(support)
            with np.errstate(over="ignore"):
                keys = times / f[atoms]
            order = np.lexsort((idx, atoms, keys))
            if order.size >= j:
                thr = keys[order[j - 1]]
                with np.errstate(over="ignore"):
                    last = {a: self._cum[a][-1] / self.base.weights[a] / f[a] for a in support}
                short = [a for a in support if last[a] <= thr]
                if not short:
                    return atoms[order], idx[order], times[order], keys[order]
            else:
                short = support
            for a in short:
                self._extend(a, max(2 * self.materialized(a), 1))

    def nth(self, p: Pmf | np.ndarray, j: int) -> RacePoint:
        if j < 1:
            raise ProbError("j must be a positive integer")
        f = density(self.base, p)
        atoms, idx, times, keys = self._sorted_prefix(f, j)
        return RacePoint(int(atoms[j - 1]), int(idx[j - 1]), float(times[j - 1]), float(keys[j - 1]))

    def select(self, p) -> RacePoint:
        return self.nth(p, 1)

    def first(self, p, k: int) -> list[RacePoint]:
        if k < 1:
            raise ProbError("k must be a positive integer")
        f = density(self.base, p)
        atoms, idx, times, keys = self._sorted_prefix(f, k)
        return [RacePoint(int(a), int(i), float(t), float(s)) for a, i, t, s in zip(atoms[:k], idx[:k], times[:k], keys[:k])]

    def rank(self, p, q, j: int) -> int | float:
        """Position of the j-th p-point in the q-ordering (inf if q misses it)."""
        point = self.nth(p, j)
        g = density(self.base, q)
        if g[point.atom] <= 0:
            return INFINITE
        kappa = point.time / g[point.atom]
        count = 0
        for v in np.flatnonzero(g > 0):
            v = int(v)
            horizon = kappa * g[v]
            n = max(self.materialized(v), 1)
            while True:
                t = self.times(v, n)
                if t[-1] > horizon:
                    break
                n *= 2
            qk = t / g[v]
            below = qk < kappa
            if v == point.atom:
                ties = (qk == kappa) & (np.arange(1, n + 1) < point.arrival_index)
            else:
                ties = (qk == kappa) & (v < point.atom)
            count += int(np.count_nonzero(below | ties))
        return count + 1

    def trace(self, n: int, views: Sequence[Pmf] = ()) -> list[dict]:
        """First ``n`` points in raw time order with their keys under ``views``."""
        dens = [density(self.base, v) for v in views]
        flat = np.where(self.base.weights > 0, 1.0, 0.0)
        atoms, idx, times, _ = self._sorted_prefix(flat, n)
        rows = []
        for a, i, t in zip(atoms[:n], idx[:n], times[:n]):
            row = {"atom": int(a), "arrival_index": int(i), "time": float(t)}
            for name, f in zip(("p_key", "q_key", "r_key"), dens):
                row[name] = float(t / f[a]) if f[a] > 0 else None
            rows.append(row)
        return rows


def new_process(base: FiniteMeasure, seed: int) -> RaceProcess:
    return RaceProcess(base, seed)


def pfr_select(proc: RaceProcess, p) -> RacePoint:
    return proc.select(p)


def pfr_nth(proc: RaceProcess, p, j: int) -> RacePoint:
    return proc.nth(p, j)


def pfr_list(proc: RaceProcess, p, k: int) -> list[RacePoint]:
    return proc.first(p, k)


def match_rank(proc: RaceProcess, p, q, j: int) -> int | float:
    return proc.rank(p, q, j)


# ---------------------------------------------------------------------------
# batched evaluation


def _as_batch(x, batch: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.broadcast_to(x, (batch,) + x.shape[-1:]) if x.ndim == 1 else x


def batch_select(seeds, dens, rates, atoms=None) -> np.ndarray:
    """Position (along the atoms axis) of the PFR selection for every seed.

    ``dens`` holds dP/dmu at ``atoms`` (default: the whole alphabet), either
    shared (S,) or per seed (B, S).  Ties resolve to the lower position.
    """
    seeds = _u64(seeds)
    rates = np.asarray(rates, dtype=np.float64)
    if atoms is None:
        atoms = np.arange(rates.size)
    t = arrival_times(seeds, atoms, rates, 1)[..., 0]
    f = _as_batch(dens, seeds.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        keys = np.where(f > 0, t / np.where(f > 0, f, 1.0), np.inf)
    return np.argmin(keys, axis=1)


def _row_depths(f: np.ndarray, r: np.ndarray, k: int) -> np.ndarray:
    """Per-row arrivals per atom likely to cover the first k points (powers of two)."""
    w = f * r
    tot = w.sum(axis=1, keepdims=True)
    share = np.divide(w, tot, out=np.zeros_like(w), where=tot > 0).max(axis=1)
    m = k * share
    d = np.ceil(m + 3.0 * np.sqrt(m) + 1.0)
    d = 2.0 ** np.ceil(np.log2(np.maximum(d, 1.0)))
    return np.minimum(d, k).astype(np.int64)


def batch_first(seeds, dens, rates, k: int, atoms=None, depth: int | None = None):
    """First ``k`` points of the mapped sequence for every seed.

    Returns (positions, arrival indices, times, keys), each (B, k).  Points
    beyond the available support carry position -1 and infinite key.  Only
    atoms with positive density are drawn.  A first pass draws ``depth``
    arrivals per atom (chosen per row from the view's largest atom share when
    omitted); rows where that could hide a point are redone with doubled depth.
    """
    seeds = _u64(seeds)
    rates = np.asarray(rates, dtype=np.float64)
    b = seeds.size
    if atoms is None:
        atoms = np.arange(rates.size)
    atoms = np.asarray(atoms, dtype=np.int64)
    f = np.array(_as_batch(dens, b), dtype=np.float64)
    full = np.broadcast_to(atoms, f.shape)
    live = (f > 0) & (rates[full] > 0)
    f = np.where(live, f, 0.0)
    width = max(int(live.sum(axis=1).max()), 1)
    # live atoms first, original order kept; positions map back through ``cols``
    cols = np.argsort(~live, axis=1, kind="stable")[:, :width]
    f_c = np.take_along_axis(f, cols, axis=1)
    atoms_c = np.take_along_axis(full, cols, axis=1)
    if depth is None:
        d_rows = _row_depths(f_c, rates[atoms_c], k)
    else:
        d_rows = np.full(b, max(1, min(int(depth), k)), dtype=np.int64)

    pos = np.full((b, k), -1, dtype=np.int64)
    idx = np.zeros((b, k), dtype=np.int64)
    tt = np.full((b, k), np.inf)
    kk = np.full((b, k), np.inf)

    def run(sel, d):
        t = arrival_times(seeds[sel], atoms_c[sel], rates, d)
        fs = f_c[sel][..., None]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            keys = np.where(fs > 0, t / np.where(fs > 0, fs, 1.0), np.inf)
        flat = keys.reshape(keys.shape[0], -1)
        kq = min(k, flat.shape[1])
        if flat.shape[1] > 4 * kq:
            part = np.argpartition(flat, kq - 1, axis=1)[:, :kq]
            part.sort(axis=1)
            sub = np.take_along_axis(flat, part, axis=1)
            order = np.take_along_axis(part, np.argsort(sub, axis=1, kind="stable"), axis=1)
        else:
            order = np.argsort(flat, axis=1, kind="stable")[:, :kq]
        kq_keys = np.take_along_axis(flat, order, axis=1)
        p_c = order // d
        pos[sel, :kq] = np.where(np.isfinite(kq_keys), np.take_along_axis(cols[sel], p_c, axis=1), -1)
        idx[sel, :kq] = order % d + 1
        tt[sel, :kq] = np.take_along_axis(t.reshape(t.shape[0], -1), order, axis=1)
        kk[sel, :kq] = kq_keys
        if d >= k:
            return np.ones(sel.size, dtype=bool)
        deepest = keys[..., -1].min(axis=1)
        return (kq == k) & (kk[sel, -1] < deepest)

    todo = np.arange(b)
    while todo.size:
        nxt = []
        for d in np.unique(d_rows[todo]):
            sel = todo[d_rows[todo] == d]
            ok = run(sel, int(d))
            bad = sel[~ok]
            d_rows[bad] = min(2 * int(d), k)
            nxt.append(bad)
        todo = np.concatenate(nxt) if nxt else np.zeros(0, dtype=np.int64)
    return pos, idx, tt, kk


def batch_rank(seeds, dens_p, dens_q, rates, j: int, atoms=None, depth: int = 16) -> np.ndarray:
    """Matching rank of the j-th p-point in the q-ordering for every seed.

    Returns (positions of the j-th p-point, ranks as float with inf).
    """
    seeds = _u64(seeds)
    rates = np.asarray(rates, dtype=np.float64)
    if atoms is None:
        atoms = np.arange(rates.size)
    atoms = np.asarray(atoms, dtype=np.int64)
    fq = _as_batch(dens_q, seeds.size)
    pos, idx, tt, _ = batch_first(seeds, dens_p, rates, j, atoms)
    pos_j, idx_j, t_j = pos[:, -1], idx[:, -1], tt[:, -1]
    b = np.arange(seeds.size)
    g_sel = fq[b, pos_j]
    ranks = np.full(seeds.size, np.inf)
    live = g_sel > 0
    kappa = np.where(live, t_j / np.where(live, g_sel, 1.0), np.inf)
    todo = np.flatnonzero(live)
    d = max(depth, j)
    while todo.size:
        at = atoms if atoms.ndim == 1 else atoms[todo]
        t = arrival_times(seeds[todo], at, rates, d)
        g = fq[todo][..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            qk = np.where(g > 0, t / np.where(g > 0, g, 1.0), np.inf)
        kap = kappa[todo][:, None, None]
        atom_pos = np.arange(t.shape[1])[None, :, None]
        arr_idx = np.arange(1, d + 1)[None, None, :]
        sel_pos = pos_j[todo][:, None, None]
        sel_idx = idx_j[todo][:, None, None]
        earlier = (atom_pos < sel_pos) | ((atom_pos == sel_pos) & (arr_idx < sel_idx))
        below = (qk < kap) | ((qk == kap) & earlier)
        complete = np.all(qk[..., -1] > kappa[todo][:, None], axis=1)
        counts = below.reshape(below.shape[0], -1).sum(axis=1)
        ranks[todo[complete]] = counts[complete] + 1
        todo = todo[~complete]
        d *= 2
    return pos_j, ranks
