"""Finite-alphabet probability toolkit.

Pmfs, kernels and joints are thin immutable wrappers around numpy arrays.
Information quantities are in bits throughout.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

NORM_TOL = 1e-12
DEFAULT_ATOM_BUDGET = 2**24
ATOM_BUDGET_ENV = "PMLLAB_ATOM_BUDGET"


class ProbError(ValueError):
    """Base class for validation failures in this package."""


class NormalizationError(ProbError):
    pass


class CapacityError(ProbError):
    """Raised when a product alphabet would exceed the atom budget."""


class AbsoluteContinuityError(ProbError):
    pass


def atom_budget() -> int:
    raw = os.environ.get(ATOM_BUDGET_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_ATOM_BUDGET
    value = int(float(raw))
    if value < 1:
        raise ProbError(f"{ATOM_BUDGET_ENV} must be positive, got {raw!r}")
    return value


def check_budget(n_atoms: int, what: str = "alphabet") -> None:
    budget = atom_budget()
    if n_atoms > budget:
        raise CapacityError(
            f"{what} needs {n_atoms} atoms, budget is {budget} "
            f"(raise {ATOM_BUDGET_ENV} to allow more)"
        )


@dataclass(frozen=True)
class Alphabet:
    """Indexed finite alphabet, optionally a mixed-radix product of factors."""

    size: int
    labels: tuple | None = None
    factors: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.size < 1:
            raise ProbError("alphabet size must be at least 1")
        if self.labels is not None and len(self.labels) != self.size:
            raise ProbError("label count does not match alphabet size")
        if self.factors is not None and math.prod(self.factors) != self.size:
            raise ProbError("factor sizes do not multiply to the alphabet size")

    @classmethod
    def product(cls, *sizes: int) -> "Alphabet":
        return cls(math.prod(sizes), factors=tuple(int(s) for s in sizes))

    @property
    def radix(self) -> tuple[int, ...]:
        return self.factors if self.factors is not None else (self.size,)

    def encode(self, digits: Sequence[int]) -> int:
        """Mixed-radix index of a tuple, first factor most significant."""
        radix = self.radix
        if len(digits) != len(radix):
            raise ProbError(f"expected {len(radix)} digits, got {len(digits)}")
        idx = 0
        for d, r in zip(digits, radix):
            if not 0 <= d < r:
                raise ProbError(f"digit {d} out of range for radix {r}")
            idx = idx * r + int(d)
        return idx

    def decode(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.size:
            raise ProbError(f"index {index} out of range")
        digits = []
        for r in reversed(self.radix):
            index, d = divmod(index, r)
            digits.append(d)
        return tuple(reversed(digits))

    def label(self, index: int):
        return self.labels[index] if self.labels is not None else index


def _as_weights(weights: Iterable[float]) -> np.ndarray:
    w = np.array(weights, dtype=np.float64).reshape(-1)
    if w.size == 0:
        raise ProbError("empty weight vector")
    if not np.all(np.isfinite(w)):
        raise ProbError("weights must be finite")
    return w


@dataclass(frozen=True, eq=False)
class FiniteMeasure:
    """Nonnegative measure on a finite alphabet."""

    weights: np.ndarray
    alphabet: Alphabet = None  # type: ignore[assignment]

    def __post_init__(self):
        w = _as_weights(self.weights)
        if np.any(w < 0):
            raise ProbError("measure weights must be nonnegative")
        if not np.any(w > 0):
            raise ProbError("measure has no positive atom")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.alphabet is None:
            object.__setattr__(self, "alphabet", Alphabet(w.size))
        elif self.alphabet.size != w.size:
            raise ProbError("alphabet size does not match weights")

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    @property
    def total(self) -> float:
        return math.fsum(self.weights)

    def __len__(self) -> int:
        return self.size

    def __getitem__(self, i):
        return self.weights[i]


class Pmf(FiniteMeasure):
    """Probability mass function; renormalized if within 1e-12 of unit mass."""

    def __post_init__(self):
        super().__post_init__()
        total = self.total
        if abs(total - 1.0) > NORM_TOL:
            raise NormalizationError(f"weights sum to {total!r}, not 1")
        w = self.weights / total
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, n: int) -> "Pmf":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point(cls, n: int, a: int) -> "Pmf":
        w = np.zeros(n)
        w[a] = 1.0
        return cls(w)

    @classmethod
    def from_unnormalized(cls, weights, alphabet: Alphabet | None = None) -> "Pmf":
        w = _as_weights(weights)
        return cls(w / w.sum(), alphabet)

    def sample(self, u: np.ndarray) -> np.ndarray:
        """Inverse-CDF sampling from uniforms in (0, 1]."""
        cdf = np.cumsum(self.weights)
        return np.minimum(np.searchsorted(cdf, u, side="left"), self.size - 1)


@dataclass(frozen=True, eq=False)
class Kernel:
    """Conditional pmf stored as a row-stochastic matrix (input x output)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] == 0 or m.shape[1] == 0:
            raise ProbError("kernel must be a nonempty 2-d array")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ProbError("kernel entries must be finite and nonnegative")
        sums = m.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > NORM_TOL)
        if bad.size:
            raise NormalizationError(f"kernel row {bad[0]} sums to {sums[bad[0]]!r}")
        m = m / sums[:, None]
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n_in(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_out(self) -> int:
        return self.matrix.shape[1]

    def row(self, x: int) -> Pmf:
        return Pmf(self.matrix[x])

    def output(self, p: Pmf) -> Pmf:
        return Pmf.from_unnormalized(p.weights @ self.matrix)

    def joint(self, p: Pmf, names=("x", "y")) -> "JointPmf":
        return JointPmf(p.weights[:, None] * self.matrix, names)


def _power_array(w: np.ndarray, n: int) -> np.ndarray:
    out = np.ones(1)
    for _ in range(n):
        out = np.multiply.outer(out, w).reshape(-1)
    return out


def power(p: Pmf, n: int) -> Pmf:
    """n-fold i.i.d. product on the mixed-radix product alphabet."""
    if n < 1:
        raise ProbError("power needs n >= 1")
    check_budget(p.size**n, "power")
    return Pmf(_power_array(p.weights, n), Alphabet.product(*([p.size] * n)))


def kernel_power(k: Kernel, n: int) -> Kernel:
    """Memoryless n-letter extension of a kernel."""
    if n < 1:
        raise ProbError("kernel_power needs n >= 1")
    check_budget(k.n_in**n * k.n_out**n, "kernel power")
    m = np.ones((1, 1))
    for _ in range(n):
        m = np.kron(m, k.matrix)
    return Kernel(m)


def product_pmf(*pmfs: Pmf) -> Pmf:
    w = np.ones(1)
    for p in pmfs:
        w = np.multiply.outer(w, p.weights).reshape(-1)
    return Pmf(w, Alphabet.product(*(p.size for p in pmfs)))


def power_map(table: np.ndarray, n: int, out_size: int) -> np.ndarray:
    """Lift a letter map f(a, b, ...) -> c to n letters, coordinate-wise.

    ``table`` has one axis per argument.  The result is indexed by the
    mixed-radix indices of the n-letter arguments.
    """
    table = np.asarray(table, dtype=np.int64)
    check_budget(table.size**n, "map power")
    k = table.ndim
    out = np.zeros([1] * k, dtype=np.int64)
    for _ in range(n):
        # interleave (previous letters, new letter) per argument axis
        prev = out.reshape([d for s in out.shape for d in (s, 1)])
        new = table.reshape([d for s in table.shape for d in (1, s)])
        out = (prev * out_size + new).reshape([a * b for a, b in zip(out.shape, table.shape)])
    return out


def tensor_power(arr: np.ndarray, n: int) -> np.ndarray:
    """n-fold product of a table whose axes are letter-indexed.

    Axis ``k`` of the result enumerates n-letter tuples of axis ``k`` of
    ``arr`` (first letter most significant), and entries multiply.
    """
    arr = np.asarray(arr, dtype=np.float64)
    check_budget(arr.size**n, "tensor power")
    k = arr.ndim
    out = np.ones([1] * k)
    for _ in range(n):
        outer = np.multiply.outer(out, arr)
        order = [i for a in range(k) for i in (a, a + k)]
        out = np.transpose(outer, order).reshape([a * b for a, b in zip(out.shape, arr.shape)])
    return out


def power_distortion(d: np.ndarray, n: int) -> np.ndarray:
    """Per-letter average distortion on n-letter alphabets."""
    d = np.asarray(d, dtype=np.float64)
    check_budget(d.size**n, "distortion power")
    out = np.zeros((1, 1))
    for _ in range(n):
        out = (out[:, None, :, None] + d[None, :, None, :]).reshape(
            out.shape[0] * d.shape[0], out.shape[1] * d.shape[1]
        )
    return out / n


def rn_ratio(num, den):
    """num/den with 0/0 -> 0 and positive/0 -> inf.  Works elementwise."""
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    if np.any(num < 0) or np.any(den < 0):
        raise ProbError("rn_ratio needs nonnegative arguments")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(num == 0, 0.0, np.where(den == 0, np.inf, num / np.where(den == 0, 1.0, den)))
    return out[()] if out.ndim == 0 else out


def log2_ratio(num, den):
    """log2 of rn_ratio; -inf where the numerator vanishes."""
    r = rn_ratio(num, den)
    with np.errstate(divide="ignore"):
        return np.log2(r)


@dataclass(frozen=True, eq=False)
class JointPmf:
    """Joint pmf stored as an n-d array with one named axis per variable."""

    p: np.ndarray
    names: tuple[str, ...]
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        arr = np.array(self.p, dtype=np.float64)
        names = tuple(self.names)
        if arr.ndim != len(names):
            raise ProbError(f"{arr.ndim}-d array but {len(names)} names")
        if len(set(names)) != len(names):
            raise ProbError("variable names must be distinct")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ProbError("joint entries must be finite and nonnegative")
        total = arr.sum()
        if abs(total - 1.0) > NORM_TOL:
            raise NormalizationError(f"joint sums to {total!r}")
        arr = arr / total
        arr.setflags(write=False)
        object.__setattr__(self, "p", arr)
        object.__setattr__(self, "names", names)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.p.shape

    def axes(self, names: str | Sequence[str]) -> tuple[int, ...]:
        if isinstance(names, str):
            names = (names,)
        try:
            return tuple(self.names.index(n) for n in names)
        except ValueError as exc:
            raise ProbError(f"unknown variable in {names!r}; have {self.names}") from exc

    def marginal_full(self, names: str | Sequence[str]) -> np.ndarray:
        """Marginal over ``names`` kept broadcastable against the full joint."""
        keep = set(self.axes(names))
        key = ("m", tuple(sorted(keep)))
        if key not in self._cache:
            drop = tuple(i for i in range(self.p.ndim) if i not in keep)
            self._cache[key] = self.p.sum(axis=drop, keepdims=True) if drop else self.p
        return self._cache[key]

    def marginal(self, names: str | Sequence[str]) -> "JointPmf":
        if isinstance(names, str):
            names = (names,)
        axes = self.axes(names)
        m = self.marginal_full(names)
        m = np.squeeze(m, axis=tuple(i for i in range(self.p.ndim) if i not in axes))
        ranked = sorted(axes)
        return JointPmf(np.transpose(m, [ranked.index(a) for a in axes]), tuple(names))

    def pmf(self, name: str) -> Pmf:
        return Pmf(self.marginal(name).p)

    def conditional(self, target: str | Sequence[str], given: str | Sequence[str]) -> np.ndarray:
        """Table P(target | given) with given axes first, target axes last.

        Rows whose conditioning event has zero probability fall back to the
        target marginal, which is a valid version of the kernel.
        """
        t = (target,) if isinstance(target, str) else tuple(target)
        g = (given,) if isinstance(given, str) else tuple(given)
        joint = self.marginal(g + t).p
        gshape = joint.shape[: len(g)]
        tshape = joint.shape[len(g):]
        flat = joint.reshape(int(np.prod(gshape)), int(np.prod(tshape)))
        norm = flat.sum(axis=1, keepdims=True)
        fallback = self.marginal(t).p.reshape(1, -1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(norm > 0, flat / np.where(norm > 0, norm, 1.0), fallback)
        return cond.reshape(gshape + tshape)

    def info_density(
        self, a: str | Sequence[str], b: str | Sequence[str], given: str | Sequence[str] = ()
    ) -> np.ndarray:
        """iota(A;B|C) evaluated on every cell of the joint (broadcast shape).

        Cells outside the support carry -inf.
        """
        a = (a,) if isinstance(a, str) else tuple(a)
        b = (b,) if isinstance(b, str) else tuple(b)
        c = (given,) if isinstance(given, str) else tuple(given)
        key = ("i", a, b, c)
        if key not in self._cache:
            p_abc = self.marginal_full(a + b + c)
            p_ac = self.marginal_full(a + c)
            p_bc = self.marginal_full(b + c)
            p_c = self.marginal_full(c) if c else np.ones([1] * self.p.ndim)
            num = p_abc * p_c
            den = p_ac * p_bc
            if np.any((num > 0) & (den == 0)):
                raise AbsoluteContinuityError(f"joint not dominated for iota({a};{b}|{c})")
            dens = np.broadcast_to(log2_ratio(num, den), self.p.shape)
            self._cache[key] = dens
        return self._cache[key]

    def info_density_at(self, a, b, cell: Sequence[int], given=()) -> float:
        return float(self.info_density(a, b, given)[tuple(cell)])

    def expect(self, values: np.ndarray) -> float:
        """Expectation over the support; values off-support are ignored."""
        v = np.broadcast_to(values, self.p.shape)
        mask = self.p > 0
        return math.fsum((self.p[mask] * v[mask]).ravel())

    def mutual_information(self, a, b, given=()) -> float:
        return self.expect(self.info_density(a, b, given))

    def extend(self, kernel: np.ndarray, given: Sequence[str], name: str) -> "JointPmf":
        """Append a variable drawn from ``kernel[given..., new]``."""
        given = tuple(given)
        axes = self.axes(given)
        kernel = np.asarray(kernel, dtype=np.float64)
        shape = [1] * self.p.ndim + [kernel.shape[-1]]
        for ax, size in zip(axes, kernel.shape[:-1]):
            shape[ax] = size
        # kernel axes follow ``given``; reorder them to the joint's axis order
        order = sorted(range(len(axes)), key=lambda i: axes[i])
        k = np.transpose(kernel, order + [len(axes)]).reshape(shape)
        return JointPmf(self.p[..., None] * k, self.names + (name,))

    def add_function(self, table: np.ndarray, args: Sequence[str], name: str, size: int) -> "JointPmf":
        """Append a deterministic variable name = table[args...]."""
        table = np.asarray(table, dtype=np.int64)
        onehot = np.zeros(table.shape + (size,))
        np.put_along_axis(onehot, table[..., None], 1.0, axis=-1)
        return self.extend(onehot, args, name)


@dataclass(frozen=True)
class Divergences:
    kl: float
    renyi: float
    tv: float


def divergences(p: Pmf, q: Pmf, order: float = 2.0) -> Divergences:
    """KL, Renyi of the given order (> 1) and total variation, in bits."""
    if p.size != q.size:
        raise ProbError("pmfs live on different alphabets")
    if order <= 1:
        raise ProbError("Renyi order must exceed 1")
    pw, qw = p.weights, q.weights
    tv = 0.5 * math.fsum(np.abs(pw - qw))
    mask = pw > 0
    if np.any(qw[mask] == 0):
        return Divergences(math.inf, math.inf, tv)
    kl = math.fsum(pw[mask] * np.log2(pw[mask] / qw[mask]))
    s = math.fsum(pw[mask] ** order * qw[mask] ** (1.0 - order))
    renyi = math.log2(s) / (order - 1.0)
    return Divergences(max(kl, 0.0), max(renyi, 0.0), tv)


def kl_divergence(p: Pmf, q: Pmf) -> float:
    return divergences(p, q).kl


def total_variation(p, q) -> float:
    pw = p.weights if isinstance(p, FiniteMeasure) else np.asarray(p)
    qw = q.weights if isinstance(q, FiniteMeasure) else np.asarray(q)
    return 0.5 * float(np.abs(pw - qw).sum())


def entropy(p: Pmf) -> float:
    w = p.weights[p.weights > 0]
    return -math.fsum(w * np.log2(w))


def load_pmf(doc: Mapping[str, Any] | str) -> Pmf:
    """Read {"alphabet": [...], "weights": [...]} (alphabet optional)."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    if "weights" not in doc:
        raise ProbError("pmf document needs a 'weights' field")
    weights = [float(x) for x in doc["weights"]]
    labels = doc.get("alphabet")
    alphabet = Alphabet(len(weights), tuple(labels)) if labels is not None else None
    return Pmf(np.array(weights, dtype=np.float64), alphabet)


def load_measure(doc: Mapping[str, Any] | str) -> FiniteMeasure:
    if isinstance(doc, str):
        doc = json.loads(doc)
    weights = [float(x) for x in doc["weights"]]
    labels = doc.get("alphabet")
    alphabet = Alphabet(len(weights), tuple(labels)) if labels is not None else None
    return FiniteMeasure(np.array(weights, dtype=np.float64), alphabet)


def load_kernel(doc: Mapping[str, Any] | str) -> Kernel:
    """Read {"rows": [[...], ...]}."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    if "rows" not in doc:
        raise ProbError("kernel document needs a 'rows' field")
    rows = [[float(x) for x in r] for r in doc["rows"]]
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ProbError("kernel rows have different lengths")
    return Kernel(np.array(rows, dtype=np.float64))
