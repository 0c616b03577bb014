"""Coding-setting instances: validation, named built-ins and bound dispatch.

An instance is a plain mapping (JSON friendly) holding single-letter
ingredients, the block length ``n`` and the setting's integer parameters.
Arrays are indexed by letters with one axis per argument, e.g. a two-output
channel is ``ch2[x, y1, y2]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from . import bounds as B
from .core_prob import ProbError

NORM_TOL = 1e-9


@dataclass(frozen=True)
class SettingSpec:
    arrays: dict[str, str]          # name -> pmf | kernel | kernel2 | map | dist | joint
    ints: dict[str, int | None]     # name -> default (None = required)
    floats: dict[str, float | None]
    bound: Callable[..., B.BoundReport]
    primary: str


@dataclass
class Instance:
    setting: str
    n: int
    arrays: dict[str, np.ndarray]
    params: dict[str, Any] = field(default_factory=dict)
    name: str = ""

    def __getitem__(self, key: str):
        return self.arrays[key] if key in self.arrays else self.params[key]

    def replace(self, **params) -> "Instance":
        new = dict(self.params)
        n = params.pop("n", self.n)
        new.update(params)
        inst = Instance(self.setting, int(n), self.arrays, new, self.name)
        _check_params(inst)
        return inst

    def to_json(self) -> dict:
        doc = {"setting": self.setting, "n": self.n}
        doc.update({k: v.tolist() for k, v in self.arrays.items()})
        doc.update(self.params)
        return doc


# ---------------------------------------------------------------------------
# bound adapters (letter-level ingredients, n passed through)


def _b_channel(i: Instance, **kw):
    return B.channel_bounds(i["p_x"], i["ch"], i["L"], J=i["J"], n=i.n, **kw)


def _b_gp(i, **kw):
    return B.gp_bound(i["p_s"], i["p_u_given_s"], i["x_fn"], i["ch"], i["L"], gamma=i["gamma"],
                      J=i["J"], n=i.n, **kw)


def _b_wz(i, **kw):
    return B.wz_bound(i["p_x"], i["side"], i["p_u_given_x"], i["z_fn"], i["d_fn"], i["D"], i["L"],
                      gamma_p=i["gamma_p"], gamma_c=i["gamma_c"], J=i["J"], n=i.n, **kw)


def _b_jscc(i, **kw):
    return B.jscc_bound(i["p_w"], i["p_x"], i["ch"], i["p_z"], i["d_fn"], i["D"], J=i["J"], n=i.n, **kw)


def _b_marton(i, **kw):
    return B.marton_bound(i["p_u12"], i["x_fn"], i["ch2"], None, i["L1"], i["L2"], J=i["J"], n=i.n, **kw)


def _b_bc(i, **kw):
    return B.bc_bounds(i["p_u012"], i["x_fn"], i["ch2"], None, i["L0"], i["L1"], i["L2"], J=i["J"],
                       K1=i["K1"], K2=i["K2"], gamma=i["gamma"], n=i.n, **kw)


def _b_dlsc(i, **kw):
    return B.dlsc_bounds(i["p_x12"], i["k1"], i["k2"], (i["z1"], i["z2"]), (i["d1"], i["d2"]),
                         i["D1"], i["D2"], i["L1"], i["L2"], gamma=i["gamma"], J=i["kmax"], n=i.n, **kw)


def _b_mac(i, **kw):
    return B.mac_bounds(i["p_x1"], i["p_x2"], i["ch"], i["L1"], i["L2"], gamma=i["gamma"],
                        J=i["kmax"], n=i.n, **kw)


def _b_resolvability(i, **kw):
    return B.resolvability_bound(i["p_x"], i["ch"], i["L"], J=i["J"], gamma=i.params.get("gamma"),
                                 alpha=i.params.get("alpha"), n=i.n, **kw)


def _b_wiretap(i, **kw):
    return B.wiretap_bound(i["p_ux"], i["ch2"], None, i["L"], i["K"], i["J"], nu=i["nu"], n=i.n, **kw)


_CH = {"p_x": "pmf", "ch": "kernel"}
SETTINGS: dict[str, SettingSpec] = {
    "channel": SettingSpec(_CH, {"L": None, "J": 1}, {}, _b_channel, "prop1"),
    "channel_rank": SettingSpec(_CH, {"L": None, "J": 1}, {}, _b_channel, "thm2"),
    "list": SettingSpec(_CH, {"L": None, "J": 2}, {}, _b_channel, "list"),
    "gp": SettingSpec({"p_s": "pmf", "p_u_given_s": "kernel", "x_fn": "map", "ch": "kernel"},
                      {"L": None, "J": 1}, {"gamma": 1.0}, _b_gp, "thm3"),
    "wz": SettingSpec({"p_x": "pmf", "side": "kernel", "p_u_given_x": "kernel", "z_fn": "map", "d_fn": "dist"},
                      {"L": None, "J": 1}, {"D": None, "gamma_p": 1.0, "gamma_c": 1.0}, _b_wz, "thm4"),
    "jscc": SettingSpec({"p_w": "pmf", "p_x": "pmf", "ch": "kernel", "p_z": "pmf", "d_fn": "dist"},
                        {"J": 1}, {"D": None}, _b_jscc, "thm5"),
    "marton": SettingSpec({"p_u12": "joint", "x_fn": "map", "ch2": "kernel2"},
                          {"L1": None, "L2": None, "J": 1}, {}, _b_marton, "thm8"),
    "bc_common": SettingSpec({"p_u012": "joint", "x_fn": "map", "ch2": "kernel2"},
                             {"L0": None, "L1": None, "L2": None, "J": 1, "K1": 1, "K2": 1, "kmax": 1024},
                             {"gamma": 1.0}, _b_bc, "thm7"),
    "dlsc": SettingSpec({"p_x12": "joint", "k1": "kernel", "k2": "kernel", "z1": "map", "z2": "map",
                         "d1": "dist", "d2": "dist"},
                        {"L1": None, "L2": None, "kmax": 1024}, {"D1": None, "D2": None, "gamma": 1.0},
                        _b_dlsc, "phi"),
    "mac": SettingSpec({"p_x1": "pmf", "p_x2": "pmf", "ch": "kernel"},
                       {"L1": None, "L2": None, "kmax": 1024}, {"gamma": 1.0}, _b_mac, "phi"),
    "resolvability": SettingSpec(_CH, {"L": None, "J": 1}, {}, _b_resolvability, "pe1"),
    "wiretap": SettingSpec({"p_ux": "joint", "ch2": "kernel2"}, {"L": None, "K": None, "J": None},
                           {"nu": 1.0}, _b_wiretap, "total"),
}


# ---------------------------------------------------------------------------
# validation


def _check_array(name: str, kind: str, arr: np.ndarray) -> None:
    if kind == "map":
        if not np.issubdtype(arr.dtype, np.integer) or np.any(arr < 0):
            raise ProbError(f"{name}: a map must hold nonnegative integers")
        return
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ProbError(f"{name}: entries must be finite and nonnegative")
    if kind == "dist":
        return
    if kind in ("pmf", "joint"):
        if abs(arr.sum() - 1.0) > NORM_TOL:
            raise ProbError(f"{name}: total mass {arr.sum():.12g} differs from 1")
        return
    outputs = 2 if kind == "kernel2" else 1
    if arr.ndim <= outputs:
        raise ProbError(f"{name}: a kernel needs input and output axes")
    rows = arr.sum(axis=tuple(range(arr.ndim - outputs, arr.ndim)))
    if np.any(np.abs(rows - 1.0) > NORM_TOL):
        raise ProbError(f"{name}: every kernel row must sum to 1")


def _check_params(inst: Instance) -> None:
    spec = SETTINGS[inst.setting]
    if inst.n < 1:
        raise ProbError("n must be a positive integer")
    for k in spec.ints:
        v = inst.params.get(k)
        if v is None:
            raise ProbError(f"{inst.setting}: missing integer parameter {k!r}")
        if int(v) != v or v < 1:
            raise ProbError(f"{inst.setting}: {k} must be a positive integer, got {v!r}")
        inst.params[k] = int(v)
    for k in spec.floats:
        v = inst.params.get(k)
        if v is None:
            raise ProbError(f"{inst.setting}: missing parameter {k!r}")
        if not math.isfinite(float(v)):
            raise ProbError(f"{inst.setting}: {k} must be finite")
        inst.params[k] = float(v)


def load_instance(doc: Mapping[str, Any] | str | Path, name: str = "") -> Instance:
    """Validate a mapping (or JSON file / text) into an :class:`Instance`."""
    if isinstance(doc, Path) or (isinstance(doc, str) and not doc.lstrip().startswith("{")):
        path = Path(doc)
        if not path.exists():
            if str(doc) in BUILTINS:
                return builtin(str(doc))
            raise ProbError(f"instance file {doc} does not exist")
        name = name or path.stem
        doc = json.loads(path.read_text())
    elif isinstance(doc, str):
        doc = json.loads(doc)
    doc = dict(doc)
    setting = doc.pop("setting", None)
    if setting not in SETTINGS:
        raise ProbError(f"unknown setting {setting!r}; expected one of {sorted(SETTINGS)}")
    spec = SETTINGS[setting]
    n = int(doc.pop("n", 1))
    arrays = {}
    for key, kind in spec.arrays.items():
        if key not in doc:
            raise ProbError(f"{setting}: missing array {key!r}")
        raw = doc.pop(key)
        arr = np.asarray(raw, dtype=np.int64 if kind == "map" else np.float64)
        _check_array(key, kind, arr)
        arrays[key] = arr
    params = {k: doc.pop(k, d) for k, d in {**spec.ints, **spec.floats}.items()}
    for extra in ("gamma", "alpha"):
        if extra in doc:
            params[extra] = float(doc.pop(extra))
    doc.pop("name", None)
    if doc:
        raise ProbError(f"{setting}: unexpected fields {sorted(doc)}")
    inst = Instance(setting, n, arrays, params, name)
    _check_params(inst)
    return inst


def bound_report(inst: Instance, mode: str = "auto", trials: int = 10**5, seed: int = 0) -> B.BoundReport:
    return SETTINGS[inst.setting].bound(inst, mode=mode, trials=trials, seed=seed)


def primary_bound(setting: str) -> str:
    return SETTINGS[setting].primary


# ---------------------------------------------------------------------------
# named built-ins


def _bsc(e: float) -> list:
    return [[1 - e, e], [e, 1 - e]]


def _two_bsc(e1: float, e2: float) -> list:
    """Binary input, two independent binary-symmetric outputs."""
    c = np.zeros((2, 2, 2))
    for x in range(2):
        for a in range(2):
            for b in range(2):
                c[x, a, b] = (e1 if a != x else 1 - e1) * (e2 if b != x else 1 - e2)
    return c.tolist()


def _dsbs(p: float) -> list:
    return [[0.5 * (1 - p), 0.5 * p], [0.5 * p, 0.5 * (1 - p)]]


_HAM = [[0.0, 1.0], [1.0, 0.0]]
_ID = [[1.0, 0.0], [0.0, 1.0]]
_UNIF = [0.5, 0.5]


def _gp_channel(e: float) -> list:
    # Y = X xor S xor noise
    ch = np.zeros((2, 2, 2))
    for x in range(2):
        for s in range(2):
            y = x ^ s
            ch[x, s, y], ch[x, s, 1 - y] = 1 - e, e
    return ch.tolist()


def _adder() -> list:
    ch = np.zeros((2, 2, 3))
    for a in range(2):
        for b in range(2):
            ch[a, b, a + b] = 1.0
    return ch.tolist()


def _bc_joint(a: float) -> list:
    u0 = np.array(_UNIF)
    k = np.array(_bsc(a))
    return np.einsum("i,ij,ik->ijk", u0, k, k).tolist()


_MAJ = (np.indices((2, 2, 2)).sum(axis=0) >= 2).astype(int).tolist()

BUILTINS: dict[str, dict] = {
    "noiseless-l2": {"setting": "channel", "n": 1, "p_x": _UNIF, "ch": _ID, "L": 2},
    "bsc-n8-l4": {"setting": "channel", "n": 8, "p_x": _UNIF, "ch": _bsc(0.11), "L": 4},
    "rank-noiseless-l2": {"setting": "channel_rank", "n": 1, "p_x": _UNIF, "ch": _ID, "L": 2},
    "rank-bsc-n8-l4": {"setting": "channel_rank", "n": 8, "p_x": _UNIF, "ch": _bsc(0.11), "L": 4},
    "list-noiseless-l2": {"setting": "list", "n": 1, "p_x": _UNIF, "ch": _ID, "L": 2, "J": 2},
    "list-bsc-n8-l8": {"setting": "list", "n": 8, "p_x": _UNIF, "ch": _bsc(0.11), "L": 8, "J": 2},
    "gp-dirty-n6": {
        "setting": "gp", "n": 6, "p_s": _UNIF, "p_u_given_s": _bsc(0.2),
        "x_fn": [[0, 1], [1, 0]], "ch": _gp_channel(0.05), "L": 2,
    },
    "wz-dsbs-n6": {
        "setting": "wz", "n": 6, "p_x": _UNIF, "side": _bsc(0.25), "p_u_given_x": _bsc(0.1),
        "z_fn": [[0, 0], [1, 1]], "d_fn": _HAM, "D": 0.2, "L": 16,
    },
    "jscc-bsc-n3": {
        "setting": "jscc", "n": 3, "p_w": _UNIF, "p_x": _UNIF, "ch": _bsc(0.02), "p_z": _UNIF,
        "d_fn": _HAM, "D": 0.34, "J": 2,
    },
    "marton-n8": {
        "setting": "marton", "n": 8, "p_u12": _dsbs(0.05), "x_fn": [[0, 0], [1, 1]],
        "ch2": _two_bsc(0.01, 0.01), "L1": 2, "L2": 2, "J": 4,
    },
    "bc-common-n4": {
        "setting": "bc_common", "n": 4, "p_u012": _bc_joint(0.1), "x_fn": _MAJ,
        "ch2": _two_bsc(0.01, 0.01), "L0": 2, "L1": 1, "L2": 1, "J": 2, "kmax": 64,
    },
    "dlsc-dsbs-n2": {
        "setting": "dlsc", "n": 2, "p_x12": [[0.5, 0.0], [0.0, 0.5]], "k1": _bsc(0.1), "k2": _bsc(0.1),
        "z1": [[0, 0], [1, 1]], "z2": [[0, 1], [0, 1]], "d1": _HAM, "d2": _HAM,
        "D1": 0.5, "D2": 0.5, "L1": 64, "L2": 64, "kmax": 64,
    },
    "mac-adder-n8": {
        "setting": "mac", "n": 8, "p_x1": _UNIF, "p_x2": _UNIF, "ch": _adder(), "L1": 2, "L2": 2, "kmax": 64,
    },
    "resolvability-bsc-l256": {
        "setting": "resolvability", "n": 1, "p_x": _UNIF, "ch": _bsc(0.11), "L": 256, "J": 16,
    },
    "wiretap-n8": {
        "setting": "wiretap", "n": 8, "p_ux": [[0.5, 0.0], [0.0, 0.5]], "ch2": _two_bsc(0.0, 0.45),
        "L": 2, "K": 32, "J": 5,
    },
}


def builtin(name: str) -> Instance:
    if name not in BUILTINS:
        raise ProbError(f"unknown built-in instance {name!r}; choose from {sorted(BUILTINS)}")
    return load_instance(BUILTINS[name], name=name)
