"""Command-line experiment runner.

Subcommands::

    pmllab bound         --instance NAME|FILE [--sweep L=2,4,8]
    pmllab simulate      --instance NAME|FILE [--trials N] [--seed S] [--workers W]
    pmllab verify-lemma  [--instance FILE] [--sweep j=1,2] [--trials N]
    pmllab dispersion    --instance FILE --param n=100 --param eps=0.1

Every run point yields a JSON report; all points share one CSV with a
stable column order.  Exit status is 0 when every dominance check passes,
1 when one fails and 2 on invalid input (with an error JSON on stdout).
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import bounds as B
from . import second_order as so
from .core_prob import FiniteMeasure, Pmf, ProbError
from .instances import BUILTINS, Instance, bound_report, load_instance
from .pml_analytics import pml_bound, rank_law
from .race_process import batch_rank, density, trial_seeds
from .schemes import SchemeConfig, simulate, wilson

SUBCOMMANDS = ("bound", "simulate", "verify-lemma", "dispersion")
SWEEP_CAP = 10**4
LEMMA_CHUNK = 2**16

LEMMA_BUILTINS = {
    "canonical-two-atom": {"mu": [1.0, 1.0], "p": [0.75, 0.25], "q": [0.5, 0.5], "j": 1, "k": 1},
}


@dataclass
class RunConfig:
    subcommand: str
    instance: str | None = None
    sweep: dict[str, list] = field(default_factory=dict)
    params: dict[str, Any] = field(default_factory=dict)
    trials: int = 10**5
    seed: int = 0
    workers: int = 1
    out: Path | None = None
    trace: int = 0
    timing: bool = False
    sweep_cap: int = SWEEP_CAP

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ProbError(f"unknown subcommand {self.subcommand!r}")
        if self.trials < 1 or self.workers < 1 or self.trace < 0:
            raise ProbError("trials and workers must be positive, trace nonnegative")
        size = math.prod(len(v) for v in self.sweep.values())
        if size > self.sweep_cap:
            raise ProbError(f"sweep has {size} points, above the cap of {self.sweep_cap}")
        if self.instance is None and self.subcommand != "verify-lemma":
            raise ProbError(f"{self.subcommand} needs --instance")

    def points(self) -> list[dict]:
        keys = sorted(self.sweep)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.sweep[k] for k in keys))]


@dataclass
class PointResult:
    setting: str
    params: dict
    bounds: dict[str, float]
    report: dict
    empirical: float | None = None
    ci_lo: float | None = None
    ci_hi: float | None = None
    trials: int | None = None
    seed: int | None = None
    wall_ms: float | None = None
    passed: bool = True


# ---------------------------------------------------------------------------
# parsing helpers


def _scalar(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return float(text)


def parse_assignment(text: str, multi: bool) -> tuple[str, Any]:
    if "=" not in text:
        raise ProbError(f"expected key=value, got {text!r}")
    key, _, rhs = text.partition("=")
    key = key.strip()
    if not key or not rhs.strip():
        raise ProbError(f"expected key=value, got {text!r}")
    try:
        vals = [_scalar(v) for v in rhs.split(",")] if multi else _scalar(rhs)
    except ValueError:
        raise ProbError(f"non-numeric value in {text!r}") from None
    return key, vals


def _read_doc(ref: str, builtins: dict) -> dict:
    if ref in builtins:
        return dict(builtins[ref])
    path = Path(ref)
    if not path.exists():
        raise ProbError(f"instance {ref!r} is neither a file nor a built-in name")
    return json.loads(path.read_text())


def _instance(ref: str, point: dict) -> Instance:
    inst = load_instance(BUILTINS[ref], name=ref) if ref in BUILTINS else load_instance(ref)
    return inst.replace(**point) if point else inst


# ---------------------------------------------------------------------------
# run points


def _run_bound(cfg: RunConfig, point: dict) -> PointResult:
    inst = _instance(cfg.instance, {**cfg.params, **point})
    rep = bound_report(inst, trials=cfg.trials, seed=cfg.seed)
    params = dict(inst.params, n=inst.n)
    return PointResult(inst.setting, params, dict(rep.values), rep.to_json())


def _run_simulate(cfg: RunConfig, point: dict) -> PointResult:
    inst = _instance(cfg.instance, {**cfg.params, **point})
    res = simulate(SchemeConfig(inst, trials=cfg.trials, seed=cfg.seed, trace=cfg.trace))
    bounds = dict(res.extra.get("bounds", {}))
    bounds[res.bound_name] = res.bound
    return PointResult(inst.setting, res.params, bounds, res.to_json(), res.estimate, res.ci_lo,
                       res.ci_hi, res.trials, res.seed, passed=res.dominated())


def _lemma_doc(cfg: RunConfig, point: dict) -> dict:
    doc = _read_doc(cfg.instance or "canonical-two-atom", LEMMA_BUILTINS)
    doc.update(cfg.params)
    doc.update(point)
    unknown = set(doc) - {"mu", "p", "q", "j", "k", "atom"}
    if unknown:
        raise ProbError(f"verify-lemma: unexpected fields {sorted(unknown)}")
    for key in ("mu", "p", "q"):
        if key not in doc:
            raise ProbError(f"verify-lemma: missing {key!r}")
    return doc


def lemma_bound(r: float, j: int, k: int) -> float:
    """Tightest of the matching-lemma forms valid for (j, k)."""
    forms = ["tail"] + (["j1"] if j == 1 else []) + (["k1"] if k == 1 else [])
    return float(min(pml_bound(r, j=j, k=k, form=f) for f in forms))


def lemma_check(mu, p, q, j: int, k: int, trials: int, seed: int, atom: int | None = None) -> dict:
    """Exact and Monte Carlo P{rank > k | selected atom} for the j-th p-point."""
    mu = FiniteMeasure(np.asarray(mu, dtype=np.float64))
    p, q = Pmf(np.asarray(p, dtype=np.float64)), Pmf(np.asarray(q, dtype=np.float64))
    f, g = density(mu, p), density(mu, q)
    atoms = [atom] if atom is not None else [int(u) for u in np.flatnonzero(f > 0)]
    pos_all, rank_all = [], []
    for start in range(0, trials, LEMMA_CHUNK):
        seeds = trial_seeds(seed, min(LEMMA_CHUNK, trials - start), start)
        pos, ranks = batch_rank(seeds, f, g, mu.weights, j)
        pos_all.append(pos)
        rank_all.append(ranks)
    pos, ranks = np.concatenate(pos_all), np.concatenate(rank_all)
    rows = []
    for u in atoms:
        law = rank_law(mu, p, q, u, j)
        exact = law.exceed(k) if law.pmf.size else 1.0
        ratio = f[u] / g[u] if g[u] > 0 else math.inf
        bound = lemma_bound(ratio, j, k)
        hit = pos == u
        m = int(hit.sum())
        est, lo, hi = math.nan, 0.0, 1.0
        if m:
            exceed = int(np.count_nonzero(ranks[hit] > k))
            est = exceed / m
            lo, hi = wilson(exceed, m)
        sigma = math.sqrt(max(exact * (1 - exact), 1e-300) / max(m, 1))
        rows.append({
            "atom": u, "alpha": law.ab.alpha, "beta": law.ab.beta, "exact": exact, "bound": bound,
            "matched": m, "estimate": est, "ci_lo": lo, "ci_hi": hi,
            "within_3sigma": bool(m) and abs(est - exact) <= 3 * sigma + 1e-15,
            "dominated": bool(m) and est <= bound + 3 * max(hi - est, est - lo),
        })
    return {"j": j, "k": k, "trials": trials, "seed": seed, "atoms": rows}


def _run_lemma(cfg: RunConfig, point: dict) -> PointResult:
    doc = _lemma_doc(cfg, point)
    j, k = int(doc.get("j", 1)), int(doc.get("k", 1))
    atom = doc.get("atom")
    rep = lemma_check(doc["mu"], doc["p"], doc["q"], j, k, cfg.trials, cfg.seed,
                      None if atom is None else int(atom))
    first = rep["atoms"][0]
    passed = all(r["dominated"] for r in rep["atoms"])
    params = {"j": j, "k": k, "atom": first["atom"]}
    return PointResult("lemma", params, {"exact": first["exact"], "lemma": first["bound"]}, rep,
                       first["estimate"], first["ci_lo"], first["ci_hi"], cfg.trials, cfg.seed,
                       passed=passed)


def _run_dispersion(cfg: RunConfig, point: dict) -> PointResult:
    doc = _read_doc(cfg.instance, BUILTINS)
    extra = {**cfg.params, **point}
    inst_fields = {k: extra.pop(k) for k in list(extra) if k in doc and k != "n"}
    doc.update(inst_fields)
    blocklength = extra.pop("n", doc.get("n", 1))
    doc["n"] = 1
    inst = load_instance(doc, name=str(cfg.instance))
    eps = float(extra.pop("eps", 0.1))
    if inst.setting == "gp":
        alpha = float(extra.pop("alpha", 1.0))
        if extra:
            raise ProbError(f"dispersion: unexpected parameters {sorted(extra)}")
        joint = B.gp_joint(inst["p_s"], inst["p_u_given_s"], inst["x_fn"], inst["ch"])
        r = so.gp_rate(int(blocklength), eps, joint, alpha)
        params = {"n": int(blocklength), "eps": eps, "alpha": alpha}
        values = {"C": r.C, "V": r.V, "log_L": r.log_L}
        return PointResult("gp", params, values, {"setting": "gp", "params": params, "values": values})
    if inst.setting == "jscc":
        k = extra.pop("k", 1)
        consts = {c: float(extra.pop(c, d)) for c, d in (("eta", 1.0), ("alpha", 1.0), ("beta", 0.0))}
        k0 = int(extra.pop("k0", 1))
        if extra:
            raise ProbError(f"dispersion: unexpected parameters {sorted(extra)}")
        C, V = so.channel_dispersion(inst["p_x"], inst["ch"])
        R, Vs, _ = so.source_dispersion(inst["p_w"], inst["d_fn"], inst["D"])
        inp = so.DispersionInputs(C, V, R, Vs, eps, float(blocklength), float(k), k0=k0, **consts)
        chk = so.jscc_blocklength_check(inp)
        params = {"n": blocklength, "k": k, "eps": eps, "D": inst["D"], "k0": k0, **consts}
        values = {"C": C, "V": V, "R": R, "Vs": Vs, "lhs": chk.lhs, "rhs": chk.rhs,
                  "satisfied": float(chk.satisfied)}
        return PointResult("jscc", params, values,
                           {"setting": "jscc", "params": params, "values": values,
                            "applicable": chk.applicable})
    raise ProbError(f"dispersion supports gp and jscc instances, not {inst.setting}")


_RUNNERS = {"bound": _run_bound, "simulate": _run_simulate, "verify-lemma": _run_lemma,
            "dispersion": _run_dispersion}


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, np.generic):
        v = v.item()
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(results: Sequence[PointResult], timing: bool) -> str:
    params = sorted({k for r in results for k in r.params})
    names = sorted({k for r in results for k in r.bounds})
    cols = ["setting", *params, *names, "empirical", "ci_lo", "ci_hi", "trials", "seed", "wall_ms"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in results:
        row = [r.setting, *(r.params.get(k) for k in params), *(r.bounds.get(k) for k in names),
               r.empirical, r.ci_lo, r.ci_hi, r.trials, r.seed, r.wall_ms if timing else None]
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def run(cfg: RunConfig) -> tuple[int, list[PointResult], str]:
    """Evaluate every sweep point; returns (exit status, results, CSV text)."""
    runner = _RUNNERS[cfg.subcommand]

    def one(point):
        t0 = time.perf_counter()
        res = runner(cfg, point)
        res.wall_ms = round(1e3 * (time.perf_counter() - t0), 3)
        res.report = {"subcommand": cfg.subcommand, "instance": cfg.instance, "seed": cfg.seed,
                      "point": point, "passed": res.passed, **res.report}
        if cfg.timing:
            res.report["wall_ms"] = res.wall_ms
        return res

    points = cfg.points()
    if cfg.workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(one, points))
    else:
        results = [one(p) for p in points]
    text = to_csv(results, cfg.timing)
    if cfg.out is not None:
        cfg.out.mkdir(parents=True, exist_ok=True)
        for i, r in enumerate(results):
            (cfg.out / f"{cfg.subcommand}_{i:04d}.json").write_text(
                json.dumps(_jsonable(r.report), indent=2, sort_keys=True) + "\n")
        (cfg.out / "results.csv").write_text(text)
    return (0 if all(r.passed for r in results) else 1), results, text


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pmllab", description="Poisson matching experiments")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--instance", help="instance JSON file or built-in name")
        sp.add_argument("--sweep", action="append", default=[], metavar="KEY=V1,V2",
                        help="sweep a parameter (repeatable; cross product)")
        sp.add_argument("--param", action="append", default=[], metavar="KEY=V",
                        help="fix a parameter (repeatable)")
        sp.add_argument("--trials", type=int, default=10**5)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--out", type=Path, help="directory for JSON reports and results.csv")
        sp.add_argument("--trace", type=int, default=0, help="record the first N trials")
        sp.add_argument("--timing", action="store_true", help="fill the wall_ms column")
        sp.add_argument("--sweep-cap", type=int, default=SWEEP_CAP)
    return ap


def config_from_args(args: argparse.Namespace) -> RunConfig:
    sweep = dict(parse_assignment(s, True) for s in args.sweep)
    params = dict(parse_assignment(s, False) for s in args.param)
    return RunConfig(args.subcommand, args.instance, sweep, params, args.trials, args.seed,
                     args.workers, args.out, args.trace, args.timing, args.sweep_cap)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        status, results, text = run(cfg)
    except (ProbError, ValueError, KeyError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc).strip("'\""),
               "subcommand": args.subcommand}
        sys.stdout.write(json.dumps(err, sort_keys=True) + "\n")
        return 2
    if cfg.out is None:
        sys.stdout.write(text)
    else:
        summary = {"points": len(results), "passed": sum(r.passed for r in results),
                   "out": str(cfg.out), "status": status}
        sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return status


if __name__ == "__main__":
    sys.exit(main())
