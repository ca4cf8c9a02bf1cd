"""Batch front-end.

Usage::

    cosserat-jets <command> --config run.toml [--out report.json] [--seed N] [--grid N]

Commands: ``axioms``, ``prolong``, ``uniformity``, ``homogeneity``, ``symmetry`` and
``obstruction``.  Each writes one JSON report ``{command, config_echo, verdict, residuals,
samples, timings, seed}``; ``obstruction`` also writes a CSV grid.  Exit status is 0 when
a verdict was reached (negative verdicts included), 2 when the verdict is inconclusive
and 1 on any error.  ``COSSERAT_THREADS`` caps worker threads.

Configuration (TOML)::

    [chart]        dim = 2, lo = -0.5, hi = 0.5        # lo/hi: number or list
    [medium]       name = "implant"
                   A = [["1", "x2"], ["0", "1"]]       # implant: matrix of expressions
                   phi = "1 + x1**2"                   # det_density: density expression
                   plugin = "package.module:factory"   # factory(n, **params) -> ResponseFunction
                   params = {}
    [tolerances]   fd_step, abs_tol, rel_tol, max_iter, rng_seed
    [sampler]      num_deformations, jet_scale, seed, exhaustive
    [grid]         per_axis = 5
    [axioms]       cases = 1000, dims = [1, 2, 3], tol = 1e-9
    [prolong]      P = [[...]], Q = [[...]], tol = 1e-6
    [uniformity]   early_exit = true
    [homogeneity]  verify_tol = 1e-6, kappa = [...], C = [[...]]   # optional candidate
    [symmetry]     point = [...], count = 16
    [obstruction]  csv = "obstruction.csv"

Expressions are in the variables ``x1 .. xn``.
"""
from __future__ import annotations

import argparse
import copy
import importlib
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
import sympy

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, CosseratError
from .fields import write_grid_csv
from .jets import BodyChart, compose2, identity2, invert2, max_abs_diff2, random_jet2
from .material import (
    ResponseFunction,
    SamplerConfig,
    builtin_media,
    homogeneity_check,
    obstruction_map,
    symmetry_sample,
    uniformity_check,
)
from .numerics import ToleranceConfig
from .prolongation import integrability_test_parallelism2, prolong_parallelism

COMMANDS = ("axioms", "prolong", "uniformity", "homogeneity", "symmetry", "obstruction")
EXIT_OK, EXIT_ERROR, EXIT_INCONCLUSIVE = 0, 1, 2

# --- configuration ---------------------------------------------------------------------

_SCHEMA: dict[str, dict[str, type | tuple]] = {
    "chart": {"dim": int, "lo": (int, float, list), "hi": (int, float, list)},
    "medium": {"name": str, "A": list, "phi": str, "plugin": str, "params": dict},
    "tolerances": {"fd_step": (int, float), "abs_tol": (int, float), "rel_tol": (int, float), "max_iter": int, "rng_seed": int},
    "sampler": {"num_deformations": int, "jet_scale": (int, float), "seed": int, "exhaustive": bool},
    "grid": {"per_axis": int},
    "axioms": {"cases": int, "dims": list, "tol": (int, float)},
    "prolong": {"P": list, "Q": list, "tol": (int, float)},
    "uniformity": {"early_exit": bool},
    "homogeneity": {"verify_tol": (int, float), "kappa": list, "C": list},
    "symmetry": {"point": list, "count": int},
    "obstruction": {"csv": str},
}

_DEFAULTS: dict[str, dict[str, Any]] = {
    "chart": {"lo": -0.5, "hi": 0.5},
    "tolerances": asdict(ToleranceConfig()),
    "sampler": asdict(SamplerConfig()),
    "grid": {"per_axis": 5},
    "axioms": {"cases": 1000, "tol": 1e-9},
    "prolong": {"tol": 1e-6},
    "uniformity": {"early_exit": True},
    "homogeneity": {"verify_tol": 1e-6},
    "symmetry": {"count": 16},
    "obstruction": {},
}


@dataclass
class RunConfig:
    chart: BodyChart
    medium: Optional[ResponseFunction]
    tolerances: ToleranceConfig
    sampler: SamplerConfig
    per_axis: int
    options: dict
    echo: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.sampler.seed


def _symbols(n):
    return sympy.symbols(f"x1:{n + 1}")


def compile_expression(expr, n: int, key: str, shape: tuple = ()) -> Callable:
    """Compile a (nested list of) expression string(s) in ``x1..xn`` into ``f(x) -> array``."""
    xs = _symbols(n)
    names = {str(s): s for s in xs}
    try:
        arr = np.array(expr, dtype=object)
        if shape and arr.shape != shape:
            raise ConfigError(f"{key}: expected shape {shape}, got {arr.shape}")
        parsed = [sympy.sympify(str(e), locals=names) for e in arr.ravel()]
    except (sympy.SympifyError, TypeError, SyntaxError) as exc:
        raise ConfigError(f"{key}: cannot parse expression ({exc})") from None
    extra = set().union(*(p.free_symbols for p in parsed)) - set(xs)
    if extra:
        raise ConfigError(f"{key}: unknown variables {sorted(map(str, extra))}")
    f = sympy.lambdify([xs], parsed, "numpy")
    out_shape = arr.shape

    def call(x):
        vals = f(np.asarray(x, float).reshape(n))
        return np.array([float(v) for v in vals]).reshape(out_shape)

    return call


def _check_keys(raw: dict):
    for sec, body in raw.items():
        if sec not in _SCHEMA:
            raise ConfigError(f"{sec}: unknown section")
        if not isinstance(body, dict):
            raise ConfigError(f"{sec}: expected a table")
        for k, v in body.items():
            if k not in _SCHEMA[sec]:
                raise ConfigError(f"{sec}.{k}: unknown key")
            want = _SCHEMA[sec][k]
            if isinstance(v, bool) and want is not bool and (not isinstance(want, tuple) or bool not in want):
                raise ConfigError(f"{sec}.{k}: wrong type {type(v).__name__}")
            if not isinstance(v, want):
                raise ConfigError(f"{sec}.{k}: wrong type {type(v).__name__}")


def _bound(v, n, key):
    arr = np.broadcast_to(np.asarray(v, float), (n,)) if np.ndim(v) == 0 else np.asarray(v, float)
    if arr.shape != (n,):
        raise ConfigError(f"{key}: expected {n} values")
    return arr


def _load_medium(sec: dict, n: int) -> ResponseFunction:
    params = dict(sec.get("params", {}))
    if "plugin" in sec:
        mod, _, attr = sec["plugin"].partition(":")
        try:
            factory = getattr(importlib.import_module(mod), attr)
        except (ImportError, AttributeError, ValueError) as exc:
            raise ConfigError(f"medium.plugin: cannot load {sec['plugin']!r} ({exc})") from None
        try:
            W = factory(n, **params)
        except TypeError as exc:
            raise ConfigError(f"medium.params: rejected by plug-in ({exc})") from None
        if not isinstance(W, ResponseFunction):
            raise ConfigError("medium.plugin: factory did not return a ResponseFunction")
        return W
    name = sec.get("name")
    if name is None:
        raise ConfigError("medium.name: required")
    if "A" in sec:
        params["A"] = compile_expression(sec["A"], n, "medium.A", (n, n))
    if "phi" in sec:
        phi1 = compile_expression(sec["phi"], n, "medium.phi")

        def phi(x):
            x = np.asarray(x, float)
            return np.array([phi1(r) for r in x.reshape(-1, n)]).reshape(x.shape[:-1])

        params["phi"] = phi
    if name == "implant" and "A" not in params:
        raise ConfigError("medium.A: required for implant")
    try:
        return builtin_media(name, n, **params)
    except TypeError as exc:
        raise ConfigError(f"medium: bad parameters for {name!r} ({exc})") from None


def parse_config_text(text: str, *, seed: Optional[int] = None, grid: Optional[int] = None) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"syntax error: {exc}") from None
    _check_keys(raw)
    if "chart" not in raw or "dim" not in raw["chart"]:
        raise ConfigError("chart.dim: required")
    cfg = copy.deepcopy(_DEFAULTS)
    for sec, body in raw.items():
        cfg.setdefault(sec, {}).update(body)
    if seed is not None:
        cfg["sampler"]["seed"] = int(seed)
        cfg["tolerances"]["rng_seed"] = int(seed)
    if grid is not None:
        cfg["grid"]["per_axis"] = int(grid)

    n = cfg["chart"]["dim"]
    if n not in (1, 2, 3):
        raise ConfigError("chart.dim: must be 1, 2 or 3")
    lo, hi = _bound(cfg["chart"]["lo"], n, "chart.lo"), _bound(cfg["chart"]["hi"], n, "chart.hi")
    if np.any(lo >= hi):
        raise ConfigError("chart.lo: must be below chart.hi on every axis")
    chart = BodyChart(list(zip(lo, hi)))
    if cfg["grid"]["per_axis"] < 2:
        raise ConfigError("grid.per_axis: must be >= 2")
    try:
        tol = ToleranceConfig(**cfg["tolerances"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"tolerances: {exc}") from None
    try:
        sampler = SamplerConfig(**cfg["sampler"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sampler: {exc}") from None
    medium = _load_medium(cfg["medium"], n) if "medium" in cfg else None
    options = {k: cfg[k] for k in ("axioms", "prolong", "uniformity", "homogeneity", "symmetry", "obstruction")}
    return RunConfig(chart, medium, tol, sampler, cfg["grid"]["per_axis"], options, cfg)


def parse_config(path, *, seed: Optional[int] = None, grid: Optional[int] = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config_text(text, seed=seed, grid=grid)


# --- commands --------------------------------------------------------------------------


def _need_medium(cfg: RunConfig) -> ResponseFunction:
    if cfg.medium is None:
        raise ConfigError("medium: required for this command")
    return cfg.medium


def _cmd_axioms(cfg: RunConfig) -> dict:
    opt = cfg.options["axioms"]
    dims = opt.get("dims", [cfg.chart.dim])
    rng = np.random.default_rng([cfg.tolerances.rng_seed, 0xA810])
    worst = {"associativity": 0.0, "unit": 0.0, "inverse": 0.0}
    for k in range(opt["cases"]):
        n = int(dims[k % len(dims)])
        x, y, z, w = rng.uniform(-1, 1, (4, n))
        f, g, h = random_jet2(rng, x, y), random_jet2(rng, y, z), random_jet2(rng, z, w)
        worst["associativity"] = max(worst["associativity"], max_abs_diff2(compose2(h, compose2(g, f)), compose2(compose2(h, g), f)))
        worst["unit"] = max(worst["unit"], max_abs_diff2(compose2(f, identity2(x)), f), max_abs_diff2(compose2(identity2(y), f), f))
        fi = invert2(f)
        worst["inverse"] = max(worst["inverse"], max_abs_diff2(compose2(fi, f), identity2(x)), max_abs_diff2(compose2(f, fi), identity2(y)))
    mx = max(worst.values())
    return {"verdict": "pass" if mx <= opt["tol"] else "fail", "residuals": {**worst, "max": mx}, "samples": {"cases": opt["cases"], "dims": dims}}


def _cmd_prolong(cfg: RunConfig) -> dict:
    opt = cfg.options["prolong"]
    n = cfg.chart.dim
    if "P" not in opt or "Q" not in opt:
        raise ConfigError("prolong.P: prolong needs P and Q fields")
    P = compile_expression(opt["P"], n, "prolong.P", (n, n))
    Q = compile_expression(opt["Q"], n, "prolong.Q", (n, n))
    S = prolong_parallelism(P, Q, n, cfg.tolerances.fd_step, cfg.chart.box)
    v = integrability_test_parallelism2(S, cfg.chart, cfg.tolerances, opt["tol"], cfg.per_axis)
    verdict = "integrable" if v.integrable else "non-integrable"
    return {"verdict": verdict, "residuals": v.to_dict(), "samples": {"points": cfg.chart.grid(cfg.per_axis)}}


def _cmd_uniformity(cfg: RunConfig) -> dict:
    W = _need_medium(cfg)
    rep = uniformity_check(W, cfg.chart.grid(cfg.per_axis), cfg.sampler, cfg.tolerances, early_exit=cfg.options["uniformity"]["early_exit"])
    d = rep.to_dict()
    residuals = {k: d.pop(k) for k in ("max_residual", "pair_residuals", "failed_pairs", "unconverged_pairs")}
    return {"verdict": rep.verdict, "residuals": residuals, "samples": d}


def _cmd_homogeneity(cfg: RunConfig) -> dict:
    W = _need_medium(cfg)
    opt = cfg.options["homogeneity"]
    n = cfg.chart.dim
    candidate = None
    if "kappa" in opt or "C" in opt:
        kappa = compile_expression(opt.get("kappa", [f"x{i + 1}" for i in range(n)]), n, "homogeneity.kappa", (n,))
        eye = [["1" if i == j else "0" for j in range(n)] for i in range(n)]
        C = compile_expression(opt.get("C", eye), n, "homogeneity.C", (n, n))
        candidate = (kappa, C)
    rep = homogeneity_check(W, cfg.chart, candidate, cfg.sampler, cfg.tolerances, cfg.per_axis, opt["verify_tol"])
    d = rep.to_dict()
    residuals = {k: d.pop(k) for k in ("max_residual", "obstruction", "residual_field", "q_rigid")}
    d["points"] = rep.points
    return {"verdict": rep.verdict, "residuals": residuals, "samples": d}


def _cmd_symmetry(cfg: RunConfig) -> dict:
    W = _need_medium(cfg)
    opt = cfg.options["symmetry"]
    x = _bound(opt.get("point", cfg.chart.center.tolist()), cfg.chart.dim, "symmetry.point")
    s = symmetry_sample(W, x, cfg.sampler, cfg.tolerances, opt["count"])
    nontrivial = any(max_abs_diff2(g, identity2(x)) > 1e-8 for g in s.jets)
    return {
        "verdict": "nontrivial" if nontrivial else "trivial",
        "residuals": {"acceptance_rate": s.acceptance_rate},
        "samples": {"point": x, "candidates": s.candidates, "jets": [g.to_dict() for g in s.jets]},
    }


def _cmd_obstruction(cfg: RunConfig, out: Optional[Path]) -> dict:
    W = _need_medium(cfg)
    m = obstruction_map(W, cfg.chart, cfg.sampler, cfg.tolerances, cfg.per_axis)
    if m.closedness is None:
        return {"verdict": "inconclusive", "residuals": {}, "samples": {"notes": m.notes}}
    csv = cfg.options["obstruction"].get("csv")
    path = Path(csv) if csv else (out.with_suffix(".csv") if out else Path("obstruction.csv"))
    write_grid_csv(path, m.header(), m.rows())
    mx = float(m.closedness.max())
    return {
        "verdict": "obstructed" if mx > cfg.options["homogeneity"]["verify_tol"] else "unobstructed",
        "residuals": {"closedness_max": mx, "curvature_max": float(m.curvature_norm.max())},
        "samples": {"csv": str(path), "rows": len(m.points)},
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if callable(obj):
        return getattr(obj, "__name__", "callable")
    return obj


def run(command: str, cfg: RunConfig, out: Optional[Path] = None) -> tuple[int, dict]:
    """Run one command; returns ``(exit_code, report)``.  Module errors become exit 1."""
    t0 = time.perf_counter()
    report = {"command": command, "config_echo": cfg.echo, "seed": cfg.seed}
    try:
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}")
        if command == "obstruction":
            body = _cmd_obstruction(cfg, out)
        else:
            body = globals()[f"_cmd_{command}"](cfg)
        report.update(body)
        code = EXIT_INCONCLUSIVE if body["verdict"] == "inconclusive" else EXIT_OK
    except (CosseratError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        report.update(verdict="error", residuals={}, samples={}, error={"type": type(exc).__name__, "message": str(exc)})
        code = EXIT_ERROR
    report["timings"] = {"total_seconds": time.perf_counter() - t0}
    return code, _jsonable(report)


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="cosserat-jets", description="Second-order jet groupoid analyses of Cosserat media.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--out", help="report path (default: stdout)")
    ap.add_argument("--seed", type=int, help="overrides sampler.seed and tolerances.rng_seed")
    ap.add_argument("--grid", type=int, help="grid points per axis")
    args = ap.parse_args(argv)
    out = Path(args.out) if args.out else None
    try:
        cfg = parse_config(args.config, seed=args.seed, grid=args.grid)
    except CosseratError as exc:
        report = {"command": args.command, "verdict": "error", "error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(report), file=sys.stderr)
        return EXIT_ERROR
    code, report = run(args.command, cfg, out)
    text = dumps_report(report)
    if out:
        out.write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    if code == EXIT_ERROR:
        print(report["error"]["message"], file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
