"""Configuration-driven experiment runner.

Each subcommand reads an optional JSON config, applies command-line
overrides, validates every field before computing, then writes JSON Lines
records followed by a summary document.  Exit status is 0 when every
declared check passes, 1 on a tolerance failure, 2 on a configuration
error and 3 when the memory budget refuses the requested grid.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import resource
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import cone, decomposition, grid, oscillatory, plates, sharpness
from .curves import curve_from_spec, moment_curve, sphere_net
from .grid import MemoryBudgetError

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"config field '{field_name}': {message}")
        self.field = field_name


# ------------------------------------------------------------------ config


DEFAULTS: dict[str, dict[str, Any]] = {
    "decay": {
        "curve": {"kind": "moment", "n": 4},
        "ray": [0, 0, 0, 1],
        "lambda_range": [8, 16, 9],  # log2 lo, log2 hi, count
        "tol": 1e-10,
        "expect_slope": None,
        "slope_tol": 0.03,
    },
    "geometry": {
        "curve": {"kind": "moment", "n": 4},
        "samples": 2000,
        "seed": 0,
        "window": 0.1,
        "ratio_band": [0.1, 10.0],
    },
    "decompose-audit": {
        "curve": {"kind": "moment", "n": 4},
        "J": 4,
        "k": [8, 12],
        "samples": 500,
        "seed": 1,
        "rho": 0.05,
        "max_constant": 16.0,
        "reconstruction_tol": 1e-12,
    },
    "lorentz": {"curve": {"kind": "moment", "n": 4}, "d": 2, "draws": 1000, "seed": 0, "tol": 1e-9},
    "decouple": {
        "family": "frenet-box",
        "n": 3,
        "d": 2,
        "p": [2, 6],
        "grid": 128,
        "scales": [1, 5],  # r = 2^-l for l in the closed range
        "box_scale": 55.0,
        "trials": 32,
        "seed": 0,
        "max_exponent": 0.2,
        "budget_bytes": None,
    },
    "operator-probe": {
        "n": 2,
        "grid": 256,
        "p": 4.0,
        "k_range": [3, 6],
        "probes": ["random", "bump", "focusing"],
        "random_trials": 2,
        "seed": 0,
        "expect_slope": None,
        "slope_tol": 0.1,
        "budget_bytes": None,
    },
    "sharpness": {
        "example": "separation",
        "n": 3,
        "p": 6.0,
        "lambda_range": [8, 12],
        "eps": 0.1,
        "rho": 0.4,
        "trials": 32,
        "grid": None,
        "seed": 0,
        "expect_slope": None,
        "slope_tol": 0.05,
        "min_gap": 0.5,
        "budget_bytes": None,
    },
}

RANDOMISED = {"decouple", "operator-probe", "sharpness"}


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be an object")
    return data


def merge(command: str, file_cfg: dict, overrides: dict) -> dict:
    cfg = dict(DEFAULTS[command])
    unknown = set(file_cfg) - set(cfg) - {"command", "output"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    cfg.update({k: v for k, v in file_cfg.items() if k in cfg})
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def _curve(cfg: dict):
    try:
        return curve_from_spec(cfg["curve"])
    except (ValueError, TypeError) as exc:
        raise ConfigError("curve", str(exc)) from exc


def _int_range(cfg: dict, key: str, size: int = 2) -> list[int]:
    val = cfg[key]
    if not isinstance(val, (list, tuple)) or len(val) < size:
        raise ConfigError(key, f"expected a list of at least {size} numbers")
    try:
        return [int(v) for v in val]
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, "entries must be integers") from exc


def _positive(cfg: dict, key: str, integer: bool = False):
    try:
        v = int(cfg[key]) if integer else float(cfg[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, "must be a number") from exc
    if v <= 0:
        raise ConfigError(key, "must be positive")
    return v


# ------------------------------------------------------------------ reports


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class Report:
    command: str
    config: dict
    records: list[dict] = field(default_factory=list)
    estimates: dict[str, dict] = field(default_factory=dict)
    checks: list[dict] = field(default_factory=list)

    def record(self, **kw):
        self.records.append(_jsonable(kw))

    def estimate(self, name: str, value: float, stderr: float | None = None, tol: float | None = None):
        self.estimates[name] = _jsonable({"value": value, "stderr": stderr, "tol": tol})

    def check(self, name: str, value: float, passed: bool, target: str):
        self.checks.append(_jsonable({"name": name, "value": value, "target": target, "pass": bool(passed)}))

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)


# ------------------------------------------------------------------ drivers


def run_decay(cfg: dict, rep: Report) -> None:
    curve = _curve(cfg)
    ray = np.asarray(cfg["ray"], dtype=float)
    if ray.shape != (curve.n,) or not np.any(ray):
        raise ConfigError("ray", f"expected a non-zero vector of length {curve.n}")
    lo, hi, cnt = _int_range(cfg, "lambda_range", 3)
    lams = 2.0 ** np.linspace(lo, hi, cnt)
    chi = oscillatory.default_chi()
    try:
        fit, vals = oscillatory.decay_exponent_fit(curve, chi, ray, lams, tol=float(cfg["tol"]))
    except oscillatory.InsufficientDataError as exc:
        raise ConfigError("lambda_range", str(exc)) from exc
    for lam, v in zip(lams, vals):
        rep.record(lam=lam, abs_mu_hat=v, tol=cfg["tol"])
    rep.estimate("slope", fit.slope, fit.stderr)
    if cfg["expect_slope"] is not None:
        ok = abs(fit.slope - float(cfg["expect_slope"])) <= float(cfg["slope_tol"])
        rep.check("slope", fit.slope, ok, f"{cfg['expect_slope']} +- {cfg['slope_tol']}")


def run_geometry(cfg: dict, rep: Report) -> None:
    curve = _curve(cfg)
    m = _positive(cfg, "samples", integer=True)
    window = float(cfg["window"])
    rng = np.random.default_rng(int(cfg["seed"]))
    xi = np.zeros((m, curve.n))
    xi[:, -1] = 1.0
    xi[:, :-1] = rng.uniform(-window, window, (m, curve.n - 1)) * 0.5
    xi *= rng.uniform(1, 1e3, m)[:, None]
    try:
        roots = cone.u_report(curve, xi, window=None, strict=False)
    except cone.RootMissingError as exc:
        raise ConfigError("curve", f"outside the model class: {exc}") from exc
    ratios = cone.size_ratios(roots)
    has = ~np.isnan(roots.theta1_minus)
    scale = np.linalg.norm(xi, axis=1)
    resid = np.abs(cone.pairing(curve, roots.theta2, xi, 3)) / scale
    for t1 in (roots.theta1_minus, roots.theta1_plus):
        resid[has] = np.maximum(resid[has], np.abs(cone.pairing(curve, t1[has], xi[has], 2)) / scale[has])
    fails = int(np.sum(resid > 1e-12))
    rep.record(quantity="root residual", max=float(resid.max()), failures=fails, samples=m)
    rep.check("root residual failures", fails, fails == 0, "0 above 1e-12 |xi|")
    lo, hi = cfg["ratio_band"]
    worst = {}
    for name, arr in ratios.items():
        arr = np.asarray(arr, dtype=float)
        good = arr[np.isfinite(arr)]
        worst[name] = (float(good.min()), float(good.max())) if good.size else (np.nan, np.nan)
        rep.record(quantity=name, min=worst[name][0], max=worst[name][1], finite=int(good.size), samples=m)
        ok = good.size > 0 and lo <= good.min() and good.max() <= hi
        rep.check(f"ratio {name}", worst[name], ok, f"within [{lo}, {hi}]")


def run_decompose_audit(cfg: dict, rep: Report) -> None:
    curve = _curve(cfg)
    if curve.n != 4:
        raise ConfigError("curve", "the decomposition trees are defined for n = 4")
    J = int(cfg["J"])
    if J not in (3, 4):
        raise ConfigError("J", "must be 3 or 4")
    ks = _int_range(cfg, "k", 1)
    consts: dict[str, list[float]] = {}
    for k in ks:
        tree = decomposition.decompose_J3(curve, k) if J == 3 else decomposition.decompose_J4(curve, k, rho=float(cfg["rho"]))
        recon = decomposition.tree_reconstruction(tree, min(int(cfg["samples"]), 200), int(cfg["seed"]))
        rep.record(k=k, quantity="reconstruction", value=recon, tol=cfg["reconstruction_tol"])
        rep.check(f"reconstruction k={k}", recon, recon <= float(cfg["reconstruction_tol"]), f"<= {cfg['reconstruction_tol']}")
        aud = decomposition.support_audit(tree, int(cfg["samples"]), int(cfg["seed"]))
        for lem in aud.lemmas:
            c = aud.max_slack(lem)
            consts.setdefault(lem, []).append(c)
            rep.record(k=k, quantity="support", lemma=lem, constant=c, tol=cfg["max_constant"])
            rep.check(f"support {lem} k={k}", c, c <= float(cfg["max_constant"]), f"<= {cfg['max_constant']}")
    for lem, cs in consts.items():
        ok = max(cs) <= 2 * min(cs) if min(cs) > 0 else True
        rep.check(f"stability {lem}", cs, ok, "within factor 2 across k")


def _tuple_draws(curve, d: int, draws: int, seed: int):
    tup = plates.cone_tuple_from_curve(curve, d)
    rng = np.random.default_rng(seed)
    lo, hi = tup.interval
    out = []
    for _ in range(draws):
        a = np.concatenate([[rng.uniform(0.25, 2)], rng.uniform(-2, 2, curve.n - d - 1)])
        b = rng.uniform(lo, hi)
        rho = rng.uniform(0.05, 1.0)
        s = float(np.clip(b + rho * rng.uniform(-1, 1), lo, hi))
        r = rho * rng.uniform(0.01, 1.0)
        out.append((a, b, rho, s, r))
    return tup, out


def run_lorentz(cfg: dict, rep: Report) -> None:
    curve = _curve(cfg)
    d = int(cfg["d"])
    if not 2 <= d <= curve.n - 1:
        raise ConfigError("d", f"need 2 <= d <= {curve.n - 1}")
    tup, draws = _tuple_draws(curve, d, _positive(cfg, "draws", integer=True), int(cfg["seed"]))
    worst = [0.0, 0.0]
    for a, b, rho, s, r in draws:
        res = plates.lorentz_identity_check(tup, a, b, rho, s, r)
        worst = [max(worst[0], res.matrix), max(worst[1], res.offset)]
        rep.record(a=a, b=b, rho=rho, s=s, r=r, matrix=res.matrix, offset=res.offset, tol=cfg["tol"])
    tol = float(cfg["tol"])
    rep.check("matrix identity", worst[0], worst[0] <= tol, f"<= {tol}")
    rep.check("offset identity", worst[1], worst[1] <= tol, f"<= {tol}")


def _regions(cfg: dict, level: int):
    fam, n, d = cfg["family"], int(cfg["n"]), int(cfg["d"])
    r = 2.0**-level
    lam = float(cfg["box_scale"])
    curve = moment_curve(n)
    if fam == "frenet-box":
        return plates.frenet_boxes(curve, r, lam, d=d)
    if fam == "slab":
        # a parabola-type curve in R^d, dilated by the box scale
        base = moment_curve(d)
        scaled = _dilated_curve(base, lam)
        return [plates.Slab(scaled, float(s), r) for s in plates.net((-0.25, 0.25), r)]
    if fam == "plate":
        tup = plates.cone_tuple_from_curve(curve, d)
        a = np.zeros(n - d)
        a[0] = 1.0
        return [_ScaledPlate(pl, lam) for pl in plates.plate_decomposition(tup, a, 1.0, r)]
    raise ConfigError("family", "must be frenet-box, slab or plate")


def _dilated_curve(base, lam):
    from .curves import Curve

    def deriv(s, j):
        return lam * base.deriv(s, j)

    return Curve(base.n, deriv, base.domain, "dilated", {"parent": base.kind, "scale": lam})


@dataclass(frozen=True)
class _ScaledPlate:
    plate: plates.Plate
    scale: float

    def contains(self, xi):
        return self.plate.contains(np.asarray(xi) / self.scale)

    def corners(self):
        return self.plate.corners() * self.scale


def run_decouple(cfg: dict, rep: Report) -> None:
    ps = cfg["p"] if isinstance(cfg["p"], list) else [cfg["p"]]
    ps = [float(p) for p in ps]
    if min(ps) < 2:
        raise ConfigError("p", "must be at least 2")
    N = _positive(cfg, "grid", integer=True)
    l0, l1 = _int_range(cfg, "scales")
    levels = list(range(l0, l1 + 1))
    trials = _positive(cfg, "trials", integer=True)
    series: dict[float, list[float]] = {p: [] for p in ps}
    focus: dict[float, list[float]] = {p: [] for p in ps}
    for lev in levels:
        regs = _regions(cfg, lev)
        try:
            res = plates.decoupling_constant_estimate(regs, ps, N, trials, True, int(cfg["seed"]) + lev, budget=cfg["budget_bytes"])
        except grid.ScaleError as exc:
            raise ConfigError("box_scale", str(exc)) from exc
        for p, rr in res.items():
            for t, (a, b) in enumerate(zip(rr.ratio_lp, rr.ratio_l2)):
                rep.record(r=2.0**-lev, p=p, trial=t, mode="gaussian", ratio_lp=a, ratio_l2=b, regions=rr.regions)
            rep.record(r=2.0**-lev, p=p, trial=trials, mode="focusing", ratio_lp=rr.focusing_lp, ratio_l2=rr.focusing_l2, regions=rr.regions, notes=rr.notes)
            series[p].append(rr.max_gaussian_l2())
            focus[p].append(rr.focusing_l2)
            ok = rr.max_lp() <= rr.trivial_lp * (1 + 1e-6) and rr.max_l2() <= rr.trivial_l2 * (1 + 1e-6)
            rep.check(f"trivial bound p={p} r=2^-{lev}", [rr.max_lp(), rr.trivial_lp], ok, "<= #regions^(1-1/p)")
            rep.estimate(f"median l2 ratio p={p} r=2^-{lev}", float(np.median(rr.ratio_l2)), float(np.std(rr.ratio_l2) / np.sqrt(trials)))
    rs = [2.0**-lev for lev in levels]
    for p in ps:
        if len(rs) >= 4:
            fit = plates.decoupling_exponent(rs, series[p])
            rep.estimate(f"l2 exponent p={p}", fit.slope, fit.stderr)
            ffit = plates.decoupling_exponent(rs, focus[p])
            rep.estimate(f"focusing l2 exponent p={p}", ffit.slope, ffit.stderr)
            rep.check(f"l2 exponent p={p}", fit.slope, fit.slope <= float(cfg["max_exponent"]), f"<= {cfg['max_exponent']}")


def run_operator_probe(cfg: dict, rep: Report) -> None:
    n = int(cfg["n"])
    if n not in (2, 3, 4):
        raise ConfigError("n", "must be 2, 3 or 4")
    N = _positive(cfg, "grid", integer=True)
    k0, k1 = _int_range(cfg, "k_range")
    p = float(cfg["p"])
    curve, chi = moment_curve(n), oscillatory.default_chi()
    reports = []
    for k in range(k0, k1 + 1):
        try:
            r = grid.dyadic_operator_probe(curve, chi, k, p, N, cfg["probes"], int(cfg["random_trials"]), int(cfg["seed"]), budget=cfg["budget_bytes"])
        except grid.ScaleError as exc:
            raise ConfigError("k_range", str(exc)) from exc
        except ValueError as exc:
            raise ConfigError("probes", str(exc)) from exc
        reports.append(r)
        for fam, vals in r.families.items():
            rep.record(k=k, p=p, probe=fam, ratios=vals, max_ratio=max(vals))
    maxes = [r.max_ratio for r in reports]
    if len(reports) >= 4:
        fit = grid.probe_slope(reports)
        rep.estimate("slope", fit.slope, fit.stderr)
        if cfg["expect_slope"] is not None:
            ok = abs(fit.slope - float(cfg["expect_slope"])) <= float(cfg["slope_tol"])
            rep.check("slope", fit.slope, ok, f"{cfg['expect_slope']} +- {cfg['slope_tol']}")
    rep.check("monotone", maxes, all(b < a for a, b in zip(maxes, maxes[1:])), "max ratio decreasing in k")


def run_sharpness(cfg: dict, rep: Report) -> None:
    ex, n, p = cfg["example"], int(cfg["n"]), float(cfg["p"])
    l0, l1 = _int_range(cfg, "lambda_range")
    curve = moment_curve(n)
    if ex == "separation":
        for j in range(l0, l1 + 1):
            gap = sharpness.separation_audit(curve, 2.0**j, float(cfg["eps"]))
            rep.record(lam=2.0**j, eps=cfg["eps"], gap=gap)
            rep.check(f"gap lam=2^{j}", gap, gap >= float(cfg["min_gap"]), f">= {cfg['min_gap']}")
        return
    pairs_f, pairs_r = [], []
    if ex == "bump":
        for j in range(l0, l1 + 1):
            res = sharpness.bump_example(curve, 2.0**j, (p,), N=cfg["grid"], budget=cfg["budget_bytes"])
            rep.record(lam=res.lam, grid=res.N, f_norm=res.f_norms[p], ratio=res.ratios[p], neighbourhood_min=res.neighbourhood_min)
            pairs_f.append((np.log(res.lam), np.log(res.f_norms[p])))
            pairs_r.append((np.log(res.lam), np.log(res.ratios[p])))
        fit_f, fit_r = sharpness.exponent_fit(pairs_f), sharpness.exponent_fit(pairs_r)
        rep.estimate("f norm slope", fit_f.slope, fit_f.stderr)
        rep.estimate("ratio slope", fit_r.slope, fit_r.stderr)
        target = -1 + 1 / p if p <= 2 else -1 / p
        rep.check("f norm slope", fit_f.slope, abs(fit_f.slope + n / p) <= 0.05, f"{-n / p:.4f} +- 0.05")
        if p <= 2:
            rep.check("ratio slope", fit_r.slope, abs(fit_r.slope - target) <= 0.1, f"{target:.4f} +- 0.1")
        return
    if ex == "wolff":
        N = int(cfg["grid"] or 4096)
        results = []
        for j in range(l0, l1 + 1):
            try:
                res = sharpness.wolff_example(curve, 2.0**j, float(cfg["eps"]), float(cfg["rho"]), p, int(cfg["trials"]), N, int(cfg["seed"]), budget=cfg["budget_bytes"])
            except sharpness.ParameterError as exc:
                raise ConfigError("rho", str(exc)) from exc
            results.append(res)
            for t, v in enumerate(res.norms):
                rep.record(lam=res.lam, trial=t, norm=v, balls=res.count)
        fit = sharpness.wolff_exponent(results)
        target = sharpness.wolff_target(n, p)
        rep.estimate("exponent", fit.slope, fit.stderr)
        tol = float(cfg["slope_tol"])
        rep.check("exponent", fit.slope, abs(fit.slope - target) <= tol, f"{target:.4f} +- {tol}")
        return
    raise ConfigError("example", "must be bump, wolff or separation")


DRIVERS: dict[str, Callable[[dict, Report], None]] = {
    "decay": run_decay,
    "geometry": run_geometry,
    "decompose-audit": run_decompose_audit,
    "lorentz": run_lorentz,
    "decouple": run_decouple,
    "operator-probe": run_operator_probe,
    "sharpness": run_sharpness,
}


# ------------------------------------------------------------------ run / replay


def _peak_rss_mb() -> float:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


def run(command: str, cfg: dict, out_dir: Path | None, csv_out: bool = False) -> tuple[int, Report, dict]:
    rep = Report(command, cfg)
    t0 = time.perf_counter()
    status = "ok"
    code = 0
    message = None
    try:
        DRIVERS[command](cfg, rep)
        if not rep.passed:
            status, code = "tolerance-failure", 1
    except ConfigError as exc:
        status, code, message = "config-error", 2, str(exc)
    except MemoryBudgetError as exc:
        status, code, message = "budget-refused", 3, str(exc)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": _jsonable(cfg),
        "status": status,
        "message": message,
        "records": len(rep.records),
        "estimates": rep.estimates,
        "checks": rep.checks,
        "randomised": command in RANDOMISED,
        "wall_seconds": round(time.perf_counter() - t0, 3),
        "peak_rss_mb": round(_peak_rss_mb(), 1),
        "python": platform.python_version(),
    }
    if out_dir is not None:
        write_report(out_dir, rep, summary, csv_out)
    return code, rep, summary


def write_report(out_dir: Path, rep: Report, summary: dict, csv_out: bool = False) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "records.jsonl", "w") as fh:
        for r in rep.records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if csv_out and rep.records:
        keys = sorted({k for r in rep.records for k in r})
        with open(out_dir / "records.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            for r in rep.records:
                w.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in r.items()})


def _deterministic_fields(summary: dict) -> dict:
    return {k: v for k, v in summary.items() if k not in ("wall_seconds", "peak_rss_mb", "python")}


def replay(report_dir: Path, seed: int | None = None) -> tuple[int, str]:
    """Rerun a stored report and compare.

    Same seed: records must match exactly.  A different seed compares only
    the stored estimates, each within three combined standard errors.
    """
    summary = json.loads((report_dir / "summary.json").read_text())
    stored = [json.loads(line) for line in (report_dir / "records.jsonl").read_text().splitlines() if line]
    cfg = dict(summary["config"])
    same_seed = seed is None or ("seed" in cfg and int(cfg["seed"]) == seed)
    if seed is not None and "seed" in cfg:
        cfg["seed"] = seed
    _, rep, new_summary = run(summary["command"], cfg, None)
    if same_seed:
        fresh = [json.loads(json.dumps(r, sort_keys=True)) for r in rep.records]
        if len(fresh) != len(stored):
            return 1, f"record count differs: {len(stored)} stored, {len(fresh)} replayed"
        for i, (a, b) in enumerate(zip(stored, fresh)):
            if a != b:
                return 1, f"first divergent record {i}: stored {a} replayed {b}"
        if _deterministic_fields(summary)["estimates"] != json.loads(json.dumps(new_summary["estimates"])):
            return 1, "summary estimates differ"
        return 0, f"{len(stored)} records reproduced exactly"
    worst = 0.0
    for name, est in summary["estimates"].items():
        other = new_summary["estimates"].get(name)
        if other is None:
            return 1, f"estimate {name} missing on replay"
        diff = abs(est["value"] - other["value"])
        if diff <= 1e-12 * (1.0 + abs(est["value"])):
            continue  # agreement at roundoff level
        se = np.hypot(est.get("stderr") or 0.0, other.get("stderr") or 0.0)
        if se == 0:
            return 1, f"estimate {name} has no standard error and moved by {diff:.3g}"
        z = diff / se
        worst = max(worst, z)
        if z > 3:
            return 1, f"estimate {name} moved by {z:.2f} standard errors"
    return 0, f"estimates agree within {worst:.2f} standard errors"


# ------------------------------------------------------------------ argument parsing


def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="curvelab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its fields")
        p.add_argument("--out", help="output directory for records.jsonl and summary.json")
        p.add_argument("--csv", action="store_true", help="also write records.csv")
        p.add_argument("--seed", type=int)
        p.add_argument("--budget-bytes", dest="budget_bytes", type=int)

    p = sub.add_parser("decay", help="Fourier decay exponent along a ray")
    common(p)
    p.add_argument("--curve", type=_json_arg)
    p.add_argument("--ray", type=_json_arg)
    p.add_argument("--lambda-range", dest="lambda_range", type=_json_arg)
    p.add_argument("--expect-slope", dest="expect_slope", type=float)

    p = sub.add_parser("geometry", help="cone-geometry size relations")
    common(p)
    p.add_argument("--curve", type=_json_arg)
    p.add_argument("--samples", type=int)

    p = sub.add_parser("decompose-audit", help="partition-of-unity and support audits")
    common(p)
    p.add_argument("--curve", type=_json_arg)
    p.add_argument("--J", type=int)
    p.add_argument("--k", type=_json_arg)
    p.add_argument("--samples", type=int)

    p = sub.add_parser("lorentz", help="rescaling identities for cone tuples")
    common(p)
    p.add_argument("--curve", type=_json_arg)
    p.add_argument("--d", type=int)
    p.add_argument("--draws", type=int)

    p = sub.add_parser("decouple", help="empirical decoupling ratios")
    common(p)
    p.add_argument("--family", choices=["frenet-box", "slab", "plate"])
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--p", type=_json_arg)
    p.add_argument("--grid", type=int)
    p.add_argument("--scales", type=_json_arg)
    p.add_argument("--box-scale", dest="box_scale", type=float)
    p.add_argument("--trials", type=int)

    p = sub.add_parser("operator-probe", help="dyadic operator-norm probes")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--grid", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--k-range", dest="k_range", type=_json_arg)
    p.add_argument("--probes", type=_json_arg)
    p.add_argument("--expect-slope", dest="expect_slope", type=float)

    p = sub.add_parser("sharpness", help="bump, Wolff and separation examples")
    common(p)
    p.add_argument("--example", choices=["bump", "wolff", "separation"])
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--lambda-range", dest="lambda_range", type=_json_arg)
    p.add_argument("--trials", type=int)
    p.add_argument("--grid", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--rho", type=float)

    p = sub.add_parser("replay", help="rerun a stored report and compare")
    p.add_argument("report", help="directory holding summary.json and records.jsonl")
    p.add_argument("--seed", type=int)
    return ap


_NON_CONFIG = {"command", "config", "out", "csv"}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command == "replay":
        try:
            code, msg = replay(Path(args.report), args.seed)
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            print(f"replay: cannot read report: {exc}", file=sys.stderr)
            return 2
        print(msg)
        return code
    overrides = {k: v for k, v in vars(args).items() if k not in _NON_CONFIG}
    overrides = {k: v for k, v in overrides.items() if k in DEFAULTS[args.command]}
    try:
        cfg = merge(args.command, load_config(args.config), overrides)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else None
    code, _, summary = run(args.command, cfg, out, args.csv)
    if summary["message"]:
        print(summary["message"], file=sys.stderr)
    for c in summary["checks"]:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}: {c['value']} (target {c['target']})")
    for name, est in summary["estimates"].items():
        se = "" if est["stderr"] is None else f" +- {est['stderr']:.3g}"
        print(f"      {name} = {est['value']:.6g}{se}")
    return code


if __name__ == "__main__":
    sys.exit(main())
