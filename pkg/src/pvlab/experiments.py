"""Config-driven experiments: parse a JSON config, run it, write CSV and summary.

Every experiment writes a CSV with one row per grid entry (numbers with 17
significant digits) and a JSON summary that is validated against
:data:`SUMMARY_SCHEMA` before it is written. Rows are ordered by grid index.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from pvlab import polytope, registry
from pvlab.malliavin import (EstimateWithCI, estimate_covariance, estimate_variance, sandwich,
                             scaling_regression)
from pvlab.process import InvalidParameterError, SeedSpec

__all__ = [
    "EXPERIMENTS",
    "SUMMARY_SCHEMA",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentResult",
    "RuleOutcome",
    "format_number",
    "load_config",
    "parse_config",
    "run_experiment",
]

EXPERIMENTS = ("sandwich", "scaling", "covariance", "polytope-scaling", "shotnoise-scaling",
               "lemma43-sweep", "delta-consistency")

VARIANCE_COLUMNS = ["s", "variance", "var_ci_lo", "var_ci_hi", "lower_bound", "upper_bound",
                    "alpha_hat", "n_reps", "seed"]

# default assertion parameters per experiment
_SCALING_DEFAULTS = {
    "scaling": {"slope": 1.0, "slope_tol": 0.25, "normalize_exponent": 1.0},
    "polytope-scaling": {"slope": 1.0 / 3.0, "slope_tol": 0.3, "normalize_exponent": 1.0 / 3.0},
    "shotnoise-scaling": {"slope": 2.0, "slope_tol": 0.5, "normalize_exponent": 2.0},
}

_TOP_KEYS = {"experiment", "functional", "functionals", "s_grid", "n_reps", "seed", "output",
             "assertions", "bounds", "options", "ci_level", "workers"}

_RECORD = {
    "type": "object",
    "required": ["label", "estimate", "std_error", "n_reps", "ci_level", "ci_lo", "ci_hi", "seed",
                 "wall_time_ms"],
    "properties": {
        "label": {"type": "string"},
        "estimate": {"type": "number"},
        "std_error": {"type": "number"},
        "n_reps": {"type": "integer", "minimum": 1},
        "ci_level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "ci_lo": {"type": "number"},
        "ci_hi": {"type": "number"},
        "seed": {"type": ["integer", "null"]},
        "wall_time_ms": {"type": "number", "minimum": 0},
    },
}

SUMMARY_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "pvlab experiment summary",
    "type": "object",
    "required": ["experiment", "functional", "seed", "n_reps", "s_grid", "slope", "slope_se", "rules",
                 "passed", "records", "csv"],
    "additionalProperties": False,
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "functional": {"type": ["string", "null"]},
        "seed": {"type": "integer", "minimum": 0},
        "n_reps": {"type": "integer", "minimum": 2},
        "s_grid": {"type": "array", "items": {"type": "number"}},
        "slope": {"type": ["number", "null"]},
        "slope_se": {"type": ["number", "null"]},
        "rules": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "passed", "detail"],
                "additionalProperties": False,
                "properties": {"name": {"type": "string"}, "passed": {"type": "boolean"},
                               "detail": {"type": "string"}},
            },
        },
        "passed": {"type": "boolean"},
        "records": {"type": "array", "items": _RECORD},
        "csv": {"type": ["string", "null"]},
    },
}


class ConfigError(ValueError):
    """Invalid experiment config; the CLI maps it to exit code 2."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    functional: str | None
    params: dict
    functionals: tuple[tuple[str, dict], ...]
    s_grid: tuple[float, ...]
    n_reps: int
    seed: int
    bounds: bool
    assertions: dict
    options: dict
    csv_path: Path | None
    summary_path: Path | None
    records_path: Path | None
    ci_level: float = 0.95
    workers: int | None = None


@dataclass(frozen=True)
class RuleOutcome:
    name: str
    passed: bool
    detail: str


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[list[Any]]
    columns: list[str]
    rules: list[RuleOutcome]
    records: list[dict] = field(default_factory=list)
    slope: float | None = None
    slope_se: float | None = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rules)

    @property
    def failed_rules(self) -> list[str]:
        return [r.name for r in self.rules if not r.passed]


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _fail(text: str, key: str, msg: str):
    line = _line_of(text, key)
    where = f"line {line}, field {key!r}" if line else f"field {key!r}"
    raise ConfigError(f"{where}: {msg}")


def _functional_ref(text, key, ref):
    if isinstance(ref, str):
        ref = {"name": ref}
    if not isinstance(ref, dict) or "name" not in ref:
        _fail(text, key, 'expected {"name": ..., "params": {...}}')
    name, params = ref["name"], ref.get("params", {})
    if name not in registry.REGISTRY:
        hint = registry.nearest_name(str(name), registry.REGISTRY)
        _fail(text, key, f"unknown functional {name!r} (nearest match: {hint!r})")
    try:
        registry.resolve_params(registry.REGISTRY[name], params)
    except InvalidParameterError as exc:
        _fail(text, key, str(exc))
    return name, dict(params)


def parse_config(text: str, base_dir: str | os.PathLike = ".", seed_override: int | None = None) -> ExperimentConfig:
    """Parse and validate a config document; raises :class:`ConfigError`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("line 1: top level must be a JSON object")
    for key in doc:
        if key not in _TOP_KEYS:
            hint = registry.nearest_name(key, _TOP_KEYS)
            _fail(text, key, f"unknown field (did you mean {hint!r}?)")
    exp = doc.get("experiment")
    if exp not in EXPERIMENTS:
        hint = registry.nearest_name(str(exp), EXPERIMENTS)
        _fail(text, "experiment", f"unknown experiment {exp!r} (nearest match: {hint!r})")

    name, params, funcs = None, {}, ()
    if exp == "covariance":
        refs = doc.get("functionals")
        if not isinstance(refs, list) or len(refs) < 2:
            _fail(text, "functionals", "covariance needs a list of at least two functionals")
        funcs = tuple(_functional_ref(text, "functionals", r) for r in refs)
    elif exp not in ("lemma43-sweep", "delta-consistency"):
        if "functional" not in doc:
            _fail(text, "experiment", f"{exp!r} needs a 'functional' field")
        name, params = _functional_ref(text, "functional", doc["functional"])
        need = {"polytope-scaling": "polytope-area", "shotnoise-scaling": "shotnoise-excursion"}.get(exp)
        if need and name != need:
            _fail(text, "functional", f"{exp!r} requires functional {need!r}, got {name!r}")

    grid = doc.get("s_grid", [1.0])
    if (not isinstance(grid, list) or not grid
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in grid)):
        _fail(text, "s_grid", "must be a non-empty list of positive numbers")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        _fail(text, "s_grid", "must be strictly increasing")
    if exp.endswith("scaling") and len(grid) < 3:
        _fail(text, "s_grid", "scaling fits need at least three grid values")

    n_reps = doc.get("n_reps", 1000)
    if not isinstance(n_reps, int) or isinstance(n_reps, bool) or n_reps < 2:
        _fail(text, "n_reps", "must be an integer >= 2")
    seed = doc.get("seed", 0) if seed_override is None else seed_override
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        _fail(text, "seed", "must be a non-negative 64-bit integer")
    ci_level = doc.get("ci_level", 0.95)
    if not isinstance(ci_level, (int, float)) or not 0 < ci_level < 1:
        _fail(text, "ci_level", "must lie in (0, 1)")
    workers = doc.get("workers")
    if workers is not None and (not isinstance(workers, int) or workers < 1):
        _fail(text, "workers", "must be a positive integer")
    for key in ("assertions", "options", "output"):
        if not isinstance(doc.get(key, {}), dict):
            _fail(text, key, "must be an object")

    out = doc.get("output", {})
    base = Path(base_dir)

    def path(key):
        v = out.get(key)
        if v is None:
            return None
        if not isinstance(v, str):
            _fail(text, key, "output paths must be strings")
        return base / v

    return ExperimentConfig(
        experiment=exp, functional=name, params=params, functionals=funcs,
        s_grid=tuple(float(v) for v in grid), n_reps=n_reps, seed=seed,
        bounds=bool(doc.get("bounds", exp == "sandwich")),
        assertions=dict(doc.get("assertions", {})), options=dict(doc.get("options", {})),
        csv_path=path("csv"), summary_path=path("summary"), records_path=path("records"),
        ci_level=float(ci_level), workers=workers,
    )


def load_config(path: str | os.PathLike, seed_override: int | None = None) -> ExperimentConfig:
    """Read a config file; output paths resolve relative to its directory."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, p.parent, seed_override)


def format_number(x: Any) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_number(v) for v in row])
    return buf.getvalue()


# -- experiment bodies -----------------------------------------------------------------


def _grid_seed(cfg: ExperimentConfig, i: int) -> SeedSpec:
    return SeedSpec(cfg.seed, (i, 0))


def _variance_rows(cfg: ExperimentConfig, res: ExperimentResult) -> list[tuple[float, EstimateWithCI]]:
    out = []
    for i, s in enumerate(cfg.s_grid):
        setup = registry.build_setup(cfg.functional, cfg.params, s)
        seed = _grid_seed(cfg, i)
        label = setup.functional.label
        if cfg.bounds:
            sw = sandwich(setup.functional, setup.window, setup.intensity, cfg.n_reps, seed,
                          cfg.ci_level, workers=cfg.workers)
            var = sw.variance
            lower, upper, alpha = sw.lower.estimate, sw.upper.estimate, sw.dirichlet.alpha_hat
            res.records += [sw.lower.to_record(f"{label}:lower", seed), sw.upper.to_record(f"{label}:upper", seed)]
            if cfg.experiment == "sandwich":
                _sandwich_rules(cfg, res, s, sw)
        else:
            var = estimate_variance(setup.functional, setup.window, setup.intensity, cfg.n_reps, seed,
                                    cfg.ci_level, workers=cfg.workers)
            lower = upper = alpha = math.nan
        res.records.append(var.to_record(f"{label}:variance", seed))
        res.rows.append([s, var.estimate, var.lo, var.hi, lower, upper, alpha, cfg.n_reps, cfg.seed])
        out.append((s, var))
    return out


def _sandwich_rules(cfg, res, s, sw):
    n_se = float(cfg.assertions.get("n_se", 3.0))
    res.rules.append(RuleOutcome(
        f"sandwich[s={s:g}]", sw.holds(n_se),
        f"lower={sw.lower.estimate:.6g} variance={sw.variance.estimate:.6g} upper={sw.upper.estimate:.6g}"))
    tol = cfg.assertions.get("equal_rel_tol")
    if tol is not None:
        v = sw.variance.estimate
        worst = max(abs(sw.lower.estimate - v), abs(sw.upper.estimate - v)) / abs(v)
        res.rules.append(RuleOutcome(f"bounds-equal[s={s:g}]", worst <= tol,
                                     f"max relative gap {worst:.3g} (tolerance {tol:g})"))


def _run_variance(cfg: ExperimentConfig, res: ExperimentResult) -> None:
    res.columns = VARIANCE_COLUMNS
    est = _variance_rows(cfg, res)
    if not cfg.experiment.endswith("scaling"):
        return
    a = {**_SCALING_DEFAULTS[cfg.experiment], **cfg.assertions}
    fit = scaling_regression([(s, v.estimate) for s, v in est])
    res.slope, res.slope_se = fit.slope, fit.slope_se
    gap = abs(fit.slope - a["slope"])
    res.rules.append(RuleOutcome("slope", gap <= a["slope_tol"],
                                 f"slope {fit.slope:.4f} +- {fit.slope_se:.4f}, expected {a['slope']:.4f} "
                                 f"+- {a['slope_tol']:g}"))
    e = float(a["normalize_exponent"])
    worst = min(v.lo / s**e for s, v in est)
    res.rules.append(RuleOutcome("positive-normalized-variance", worst > 0,
                                 f"min over grid of var_ci_lo / s^{e:g} = {worst:.6g}"))


def _run_covariance(cfg: ExperimentConfig, res: ExperimentResult) -> None:
    m = len(cfg.functionals)
    res.columns = (["s", "min_eigenvalue", "min_eig_ci_lo", "min_eig_ci_hi"]
                   + [f"cov_{i}{j}" for i in range(m) for j in range(m)] + ["n_reps", "seed"])
    for g, s in enumerate(cfg.s_grid):
        setups = [registry.build_setup(n, p, s) for n, p in cfg.functionals]
        seed = _grid_seed(cfg, g)
        est = estimate_covariance([u.functional for u in setups], setups[0].window, setups[0].intensity,
                                  cfg.n_reps, seed, cfg.ci_level, workers=cfg.workers)
        lam = est.min_eigenvalue
        res.rows.append([s, lam.estimate, lam.lo, lam.hi, *est.matrix.ravel().tolist(), cfg.n_reps, cfg.seed])
        res.records.append(lam.to_record(f"min_eigenvalue[{','.join(est.labels)},s={s:g}]", seed))
        res.rules.append(RuleOutcome(f"positive-definite[s={s:g}]", est.positive_definite,
                                     f"min eigenvalue CI [{lam.lo:.6g}, {lam.hi:.6g}]"))


def _p_values(cfg) -> list[float]:
    ps = cfg.options.get("p_values", [0.0, 0.25, 0.5, 0.75, 1.0])
    if not all(isinstance(p, (int, float)) and 0 <= p <= 1 for p in ps):
        raise ConfigError("field 'options.p_values': values must lie in [0, 1]")
    return [float(p) for p in ps]


def _run_lemma43(cfg: ExperimentConfig, res: ExperimentResult) -> None:
    d = int(cfg.options.get("d", 2))
    n_cases = int(cfg.options.get("n_cases", 1000))
    ps = _p_values(cfg)
    rng = SeedSpec(cfg.seed).rng()
    cases = [polytope.random_admissible_simplex(rng, d) for _ in range(n_cases)]
    res.columns = ["p", "p1", "p2", "d", "n_cases", "min_slack_first", "min_slack_second", "seed"]
    worst = math.inf
    for p in ps:
        for p1, p2 in itertools.combinations(ps, 2):
            reports = [polytope.check_lemma43(u, p, p1, p2) for u in cases]
            s1 = min(r.slack_first for r in reports)
            s2 = min(r.slack_second for r in reports)
            worst = min(worst, s1, s2)
            res.rows.append([p, p1, p2, d, n_cases, s1, s2, cfg.seed])
    tol = float(cfg.assertions.get("slack_tol", 1e-9))
    res.rules.append(RuleOutcome("lemma43-slack", worst >= -tol, f"minimum slack {worst:.6g} (tolerance -{tol:g})"))


def _run_delta(cfg: ExperimentConfig, res: ExperimentResult) -> None:
    d = int(cfg.options.get("d", 2))
    n_cases = int(cfg.options.get("n_cases", 1000))
    n_points = int(cfg.options.get("n_points", 30))
    ps = _p_values(cfg)
    errs = delta_consistency_errors(SeedSpec(cfg.seed).rng(), d, n_cases, n_points, ps)
    res.columns = ["p", "d", "n_cases", "max_abs_error", "seed"]
    for p, e in zip(ps, errs.max(axis=0)):
        res.rows.append([p, d, n_cases, e, cfg.seed])
    tol = float(cfg.assertions.get("error_tol", 1e-10))
    worst = float(errs.max())
    res.rules.append(RuleOutcome("delta-consistency", worst <= tol, f"max |error| {worst:.3g} (tolerance {tol:g})"))


def delta_consistency_errors(rng: np.random.Generator, d: int, n_cases: int, n_points: int,
                             ps) -> np.ndarray:
    """``|A_p(new hull) - A_p(old hull) - Delta_p|`` for random single-facet apex additions.

    Hulls are ``Conv(sample in [-1, 1]^d with the origin)``; returns an
    ``(n_cases, len(ps))`` array.
    """
    out = np.empty((n_cases, len(ps)))
    for c in range(n_cases):
        while True:
            pts = np.vstack([rng.uniform(-1, 1, size=(n_points, d)), np.zeros((1, d))])
            hull = polytope.convex_hull(pts)
            try:
                upd, apex = polytope.attach_apex(hull, int(rng.integers(len(hull.facets))), rng)
            except polytope.DegenerateSimplexError:
                continue
            break
        new = polytope.convex_hull(np.vstack([pts, apex]))
        for j, p in enumerate(ps):
            out[c, j] = abs(polytope.lp_surface_area(new, p) - polytope.lp_surface_area(hull, p)
                            - polytope.delta_p(upd, p))
    return out


_RUNNERS = {
    "sandwich": _run_variance,
    "scaling": _run_variance,
    "polytope-scaling": _run_variance,
    "shotnoise-scaling": _run_variance,
    "covariance": _run_covariance,
    "lemma43-sweep": _run_lemma43,
    "delta-consistency": _run_delta,
}


def summary_document(res: ExperimentResult) -> dict:
    cfg = res.config
    doc = {
        "experiment": cfg.experiment,
        "functional": cfg.functional or (",".join(n for n, _ in cfg.functionals) or None),
        "seed": cfg.seed,
        "n_reps": cfg.n_reps,
        "s_grid": list(cfg.s_grid),
        "slope": res.slope,
        "slope_se": res.slope_se,
        "rules": [{"name": r.name, "passed": bool(r.passed), "detail": r.detail} for r in res.rules],
        "passed": res.passed,
        "records": res.records,
        "csv": str(cfg.csv_path) if cfg.csv_path else None,
    }
    doc = _finite_or_none(doc)
    jsonschema.validate(doc, SUMMARY_SCHEMA)
    return doc


def _finite_or_none(doc):
    # JSON has no NaN; map non-finite numbers to null before validation
    if isinstance(doc, dict):
        return {k: _finite_or_none(v) for k, v in doc.items()}
    if isinstance(doc, list):
        return [_finite_or_none(v) for v in doc]
    if isinstance(doc, float) and not math.isfinite(doc):
        return None
    return doc


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run the experiment and write the configured outputs."""
    res = ExperimentResult(cfg, [], [], [])
    try:
        _RUNNERS[cfg.experiment](cfg, res)
    except InvalidParameterError as exc:
        raise ConfigError(str(exc)) from None
    res.records = _finite_or_none(res.records)
    if cfg.csv_path:
        cfg.csv_path.parent.mkdir(parents=True, exist_ok=True)
        cfg.csv_path.write_text(_csv_text(res.columns, res.rows))
    if cfg.summary_path:
        cfg.summary_path.parent.mkdir(parents=True, exist_ok=True)
        cfg.summary_path.write_text(json.dumps(summary_document(res), indent=2) + "\n")
    if cfg.records_path:
        cfg.records_path.parent.mkdir(parents=True, exist_ok=True)
        with open(cfg.records_path, "a") as fh:
            for rec in res.records:
                fh.write(json.dumps(rec) + "\n")
    return res


def csv_text(res: ExperimentResult) -> str:
    return _csv_text(res.columns, res.rows)
