"""Experiment harness: presets, hyperparameter sweeps, run selection and trace output.

A sweep is the product of methods (``adaptive`` or ``fixed:<b>``), the
``(tau0, eta, alpha)`` grid and the seed list.  Every run writes one trace CSV
(atomically) and contributes a line to ``summary.json``; the best run per
method is picked by the feasibility-filtered objective rule.
"""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import os
import re
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .adaptive import SamplerConfig, ToleranceSchedule
from .core import ConfigurationError, NumericalError
from .libsvm import LabelFormatError, ParseError, parse_libsvm
from .problems import build_logistic, build_truss, random_qp, synthetic_dataset
from .solver import TRACE_FIELDS, SolverConfig, SolverTrace, run_asal

log = logging.getLogger(__name__)

FULL_TAU0 = (1e4, 1e3, 1e2, 1e1, 1e0, 1e-1)
FULL_ETA = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
FULL_ALPHA = (1e2, 1e1, 1e0, 1e-1, 1e-2)


@dataclass(frozen=True)
class SelectionRule:
    feas_tol: float = 1e-4
    obj_window: int = 5
    feas_window: int = 30


AUSTRALIAN_RULE = SelectionRule(1e-3, 10, 50)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "qp"
    preset: Optional[str] = None
    dataset: Optional[str] = None
    # synthetic logistic data when no dataset file is given
    synthetic_samples: int = 500
    synthetic_features: int = 20
    synthetic_noise: float = 3.0
    synthetic_scale: float = 5.0
    encoding: Optional[str] = None
    methods: Tuple[str, ...] = ("adaptive",)
    tau0: Tuple[float, ...] = (1.0,)
    eta: Tuple[float, ...] = (0.1,)
    alpha: Tuple[float, ...] = (1.0,)
    seeds: Tuple[int, ...] = (0,)
    problem_seed: int = 0
    budget: str = "1000000"
    theta_g: float = 0.99
    nu_l: float = 0.5
    s_l: str = "2"
    s_min: str = "2"
    s_max: Optional[str] = None
    initial_sample_size: Optional[str] = None
    max_outer: int = 10**6
    max_inner: int = 10**4
    selection: SelectionRule = field(default_factory=SelectionRule)
    out: str = "asal-out"
    jobs: int = 1

    def __post_init__(self):
        if self.problem not in ("qp", "logistic", "truss"):
            raise ConfigurationError(f"unknown problem {self.problem!r}")
        for name in ("methods", "tau0", "eta", "alpha", "seeds"):
            if not getattr(self, name):
                raise ConfigurationError(f"grid {name!r} is empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("seeds must be distinct")
        for m in self.methods:
            parse_method(m)
        if self.jobs < 1:
            raise ConfigurationError("jobs must be at least 1")


# -- presets -------------------------------------------------------------------

_LOGISTIC_COMMON = dict(problem="logistic", methods=("adaptive", "fixed:10%", "fixed:20%", "fixed:50%"),
                        budget="200N", theta_g=0.99, nu_l=0.5, s_l="0.1N", s_min="0.1N",
                        initial_sample_size="0.1N", encoding="slack")
# Neighborhoods of the full tuning grid, which is available via ``grid=full``.
_SMALL_GRID = dict(tau0=(1e2, 1e0, 1e-1), eta=(1e-1, 1e-2, 1e-3), alpha=(1e1, 1e0, 1e-1))
_FULL_GRID = dict(tau0=FULL_TAU0, eta=FULL_ETA, alpha=FULL_ALPHA)
# The synthetic data set is better conditioned than the real ones, so its grid
# is shifted towards larger steps and finer penalties.
SYNTHETIC_GRID = dict(tau0=FULL_TAU0, eta=(0.3, 0.1, 0.03, 1e-2, 3e-3, 1e-3),
                      alpha=(10.0, 3.0, 1.0, 0.3, 0.1, 0.03, 0.01))

PRESETS: Dict[str, dict] = {
    "qp-verify": dict(problem="qp"),
    "logistic-mushroom": dict(_LOGISTIC_COMMON, **_SMALL_GRID),
    "logistic-australian": dict(_LOGISTIC_COMMON, selection=AUSTRALIAN_RULE, **_SMALL_GRID),
    "logistic-synthetic": dict(_LOGISTIC_COMMON, methods=("adaptive", "fixed:10%"), **SYNTHETIC_GRID),
    "truss": dict(problem="truss", methods=("adaptive", "fixed:100", "fixed:1000", "fixed:10000"),
                  tau0=(10.0,), eta=(1.0,), alpha=(0.01,), budget="1000000", theta_g=0.99,
                  seeds=(0, 1, 2, 3, 4), encoding="slack",
                  # feasibility is in units of 1e3 mm^2 here: 0.1 is 100 mm^2 against a 1.5e5 mm^2 cap
                  selection=SelectionRule(1e-1, 5, 30)),
}


def preset_config(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    values = dict(PRESETS[name])
    grid = overrides.pop("grid", None)
    if grid == "full":
        values.update(_FULL_GRID)
    elif grid not in (None, "preset"):
        raise ConfigurationError(f"unknown grid {grid!r}")
    values.update(overrides)
    return ExperimentConfig(preset=name, **values)


# -- parsing helpers -----------------------------------------------------------

def parse_method(text: str) -> Tuple[str, Optional[str]]:
    if text == "adaptive":
        return "adaptive", None
    m = re.fullmatch(r"fixed:(\d+(?:\.\d+)?%|\d+)", text)
    if not m:
        raise ConfigurationError(f"method must be 'adaptive' or 'fixed:<b>', got {text!r}")
    return "fixed", m.group(1)


def resolve_count(text, population: Optional[int]) -> int:
    """Integer count from ``"500"``, ``"0.1N"`` or ``"10%"`` (the last two need a population)."""
    s = str(text).strip()
    if s.endswith("N") or s.endswith("%"):
        if population is None:
            raise ConfigurationError(f"{s!r} needs a finite data set size")
        frac = float(s[:-1]) / (100.0 if s.endswith("%") else 1.0)
        return max(1, int(math.ceil(frac * population - 1e-9)))
    value = float(s)
    if value != int(value) or value < 0:
        raise ConfigurationError(f"expected a non-negative integer count, got {s!r}")
    return int(value)


# -- problem construction ------------------------------------------------------

@lru_cache(maxsize=4)
def _load_dataset(path):
    return parse_libsvm(path)


def build_problem(cfg: ExperimentConfig):
    if cfg.problem == "logistic":
        if cfg.dataset:
            try:
                data = _load_dataset(cfg.dataset)
            except (OSError, ParseError, LabelFormatError) as exc:
                raise ConfigurationError(f"cannot read data set {cfg.dataset!r}: {exc}") from None
        else:
            data = synthetic_dataset(cfg.synthetic_samples, cfg.synthetic_features, seed=cfg.problem_seed,
                                     noise=cfg.synthetic_noise, feature_scale=cfg.synthetic_scale)
        return build_logistic(data, seed=cfg.problem_seed, encoding=cfg.encoding or "slack")
    if cfg.problem == "truss":
        return build_truss(seed=cfg.problem_seed, encoding=cfg.encoding or "slack")
    qp = random_qp(np.random.default_rng(cfg.problem_seed), 10, 4, noise=0.1)
    return qp.problem("qp")


_PROBLEM_CACHE: Dict = {}


def _problem_for(cfg: ExperimentConfig):
    key = (cfg.problem, cfg.dataset, cfg.synthetic_samples, cfg.synthetic_features, cfg.synthetic_noise,
           cfg.synthetic_scale, cfg.encoding, cfg.problem_seed)
    if key not in _PROBLEM_CACHE:
        _PROBLEM_CACHE.clear()
        _PROBLEM_CACHE[key] = build_problem(cfg)
    return _PROBLEM_CACHE[key]


# -- runs ----------------------------------------------------------------------

@dataclass(frozen=True)
class RunSpec:
    method: str
    tau0: float
    eta: float
    alpha: float
    seed: int

    @property
    def run_id(self) -> str:
        method = self.method.replace(":", "-").replace("%", "pct")
        return f"{method}_tau{self.tau0:g}_eta{self.eta:g}_alpha{self.alpha:g}_seed{self.seed}"


@dataclass
class RunOutcome:
    spec: RunSpec
    status: str
    tail: Optional[SolverTrace]
    n_records: int = 0
    n_outer: int = 0
    cum_grad_evals: int = 0
    final_feasibility: float = math.nan
    final_stationarity: float = math.nan
    sizes_non_decreasing: Optional[bool] = None
    wall_time_s: float = 0.0
    message: str = ""
    trace_file: Optional[str] = None
    final_x: Optional[List[float]] = None


def solver_config(cfg: ExperimentConfig, spec: RunSpec, population: Optional[int]) -> SolverConfig:
    s_min = resolve_count(cfg.s_min, population)
    s_l = resolve_count(cfg.s_l, population)
    if cfg.s_max is not None:
        s_max = resolve_count(cfg.s_max, population)
    else:
        s_max = population if population is not None else 10**6
    sampler = SamplerConfig(theta_g=cfg.theta_g, nu_l=cfg.nu_l, s_l=s_l, s_min=s_min, s_max=max(s_max, s_l))
    init = resolve_count(cfg.initial_sample_size, population) if cfg.initial_sample_size else s_min
    kind, size = parse_method(spec.method)
    base = SolverConfig(alpha=spec.alpha, eta=spec.eta, sampler=sampler,
                        tolerance=ToleranceSchedule(tau0=spec.tau0), initial_sample_size=init,
                        budget_gradient_evals=resolve_count(cfg.budget, population),
                        max_outer=cfg.max_outer, max_inner_per_outer=cfg.max_inner, seed=spec.seed)
    if kind == "fixed":
        base = base.fixed(max(2, resolve_count(size, population)))
    return base


def run_specs(cfg: ExperimentConfig) -> List[RunSpec]:
    return [RunSpec(m, t, e, a, s) for m, t, e, a, s in
            itertools.product(cfg.methods, cfg.tau0, cfg.eta, cfg.alpha, cfg.seeds)]


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def write_trace_csv(trace: SolverTrace, path: Path) -> None:
    """Write the trace with 17 significant digits, atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_FIELDS)
            for rec in trace.records:
                w.writerow([_fmt(v) for v in rec.row()])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_trace_csv(path) -> Dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = list(zip(*body)) if body else [() for _ in header]
    return {name: np.array([float(v) for v in col]) for name, col in zip(header, cols)}


def execute_run(cfg: ExperimentConfig, spec: RunSpec, write: bool = True) -> RunOutcome:
    problem = _problem_for(cfg)
    obj = problem.objective
    population = obj.population if obj.finite_sum else None
    scfg = solver_config(cfg, spec, population)
    start = time.perf_counter()
    try:
        state, trace = run_asal(problem, scfg)
    except NumericalError as exc:
        return RunOutcome(spec, "numerical_failure", None, wall_time_s=time.perf_counter() - start,
                          message=str(exc))
    elapsed = time.perf_counter() - start
    trace_file = None
    if write:
        trace_file = str(Path(cfg.out) / "traces" / f"{spec.run_id}.csv")
        write_trace_csv(trace, Path(trace_file))
    window = max(cfg.selection.obj_window, cfg.selection.feas_window)
    sizes = trace.column("batch_size")
    tail = SolverTrace(records=trace.records[-window:], stop_reason=trace.stop_reason,
                       stationarity_is_estimate=trace.stationarity_is_estimate, config_label=trace.config_label)
    last = trace.records[-1] if trace.records else None
    return RunOutcome(
        spec, "ok", tail, n_records=len(trace.records), n_outer=trace.n_outer,
        cum_grad_evals=trace.cum_grad_evals,
        final_feasibility=last.feasibility_error if last else math.nan,
        final_stationarity=last.stationarity_error if last else math.nan,
        sizes_non_decreasing=bool(np.all(np.diff(sizes) >= 0)) if len(sizes) else None,
        wall_time_s=elapsed, trace_file=trace_file, final_x=[float(v) for v in state.x])


def select_best_run(traces: Mapping[str, SolverTrace], feas_tol: float = 1e-4, obj_window: int = 5,
                    feas_window: int = 30) -> Optional[str]:
    """Run id with the lowest mean objective over the last ``obj_window`` records,
    among runs whose minimum feasibility error over the last ``feas_window``
    records is below ``feas_tol``.  ``None`` means no run qualifies."""
    best, best_obj = None, math.inf
    for run_id, trace in traces.items():
        if trace is None or not trace.records:
            continue
        feas = [r.feasibility_error for r in trace.records[-feas_window:]]
        if not min(feas) < feas_tol:
            continue
        obj = float(np.mean([r.objective_estimate for r in trace.records[-obj_window:]]))
        if obj < best_obj:
            best, best_obj = run_id, obj
    return best


def _outcome_json(o: RunOutcome) -> dict:
    d = {"run_id": o.spec.run_id, **asdict(o.spec), "status": o.status, "n_records": o.n_records,
         "n_outer": o.n_outer, "cum_grad_evals": o.cum_grad_evals,
         "final_feasibility": o.final_feasibility, "final_stationarity": o.final_stationarity,
         "sizes_non_decreasing": o.sizes_non_decreasing, "wall_time_s": o.wall_time_s,
         "trace_file": o.trace_file, "final_x": o.final_x}
    if o.message:
        d["message"] = o.message
    return d


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _worker(args):
    cfg, spec = args
    return execute_run(cfg, spec)


def run_sweep(cfg: ExperimentConfig) -> List[RunOutcome]:
    specs = run_specs(cfg)
    _problem_for(cfg)  # fail fast on unreadable data before any run starts
    if cfg.jobs == 1:
        return [execute_run(cfg, s) for s in specs]
    with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
        return list(pool.map(_worker, [(cfg, s) for s in specs]))


def summarize(cfg: ExperimentConfig, outcomes: Sequence[RunOutcome], wall_time_s: float) -> dict:
    rule = cfg.selection
    methods = {}
    for method in cfg.methods:
        mine = {o.spec.run_id: o for o in outcomes if o.spec.method == method}
        best = select_best_run({k: o.tail for k, o in mine.items()}, rule.feas_tol, rule.obj_window,
                               rule.feas_window)
        entry = {"best_run": best, "status": "ok" if best else "no qualifying run"}
        if best:
            o = mine[best]
            entry.update(final_feasibility=o.final_feasibility, final_stationarity=o.final_stationarity,
                         cum_grad_evals=o.cum_grad_evals, n_outer=o.n_outer,
                         sizes_non_decreasing=o.sizes_non_decreasing)
        methods[method] = entry
    head = methods[cfg.methods[0]]
    estimate = any(o.tail is not None and o.tail.stationarity_is_estimate for o in outcomes)
    return _json_safe({
        "preset": cfg.preset,
        "problem": cfg.problem,
        "selection_rule": asdict(rule),
        "best_run": head["best_run"],
        "final_feasibility": head.get("final_feasibility"),
        "final_stationarity": head.get("final_stationarity"),
        "cum_grad_evals": head.get("cum_grad_evals"),
        "stationarity_is_estimate": estimate,
        "methods": methods,
        "wall_time_s": wall_time_s,
        "runs": [_outcome_json(o) for o in outcomes],
    })


def write_json(data: dict, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    with os.fdopen(fd, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=False)
        fh.write("\n")
    os.replace(tmp, path)


def run_verification(out: str, seed: int = 0) -> Tuple[bool, dict]:
    """Theory-check suite plus both rate experiments; returns ``(all_passed, report)``."""
    from . import verify

    start = time.perf_counter()
    checks = verify.run_theory_suite(seed)
    linear = verify.linear_rate_experiment(seed=seed)
    sublinear = verify.sublinear_rate_experiment(seed=seed)
    lines = [c.line() for c in checks] + [linear.line("linear_rate"), sublinear.line("sublinear_rate")]
    passed = all(c.passed for c in checks) and linear.passed and sublinear.passed
    report = _json_safe({
        "preset": "qp-verify",
        "passed": passed,
        "checks": [{"name": c.name, "passed": c.passed, "statistic": c.statistic, "threshold": c.threshold,
                    "runtime_s": c.runtime_s, "detail": c.detail} for c in checks],
        "linear_rate": {"passed": linear.passed, **linear.statistics},
        "sublinear_rate": {"passed": sublinear.passed, **sublinear.statistics},
        "lines": lines,
        "wall_time_s": time.perf_counter() - start,
    })
    write_json(report, Path(out) / "verify.json")
    return passed, report


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run the configured sweep (or the verification preset); returns an exit status."""
    if cfg.preset == "qp-verify":
        passed, report = run_verification(cfg.out, cfg.seeds[0])
        for line in report["lines"]:
            print(line)
        return 0 if passed else 1
    start = time.perf_counter()
    outcomes = run_sweep(cfg)
    summary = summarize(cfg, outcomes, time.perf_counter() - start)
    write_json(summary, Path(cfg.out) / "summary.json")
    for method, entry in summary["methods"].items():
        log.info("%s: best run %s", method, entry["best_run"])
    return 0
