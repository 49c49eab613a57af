"""Command line entry point.

Settings are layered: preset defaults, then a ``key=value`` config file, then
flags.  Grid parameters (``--tau0``, ``--eta``, ``--alpha``, ``--seed``,
``--mode``) accept repeated flags; in a config file a key may be repeated or
given a comma-separated list.

    asal --preset truss --out runs/truss --jobs 4
    asal --problem logistic --dataset mushrooms --eta 0.01 --eta 0.001 --alpha 1
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from typing import Dict, List, Optional

from .core import ConfigurationError
from .experiments import PRESETS, ExperimentConfig, preset_config, run_experiment

GRID_KEYS = {"tau0": float, "eta": float, "alpha": float, "seed": int, "mode": str}
SCALAR_KEYS = {"problem": str, "dataset": str, "encoding": str, "budget": str, "theta_g": float,
               "nu_l": float, "s_l": str, "s_min": str, "s_max": str, "initial_sample_size": str,
               "out": str, "jobs": int, "preset": str, "grid": str, "problem_seed": int,
               "max_outer": int, "max_inner": int, "feas_tol": float, "obj_window": int,
               "feas_window": int, "synthetic_samples": int, "synthetic_features": int,
               "synthetic_noise": float, "synthetic_scale": float}


def _convert(key: str, text: str):
    kind = GRID_KEYS.get(key) or SCALAR_KEYS.get(key)
    if kind is None:
        raise ConfigurationError(f"unknown setting {key!r}")
    try:
        return kind(text)
    except ValueError:
        raise ConfigurationError(f"bad value {text!r} for {key!r}") from None


def parse_config_text(text: str) -> Dict[str, object]:
    """Parse ``key = value`` lines; ``#`` starts a comment, grid keys accumulate."""
    out: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key in GRID_KEYS:
            items = [v.strip() for v in value.split(",") if v.strip()]
            if not items:
                raise ConfigurationError(f"config line {lineno}: empty list for {key!r}")
            out.setdefault(key, []).extend(_convert(key, v) for v in items)
        else:
            try:
                out[key] = _convert(key, value)
            except ConfigurationError as exc:
                raise ConfigurationError(f"config line {lineno}: {exc}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asal", description="Adaptive-sampling augmented Lagrangian experiments.")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--problem", choices=("qp", "logistic", "truss"))
    p.add_argument("--dataset", help="LIBSVM data file (logistic)")
    p.add_argument("--encoding", choices=("slack", "slab_in_X", "cap_in_X"))
    p.add_argument("--alpha", type=float, action="append")
    p.add_argument("--eta", type=float, action="append")
    p.add_argument("--tau0", type=float, action="append")
    p.add_argument("--theta-g", dest="theta_g", type=float)
    p.add_argument("--budget", help="gradient evaluations, e.g. 1000000 or 200N")
    p.add_argument("--seed", type=int, action="append")
    p.add_argument("--mode", action="append", help="adaptive or fixed:<b> (b may be a count or a percent)")
    p.add_argument("--grid", choices=("preset", "full"), help="use the preset or the full tuning grid")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _merge(settings: Dict[str, object], preset: Optional[str]) -> ExperimentConfig:
    settings = dict(settings)
    rule = {k: settings.pop(k) for k in ("feas_tol", "obj_window", "feas_window") if k in settings}
    fields = {}
    renames = {"seed": "seeds", "mode": "methods"}
    for key, value in settings.items():
        if key in ("preset", "config", "verbose"):
            continue
        name = renames.get(key, key)
        fields[name] = tuple(value) if key in GRID_KEYS else value
    if preset:
        cfg = preset_config(preset, **fields)
    else:
        fields.pop("grid", None)
        cfg = ExperimentConfig(**fields)
    if rule:
        cfg = replace(cfg, selection=replace(cfg.selection, **rule))
    return cfg


def config_from_args(argv: Optional[List[str]] = None) -> ExperimentConfig:
    args = build_parser().parse_args(argv)
    settings: Dict[str, object] = {}
    if args.config:
        try:
            with open(args.config) as fh:
                settings.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {args.config!r}: {exc}") from None
    for key, value in vars(args).items():
        if value is not None and key not in ("config", "verbose"):
            settings[key] = value
    return _merge(settings, settings.get("preset"))


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(argv)
        return run_experiment(cfg)
    except ConfigurationError as exc:
        print(f"asal: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
