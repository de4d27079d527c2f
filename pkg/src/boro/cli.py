"""Command-line surface.

Subcommands: ``prescribe`` (decision for a dataset at a context),
``bootstrap`` (empirical disappointment report), ``experiment`` (figure
sweeps written as CSV files plus a manifest), and ``calibrate-radius``.
Data goes to stdout (or files), diagnostics to stderr. Exit codes: 2 for
parse/config problems, 3 for solver failures.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import traceback

import numpy as np

from . import config as cfgmod
from .bootstrap import BootstrapPlan, bound_curve, estimate_disappointment
from .data_io import FLOAT_FMT, read_dataset
from .errors import BoroError, ConfigError, ParseError, SolverError
from .experiments import (
    build_learner,
    newsvendor_loss,
    portfolio_loss,
    run_newsvendor_experiment,
    run_portfolio_experiment,
)
from .learners import NnLearner, build_neighborhoods
from .model import empirical_model
from .prescribe import nominal_prescribe
from .robust import RobustConfig, calibrate_radius_nn, calibrate_radius_nw, min_radii, robust_prescribe


def _fmt(v) -> str:
    if isinstance(v, float):
        return FLOAT_FMT % v
    return str(v)


def _failing_module(exc: BaseException) -> str:
    mod = "boro"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("boro."):
            mod = name.split(".", 1)[1]
    return mod


def _add_config_flags(p: argparse.ArgumentParser, exclude: tuple = ()) -> None:
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    for key in cfgmod.KEYS:
        if key in exclude:
            continue
        p.add_argument(f"--{key.replace('_', '-')}", dest=f"cfg_{key}", metavar="V",
                       help=cfgmod.KEYS[key].help)


def _resolve_config(args) -> dict:
    file_values = cfgmod.parse_config_file(args.config) if args.config else None
    overrides = list(args.set)
    for key in cfgmod.KEYS:
        flag = getattr(args, f"cfg_{key}", None)
        if flag is not None:
            overrides.append(f"{key}={flag}")
    cfg = cfgmod.resolve(file_values, overrides)
    print(cfgmod.format_resolved(cfg), file=sys.stderr)
    return cfg


def _parse_context(text: str) -> np.ndarray:
    try:
        return np.array([float(tok) for tok in text.replace(",", " ").split()])
    except ValueError:
        raise ParseError(f"malformed context {text!r}") from None


def _learner_from_cfg(cfg, data):
    return build_learner(
        cfg["learner"], data, smoother=cfg["smoother"], bandwidth=cfg["bandwidth"], k=cfg["k"],
    )


def _loss_from_cfg(cfg, data):
    # six-asset labels mean the portfolio loss; scalar labels the newsvendor
    if data.dim_y == 6:
        return portfolio_loss()
    if data.dim_y == 1:
        return newsvendor_loss()
    raise ConfigError(f"no built-in loss for {data.dim_y}-dimensional labels")


def _resolve_robust(cfg, model, learner, xbar):
    """Radius from the config; None means nominal."""
    if cfg["radius"] is not None and cfg["target_disappointment"] is not None:
        raise ConfigError("set only one of radius and target_disappointment")
    if cfg["radius"] is not None:
        return float(cfg["radius"])
    if cfg["target_disappointment"] is not None:
        b = float(cfg["target_disappointment"])
        if isinstance(learner, NnLearner):
            chain = build_neighborhoods(learner.proximity, model, xbar)
            return calibrate_radius_nn(b, model.n, min_radii(model, chain, learner.k))
        return calibrate_radius_nw(b, model.n)
    return None


def cmd_prescribe(args) -> int:
    cfg = _resolve_config(args)
    data = read_dataset(args.data)
    xbar = _parse_context(args.context)
    if xbar.size != data.dim_x:
        raise ParseError(f"context has {xbar.size} coordinates, data has {data.dim_x}")
    model = empirical_model(data)
    learner = _learner_from_cfg(cfg, data)
    loss = _loss_from_cfg(cfg, data)
    r = _resolve_robust(cfg, model, learner, xbar)

    nominal = nominal_prescribe(learner, loss, model, xbar, seed=cfg["seed"])
    record = {
        "learner": cfg["learner"],
        "n": model.n,
        "decision": [float(_fmt(v)) for v in nominal.z],
        "nominal_cost": float(_fmt(nominal.cost)),
        "robust_cost": None,
        "radius": 0.0 if r is None else float(_fmt(r)),
        "active_j": nominal.active_j,
        "status": nominal.status,
    }
    if r is not None and r > 0:
        rob = robust_prescribe(RobustConfig(distance=cfg["distance"], radius=r),
                               learner, loss, model, xbar, seed=cfg["seed"])
        record.update(
            decision=[float(_fmt(v)) for v in rob.z],
            robust_cost=float(_fmt(rob.cost)),
            active_j=rob.active_j,
            status=rob.status,
        )
    else:
        record["robust_cost"] = record["nominal_cost"]
    print(json.dumps(record))
    return 0


def cmd_bootstrap(args) -> int:
    cfg = _resolve_config(args)
    data = read_dataset(args.data)
    xbar = _parse_context(args.context)
    model = empirical_model(data)
    learner = _learner_from_cfg(cfg, data)
    loss = _loss_from_cfg(cfg, data)
    plan = BootstrapPlan(m=cfg["m"], seed=cfg["seed"])

    if cfg["r_grid"] is not None:
        r_list = [float(r) for r in cfg["r_grid"]]
    else:
        r = _resolve_robust(cfg, model, learner, xbar)
        r_list = [0.0 if r is None else r]

    family = cfg["learner"]
    radii = None
    if family == "nn":
        chain = build_neighborhoods(learner.proximity, model, xbar)
        radii = min_radii(model, chain, learner.k)

    lines = ["n,r,empirical_b,bound_b,m,seed"]
    for r in r_list:
        if r > 0:
            presc = robust_prescribe(RobustConfig(distance=cfg["distance"], radius=r),
                                     learner, loss, model, xbar, seed=cfg["seed"])
        else:
            presc = nominal_prescribe(learner, loss, model, xbar, seed=cfg["seed"])
        bb = bound_curve(family, r, model.n, radii)
        rep = estimate_disappointment(presc, learner, loss, data, xbar, plan, bound_b=bb)
        lines.append(",".join(_fmt(v) for v in
                              (model.n, r, rep.empirical_b, bb, plan.m, plan.seed)))
    out = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(out)
    else:
        sys.stdout.write(out)
    return 0


def _write_table(path: str, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(_fmt(row[c]) for c in columns) + "\n")


def cmd_experiment(args) -> int:
    cfg = _resolve_config(args)
    name = args.name or cfg["experiment"]
    if name not in ("newsvendor", "portfolio"):
        raise ConfigError(f"unknown experiment {name!r}")
    os.makedirs(args.out_dir, exist_ok=True)
    common = dict(
        n_grid=cfg["n_grid"], seeds=cfg["seeds"], seed=cfg["seed"], threads=cfg["threads"],
        smoother=cfg["smoother"], bandwidth=cfg["bandwidth"], k=cfg["k"],
        variance_convention=cfg["variance_convention"],
    )
    if name == "newsvendor":
        tables, manifest = run_newsvendor_experiment(
            r_grid=cfg["r_grid"], target_b=cfg["target_b"], m=cfg["m"],
            learners=tuple(cfg["learners"]), **common,
        )
    else:
        tables, manifest = run_portfolio_experiment(
            target_b=cfg["target_b"], test_sets=cfg["test_sets"], test_size=cfg["test_size"],
            learners=tuple(f for f in cfg["learners"] if f in ("nw", "nn")), **common,
        )
    files = []
    for table_name, rows in tables.items():
        path = os.path.join(args.out_dir, f"{table_name}.csv")
        _write_table(path, manifest["columns"], rows)
        files.append(os.path.basename(path))
    manifest["files"] = sorted(files)
    with open(os.path.join(args.out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    print(f"wrote {len(files)} tables to {args.out_dir}", file=sys.stderr)
    return 0


def cmd_calibrate_radius(args) -> int:
    cfg = _resolve_config(args)
    b = float(args.target_b)
    if args.formulation == "nw":
        n = int(args.n) if args.n else None
        if n is None:
            raise ConfigError("--n is required for the nw formulation")
        print(_fmt(calibrate_radius_nw(b, n)))
        return 0
    if not args.data or not args.context:
        raise ConfigError("the nn formulation needs --data and --context")
    data = read_dataset(args.data)
    model = empirical_model(data)
    xbar = _parse_context(args.context)
    cfg = dict(cfg)
    cfg["learner"] = "nn"
    learner = _learner_from_cfg(cfg, data)
    chain = build_neighborhoods(learner.proximity, model, xbar)
    radii = min_radii(model, chain, learner.k)
    print(_fmt(calibrate_radius_nn(b, model.n, radii)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boro",
                                     description="bootstrap-robust prescriptive analytics")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prescribe", help="decision for a dataset at a context")
    p.add_argument("--data", required=True)
    p.add_argument("--context", required=True, help="comma-separated covariates")
    _add_config_flags(p)
    p.set_defaults(func=cmd_prescribe)

    p = sub.add_parser("bootstrap", help="empirical disappointment report")
    p.add_argument("--data", required=True)
    p.add_argument("--context", required=True)
    p.add_argument("--out", help="write the CSV report here instead of stdout")
    _add_config_flags(p)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("experiment", help="run a named experiment sweep")
    p.add_argument("--name", choices=None, help="newsvendor or portfolio")
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("calibrate-radius", help="radius for a disappointment target")
    p.add_argument("--target-b", required=True)
    p.add_argument("--formulation", choices=("nw", "nn"), default="nw")
    p.add_argument("--n", help="training size (nw)")
    p.add_argument("--data", help="training data (nn)")
    p.add_argument("--context", help="context (nn)")
    _add_config_flags(p, exclude=("target_b",))
    p.set_defaults(func=cmd_calibrate_radius)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ConfigError) as e:
        print(f"{_failing_module(e)}: {e}", file=sys.stderr)
        return 2
    except SolverError as e:
        print(f"{_failing_module(e)}: {e}", file=sys.stderr)
        return 3
    except BoroError as e:
        print(f"{_failing_module(e)}: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"{_failing_module(e)}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
