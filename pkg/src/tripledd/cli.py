"""Command-line interface.

All successful output is a single JSON document on stdout; every
human-readable message goes to stderr. Exit codes: 0 success, 2 input
or validation error, 3 runtime estimation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .data import load_panel_csv, load_rc_csv, write_panel_csv, write_rc_csv
from .dgp import PANEL, generate_panel, generate_rc, load_dgp_config
from .errors import EstimationError, ValidationError
from .montecarlo import grid_to_csv, load_scenario, robustness_grid
from .nuisance import LINEAR, LOGIT, SATURATED, NuisanceConfig
from .panel import bootstrap_se, make_panel_pipeline
from .rc import compositional_change_diagnostic, make_rc_pipeline

_OUTCOME_FAMILIES = {"ols": LINEAR, "saturated": SATURATED}
_PROPENSITY_FAMILIES = {"logit": LOGIT, "saturated": SATURATED}


def _parse_cols(spec: str, required: tuple[str, ...]) -> dict:
    """Parse "g=a,d=b,...[,x=c1+c2]" into a column map."""
    out: dict = {}
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValidationError(f"bad --cols entry {part!r}, expected key=column")
        key, value = (s.strip() for s in part.split("=", 1))
        if key == "x":
            out["x"] = [c.strip() for c in value.split("+") if c.strip()]
        else:
            out[key] = value
    for key in required:
        if key not in out:
            raise ValidationError(f"--cols must bind {key!r}")
    return out


def _nuisance_config(args) -> NuisanceConfig:
    return NuisanceConfig(
        propensity_family=_PROPENSITY_FAMILIES[args.propensity],
        outcome_family=_OUTCOME_FAMILIES[args.outcome],
        folds=args.crossfit,
        trim_floor=args.trim_floor,
        clip=args.clip,
        seed=args.seed,
    ).validate()


def _emit(doc: dict) -> None:
    sys.stdout.write(json.dumps(doc) + "\n")


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("TRIPLEDD_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"TRIPLEDD_THREADS must be an integer, got {env!r}") from None
    return 1


def cmd_estimate_panel(args) -> int:
    column_map = _parse_cols(args.cols, ("g", "d", "y0", "y1"))
    data = load_panel_csv(args.data, column_map)
    config = _nuisance_config(args)
    pipeline = make_panel_pipeline(args.estimator, config)
    if args.bootstrap is not None:
        result = bootstrap_se(pipeline, data, args.bootstrap, args.seed)
    else:
        result = pipeline(data)
    _emit(result.to_dict())
    return 0


def cmd_estimate_rc(args) -> int:
    column_map = _parse_cols(args.cols, ("g", "d", "t", "y"))
    data = load_rc_csv(args.data, column_map)
    if args.diagnose_ncc:
        _emit(compositional_change_diagnostic(data))
        return 0
    config = _nuisance_config(args)
    pipeline = make_rc_pipeline(args.estimator.replace("-", "_"), config)
    if args.bootstrap is not None:
        result = bootstrap_se(pipeline, data, args.bootstrap, args.seed)
    else:
        result = pipeline(data)
    _emit(result.to_dict())
    return 0


def cmd_simulate(args) -> int:
    config = load_dgp_config(args.config)
    seed = args.seed if args.seed is not None else config.seed
    if config.design == PANEL:
        data, true_att = generate_panel(config, seed)
        write_panel_csv(data, args.out)
    else:
        data, true_att = generate_rc(config, seed)
        write_rc_csv(data, args.out)
    _emit({"true_att": true_att, "design": config.design, "n": data.n, "out": str(args.out)})
    return 0


def cmd_grid(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario.master_seed = args.seed
    grid = robustness_grid(scenario, threads=_threads(args))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for cell_name, report in grid.items():
        (out_dir / f"{cell_name}.json").write_text(report.to_json() + "\n", encoding="utf-8")
    grid_to_csv(grid, out_dir / "grid.csv")
    _emit(
        {
            "out": str(out_dir),
            "cells": {
                name: {
                    est: {"bias": row.bias, "rmse": row.rmse, "coverage": row.coverage}
                    for est, row in report.rows.items()
                }
                for name, report in grid.items()
            },
        }
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tripledd",
        description="Triple-difference ATT estimation, simulation, and robustness grids",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, rc: bool):
        p.add_argument("--data", required=True, help="input CSV file")
        p.add_argument(
            "--cols",
            required=True,
            help="column bindings, e.g. g=elig,d=state,y0=pre,y1=post[,x=a+b]",
        )
        choices = ["or", "ipw", "dr"] + (["dr-ncc"] if rc else [])
        p.add_argument("--estimator", required=True, choices=choices)
        p.add_argument("--propensity", default="logit", choices=sorted(_PROPENSITY_FAMILIES))
        p.add_argument("--outcome", default="ols", choices=sorted(_OUTCOME_FAMILIES))
        p.add_argument("--crossfit", type=int, default=1, metavar="K")
        p.add_argument("--bootstrap", type=int, default=None, metavar="B")
        p.add_argument("--clip", action="store_true")
        p.add_argument("--trim-floor", type=float, default=1e-3, dest="trim_floor")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None)

    p_panel = sub.add_parser("estimate-panel", help="ATT from panel data")
    add_common(p_panel, rc=False)
    p_panel.set_defaults(func=cmd_estimate_panel)

    p_rc = sub.add_parser("estimate-rc", help="ATT from repeated cross-sections")
    add_common(p_rc, rc=True)
    p_rc.add_argument(
        "--diagnose-ncc",
        action="store_true",
        dest="diagnose_ncc",
        help="print the compositional-change report instead of estimating",
    )
    p_rc.set_defaults(func=cmd_estimate_rc)

    p_sim = sub.add_parser("simulate", help="draw a synthetic dataset")
    p_sim.add_argument("--config", required=True, help="flat key=value generator file")
    p_sim.add_argument("--out", required=True, help="output CSV path")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_grid = sub.add_parser("grid", help="run the 2x2 misspecification grid")
    p_grid.add_argument("--scenario", required=True, help="flat key=value scenario file")
    p_grid.add_argument("--out", required=True, help="output directory")
    p_grid.add_argument("--seed", type=int, default=None)
    p_grid.add_argument("--threads", type=int, default=None)
    p_grid.set_defaults(func=cmd_grid)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except EstimationError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"FileNotFound: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
