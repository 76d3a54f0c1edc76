"""
cli.py
------
Command-line interface.

Subcommands:
- fit        coefficient path, fitted values and training rss per m
- dof        DoF profile from one engine or both (with their disagreement)
- select     choose m by CV or one of the BIC variants
- compare    PLSR vs PCR vs Ridge on repeated random splits
- simulate   radial-basis simulation sweep
- make-data  write a seeded synthetic CSV

Artifacts go to --output (or stdout); status lines go to stderr.
Exit codes: 0 success, 2 input/config error, 3 numerical failure.
"""

import argparse
import json
import logging
import math
import os
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from . import __version__
from .baselines import CompareConfig, compare_methods, config_dict
from .config import DEFAULT_FOLDS, get_settings, read_key_value_file
from .dataprep import RawDataset, load_csv, mean_abs_correlation, moments, save_csv, standardize
from .dof_krylov import dof_krylov_path
from .dof_lanczos import dof_lanczos
from .dof_oracle import dof_lower_bound
from .errors import InputError, PlsDofError
from .pls_core import coefficients_original_scale, fit_pls, max_components
from .selection import FIRST_MINIMUM, METHOD_NAMES, MINIMUM_RULES, CvConfig, dof_profile, select
from .simulate import (
    SimulationConfig,
    cell_rng,
    draw_response,
    generate_rbf_design,
    run_simulation,
    scaled_test_error_curve,
    synthetic_base_design,
)

_log = logging.getLogger(__name__)

SCHEMA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "schemas")
SCHEMA_COMMANDS = ("fit", "dof", "select", "compare", "simulate")


# ============================================================================
# OUTPUT HELPERS
# ============================================================================

def status(message: str) -> None:
    print(message, file=sys.stderr)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def dump_json(document: Dict) -> str:
    return json.dumps(_jsonable(document), indent=2, allow_nan=False) + "\n"


def write_text(text: str, path: Optional[str]) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        status(f"✅ Wrote {path}")
    else:
        sys.stdout.write(text)


def write_frame(frame: pd.DataFrame, path: Optional[str]) -> None:
    write_text(frame.to_csv(index=False, float_format="%.10g", lineterminator="\n"), path)


def emit(document: Dict, frame: pd.DataFrame, args) -> None:
    if args.format == "csv":
        write_frame(frame, args.output)
    else:
        write_text(dump_json(document), args.output)


def _load(args) -> RawDataset:
    if not args.input:
        raise InputError("--input is required")
    raw = load_csv(args.input, args.target)
    status(f"✅ Loaded {args.input}: n={raw.n}, p={raw.p}")
    return raw


def _m_max(args, data) -> int:
    limit = max_components(data)
    return limit if args.m_max is None else args.m_max


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


# ============================================================================
# SUBCOMMANDS
# ============================================================================

def cmd_fit(args) -> int:
    raw = _load(args)
    data = standardize(raw)
    model = fit_pls(data, _m_max(args, data))
    if model.truncated_at is not None:
        status(f"⚠️ DegenerateComponent: path truncated at m={model.n_components}")
    rss = model.residual_sum_of_squares(data.y)

    path = []
    for m in range(model.n_components + 1):
        intercept, beta = coefficients_original_scale(model, m, data)
        path.append({"m": m, "intercept": intercept, "coefficients": beta, "rss": rss[m]})
    document = {
        "n": raw.n,
        "p": raw.p,
        "names": raw.names,
        "m_max": model.m_max,
        "n_components": model.n_components,
        "truncated_at": model.truncated_at,
        "path": path,
        "fitted": model.fitted_path.T,
    }
    frame = pd.DataFrame(
        [[e["m"], e["rss"], e["intercept"], *e["coefficients"]] for e in path],
        columns=["m", "rss", "intercept", *raw.names],
    )
    emit(document, frame, args)
    return 0


def cmd_dof(args) -> int:
    raw = _load(args)
    data = standardize(raw)
    m_max = _m_max(args, data)

    if args.engine == "both":
        lanczos = dof_lanczos(data, m_max)
        model = fit_pls(data, m_max)
        krylov, krylov_cut = dof_krylov_path(data, model)
        k = min(lanczos.dof.shape[0], krylov.shape[0])
        valid = lanczos.valid[:k] & np.isfinite(krylov[:k])
        if krylov_cut is not None:
            valid[krylov_cut:] = False
        gap = np.abs(lanczos.dof[:k] - krylov[:k])[valid]
        disagreement = float(gap.max()) if gap.size else math.nan
        rows = [{"m": m, "dof_lanczos": lanczos.dof[m], "dof_krylov": krylov[m],
                 "naive": m + 1, "valid": bool(valid[m])} for m in range(k)]
        truncated = [c for c in (lanczos.truncated_at, krylov_cut) if c is not None]
        document = {"engine": "both", "rows": rows, "max_disagreement": disagreement,
                    "truncated_at": min(truncated) if truncated else None}
        status(f"✅ Max engine disagreement: {disagreement:.3g}")
        if model.truncated_at is not None:
            status(f"⚠️ DegenerateComponent: path truncated at m={model.n_components}")
    else:
        profile = dof_profile(data, m_max, args.engine)
        document = profile.to_dict()
        rows = document["rows"]
        if profile.truncated_at is not None:
            status(f"⚠️ DoF table truncated at m={profile.truncated_at} "
                   f"(DegenerateComponent or negative DoF)")

    if args.lower_bound:
        S = moments(data).S
        bound = dof_lower_bound(S)
        document["lower_bound"] = bound
        document["mean_abs_correlation"] = mean_abs_correlation(S) if data.p > 1 else None
        if bound is None:
            status("⚠️ lambda_max > trace(S)/2: no lower bound for DoF(1)")
        else:
            status(f"✅ DoF(1) >= {bound:.6g}")
    else:
        document.pop("lower_bound", None)
        document.pop("mean_abs_correlation", None)
    emit(document, pd.DataFrame(rows), args)
    return 0


def cmd_select(args) -> int:
    raw = _load(args)
    data = standardize(raw)
    test = load_csv(args.test, args.target) if args.test else None
    cfg = CvConfig(folds=args.folds, seed=args.seed)
    result = select(raw, _m_max(args, data), args.method, cfg, test=test, rule=args.minimum)
    status(f"✅ {args.method}: m={result.chosen_m}, DoF={result.chosen_dof:.6g}")
    emit(result.to_dict(), result.table.to_frame(), args)
    return 0


def cmd_compare(args) -> int:
    raw = _load(args)
    cfg = CompareConfig(
        reps=args.reps,
        n_train=args.n_train,
        n_test=args.n_test,
        m_max=args.m_max,
        folds=args.folds,
        seed=args.seed,
        lambdas=args.lambdas,
    )
    report = compare_methods(raw, cfg)
    failed = sum(1 for row in report.methods if row["error"])
    if failed:
        status(f"⚠️ {failed} method runs failed (see the error column)")
    if args.format == "json":
        write_text(dump_json({"config": config_dict(cfg), **report.to_dict()}), args.output)
    elif args.output:
        for path in report.to_csv(args.output):
            status(f"✅ Wrote {path}")
    else:
        write_frame(report.methods_frame(), None)
    return 0


def _simulation_config(args) -> SimulationConfig:
    values = read_key_value_file(args.config) if args.config else {}
    base = None
    if args.input:
        base = load_csv(args.input, args.target).X_raw
    return SimulationConfig.from_mapping(
        values,
        base_design=base,
        d_values=args.d,
        reps=args.reps,
        seed=args.seed,
        n_train=args.n_train,
        n_test=args.n_test,
        snr=args.snr,
        m_range=args.m_range,
        folds=args.folds,
    )


def cmd_simulate(args) -> int:
    cfg = _simulation_config(args)
    status(f"🔧 Simulating d={list(cfg.d_values)} with {cfg.reps} reps")
    report = run_simulation(cfg, threads=args.threads)
    failed = sum(1 for row in report.rows if row["error"])
    if failed:
        status(f"⚠️ {failed} rows failed (see the error column)")

    if args.output:
        report.to_csv(f"{args.output}.csv", include_runtime=args.timings)
        status(f"✅ Wrote {args.output}.csv")
        write_text(dump_json(report.to_json(include_runtime=args.timings)), f"{args.output}.json")
    elif args.format == "csv":
        write_frame(report.to_frame(include_runtime=args.timings), None)
    else:
        write_text(dump_json(report.to_json(include_runtime=args.timings)), None)

    if args.curves:
        write_frame(scaled_test_error_curve(report.curves), args.curves)
    return 0


def cmd_make_data(args) -> int:
    if not args.output:
        raise InputError("make-data needs --output")
    rng = cell_rng(args.seed, 0, args.d)
    if args.kind == "noise":
        X = rng.standard_normal((args.rows, args.p))
        y = rng.standard_normal(args.rows)
    else:
        base = synthetic_base_design(args.rows, args.p, seed=args.seed)
        design = generate_rbf_design(base, args.d, rng)
        X = design.X
        y, _ = draw_response(design.f_values, args.snr or 9.0, rng)
    raw = RawDataset(X, y)
    save_csv(raw, args.output, args.target)
    status(f"✅ Wrote {args.output} ({args.kind}, n={raw.n}, p={raw.p})")
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "dof": cmd_dof,
    "select": cmd_select,
    "compare": cmd_compare,
    "simulate": cmd_simulate,
    "make-data": cmd_make_data,
}


# ============================================================================
# PARSER
# ============================================================================

def _non_negative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plsdof",
        description="PLS regression with unbiased Degrees of Freedom, model selection "
                    "and complexity comparison.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="CSV file with a header row")
    common.add_argument("--target", default="y", help="response column (default: y)")
    common.add_argument("--output", help="output file (prefix for compare/simulate)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--json-schema", action="store_true",
                        help="print the JSON schema of this subcommand's output and exit")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit the PLSR path")
    p.add_argument("--m-max", type=_non_negative)

    p = sub.add_parser("dof", parents=[common], help="Degrees of Freedom per m")
    p.add_argument("--m-max", type=_non_negative)
    p.add_argument("--engine", choices=("lanczos", "krylov", "both", "naive"), default="both")
    p.add_argument("--lower-bound", action="store_true",
                   help="add the one-component lower bound and mean absolute correlation")

    p = sub.add_parser("select", parents=[common], help="choose the number of components")
    p.add_argument("--m-max", type=_non_negative)
    p.add_argument("--method", choices=tuple(METHOD_NAMES), default="bic-krylov")
    p.add_argument("--folds", type=_positive, default=DEFAULT_FOLDS)
    p.add_argument("--test", help="holdout CSV with the same columns")
    p.add_argument("--minimum", choices=MINIMUM_RULES, default=FIRST_MINIMUM,
                   help="BIC rule: first local minimum (default) or global minimum")

    p = sub.add_parser("compare", parents=[common], help="PLSR vs PCR vs Ridge")
    p.add_argument("--m-max", type=_non_negative)
    p.add_argument("--reps", type=_positive, default=50)
    p.add_argument("--n-train", type=_positive, default=50)
    p.add_argument("--n-test", type=_positive, default=None,
                   help="test rows per split (default: all remaining rows)")
    p.add_argument("--folds", type=_positive, default=DEFAULT_FOLDS)
    p.add_argument("--lambdas", type=_float_list, help="comma-separated ridge penalties")

    p = sub.add_parser("simulate", parents=[common], help="radial-basis simulation sweep")
    p.add_argument("--config", help="KEY=value settings file")
    p.add_argument("--d", type=_int_list, help="comma-separated basis counts")
    p.add_argument("--reps", type=_positive)
    p.add_argument("--n-train", type=_positive)
    p.add_argument("--n-test", type=_positive)
    p.add_argument("--snr", type=float)
    p.add_argument("--m-range", type=_non_negative)
    p.add_argument("--folds", type=_positive)
    p.add_argument("--threads", type=_positive)
    p.add_argument("--curves", help="write the scaled test-error curves to this CSV")
    p.add_argument("--timings", action="store_true", help="include per-method runtimes")

    p = sub.add_parser("make-data", parents=[common], help="write a synthetic CSV")
    p.add_argument("--kind", choices=("noise", "rbf"), default="noise")
    p.add_argument("--rows", type=_positive, default=50)
    p.add_argument("--p", type=_positive, default=5)
    p.add_argument("--d", type=_positive, default=10)
    p.add_argument("--snr", type=float)

    return parser


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, get_settings().log_level.upper())
    package = logging.getLogger("plsdof")
    package.setLevel(level)
    # sys.stderr can be swapped and closed between calls
    for handler in list(package.handlers):
        if getattr(handler, "_plsdof", False):
            package.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    handler._plsdof = True
    package.addHandler(handler)


def print_schema(command: str) -> int:
    if command not in SCHEMA_COMMANDS:
        raise InputError(f"'{command}' has no JSON output schema")
    with open(os.path.join(SCHEMA_DIR, f"{command}.schema.json"), encoding="utf-8") as handle:
        sys.stdout.write(handle.read())
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        _configure_logging(args.verbose)
        if args.json_schema:
            return print_schema(args.command)
        return COMMANDS[args.command](args)
    except PlsDofError as e:
        status(f"❌ Error: {e}")
        return e.exit_code
    except OSError as e:
        status(f"❌ Error: {e}")
        return 2
