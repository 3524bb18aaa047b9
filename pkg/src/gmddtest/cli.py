"""Command-line interface.

Subcommands: gmdd, mi, spec, spec-boot, simulate, bench.  Results go to
stdout (or --out) as JSON, or as CSV for simulation output; diagnostics
go to stderr.  Exit codes: 0 success, 1 validation error, 2 computation
error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .bootstrap_icm import FAMILIES as BOOT_FAMILIES, BootstrapConfig, wild_bootstrap_pvalue
from .dataio import emit_result, load_csv
from .estimators import ModelSpec, NonConvergenceError
from .gmdd import gmdd_known_mean, gmdd_plugin_mean, gmdd_u_centered
from .kernels import parse_kernel
from .linalg import DegenerateCovarianceError
from .mc import (
    DgpSpec,
    run_power_curve,
    run_size_experiment,
    run_timing_benchmark,
)
from .mi_test import VSpec, default_h, mi_test
from .spec_test import SpecVSpec, spec_test

__all__ = ["main", "entry"]

log = logging.getLogger("gmddtest")


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports usage problems with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _csv_list(text: str) -> tuple[str, ...]:
    items = tuple(s.strip() for s in text.split(",") if s.strip())
    if not items:
        raise argparse.ArgumentTypeError("expected a comma-separated list")
    return items


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _gamma_grid(text: str) -> tuple[float, ...]:
    """Parse start:stop:step into an inclusive grid."""
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected start:stop:step")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse grid {text!r}")
    if step <= 0:
        raise argparse.ArgumentTypeError("step must be positive")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return tuple(start + k * step for k in range(max(count, 1)))


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("GMDD_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"GMDD_THREADS must be an integer, got {env!r}")
    return 1


def _column_fn(data, name):
    col = data.col(name)
    return lambda z: col


def _build_parser() -> _Parser:
    parser = _Parser(prog="gmddtest", description=__doc__)
    parser.add_argument("--version", action="version", version=f"gmddtest {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--format", choices=("json", "csv"), default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None, help="worker count (or GMDD_THREADS)")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("gmdd", help="compute the GMDD metric on a CSV column")
    p.add_argument("--data", required=True)
    p.add_argument("--u-col", required=True)
    p.add_argument("--z-cols", type=_csv_list, required=True)
    p.add_argument("--kernel", required=True)
    p.add_argument("--estimator", choices=("known", "plugin", "ucentered"), default="plugin")
    add_common(p)

    p = sub.add_parser("mi", help="chi-squared test of conditional mean independence")
    p.add_argument("--data", required=True)
    p.add_argument("--u-col", required=True)
    p.add_argument("--z-cols", type=_csv_list, required=True)
    p.add_argument("--h-col", default=None, help="precomputed h(Z) column (default preset)")
    p.add_argument("--aug-cols", type=_csv_list, default=())
    p.add_argument("--kernel", required=True)
    p.add_argument("--iota", type=float, default=0.001)
    add_common(p)

    p = sub.add_parser("spec", help="chi-squared regression specification test")
    p.add_argument("--data", required=True)
    p.add_argument("--y-col", required=True)
    p.add_argument("--x-cols", type=_csv_list, required=True)
    p.add_argument("--iv-cols", type=_csv_list, default=())
    p.add_argument("--intercept", action="store_true")
    p.add_argument("--kernel", default="gauss")
    p.add_argument("--delta-b", type=_float_list, default=None)
    p.add_argument("--aug-cols", type=_csv_list, default=())
    p.add_argument("--iota", type=float, default=0.001)
    p.add_argument("--standardize-z", action="store_true")
    add_common(p)

    p = sub.add_parser("spec-boot", help="wild-bootstrap ICM specification test")
    p.add_argument("--data", required=True)
    p.add_argument("--y-col", required=True)
    p.add_argument("--x-cols", type=_csv_list, required=True)
    p.add_argument("--iv-cols", type=_csv_list, default=())
    p.add_argument("--intercept", action="store_true")
    p.add_argument("--family", choices=BOOT_FAMILIES, required=True)
    p.add_argument("--B", type=int, default=499)
    p.add_argument("--multiplier", choices=("mammen", "rademacher"), default="mammen")
    add_common(p)

    p = sub.add_parser("simulate", help="size/power experiment on a built-in DGP")
    p.add_argument("--config", default=None, help="JSON file with these options as keys")
    p.add_argument("--dgp")
    p.add_argument("--n", type=int)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--gamma-grid", type=_gamma_grid, default=None)
    p.add_argument("--tests", type=_csv_list, default=("chi2",))
    p.add_argument("--levels", type=_float_list, default=(0.10, 0.05, 0.01))
    p.add_argument("--B", type=int, default=499)
    p.add_argument("--multiplier", choices=("mammen", "rademacher"), default="mammen")
    p.add_argument("--iota", type=float, default=0.001)
    add_common(p)

    p = sub.add_parser("bench", help="timing benchmark over a grid of sample sizes")
    p.add_argument("--config", default=None, help="JSON file with these options as keys")
    p.add_argument("--dgp")
    p.add_argument("--n-grid", type=_int_list)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--tests", type=_csv_list, default=("chi2", "gauss", "mdd", "dl", "esc6"))
    p.add_argument("--B", type=int, default=499)
    p.add_argument("--multiplier", choices=("mammen", "rademacher"), default="mammen")
    p.add_argument("--iota", type=float, default=0.001)
    add_common(p)

    return parser


def _apply_config(argv: list[str], parser: _Parser) -> list[str]:
    """Expand --config FILE into explicit options ahead of the real ones."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise ValueError("--config needs a file path")
    path = argv[i + 1]
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    known = {
        "dgp", "n", "reps", "gamma", "gamma_grid", "tests", "levels", "B",
        "multiplier", "iota", "out", "format", "seed", "threads", "n_grid",
    }
    expanded: list[str] = []
    for key, val in cfg.items():
        norm = key.replace("-", "_")
        if norm not in known:
            raise ValueError(f"{path}: unknown config key {key!r}")
        flag = "--" + norm.replace("_", "-")
        if isinstance(val, (list, tuple)):
            expanded += [flag, ",".join(str(v) for v in val)]
        else:
            expanded += [flag, str(val)]
    rest = argv[:i] + argv[i + 2 :]
    # config first so explicit flags win
    return [rest[0]] + expanded + rest[1:]


def _cmd_gmdd(args) -> None:
    data = load_csv(args.data, required=(args.u_col, *args.z_cols))
    u = data.col(args.u_col)
    z = data.cols(args.z_cols)
    kernel = parse_kernel(args.kernel, z.shape[1])
    fn = {"known": gmdd_known_mean, "plugin": gmdd_plugin_mean, "ucentered": gmdd_u_centered}
    value = fn[args.estimator](u, z, kernel)
    emit_result({"gmdd": value, "n": data.n}, args.format or "json", args.out)


def _cmd_mi(args) -> None:
    required = [args.u_col, *args.z_cols, *args.aug_cols]
    if args.h_col:
        required.append(args.h_col)
    data = load_csv(args.data, required=tuple(required))
    u = data.col(args.u_col)
    z = data.cols(args.z_cols)
    h = _column_fn(data, args.h_col) if args.h_col else default_h
    vs = VSpec(
        symmetrized_h=(h,),
        augmentations=tuple(_column_fn(data, c) for c in args.aug_cols),
    )
    kernel = parse_kernel(args.kernel, z.shape[1])
    emit_result(mi_test(u, z, vs, kernel, args.iota), args.format or "json", args.out)


def _spec_model(args) -> ModelSpec:
    kind = "iv" if args.iv_cols else "ols"
    return ModelSpec(kind, args.y_col, args.x_cols, iv_cols=args.iv_cols, intercept=args.intercept)


def _cmd_spec(args) -> None:
    data = load_csv(args.data, required=(args.y_col, *args.x_cols, *args.iv_cols, *args.aug_cols))
    model = _spec_model(args)
    aug = None
    if args.aug_cols:
        cols = data.cols(args.aug_cols)
        total = cols.sum(axis=1)
        aug = lambda z: total  # noqa: E731
    vs = SpecVSpec(delta_b=args.delta_b, augmentation=aug)
    z_dim = len(args.iv_cols or args.x_cols)
    kernel = parse_kernel(args.kernel, z_dim)
    result = spec_test(data, model, vs, kernel, args.iota, standardize_z=args.standardize_z)
    emit_result(result, args.format or "json", args.out)


def _cmd_spec_boot(args) -> None:
    data = load_csv(args.data, required=(args.y_col, *args.x_cols, *args.iv_cols))
    model = _spec_model(args)
    cfg = BootstrapConfig(B=args.B, multiplier=args.multiplier, seed=args.seed)
    emit_result(wild_bootstrap_pvalue(data, model, args.family, cfg), args.format or "json", args.out)


def _cmd_simulate(args) -> None:
    if args.dgp is None or args.n is None:
        raise ValueError("simulate requires --dgp and --n")
    dgp = DgpSpec(args.dgp, args.n, gamma=args.gamma, seed=args.seed)
    threads = _threads(args)
    if args.gamma_grid is not None:
        result = run_power_curve(
            dgp, args.tests, args.gamma_grid, args.reps, args.levels,
            B=args.B, multiplier=args.multiplier, iota=args.iota, threads=threads,
        )
    else:
        result = run_size_experiment(
            dgp, args.tests, args.reps, args.levels,
            B=args.B, multiplier=args.multiplier, iota=args.iota, threads=threads,
        )
    emit_result(result, args.format or "csv", args.out)


def _cmd_bench(args) -> None:
    if args.dgp is None or not args.n_grid:
        raise ValueError("bench requires --dgp and --n-grid")
    dgp = DgpSpec(args.dgp, min(args.n_grid), seed=args.seed)
    result = run_timing_benchmark(
        dgp, args.tests, args.n_grid, args.reps, B=args.B, multiplier=args.multiplier, iota=args.iota
    )
    emit_result(result, args.format or "csv", args.out)


_COMMANDS = {
    "gmdd": _cmd_gmdd,
    "mi": _cmd_mi,
    "spec": _cmd_spec,
    "spec-boot": _cmd_spec_boot,
    "simulate": _cmd_simulate,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        argv = _apply_config(argv, parser)
        args = parser.parse_args(argv)
        logging.basicConfig(
            stream=sys.stderr,
            level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        _COMMANDS[args.command](args)
        return 0
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"gmddtest: validation error: {exc}\n")
        return 1
    except (
        DegenerateCovarianceError,
        NonConvergenceError,
        RuntimeError,
        FloatingPointError,
        np.linalg.LinAlgError,
    ) as exc:
        sys.stderr.write(f"gmddtest: computation error: {exc}\n")
        return 2


def entry() -> None:
    raise SystemExit(main())
