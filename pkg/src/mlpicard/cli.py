"""Command line entry point ``mlp``.

Every subcommand also accepts ``--config FILE``: a JSON object whose keys
are the long flag names (``rho-max`` or ``rho_max``). Flags given on the
command line win over the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import DEFAULT_BUDGET, DrawBudgetExceeded, SchemeParams, mlp_estimate
from .examples import ExampleName, build_example
from .fdref import FdConfig, fd_solve
from .harness import (
    ExperimentConfig,
    dimension_sweep,
    execute,
    fmt,
    run_key,
    runs_path,
)

_DEFAULTS = {
    "solve": {"dim": 1, "seed": 2016, "budget": DEFAULT_BUDGET},
    "experiment": {"dim": 1, "runs": 10, "seed": 2016, "budget": DEFAULT_BUDGET,
                   "workers": 1},
    "sweep": {"dims": "5..100", "runs": 1, "seed": 2016, "budget": DEFAULT_BUDGET},
    "fd-ref": {"nsteps": 2**11, "dim": 1},
}
_REQUIRED = {
    "solve": ("example", "rho"),
    "experiment": ("example", "rho_max"),
    "sweep": ("example", "rho"),
    "fd-ref": ("example",),
}


def parse_dims(text: str) -> list[int]:
    """``"5..100"``, ``"5..100:5"`` or ``"5,10,25"``."""
    text = str(text).strip()
    if ".." in text:
        span, _, step = text.partition(":")
        lo, hi = (int(v) for v in span.split(".."))
        return list(range(lo, hi + 1, int(step) if step else 1))
    return [int(v) for v in text.split(",") if v.strip()]


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    names = ", ".join(e.value for e in ExampleName)

    def common(p, with_dim=True):
        p.add_argument("--config", type=Path, help="JSON file with flag values")
        p.add_argument("--example", help=names)
        if with_dim:
            p.add_argument("--dim", type=int)

    p = sub.add_parser("solve", help="one realisation of U_k at (0, x0)")
    common(p)
    p.add_argument("--rho", type=int)
    p.add_argument("--k", type=int, help="level (default: rho)")
    p.add_argument("--seed", type=_u64)
    p.add_argument("--budget", type=int)

    p = sub.add_parser("experiment", help="repeated runs for rho = 1..rho-max")
    common(p)
    p.add_argument("--rho-max", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=_u64)
    p.add_argument("--budget", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("sweep", help="runtime against dimension")
    common(p, with_dim=False)
    p.add_argument("--rho", type=int)
    p.add_argument("--dims")
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=_u64)
    p.add_argument("--budget", type=int)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("fd-ref", help="finite-difference reference value (d = 1)")
    common(p)
    p.add_argument("--nsteps", type=int)
    return parser


def _merge(args: argparse.Namespace) -> argparse.Namespace:
    values = {}
    if args.config is not None:
        loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(loaded, dict):
            raise SystemExit("config file must hold a JSON object")
        values = {k.replace("-", "_"): v for k, v in loaded.items()}
    for key, val in _DEFAULTS[args.command].items():
        values.setdefault(key, val)
    for key, val in vars(args).items():
        if val is None and key in values:
            setattr(args, key, values[key])
    if getattr(args, "out", None) is not None:
        args.out = Path(args.out)
    missing = [k for k in _REQUIRED[args.command] if getattr(args, k, None) is None]
    if missing:
        flags = ", ".join("--" + m.replace("_", "-") for m in missing)
        raise SystemExit(f"mlp {args.command}: missing {flags}")
    return args


def _solve(args) -> int:
    ex = build_example(args.example, args.dim)
    k = args.rho if args.k is None else args.k
    params = SchemeParams(args.rho, ex.variant)
    est = mlp_estimate(ex.problem, ex.driver, params, k, 0.0, ex.problem.eval_point,
                       run_key(args.seed, args.rho, 0), budget=args.budget)
    print(f"value {fmt(est.value)}")
    print("zeta " + ",".join(fmt(z) for z in est.zeta))
    return 0


def _experiment(args) -> int:
    config = ExperimentConfig(args.example, args.dim, tuple(range(1, args.rho_max + 1)),
                              runs=args.runs, seed=args.seed, budget=args.budget,
                              output=args.out, workers=args.workers)
    _, stats = execute(config)
    print(",".join(("rho", "mean", "std", "rel_error", "rel_increment", "mean_runtime_s")))
    for r in stats:
        if r.refused:
            print(f"{r.rho},refused,,,,")
        else:
            print(",".join((str(r.rho), fmt(r.mean_value), fmt(r.std), fmt(r.rel_error),
                            fmt(r.rel_increment), fmt(r.runtime_seconds))))
    if args.out is not None:
        print(f"wrote {args.out} and {runs_path(args.out)}", file=sys.stderr)
    return 0


def _sweep(args) -> int:
    dims = parse_dims(args.dims)
    points = dimension_sweep(args.example, args.rho, dims, runs=args.runs, seed=args.seed,
                             budget=args.budget, output=args.out)
    print("dim,mean_runtime_s")
    for p in points:
        print(f"{p.dim},{'refused' if p.refused else fmt(p.runtime_seconds)}")
    return 0


def _fd_ref(args) -> int:
    value = fd_solve(FdConfig(nsteps=args.nsteps), build_example(args.example, args.dim))
    print(fmt(value))
    return 0


def main(argv=None) -> int:
    args = _merge(_parser().parse_args(argv))
    handler = {"solve": _solve, "experiment": _experiment, "sweep": _sweep,
               "fd-ref": _fd_ref}[args.command]
    try:
        return handler(args)
    except DrawBudgetExceeded as err:
        print(f"refused: {err}", file=sys.stderr)
        return 3
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
