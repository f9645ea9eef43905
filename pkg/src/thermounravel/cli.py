"""Command line interface.

    thermounravel oracle|unravel|compare|validate|detailed-balance
        [--config PATH] [--seed U64] [--output PATH] [--format csv|json]

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 validation failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings

from .config import SimConfig
from .errors import ConfigError, NumericalError
from .io import OutputError, sibling_path, write_timeseries

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VALIDATION = 0, 1, 2, 3

log = logging.getLogger("thermounravel")


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file (defaults built in)")
    common.add_argument("--seed", type=_u64, help="override run.seed")
    common.add_argument("--output", help="output path ('-' for stdout); overrides output.path")
    common.add_argument("--format", choices=("csv", "json"), help="overrides output.format")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="thermounravel",
        description="Thermodynamic quantum master equation: deterministic oracle and jump-process unraveling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("oracle", parents=[common], help="integrate the master equation for rho(t)")
    sub.add_parser("unravel", parents=[common], help="run the mean-field jump process")
    sub.add_parser("compare", parents=[common], help="run both and report the trace distance per time")
    v = sub.add_parser("validate", parents=[common], help="run the invariant suite")
    v.add_argument("--only", help="run only checks whose name contains this text")
    sub.add_parser("detailed-balance", parents=[common], help="print the equilibrium jump-operator table")
    return parser


def load_config(args) -> SimConfig:
    cfg = SimConfig.load(args.config) if args.config else SimConfig()
    data = cfg.to_dict()
    if args.seed is not None:
        data["run"]["seed"] = args.seed
    if args.output is not None:
        data["output"]["path"] = args.output
    if args.format is not None:
        data["output"]["format"] = args.format
    return SimConfig.from_dict(data)


def _write(out, cfg: SimConfig, with_diagnostics: bool) -> None:
    path, fmt = cfg.output.path, cfg.output.format
    write_timeseries(out.series, fmt, path, out.columns)
    if with_diagnostics and out.diagnostics is not None:
        diag_path = sibling_path(path, "diagnostics")
        if diag_path is None:
            log.info("diagnostics not written (time series went to stdout)")
        else:
            from .experiments import DIAGNOSTIC_COLUMNS

            write_timeseries(out.diagnostics, fmt, diag_path, DIAGNOSTIC_COLUMNS)
            log.info("diagnostics written to %s", diag_path)


def cmd_oracle(cfg):
    from .experiments import oracle_series

    _write(oracle_series(cfg), cfg, with_diagnostics=False)
    return EXIT_OK


def cmd_unravel(cfg):
    from .experiments import unravel_series

    _write(unravel_series(cfg), cfg, with_diagnostics=True)
    return EXIT_OK


def cmd_compare(cfg):
    from .experiments import compare_series

    out = compare_series(cfg)
    _write(out, cfg, with_diagnostics=True)
    worst = max(r["trace_distance_to_oracle"] for r in out.series)
    print(f"max trace distance to oracle: {worst:.6g}", file=sys.stderr)
    return EXIT_OK


def cmd_validate(cfg, only=None):
    from .validation import run_validation

    results = run_validation(cfg, only)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_VALIDATION


def cmd_detailed_balance(cfg):
    from .experiments import detailed_balance_table, downward_upward_ratios

    rows, worst = detailed_balance_table(cfg)
    kT = cfg.consts.k_B * cfg.env.T_e
    print(f"model={cfg.model.name} dim={cfg.build_model().dim} k_B*T_e={kT:.12g}")
    print(f"{'m':>3} {'n':>3} {'E_n-E_m':>14} {'dir':>5} {'<m|Qt|n>/(a<m|Q|n>)':>22} {'(1+exp(dE/kT))/2':>20}")
    for r in rows:
        print(
            f"{r['m']:>3} {r['n']:>3} {r['E_n_minus_E_m']:>14.6g} {r['direction']:>5} "
            f"{r['factor']:>22.12g} {r['expected']:>20.12g}"
        )
    print("downward/upward factor ratios:")
    for m, n, ratio in downward_upward_ratios(rows):
        print(f"  {m}<->{n}: {ratio:.12g}")
    print(f"max relative deviation from the matrix-element formula: {worst:.3e}")
    if cfg.output.path:
        write_timeseries(rows, cfg.output.format, cfg.output.path, list(rows[0]) if rows else ["m", "n"])
    return EXIT_OK


COMMANDS = {
    "oracle": cmd_oracle,
    "unravel": cmd_unravel,
    "compare": cmd_compare,
    "detailed-balance": cmd_detailed_balance,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            if args.command == "validate":
                return cmd_validate(cfg, args.only)
            return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, OverflowError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OutputError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
