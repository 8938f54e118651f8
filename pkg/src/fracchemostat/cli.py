"""Command-line driver.

Exit codes: 0 on success, 2 when a solve does not converge, 3 for an invalid
configuration.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, FracChemostatError, NumericalError
from .experiments import (
    CONVERGENCE_HEADER,
    SWEEP_HEADER,
    SWEEPABLE,
    RunConfig,
    pmp_check,
    residual_check,
    run_convergence,
    run_pipeline,
    run_sweep,
    run_verify,
    write_csv,
    write_solve_outputs,
)

EXIT_OK = 0
EXIT_NONCONVERGENCE = 2
EXIT_CONFIG = 3

log = logging.getLogger("fracchemostat")


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --values list: {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracchemostat",
        description="Periodic control of a fractional chemostat with sliding memory.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="key = value file (defaults: the test problem)")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--refine-switches", action="store_true",
                       help="refine switch times by coordinate search")
        return p

    add("solve", "optimise, correct, write profiles.csv and report.csv")
    sw = add("sweep", "one run per parameter value")
    sw.add_argument("--param", required=True, choices=SWEEPABLE)
    sw.add_argument("--values", required=True, help="comma-separated list")
    cv = add("convergence", "errors against a fine reference")
    cv.add_argument("--values", default="100,200,300", help="grid sizes")
    cv.add_argument("--reference", type=int, default=400)
    add("verify", "operator and model self-checks")
    add("pmp-check", "co-state and switching-function checks on a solved case")
    return parser


def _load(args) -> RunConfig:
    return RunConfig.from_file(args.config) if args.config else RunConfig()


def _cmd_solve(cfg, args) -> int:
    res = run_pipeline(cfg, refine=args.refine_switches)
    for path in write_solve_outputs(res):
        log.info("wrote %s", path)
    print(f"s_av = {res.s_av:.6f}  improvement = {res.improvement_pct:.2f}%  "
          f"switches = {', '.join(f'{x:.4f}' for x in res.switch_times) or 'none'}")
    return EXIT_OK if res.converged else EXIT_NONCONVERGENCE


def _cmd_sweep(cfg, args) -> int:
    rows, results = run_sweep(cfg, args.param, _parse_values(args.values),
                              workers=args.workers, refine=args.refine_switches)
    path = write_csv(Path(cfg.outdir) / f"sweep_{args.param}.csv", cfg, SWEEP_HEADER, rows)
    for row in rows:
        print(f"{args.param} = {row[1]:g}: s_av = {row[2]:.6f}, switches = {row[4]}")
    log.info("wrote %s", path)
    return EXIT_OK if all(r[-1] for r in rows) else EXIT_NONCONVERGENCE


def _cmd_convergence(cfg, args) -> int:
    Ns = [int(v) for v in _parse_values(args.values)]
    rows, _ = run_convergence(cfg, Ns, args.reference, workers=args.workers)
    path = write_csv(Path(cfg.outdir) / "convergence.csv", cfg, CONVERGENCE_HEADER, rows)
    for row in rows:
        print(f"N = {row[0]}: L2 error = {row[1]:.3e}, |dJ| = {row[2]:.3e}")
    log.info("wrote %s", path)
    return EXIT_OK


def _cmd_verify(cfg, args) -> int:
    checks = run_verify(cfg)
    rows = [(c.name, c.value, c.threshold,
             "info" if c.info else "pass" if c.passed else "fail") for c in checks]
    write_csv(Path(cfg.outdir) / "verify.csv", cfg,
              ("check", "value", "threshold", "status"), rows)
    for c in checks:
        print(c)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_NONCONVERGENCE


def _cmd_pmp(cfg, args) -> int:
    res = run_pipeline(cfg, refine=args.refine_switches)
    info = pmp_check(res)
    rs, rx = residual_check(res)
    rows = [(conv, key, val) for conv, d in info.items() for key, val in d.items()]
    rows += [("state", "residual_2d_s", rs), ("state", "residual_2d_x", rx)]
    write_csv(Path(cfg.outdir) / "pmp.csv", cfg, ("convention", "quantity", "value"), rows)
    for conv, d in info.items():
        print(f"[{conv}] residual {d['linear_residual']:.2e} "
              f"(quadrature {d['oracle_residual']:.2e}), "
              f"sign consistency {d['consistency']:.3f} "
              f"(flipped {d['consistency_flipped']:.3f}, "
              f"with multiplier {d['consistency_with_eta']:.3f})")
    return EXIT_OK if res.converged else EXIT_NONCONVERGENCE


COMMANDS = {
    "solve": _cmd_solve,
    "sweep": _cmd_sweep,
    "convergence": _cmd_convergence,
    "verify": _cmd_verify,
    "pmp-check": _cmd_pmp,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FracChemostatError) as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
