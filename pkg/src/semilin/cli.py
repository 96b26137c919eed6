"""Command line entry point: ``semilin {solve,study,kernel-check,catalog}``."""
from __future__ import annotations

import argparse
import logging
import sys

from .app import EXIT_INVALID, run_convergence_study, run_kernel_check, run_solve
from .config import ConfigError, parse_config
from .nonlinearity import builtin_catalog, truncate

log = logging.getLogger("semilin")


def _load(path):
    try:
        return parse_config(path)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
    return None


def cmd_solve(args) -> int:
    config = _load(args.config)
    if config is None:
        return EXIT_INVALID
    report = run_solve(config)
    print(f"{report.message}  [exit {report.exit_code}]")
    if report.solve is not None:
        print(f"  status={report.solve.status} iterations={report.solve.iterations} "
              f"residual={report.solve.final_residual:.3e}")
    print(f"  report: {config.output.report_json}")
    return report.exit_code


def cmd_study(args) -> int:
    config = _load(args.config)
    if config is None:
        return EXIT_INVALID
    if args.levels < 3:
        print("error: a convergence study needs at least 3 levels", file=sys.stderr)
        return EXIT_INVALID
    try:
        study = run_convergence_study(config, args.levels)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print("cells\th\tsup|u|\tdiff_to_next")
    for j, (c, h, s) in enumerate(zip(study.cells, study.h, study.sup_u)):
        d = f"{study.differences[j]:.3e}" if j < len(study.differences) else ""
        print(f"{'x'.join(map(str, c))}\t{h:.4g}\t{s:.6g}\t{d}")
    print("observed orders:", ", ".join(f"{p:.3f}" for p in study.orders))
    print(study.message)
    return study.exit_code


def cmd_kernel_check(args) -> int:
    config = _load(args.config)
    if config is None:
        return EXIT_INVALID
    ks = config.kernel
    try:
        report = run_kernel_check(
            config.domain,
            config.k,
            args.sources if args.sources is not None else ks.sources,
            args.slack if args.slack is not None else ks.slack,
            args.seed if args.seed is not None else ks.seed,
            output_dir=config.output.path,
            figures=config.output.figures,
        )
    except NotImplementedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for s in report.sources:
        print(f"source {s.source_index:>7d}  worst ratio {s.worst_ratio:.4f}  "
              f"min {s.min_value:.3e}  {'pass' if s.passed else 'FAIL'}")
    print(f"yukawa mass {report.yukawa_mass:.8f} vs 1/k^2 = {report.yukawa_mass_expected:.8f}  "
          f"{'pass' if report.yukawa_mass_ok else 'FAIL'}")
    return report.exit_code


def cmd_catalog(args) -> int:
    print("label\ta\tmu\tdiscontinuities")
    for f in builtin_catalog():
        discs = ", ".join(
            f"u={d.point:g} ({d.left_limit:g} | {d.right_limit:g})" for d in f.discontinuities
        ) or "-"
        print(f"{f.label}\t{f.threshold_a:.6g}\t{truncate(f).mu:.6g}\t{discs}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semilin", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve, certify and write outputs")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("study", help="grid self-convergence study")
    s.add_argument("--config", required=True)
    s.add_argument("--levels", type=int, default=4)
    s.set_defaults(func=cmd_study)

    s = sub.add_parser("kernel-check", help="discrete Green kernel vs Yukawa bound (3D)")
    s.add_argument("--config", required=True)
    s.add_argument("--sources", type=int)
    s.add_argument("--slack", type=float)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_kernel_check)

    s = sub.add_parser("catalog", help="list builtin nonlinearities")
    s.set_defaults(func=cmd_catalog)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
