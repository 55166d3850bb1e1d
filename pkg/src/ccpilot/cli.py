"""``simulate`` command line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .allocation import write_assignment_csv
from .charting import write_chart_csv
from .config import ConfigError
from .harness import emit_summary, load_config, run_experiment

log = logging.getLogger("ccpilot")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="simulate",
        description="Monte Carlo pilot-reuse experiments (presets fig3..fig8 or config entries).")
    p.add_argument("--config", type=Path, default=None,
                   help="YAML file with 'system' overrides and 'experiments'")
    p.add_argument("--experiment", required=True, help="experiment name, e.g. fig8")
    p.add_argument("--seed", type=int, default=None, help="base seed (unsigned 64-bit)")
    p.add_argument("--trials", type=int, default=None, help="trials per deployment and axis point")
    p.add_argument("--deployments", type=int, default=None)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--dump-charts", action="store_true",
                   help="also write chart and assignment CSVs for every deployment/axis point")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        config, spec = load_config(args.config, args.experiment)
        charts = [] if args.dump_charts else None
        records = run_experiment(spec, config, seed=args.seed, trials=args.trials,
                                 deployments=args.deployments, threads=args.threads,
                                 out_dir=args.out, charts_out=charts)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if charts:
        for d, v, chart, assignments in charts:
            tag = f"{spec.name}_d{d}_{spec.axis}{float(v):g}"
            write_chart_csv(args.out / f"{tag}_chart.csv", chart)
            for method, assignment in assignments.items():
                write_assignment_csv(args.out / f"{tag}_{method}_pilots.csv", assignment)
    for row in emit_summary(records):
        print(f"{row['method']:>18s} {spec.axis}={row['axis_value']:<8g} "
              f"NMSE-CE {row['nmse_ce_db']:7.2f} dB  MSE-SD {row['mse_sd_mean']:.4f}  "
              f"SER {row['ser_mean']:.4f}  sum-rate {row['sum_rate_mean']:.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
