"""Command-line experiment runner.

    cislp run CONFIG [--seed N] [--out PATH] [--threads N]
    cislp preset {fig2,fig3,fig4} [--seed N] [--out PATH] [--threads N]
    cislp validate [--quick] [--seed N] [--out PATH]
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, db2lin, load_config, load_preset
from .linksim import MetricsRecord, run_sweeps
from .validation import run_validation

log = logging.getLogger("cislp")


def csv_header(K: int) -> list[str]:
    return (["variable_db", "variable_linear", "order", "avg_tx_power", "avg_tx_power_db"]
            + [f"ser_user_{j}" for j in range(1, K + 1)]
            + [f"effective_rate_{j}" for j in range(1, K + 1)]
            + ["energy_efficiency", "ci_lower_bound", "n_fail"]
            + [f"ser_ci95_user_{j}" for j in range(1, K + 1)]
            + ["energy_efficiency_avg_ratio", "n_slots"])


def _num(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def csv_row(db: float, rec: MetricsRecord) -> list[str]:
    p_db = 10.0 * math.log10(rec.avg_tx_power) if rec.avg_tx_power > 0 else math.nan
    return ([_num(db), _num(rec.value), str(rec.order), _num(rec.avg_tx_power), _num(p_db)]
            + [_num(s) for s in rec.ser]
            + [_num(r) for r in rec.effective_rate]
            + [_num(rec.energy_efficiency), _num(rec.ci_lower_bound), str(rec.n_fail)]
            + [_num(h) for h in rec.ser_ci]
            + [_num(rec.energy_efficiency_avg_ratio), str(rec.n_slots)])


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> list[list[str]]:
    """Run every order of a sweep experiment; returns CSV rows with header."""
    grid_db = cfg.grid_db()
    grid = [float(v) for v in db2lin(grid_db)]
    rows = [csv_header(cfg.K)]
    log.info("%s: orders %s, %d grid points", cfg.experiment, cfg.orders, len(grid))
    per_order = run_sweeps([cfg.sim_config(o) for o in cfg.orders], cfg.sweep_variable,
                           grid, workers=threads)
    for records in per_order:
        for db, rec in zip(grid_db, records):
            rows.append(csv_row(db, rec))
    return rows


def write_csv(rows: list[list[str]], path) -> None:
    # fixed separator and line ending so reruns are byte-identical
    text = "".join(",".join(r) + "\n" for r in rows)
    Path(path).write_text(text, encoding="ascii")


def _do_validate(quick: bool, seed: int, out: str | None) -> int:
    checks = run_validation(quick=quick, seed=seed)
    lines = [c.line() for c in checks]
    for line in lines:
        print(line)
    if out:
        Path(out).write_text("\n".join(lines) + "\n")
    return 0 if all(c.passed for c in checks) else 1


def _dispatch(cfg: ExperimentConfig, args) -> int:
    cfg = cfg.with_overrides(seed=args.seed, output=args.out)
    if cfg.experiment == "validate":
        return _do_validate(cfg.quick, cfg.seed, args.out)
    rows = run_experiment(cfg, threads=args.threads)
    write_csv(rows, cfg.output)
    print(f"wrote {len(rows) - 1} rows to {cfg.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="output path (CSV or report)")
    common.add_argument("--threads", type=int, default=1,
                        help="worker processes; affects wall-clock time only")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="cislp",
        description="Symbol-level constructive-interference precoding experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", parents=[common], help="run a TOML experiment config")
    p_run.add_argument("config")
    p_pre = sub.add_parser("preset", parents=[common], help="run a shipped preset")
    p_pre.add_argument("name", choices=["fig2", "fig3", "fig4"])
    p_val = sub.add_parser("validate", parents=[common], help="run the invariant suite")
    p_val.add_argument("--quick", action="store_true", help="smaller instance counts")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        if args.command == "validate":
            return _do_validate(args.quick, 0 if args.seed is None else args.seed, args.out)
        if args.command == "preset":
            cfg = load_preset(args.name)
        else:
            cfg = load_config(args.config)
        return _dispatch(cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
