"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 infeasible construction,
3 enumeration or alphabet budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .bcc import bcc_rate_triple
from .config import ConfigError, ExperimentConfig, construct, load_config, load_construction, save_construction
from .evaluation import (
    BccExperiment,
    BudgetExceeded,
    WiretapExperiment,
    config_digest,
    emit_report,
    exact_bcc_leakage,
    exact_leakage,
    leakage_proxy,
    run_reliability,
)
from .partition import InfeasiblePartition, build_baseline_partition, build_hy_partition, classify, save_partition
from .reliability import CapExceeded
from .wiretap import wiretap_rates

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_BUDGET = 0, 1, 2, 3


def _threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("POLARWIRE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"POLARWIRE_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _out_dir(cfg: ExperimentConfig, args) -> Path:
    out = Path(args.outdir) if getattr(args, "outdir", None) else Path(cfg.outputs)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _construction(cfg: ExperimentConfig, args):
    if getattr(args, "construction", None):
        return load_construction(cfg, args.construction)
    return construct(cfg)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def cmd_construct(cfg: ExperimentConfig, args) -> int:
    con = construct(cfg)
    stats_path = Path(args.out) if args.out else _out_dir(cfg, args) / "stats.json"
    for path in save_construction(con, stats_path):
        print(path)
    return EXIT_OK


def _require_feasible(partition) -> None:
    parts = partition if isinstance(partition, tuple) else (partition,)
    for p in parts:
        if hasattr(p, "feasible") and not p.feasible:
            raise InfeasiblePartition(f"|I| = {p.I.size} < |R2| = {p.R2.size}: the chain cannot be closed at N = {p.N}")


def cmd_simulate(cfg: ExperimentConfig, args, bcc: bool) -> int:
    if bcc != cfg.is_bcc:
        raise ConfigError(f"config spec type does not match {'simulate-bcc' if bcc else 'simulate-wiretap'}")
    con = _construction(cfg, args)
    _require_feasible(con.partition)
    trials = cfg.trials if args.trials is None else args.trials
    m, seed = cfg.params.m, cfg.params.master_seed
    if bcc:
        exp = BccExperiment(cfg.spec, con.partition, con.rules, m, seed)
    else:
        exp = WiretapExperiment(cfg.spec, con.partition, con.rules, m, seed)
    digest = config_digest({"config": cfg.to_json(), "trials": trials})
    report = run_reliability(exp, trials, _threads(args.threads), digest)
    base = Path(args.out) if args.out else _out_dir(cfg, args) / ("bcc_reliability" if bcc else "wiretap_reliability")
    base.parent.mkdir(parents=True, exist_ok=True)
    for path in emit_report(report, base):
        print(path)
    for row in report.rows():
        print(f"{row['receiver']}: {row['errors']}/{row['trials']} errors, rate {row['rate']:.4f} [{row['ci_lo']:.4f}, {row['ci_hi']:.4f}]")
    return EXIT_OK


def cmd_leakage(cfg: ExperimentConfig, args) -> int:
    con = _construction(cfg, args)
    _require_feasible(con.partition)
    if args.proxy:
        if cfg.is_bcc:
            report = leakage_proxy(con.stats[1], con.partition[1], observer="uz")
        else:
            report = leakage_proxy(con.stats, con.partition)
    elif cfg.is_bcc:
        report = exact_bcc_leakage(cfg.spec, con.partition, con.rules, cfg.leakage_budget)
    else:
        report = exact_leakage(cfg.spec, con.partition, con.rules, cfg.params.m, cfg.reveal_B_to_eve, budget=cfg.leakage_budget)
    base = Path(args.out) if args.out else _out_dir(cfg, args) / "leakage"
    base.parent.mkdir(parents=True, exist_ok=True)
    for path in emit_report(report, base):
        print(path)
    print(f"{report.method} {report.scope} = {report.value_bits:.6g} bits over {report.message_bits} message bits")
    if cfg.max_leakage_bits is not None and report.value_bits > cfg.max_leakage_bits:
        print(f"leakage exceeds max_leakage_bits = {cfg.max_leakage_bits}", file=sys.stderr)
    return EXIT_OK


def cmd_rates(cfg: ExperimentConfig, args) -> int:
    con = _construction(cfg, args)
    m = cfg.params.m
    if cfg.is_bcc:
        obj = bcc_rate_triple(con.partition, m, targets=cfg.spec.targets()).to_json()
    else:
        obj = wiretap_rates(con.partition, m, target=cfg.spec.secrecy_target()).to_json()
        obj["feasible"] = con.partition.feasible
    path = Path(args.out) if args.out else _out_dir(cfg, args) / "rates.json"
    _write_json(path, obj)
    print(json.dumps(obj, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_baselines(cfg: ExperimentConfig, args) -> int:
    if cfg.is_bcc:
        raise ConfigError("baselines need a wiretap spec")
    con = _construction(cfg, args)
    flags = classify(con.stats, cfg.params.delta_low, cfg.params.delta_high)
    parts = [con.partition] + [build_baseline_partition(k, flags) for k in ("mahdavifar", "sasoglu")]
    hy = build_hy_partition(flags)
    out = _out_dir(cfg, args)
    save_partition(parts, out / "baselines.json")
    summary = {
        "schema_version": 1,
        "partitions": {p.kind: {**p.sizes(), "message_rate": (p.I.size - p.E.size) / p.N} for p in parts},
        "honda_yamamoto": {"F_r": int(hy.F_r.size), "F_d": int(hy.F_d.size), "I": int(hy.I.size)},
    }
    _write_json(out / "baselines_summary.json", summary)
    print(json.dumps(summary, indent=1, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polarwire", description="Chained polar codes for wiretap and BCC channels.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help: str) -> None:
        p.add_argument("--config", required=True, help="experiment JSON config")
        p.add_argument("--out", help=out_help)
        p.add_argument("--outdir", help="output directory (default: config 'outputs')")
        p.add_argument("--threads", type=int, help="worker cap (fallback: POLARWIRE_THREADS)")

    p = sub.add_parser("construct", help="estimate statistics and build partitions")
    common(p, "stats.json path; partition.json goes alongside")
    for name in ("simulate-wiretap", "simulate-bcc"):
        p = sub.add_parser(name, help="Monte-Carlo reliability")
        common(p, "report path (CSV and JSON written side by side)")
        p.add_argument("--trials", type=int)
        p.add_argument("--construction", help="stats.json written by construct")
    p = sub.add_parser("leakage", help="exact or proxy leakage")
    common(p, "report path")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--exact", action="store_true", help="brute-force enumeration (default)")
    g.add_argument("--proxy", action="store_true", help="per-index heuristic")
    p.add_argument("--construction", help="stats.json written by construct")
    p = sub.add_parser("rates", help="rate accounting")
    common(p, "rates.json path")
    p.add_argument("--construction", help="stats.json written by construct")
    p = sub.add_parser("baselines", help="degraded-case baseline partitions")
    common(p, "unused")
    p.add_argument("--construction", help="stats.json written by construct")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        _threads(args.threads)
        if args.command == "construct":
            return cmd_construct(cfg, args)
        if args.command in ("simulate-wiretap", "simulate-bcc"):
            return cmd_simulate(cfg, args, args.command == "simulate-bcc")
        if args.command == "leakage":
            return cmd_leakage(cfg, args)
        if args.command == "rates":
            return cmd_rates(cfg, args)
        return cmd_baselines(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasiblePartition as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (BudgetExceeded, CapExceeded) as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
