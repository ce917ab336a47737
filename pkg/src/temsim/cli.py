"""Command-line interface.

Verbs: ``train``, ``evaluate``, ``metrics``, ``clear`` (one-shot auction
debugging), ``sweep``.  ``TEM_LOG`` controls verbosity.  Exit codes:
0 success, 2 configuration error, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import (
    PROFILES,
    ConfigError,
    SimulationConfig,
    load_config,
    require_valid,
)
from .harness import evaluate_run, export_logs, run_experiment
from .market import Bid, OrderBook, Side, clear_market, compute_statistics
from .metrics import compute_metrics, write_metrics_csv
from .training import NumericAbort

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3



def _setup_logging() -> None:
    level = os.environ.get("TEM_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _resolve_config(args) -> SimulationConfig:
    if args.config:
        config = load_config(args.config)
        if args.profile:
            preset = PROFILES[args.profile]()
            config = replace(
                config,
                n_houses=preset.n_houses,
                days_train=preset.days_train,
                days_test=preset.days_test,
                rounds_per_day=preset.rounds_per_day,
                hyperparams=preset.hyperparams,
            )
    else:
        config = PROFILES[args.profile or "desk"]()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "agent_kind", None):
        config = replace(config, agent_kind=args.agent_kind)
    return require_valid(config)


def _default_out(config: SimulationConfig) -> Path:
    return Path("runs") / f"{config.agent_kind}-seed{config.seed}"


def cmd_train(args) -> int:
    config = _resolve_config(args)
    out_dir = Path(args.out) if args.out else _default_out(config)
    manifest = run_experiment(config, out_dir)
    print(f"run complete: {out_dir} (config {manifest.config_hash[:12]})")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    records = evaluate_run(args.run)
    print(f"re-evaluated {args.run}: {len(records)} metric rows")
    return EXIT_OK


def cmd_metrics(args) -> int:
    run_dir = Path(args.run)
    config = load_config(run_dir / "config.yaml")
    records = compute_metrics(run_dir, config.rounds_per_day)
    write_metrics_csv(run_dir / "metrics.csv", records)
    header = ("day", "agent", "reward", "price_gap", "payment", "t_gap", "dispatch", "self_suff")
    print(("{:>5} {:>10} {:>10} {:>10} {:>10} {:>8} {:>9} {:>10}").format(*header))
    for m in records:
        print(
            "{:>5} {:>10} {:>10.4f} {:>10} {:>10.4f} {:>8.3f} {:>9} {:>10.3f}".format(
                m.day,
                m.agent_id,
                m.episode_reward,
                "-" if m.price_gap is None else f"{m.price_gap:.4f}",
                m.energy_payment,
                m.temperature_gap,
                "-" if m.dispatch_ratio is None else f"{m.dispatch_ratio:.3f}",
                m.self_sufficiency,
            )
        )
    return EXIT_OK


def cmd_clear(args) -> int:
    """Clear a one-shot order book from a CSV of bids."""
    bids = []
    with open(args.bids, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        needed = {"trader_id", "side", "price", "quantity"}
        missing = needed - set(reader.fieldnames or [])
        if missing:
            raise ConfigError([f"bids CSV is missing column(s) {sorted(missing)}"])
        for row in reader:
            side = {"buy": Side.BUY, "sell": Side.SELL, "none": Side.NON_PARTICIPANT}.get(
                row["side"].strip().lower()
            )
            if side is None:
                raise ConfigError([f"unknown side {row['side']!r} in bids CSV"])
            bids.append(Bid(row["trader_id"], side, float(row["price"]), float(row["quantity"])))
    book = OrderBook(
        round_index=0,
        bids=tuple(bids),
        supplier_offer=Bid("supplier", Side.SELL, args.supplier_price, args.supplier_capacity),
    )
    result = clear_market(book, fallback_price=args.fallback_price or args.supplier_price)
    stats = compute_statistics(book)
    print(
        json.dumps(
            {
                "clearing_price": result.clearing_price,
                "clearing_quantity": result.clearing_quantity,
                "dispatch": result.dispatch,
                "accepted": result.accepted,
                "stats": {
                    "seller_ratio": stats.seller_ratio,
                    "buyer_ratio": stats.buyer_ratio,
                    "total_sell_kw": stats.total_sell_kw,
                    "total_buy_kw": stats.total_buy_kw,
                    "mean_sell_price": stats.mean_sell_price,
                    "mean_buy_price": stats.mean_buy_price,
                    "std_sell_price": stats.std_sell_price,
                    "std_buy_price": stats.std_buy_price,
                },
            },
            indent=1,
            sort_keys=True,
        )
    )
    return EXIT_OK


def _parse_seed_range(spec: str) -> list[int]:
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in spec.split(",")]


def _sweep_one(config_path: str, profile: str | None, seed: int, out_root: str) -> str:
    args = argparse.Namespace(config=config_path, profile=profile, seed=seed, agent_kind=None)
    config = _resolve_config(args)
    out_dir = Path(out_root) / f"seed{seed}"
    run_experiment(config, out_dir)
    return str(out_dir)


def cmd_sweep(args) -> int:
    seeds = _parse_seed_range(args.seeds)
    out_root = args.out or "runs/sweep"
    with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
        futures = [
            pool.submit(_sweep_one, args.config, args.profile, seed, out_root) for seed in seeds
        ]
        for future in concurrent.futures.as_completed(futures):
            print(f"finished {future.result()}")
    return EXIT_OK


def cmd_export(args) -> int:
    written = export_logs(args.run, fmt=args.format)
    print(f"wrote {len(written)} files")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="temsim",
        description="Community double-auction energy market simulator with learning bidders.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_train = sub.add_parser("train", help="train agents and evaluate frozen policies")
    p_train.add_argument("--config", help="YAML configuration file")
    p_train.add_argument("--profile", choices=sorted(PROFILES), help="size preset")
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--agent-kind", dest="agent_kind")
    p_train.add_argument("--out", help="run directory (default runs/<kind>-seed<seed>)")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="re-run the frozen evaluation of a run")
    p_eval.add_argument("--run", required=True)
    p_eval.set_defaults(func=cmd_evaluate)

    p_metrics = sub.add_parser("metrics", help="recompute metrics from a run's CSV exports")
    p_metrics.add_argument("--run", required=True)
    p_metrics.set_defaults(func=cmd_metrics)

    p_clear = sub.add_parser("clear", help="clear one order book from a bids CSV")
    p_clear.add_argument("--bids", required=True)
    p_clear.add_argument("--supplier-price", type=float, required=True)
    p_clear.add_argument("--supplier-capacity", type=float, default=1000.0)
    p_clear.add_argument("--fallback-price", type=float, default=None)
    p_clear.set_defaults(func=cmd_clear)

    p_sweep = sub.add_parser("sweep", help="run independent seeds concurrently")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--profile", choices=sorted(PROFILES))
    p_sweep.add_argument("--seeds", required=True, help="range a..b or comma list")
    p_sweep.add_argument("--jobs", type=int, default=None)
    p_sweep.add_argument("--out", help="directory holding one run per seed")
    p_sweep.set_defaults(func=cmd_sweep)

    p_export = sub.add_parser("export", help="convert a run's CSV logs to JSON lines")
    p_export.add_argument("--run", required=True)
    p_export.add_argument("--format", default="jsonl", choices=["jsonl"])
    p_export.set_defaults(func=cmd_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericAbort as exc:
        print(f"numeric abort: {exc} (snapshot: {exc.snapshot})", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
