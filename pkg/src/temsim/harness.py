"""Experiment orchestration: build, train, evaluate, persist, verify.

A run directory is fully reconstructible from (config file, seed, code
version): training logs and checkpoints are byte-deterministic, and the
manifest records a checksum for every written file.
"""

from __future__ import annotations

import csv
import datetime
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .agents import BiddingAgent, Hyperparams, NoiseSchedule, make_agent
from .config import (
    SimulationConfig,
    config_hash,
    load_config,
    require_valid,
    save_config,
)
from .der import BatteryParams, HvacParams, PvArray, ValuationParams
from .env import (
    LEVEL_ZERO,
    ExogenousProfile,
    House,
    MarketEnv,
    RoundResult,
    generate_exogenous,
    load_exogenous_csv,
    write_exogenous_csv,
)
from .market import MARKET_LOG_COLUMNS, Side
from .metrics import (
    AGENT_ROUNDS_COLUMNS,
    MetricsRecord,
    aggregate_metrics,
    rows_from_results,
    write_metrics_csv,
)
from .training import (
    TRAINING_LOG_COLUMNS,
    EvalRound,
    NumericAbort,
    TrainingRow,
    evaluate,
    train,
)

log = logging.getLogger("temsim")

HOUSE_LOG_COLUMNS = (
    "round",
    "t_in",
    "t_set",
    "t_out",
    "soc",
    "pv_kw",
    "base_kw",
    "hvac_kw",
    "charge_kw",
    "discharge_kw",
)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bool):
        return str(int(value))
    return str(value)


def _write_csv(path: Path, columns, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


# ---------------------------------------------------------------------------
# World construction


def build_houses(config: SimulationConfig) -> list[House]:
    ranges = config.houses
    houses = []
    for i in range(config.n_houses):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 101, i]))
        n_panels = int(rng.integers(ranges.pv_panels[0], ranges.pv_panels[1] + 1))
        t_set = float(rng.uniform(*ranges.t_set_range))
        beta = float(rng.uniform(*ranges.beta_range))
        base_scale = float(rng.uniform(*ranges.base_scale_range))
        initial_soc = float(rng.uniform(*ranges.initial_soc_range))
        houses.append(
            House(
                house_id=f"house{i:02d}",
                battery=BatteryParams(
                    capacity_kwh=ranges.battery_capacity_kwh,
                    max_charge_kw=ranges.battery_rate_kw,
                    max_discharge_kw=ranges.battery_rate_kw,
                    charge_eff=ranges.charge_eff,
                    discharge_eff=ranges.discharge_eff,
                    soc_min=ranges.soc_range[0],
                    soc_max=ranges.soc_range[1],
                ),
                initial_soc=initial_soc,
                hvac=HvacParams(
                    rated_kw=ranges.hvac_rated_kw,
                    t_set=t_set,
                    t_lb=t_set - ranges.comfort_band_c,
                    t_ub=t_set + ranges.comfort_band_c,
                    t_max_dev=ranges.t_max_dev_c,
                    leak_per_h=ranges.leak_per_h,
                    cool_gain_c_per_kwh=ranges.cool_gain_c_per_kwh,
                    comfort_floor=ranges.comfort_floor,
                ),
                pv=PvArray(n_panels=n_panels, unit_kw=ranges.pv_unit_kw),
                valuation=ValuationParams(
                    beta=beta, cost_pv=ranges.cost_pv, cost_bat=ranges.cost_bat
                ),
                base_scale=base_scale,
            )
        )
    return houses


def build_profile(config: SimulationConfig) -> ExogenousProfile:
    if config.exogenous.source == "csv":
        profile = load_exogenous_csv(config.exogenous.csv_path)
        needed = config.total_days * config.rounds_per_day
        if len(profile) < needed:
            raise NumericAbort(
                f"exogenous CSV covers {len(profile)} rounds, need {needed}", {}
            )
        return profile
    return generate_exogenous(
        seed=config.seed,
        days=config.total_days,
        rounds_per_day=config.rounds_per_day,
        params=config.exogenous.params,
    )


def build_agents(config: SimulationConfig, houses: list[House]) -> dict[str, BiddingAgent]:
    total_steps = max(1, config.days_train * config.rounds_per_day)
    drop_every = max(1, config.noise.step_drop_every_episodes * config.rounds_per_day)
    noise_logit = NoiseSchedule(
        kind=config.noise.kind,
        sigma0=config.noise.sigma0_logit,
        sigma_min=config.noise.sigma_min,
        total_steps=total_steps,
        drop_every=drop_every,
        drop_ratio=config.noise.step_drop_ratio,
    )
    noise_price = NoiseSchedule(
        kind=config.noise.kind,
        sigma0=config.noise.sigma0_price,
        sigma_min=config.noise.sigma_min,
        total_steps=total_steps,
        drop_every=drop_every,
        drop_ratio=config.noise.step_drop_ratio,
    )
    return {
        house.house_id: make_agent(
            config.agent_kind,
            house.house_id,
            config.seed,
            i,
            config.hyperparams,
            noise_logit,
            noise_price,
        )
        for i, house in enumerate(houses)
    }


def build_env(config: SimulationConfig, houses: list[House], profile: ExogenousProfile) -> MarketEnv:
    return MarketEnv(
        houses,
        profile,
        rounds_per_day=config.rounds_per_day,
        price_cap=config.price_cap,
        supplier_capacity_kw=config.supplier_capacity_kw,
    )


# ---------------------------------------------------------------------------
# Log writers


def write_training_log(path: Path, rows: list[TrainingRow]) -> None:
    _write_csv(
        path,
        TRAINING_LOG_COLUMNS,
        (
            (
                r.episode,
                r.agent_id,
                r.mean_reward,
                "" if r.critic_loss_mean is None else repr(r.critic_loss_mean),
                r.sigma,
                r.demotions,
            )
            for r in rows
        ),
    )


def write_eval_logs(eval_dir: Path, eval_rounds: list[EvalRound], price_cap: float) -> None:
    """Write the evaluation window's market, house, transition, and round logs."""
    results = [er.result for er in eval_rounds]
    _write_csv(
        eval_dir / "market_log.csv",
        MARKET_LOG_COLUMNS,
        (
            (
                r.round_index,
                r.clearing.clearing_price,
                r.clearing.clearing_quantity,
                r.stats.seller_ratio,
                r.stats.buyer_ratio,
                r.stats.total_sell_kw,
                r.stats.total_buy_kw,
                r.stats.mean_sell_price,
                r.stats.mean_buy_price,
                r.stats.std_sell_price,
                r.stats.std_buy_price,
                r.supplier_price,
            )
            for r in results
        ),
    )

    agent_ids = sorted(results[0].records) if results else []
    for agent_id in agent_ids:
        _write_csv(
            eval_dir / "houses" / f"{agent_id}.csv",
            HOUSE_LOG_COLUMNS,
            (
                (
                    r.round_index,
                    rec.t_in_start,
                    rec.t_set,
                    rec.t_out,
                    rec.soc_start,
                    rec.pv_kw,
                    rec.base_kw,
                    rec.hvac_kw,
                    rec.charge_kw,
                    rec.discharge_kw,
                )
                for r in results
                for rec in [r.records[agent_id]]
            ),
        )

    obs_cols = [f"o{k}" for k in range(13)]
    next_cols = [f"n{k}" for k in range(13)]
    for agent_id in agent_ids:
        rows = []
        for er in eval_rounds:
            rec = er.result.records[agent_id]
            level = LEVEL_ZERO + int(round(rec.bid_kw)) * (
                1 if rec.side is Side.SELL else -1 if rec.side is Side.BUY else 0
            )
            if rec.side is Side.BUY:
                magnitude = (rec.bid_price - er.result.supplier_price) / (
                    price_cap - er.result.supplier_price
                )
            elif rec.side is Side.SELL:
                magnitude = rec.bid_price / er.result.supplier_price
            else:
                magnitude = 0.0
            obs = er.observations[agent_id].vector()
            nxt = er.result.views[agent_id].observation.vector()
            rows.append(
                [er.result.round_index]
                + [float(v) for v in obs]
                + [level, magnitude, rec.reward.total]
                + [float(v) for v in nxt]
            )
        _write_csv(
            eval_dir / "transitions" / f"agent_{agent_id}.csv",
            ["round"] + obs_cols + ["level", "price_magnitude", "reward"] + next_cols,
            rows,
        )

    _write_csv(
        eval_dir / "agent_rounds.csv",
        AGENT_ROUNDS_COLUMNS,
        (
            (
                r.round_index,
                rec.agent_id,
                rec.side.value,
                rec.demoted,
                rec.bid_price,
                rec.bid_kw,
                rec.dispatched_kw,
                rec.accepted,
                r.clearing.clearing_price,
                rec.payment,
                rec.base_payment,
                rec.reward.total,
                rec.t_in_start,
                rec.t_set,
                rec.pv_kw,
                rec.base_kw,
                rec.hvac_kw,
                rec.charge_kw,
                rec.discharge_kw,
                rec.curtailed_kw,
                rec.grid_makeup_kw,
            )
            for r in results
            for rec in [r.records[a] for a in sorted(r.records)]
        ),
    )


# ---------------------------------------------------------------------------
# Manifest


@dataclass(frozen=True)
class RunManifest:
    config_hash: str
    code_version: str
    seed: int
    started_at: str
    finished_at: str
    files: dict[str, str]  # relative path -> sha256


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _inventory(run_dir: Path) -> dict[str, str]:
    files = {}
    for path in sorted(run_dir.rglob("*")):
        if path.is_file() and path != run_dir / "manifest.json":
            files[path.relative_to(run_dir).as_posix()] = _sha256(path)
    return files


def write_manifest(run_dir: Path, manifest: RunManifest) -> None:
    with open(run_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "config_hash": manifest.config_hash,
                "code_version": manifest.code_version,
                "seed": manifest.seed,
                "started_at": manifest.started_at,
                "finished_at": manifest.finished_at,
                "files": manifest.files,
            },
            fh,
            indent=1,
            sort_keys=True,
        )
        fh.write("\n")


def load_manifest(run_dir: str | Path) -> RunManifest:
    with open(Path(run_dir) / "manifest.json", encoding="utf-8") as fh:
        data = json.load(fh)
    return RunManifest(**data)


def verify_manifest(run_dir: str | Path) -> bool:
    """Recompute checksums of every inventoried file; True when all match."""
    run_dir = Path(run_dir)
    manifest = load_manifest(run_dir)
    for rel, digest in manifest.files.items():
        path = run_dir / rel
        if not path.is_file() or _sha256(path) != digest:
            return False
    return True


# ---------------------------------------------------------------------------
# Experiment drivers


def run_experiment(config: SimulationConfig, out_dir: str | Path) -> RunManifest:
    """Train, freeze, evaluate, and persist one run; returns its manifest.

    With zero training days the evaluation exercises the untrained
    (randomly initialized) agents.
    """
    require_valid(config)
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()

    houses = build_houses(config)
    profile = build_profile(config)
    agents = build_agents(config, houses)
    env = build_env(config, houses, profile)

    save_config(run_dir / "config.yaml", config)
    write_exogenous_csv(run_dir / "exogenous.csv", profile)

    log.info("training %d episodes of %d rounds", config.days_train, config.rounds_per_day)
    try:
        rows = train(env, agents, episodes=config.days_train)
    except NumericAbort as abort:
        with open(run_dir / "abort_snapshot.json", "w", encoding="utf-8") as fh:
            json.dump({"error": str(abort), "snapshot": abort.snapshot}, fh, indent=1)
        raise
    write_training_log(run_dir / "training_log.csv", rows)

    for agent_id, agent in agents.items():
        agent.checkpoint(run_dir / "checkpoints" / "agents" / agent_id)

    log.info("evaluating %d frozen days", config.days_test)
    eval_rounds = evaluate(env, agents, days=config.days_test, start_day=config.days_train)
    write_eval_logs(run_dir / "eval", eval_rounds, config.price_cap)

    records = aggregate_metrics(
        rows_from_results([er.result for er in eval_rounds]), config.rounds_per_day
    )
    write_metrics_csv(run_dir / "metrics.csv", records)

    finished = datetime.datetime.now(datetime.timezone.utc).isoformat()
    manifest = RunManifest(
        config_hash=config_hash(config),
        code_version=__version__,
        seed=config.seed,
        started_at=started,
        finished_at=finished,
        files=_inventory(run_dir),
    )
    write_manifest(run_dir, manifest)
    return manifest


def evaluate_run(run_dir: str | Path) -> list[MetricsRecord]:
    """Re-run the frozen evaluation of a completed run from its checkpoints."""
    run_dir = Path(run_dir)
    config = require_valid(load_config(run_dir / "config.yaml"))
    houses = build_houses(config)
    profile = build_profile(config)
    agents = build_agents(config, houses)
    for agent_id, agent in agents.items():
        agent.restore(run_dir / "checkpoints" / "agents" / agent_id)
    env = build_env(config, houses, profile)
    eval_rounds = evaluate(env, agents, days=config.days_test, start_day=config.days_train)
    write_eval_logs(run_dir / "eval", eval_rounds, config.price_cap)
    records = aggregate_metrics(
        rows_from_results([er.result for er in eval_rounds]), config.rounds_per_day
    )
    write_metrics_csv(run_dir / "metrics.csv", records)
    manifest = load_manifest(run_dir)
    write_manifest(
        run_dir,
        RunManifest(
            config_hash=manifest.config_hash,
            code_version=manifest.code_version,
            seed=manifest.seed,
            started_at=manifest.started_at,
            finished_at=datetime.datetime.now(datetime.timezone.utc).isoformat(),
            files=_inventory(run_dir),
        ),
    )
    return records


def export_logs(run_dir: str | Path, fmt: str = "jsonl") -> list[Path]:
    """Convert the run's canonical CSVs to JSON-lines files alongside them."""
    if fmt != "jsonl":
        raise ValueError(f"unsupported export format {fmt!r}")
    run_dir = Path(run_dir)
    written = []
    for csv_path in sorted(run_dir.rglob("*.csv")):
        out_path = csv_path.with_suffix(".jsonl")
        with open(csv_path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            with open(out_path, "w", encoding="utf-8") as out:
                for row in reader:
                    typed = {}
                    for key, value in row.items():
                        if value == "":
                            typed[key] = None
                            continue
                        try:
                            typed[key] = float(value) if "." in value or "e" in value or "inf" in value else int(value)
                        except ValueError:
                            typed[key] = value
                    out.write(json.dumps(typed, sort_keys=True) + "\n")
        written.append(out_path)
    return written
