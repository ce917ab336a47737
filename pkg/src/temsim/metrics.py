"""Per-day evaluation metrics, computable from memory or from exported CSVs.

Both paths feed the same aggregation over identical row dicts, so metrics
recomputed from a run directory match the in-memory values bit for bit
(floats are serialized with full round-trip precision).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .env import RoundResult
from .market import Side


class MetricsError(ValueError):
    """Logs required for metrics are missing or malformed."""


@dataclass(frozen=True)
class MetricsRecord:
    day: int
    agent_id: str
    episode_reward: float
    price_gap: float | None  # None when the agent never submitted a bid
    energy_payment: float
    temperature_gap: float
    dispatch_ratio: float | None
    self_sufficiency: float


METRICS_COLUMNS = (
    "day",
    "agent_id",
    "episode_reward",
    "price_gap",
    "energy_payment",
    "temperature_gap",
    "dispatch_ratio",
    "self_sufficiency",
)

AGENT_ROUNDS_COLUMNS = (
    "round",
    "agent_id",
    "side",
    "demoted",
    "bid_price",
    "bid_kw",
    "dispatched_kw",
    "accepted",
    "clearing_price",
    "payment",
    "base_payment",
    "reward",
    "t_in",
    "t_set",
    "pv_kw",
    "base_kw",
    "hvac_kw",
    "charge_kw",
    "discharge_kw",
    "curtailed_kw",
    "grid_makeup_kw",
)


def rows_from_results(results: list[RoundResult]) -> list[dict]:
    """Flatten evaluation round results into per-agent-round metric rows."""
    rows = []
    for result in results:
        for agent_id, rec in result.records.items():
            rows.append(
                {
                    "round": result.round_index,
                    "agent_id": agent_id,
                    "side": rec.side.value,
                    "bid_price": rec.bid_price,
                    "bid_kw": rec.bid_kw,
                    "dispatched_kw": rec.dispatched_kw,
                    "clearing_price": result.clearing.clearing_price,
                    "payment": rec.payment,
                    "reward": rec.reward.total,
                    "t_in": rec.t_in_start,
                    "t_set": rec.t_set,
                }
            )
    return rows


def rows_from_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in AGENT_ROUNDS_COLUMNS:
            if col not in header:
                raise MetricsError(f"agent rounds CSV is missing column {col!r}")
        rows = []
        for raw in reader:
            rows.append(
                {
                    "round": int(raw["round"]),
                    "agent_id": raw["agent_id"],
                    "side": raw["side"],
                    "bid_price": float(raw["bid_price"]),
                    "bid_kw": float(raw["bid_kw"]),
                    "dispatched_kw": float(raw["dispatched_kw"]),
                    "clearing_price": float(raw["clearing_price"]),
                    "payment": float(raw["payment"]),
                    "reward": float(raw["reward"]),
                    "t_in": float(raw["t_in"]),
                    "t_set": float(raw["t_set"]),
                }
            )
    return rows


def _one_agent_day(day: int, agent_id: str, rows: list[dict]) -> MetricsRecord:
    submitted = [r for r in rows if r["side"] != Side.NON_PARTICIPANT.value]
    gaps = [abs(r["bid_price"] - r["clearing_price"]) for r in submitted]
    bid_total = math.fsum(r["bid_kw"] for r in submitted)
    buys = sum(1 for r in rows if r["side"] == Side.BUY.value)
    return MetricsRecord(
        day=day,
        agent_id=agent_id,
        episode_reward=math.fsum(r["reward"] for r in rows),
        price_gap=math.fsum(gaps) / len(gaps) if gaps else None,
        energy_payment=math.fsum(r["payment"] for r in rows),
        temperature_gap=math.fsum(abs(r["t_set"] - r["t_in"]) for r in rows) / len(rows),
        dispatch_ratio=(
            math.fsum(r["dispatched_kw"] for r in submitted) / bid_total
            if bid_total > 0.0
            else None
        ),
        self_sufficiency=1.0 - buys / len(rows),
    )


def _community_day(day: int, rows: list[dict], per_agent: list[MetricsRecord]) -> MetricsRecord:
    submitted = [r for r in rows if r["side"] != Side.NON_PARTICIPANT.value]
    gaps = [abs(r["bid_price"] - r["clearing_price"]) for r in submitted]
    bid_total = math.fsum(r["bid_kw"] for r in submitted)
    return MetricsRecord(
        day=day,
        agent_id="community",
        episode_reward=math.fsum(m.episode_reward for m in per_agent) / len(per_agent),
        price_gap=math.fsum(gaps) / len(gaps) if gaps else None,
        energy_payment=math.fsum(m.energy_payment for m in per_agent),
        temperature_gap=math.fsum(m.temperature_gap for m in per_agent) / len(per_agent),
        dispatch_ratio=(
            math.fsum(r["dispatched_kw"] for r in submitted) / bid_total
            if bid_total > 0.0
            else None
        ),
        self_sufficiency=math.fsum(m.self_sufficiency for m in per_agent) / len(per_agent),
    )


def aggregate_metrics(rows: list[dict], rounds_per_day: int) -> list[MetricsRecord]:
    """Per-day per-agent metrics plus one community row per day."""
    if not rows:
        raise MetricsError("no evaluation rows to aggregate")
    by_day: dict[int, dict[str, list[dict]]] = {}
    for row in rows:
        day = row["round"] // rounds_per_day
        by_day.setdefault(day, {}).setdefault(row["agent_id"], []).append(row)
    out: list[MetricsRecord] = []
    for day in sorted(by_day):
        agents = by_day[day]
        per_agent = [
            _one_agent_day(day, agent_id, agents[agent_id]) for agent_id in sorted(agents)
        ]
        day_rows = [r for rs in agents.values() for r in rs]
        out.extend(per_agent)
        out.append(_community_day(day, day_rows, per_agent))
    return out


def compute_metrics(run_dir: str | Path, rounds_per_day: int) -> list[MetricsRecord]:
    """Recompute the evaluation metrics from a run directory's CSV exports."""
    path = Path(run_dir) / "eval" / "agent_rounds.csv"
    if not path.exists():
        raise MetricsError(f"missing log {path}")
    return aggregate_metrics(rows_from_csv(path), rounds_per_day)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(path: str | Path, records: list[MetricsRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        for m in records:
            writer.writerow(
                [
                    m.day,
                    m.agent_id,
                    _cell(m.episode_reward),
                    _cell(m.price_gap),
                    _cell(m.energy_payment),
                    _cell(m.temperature_gap),
                    _cell(m.dispatch_ratio),
                    _cell(m.self_sufficiency),
                ]
            )


def read_metrics_csv(path: str | Path) -> list[MetricsRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        records = []
        for raw in reader:
            records.append(
                MetricsRecord(
                    day=int(raw["day"]),
                    agent_id=raw["agent_id"],
                    episode_reward=float(raw["episode_reward"]),
                    price_gap=float(raw["price_gap"]) if raw["price_gap"] else None,
                    energy_payment=float(raw["energy_payment"]),
                    temperature_gap=float(raw["temperature_gap"]),
                    dispatch_ratio=float(raw["dispatch_ratio"]) if raw["dispatch_ratio"] else None,
                    self_sufficiency=float(raw["self_sufficiency"]),
                )
            )
    return records
