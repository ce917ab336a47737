"""Deterministic figure rendering from run-directory CSVs.

Every plotted series traces to a named CSV column; nothing is recomputed.
Output files are byte-stable: fixed figure geometry and dpi, Agg backend,
and stripped volatile metadata.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd
import yaml

# stable element ids in SVG output; without this every render differs
matplotlib.rcParams["svg.hashsalt"] = "temfigs"

FIGURE_IDS = ("rewards", "price_roles", "house_physics", "comparison_bars", "price_gap")

DPI = 120


class SchemaError(ValueError):
    """A required CSV column or file is missing; the message names it."""


@dataclass(frozen=True)
class FigureSpec:
    figure_id: str
    runs: tuple[Path, ...]
    out_path: Path
    title: str | None = None

    def __post_init__(self) -> None:
        if self.figure_id not in FIGURE_IDS:
            raise SchemaError(f"unknown figure id {self.figure_id!r}; choose from {FIGURE_IDS}")
        if not self.runs:
            raise SchemaError("at least one run directory is required")


def _require(frame: pd.DataFrame, columns: tuple[str, ...], what: str) -> None:
    for column in columns:
        if column not in frame.columns:
            raise SchemaError(f"{what} is missing column {column!r}")


def _read_csv(path: Path, columns: tuple[str, ...]) -> pd.DataFrame:
    if not path.exists():
        raise FileNotFoundError(f"missing log {path}")
    frame = pd.read_csv(path)
    _require(frame, columns, path.name)
    return frame


def run_label(run_dir: Path) -> str:
    config = run_dir / "config.yaml"
    if config.exists():
        data = yaml.safe_load(config.read_text())
        if isinstance(data, dict) and "agent_kind" in data:
            return f"{data['agent_kind']} (seed {data.get('seed', '?')})"
    return run_dir.name


def _save(fig, out_path: Path) -> None:
    out_path.parent.mkdir(parents=True, exist_ok=True)
    metadata = {"Date": None} if out_path.suffix == ".svg" else {"Software": None}
    fig.savefig(out_path, dpi=DPI, metadata=metadata)
    plt.close(fig)


def _rewards(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    for run in spec.runs:
        log = _read_csv(run / "training_log.csv", ("episode", "agent_id", "mean_reward"))
        if log.empty:
            continue
        mean = log.groupby("episode")["mean_reward"].mean()
        if len(spec.runs) == 1:
            for agent_id, group in log.groupby("agent_id"):
                ax.plot(group["episode"], group["mean_reward"], lw=0.5, alpha=0.35,
                        color="tab:gray")
        ax.plot(mean.index, mean.values, lw=1.8, label=run_label(run))
    ax.set_xlabel("episode")
    ax.set_ylabel("mean round reward per agent [$]")
    ax.set_title(spec.title or "training reward (training_log.csv: mean_reward)")
    ax.legend(loc="best", fontsize=8)
    return fig


MARKET_COLUMNS = ("round", "clearing_price", "m_s", "m_b", "supplier_price", "r_s", "r_b")


def _price_roles(spec: FigureSpec):
    fig, (ax_price, ax_roles) = plt.subplots(2, 1, figsize=(7.0, 5.5), sharex=True)
    for run in spec.runs:
        market = _read_csv(run / "eval" / "market_log.csv", MARKET_COLUMNS)
        suffix = f" [{run_label(run)}]" if len(spec.runs) > 1 else ""
        ax_price.plot(market["round"], market["clearing_price"], lw=1.2,
                      label="clearing_price" + suffix)
        ax_price.plot(market["round"], market["supplier_price"], lw=1.0, ls="--",
                      label="supplier_price" + suffix)
        buyers = market[market["m_b"] > 0.0]
        sellers = market[market["m_s"] > 0.0]
        ax_price.plot(buyers["round"], buyers["m_b"], ".", ms=2.5, label="m_b" + suffix)
        ax_price.plot(sellers["round"], sellers["m_s"], ".", ms=2.5, label="m_s" + suffix)
        ax_roles.plot(market["round"], market["r_b"], lw=1.0, label="r_b" + suffix)
        ax_roles.plot(market["round"], market["r_s"], lw=1.0, label="r_s" + suffix)
        ax_roles.plot(market["round"], 1.0 - market["r_s"] - market["r_b"], lw=1.0,
                      ls=":", label="non-participant" + suffix)
    ax_price.set_ylabel("$/kWh")
    ax_price.legend(loc="best", fontsize=7, ncol=2)
    ax_roles.set_ylabel("role ratio")
    ax_roles.set_xlabel("round")
    ax_roles.set_ylim(-0.02, 1.02)
    ax_roles.legend(loc="best", fontsize=7)
    fig.suptitle(spec.title or "prices and participant roles (market_log.csv)")
    return fig


HOUSE_COLUMNS = ("round", "t_in", "t_set", "t_out", "soc", "pv_kw", "base_kw", "hvac_kw")


def _house_physics(spec: FigureSpec):
    run = spec.runs[0]
    houses_dir = run / "eval" / "houses"
    if not houses_dir.exists():
        raise FileNotFoundError(f"missing log directory {houses_dir}")
    frames = [
        _read_csv(path, HOUSE_COLUMNS) for path in sorted(houses_dir.glob("*.csv"))
    ]
    if not frames:
        raise FileNotFoundError(f"no house CSVs under {houses_dir}")
    merged = pd.concat(frames).groupby("round").mean(numeric_only=True)

    fig, (ax_load, ax_temp, ax_soc) = plt.subplots(3, 1, figsize=(7.0, 7.0), sharex=True)
    ax_load.plot(merged.index, merged["base_kw"] + merged["hvac_kw"], label="base_kw + hvac_kw")
    ax_load.plot(merged.index, merged["pv_kw"], ls="--", label="pv_kw")
    ax_load.set_ylabel("kW (house mean)")
    ax_load.legend(loc="best", fontsize=8)
    ax_temp.plot(merged.index, merged["t_in"], label="t_in")
    ax_temp.plot(merged.index, merged["t_set"], ls="--", label="t_set")
    ax_temp.plot(merged.index, merged["t_out"], ls=":", label="t_out")
    ax_temp.set_ylabel("deg C")
    ax_temp.legend(loc="best", fontsize=8)
    ax_soc.plot(merged.index, merged["soc"], label="soc")
    ax_soc.set_ylabel("state of charge")
    ax_soc.set_xlabel("round")
    ax_soc.set_ylim(0.0, 1.0)
    ax_soc.legend(loc="best", fontsize=8)
    fig.suptitle(spec.title or f"house physics, mean over houses [{run_label(run)}]")
    return fig


METRIC_COLUMNS = (
    "day",
    "agent_id",
    "episode_reward",
    "price_gap",
    "energy_payment",
    "temperature_gap",
    "dispatch_ratio",
    "self_sufficiency",
)

BAR_METRICS = ("energy_payment", "temperature_gap", "dispatch_ratio", "self_sufficiency")


def _community(run: Path) -> pd.DataFrame:
    metrics = _read_csv(run / "metrics.csv", METRIC_COLUMNS)
    return metrics[metrics["agent_id"] == "community"]


def _comparison_bars(spec: FigureSpec):
    fig, axes = plt.subplots(2, 2, figsize=(8.0, 6.0))
    labels = [run_label(run) for run in spec.runs]
    for ax, metric in zip(axes.flat, BAR_METRICS):
        values = [_community(run)[metric].mean() for run in spec.runs]
        ax.bar(range(len(values)), values, color=[f"C{k}" for k in range(len(values))])
        ax.set_xticks(range(len(values)))
        ax.set_xticklabels(labels, rotation=20, fontsize=7, ha="right")
        ax.set_title(f"{metric} (test-day mean)", fontsize=9)
    fig.suptitle(spec.title or "model comparison (metrics.csv, community rows)")
    fig.tight_layout()
    return fig


def _price_gap(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    for run in spec.runs:
        community = _community(run)
        defined = community.dropna(subset=["price_gap"])
        ax.plot(defined["day"], defined["price_gap"], marker="o", ms=4,
                label=run_label(run))
    ax.set_xlabel("test day")
    ax.set_ylabel("price_gap [$/kWh]")
    ax.set_title(spec.title or "bid-to-clearing price gap (metrics.csv: price_gap)")
    ax.legend(loc="best", fontsize=8)
    return fig


_RENDERERS = {
    "rewards": _rewards,
    "price_roles": _price_roles,
    "house_physics": _house_physics,
    "comparison_bars": _comparison_bars,
    "price_gap": _price_gap,
}


def render(spec: FigureSpec) -> Path:
    """Render one figure to ``spec.out_path``; re-rendering is byte-identical."""
    fig = _RENDERERS[spec.figure_id](spec)
    _save(fig, spec.out_path)
    return spec.out_path
