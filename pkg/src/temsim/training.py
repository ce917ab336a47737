"""Training and evaluation loops over the market environment.

One episode is one simulated day.  Every round all agents act, the market
clears, transitions are deposited, and each agent runs its own update on its
own schedule; nothing is shared between agents, so the loop order cannot leak
information across them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agents import BiddingAgent, feasibility_mask
from .env import MarketEnv, Observation, RoundResult


class NumericAbort(RuntimeError):
    """A non-finite reward or loss surfaced mid-run."""

    def __init__(self, message: str, snapshot: dict):
        super().__init__(message)
        self.snapshot = snapshot


@dataclass(frozen=True)
class TrainingRow:
    episode: int
    agent_id: str
    mean_reward: float
    critic_loss_mean: float | None
    sigma: float
    demotions: int


TRAINING_LOG_COLUMNS = ("episode", "agent_id", "mean_reward", "critic_loss_mean", "sigma", "demotions")


def _check_finite(value: float, what: str, snapshot: dict) -> None:
    if not math.isfinite(value):
        raise NumericAbort(f"non-finite {what}: {value}", snapshot)


def train(
    env: MarketEnv,
    agents: dict[str, BiddingAgent],
    episodes: int,
) -> list[TrainingRow]:
    """Run the concurrent learning loop; returns one log row per agent-episode.

    Zero episodes leave the agents untouched and return an empty log.
    """
    if set(agents) != set(env.agent_ids):
        raise ValueError("agents must match the environment's houses one-to-one")
    rows: list[TrainingRow] = []
    for episode in range(episodes):
        views = env.reset(day=episode)
        obs = {a: env.normalize(v.observation) for a, v in views.items()}
        masks = {a: feasibility_mask(v.feasible) for a, v in views.items()}
        private = {a: {"soc": v.soc, "net_load_kw": v.net_load_kw} for a, v in views.items()}
        rewards: dict[str, list[float]] = {a: [] for a in agents}
        losses: dict[str, list[float]] = {a: [] for a in agents}
        demotions: dict[str, int] = {a: 0 for a in agents}
        done = False
        while not done:
            actions = {
                a: agent.act(obs[a], masks[a], private[a], explore=True)
                for a, agent in agents.items()
            }
            result = env.step(actions)
            next_obs = {a: env.normalize(v.observation) for a, v in result.views.items()}
            next_masks = {a: feasibility_mask(v.feasible) for a, v in result.views.items()}
            next_private = {
                a: {"soc": v.soc, "net_load_kw": v.net_load_kw}
                for a, v in result.views.items()
            }
            for a, agent in agents.items():
                reward = result.rewards[a].total
                _check_finite(
                    reward,
                    "reward",
                    {"episode": episode, "round": result.round_index, "agent": a},
                )
                agent.observe(
                    obs[a],
                    actions[a],
                    result.records[a].side,
                    reward,
                    next_obs[a],
                    masks[a],
                    next_masks[a],
                    next_private[a],
                )
                rewards[a].append(reward)
                loss = agent.learn_if_due()
                if loss is not None:
                    _check_finite(
                        loss,
                        "critic loss",
                        {"episode": episode, "round": result.round_index, "agent": a},
                    )
                    losses[a].append(loss)
            for a in result.demoted:
                demotions[a] += 1
                agents[a].demotions += 1
            obs, masks, private = next_obs, next_masks, next_private
            done = result.done
        for a, agent in agents.items():
            rows.append(
                TrainingRow(
                    episode=episode,
                    agent_id=a,
                    mean_reward=float(np.mean(rewards[a])),
                    critic_loss_mean=float(np.mean(losses[a])) if losses[a] else None,
                    sigma=agent.current_sigma(),
                    demotions=demotions[a],
                )
            )
    return rows


@dataclass(frozen=True)
class EvalRound:
    """One evaluation round with the raw observations the agents acted on."""

    observations: dict[str, Observation]
    result: RoundResult


def evaluate(
    env: MarketEnv,
    agents: dict[str, BiddingAgent],
    days: int,
    start_day: int,
) -> list[EvalRound]:
    """Frozen-policy rollout: no exploration noise, no learning updates."""
    rounds: list[EvalRound] = []
    for day in range(start_day, start_day + days):
        views = env.reset(day=day)
        done = False
        while not done:
            raw_obs = {a: v.observation for a, v in views.items()}
            masks = {a: feasibility_mask(v.feasible) for a, v in views.items()}
            private = {a: {"soc": v.soc, "net_load_kw": v.net_load_kw} for a, v in views.items()}
            actions = {
                a: agent.act(env.normalize(raw_obs[a]), masks[a], private[a], explore=False)
                for a, agent in agents.items()
            }
            result = env.step(actions)
            rounds.append(EvalRound(observations=raw_obs, result=result))
            views = result.views
            done = result.done
    return rounds
