"""Concurrent deterministic-policy-gradient bidding agents and baselines.

Each prosumer owns four online networks (discrete quantity actor, selling and
buying price actors, critic), their slow-moving targets, an experience ring,
and private RNG streams.  The discrete head is made differentiable for the
critic by feeding the masked softmax probability vector; the environment
executes the argmax level.  Nothing is shared between agents.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .der import ContractViolation, QuantityRange
from .env import LEVEL_ZERO, N_LEVELS, OBSERVATION_SIZE, ActionPair, NON_PARTICIPATION
from .market import Side
from .neural import (
    AdamState,
    Head,
    Mlp,
    adam_init,
    adam_step,
    backward,
    clone_mlp,
    forward,
    init_mlp,
    load_tensors,
    mlp_from_tensors,
    mlp_tensors,
    save_tensors,
)

HIDDEN = 200
PRICE_ACTOR_IN = OBSERVATION_SIZE + N_LEVELS
CRITIC_IN = OBSERVATION_SIZE + N_LEVELS + 1

ROLE_NONE, ROLE_BUY, ROLE_SELL = 0, 1, 2
_ROLE_OF_SIDE = {Side.NON_PARTICIPANT: ROLE_NONE, Side.BUY: ROLE_BUY, Side.SELL: ROLE_SELL}


def side_code(side: Side) -> int:
    return _ROLE_OF_SIDE[side]


def feasibility_mask(feasible: QuantityRange) -> np.ndarray:
    """Boolean mask over the 21 quantity levels; 0 kW is always feasible."""
    kw = np.arange(N_LEVELS, dtype=np.float64) - LEVEL_ZERO
    mask = (kw >= feasible.q_min_kw - 1e-12) & (kw <= feasible.q_max_kw + 1e-12)
    mask[LEVEL_ZERO] = True
    return mask


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax with infeasible entries at exactly zero probability."""
    z = np.where(mask, logits, -np.inf)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def level_side(level: int) -> Side:
    if level > LEVEL_ZERO:
        return Side.SELL
    if level < LEVEL_ZERO:
        return Side.BUY
    return Side.NON_PARTICIPANT


def competitive_price_magnitude(side: Side) -> float:
    """Price that guarantees dispatch: pay the cap when buying, ask zero when selling."""
    if side is Side.BUY:
        return 1.0
    return 0.0


def uniform_feasible_level(mask: np.ndarray, rng: np.random.Generator) -> int:
    return int(rng.choice(np.flatnonzero(mask)))


# ---------------------------------------------------------------------------
# Hyperparameters and exploration noise


@dataclass(frozen=True)
class Hyperparams:
    lr_quantity: float = 1e-4
    lr_sell_price: float = 1e-4
    lr_buy_price: float = 1e-4
    lr_critic: float = 1e-4
    gamma: float = 0.9
    tau: float = 0.001
    batch_size: int = 64
    update_period: int = 4
    buffer_capacity: int = 100_000

    def __post_init__(self) -> None:
        if not (0.0 <= self.gamma < 1.0):
            raise ContractViolation("gamma must lie in [0, 1)")
        if not (0.0 < self.tau <= 1.0):
            raise ContractViolation("tau must lie in (0, 1]")
        if self.batch_size < 1 or self.update_period < 1 or self.buffer_capacity < 1:
            raise ContractViolation("batch size, update period, capacity must be >= 1")


@dataclass(frozen=True)
class NoiseSchedule:
    """Non-increasing exploration noise level over training steps."""

    kind: str = "quadratic"  # none | step | quadratic
    sigma0: float = 1.0
    sigma_min: float = 0.01
    total_steps: int = 1
    drop_every: int = 4800  # steps per decay notch for the step schedule
    drop_ratio: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in ("none", "step", "quadratic"):
            raise ContractViolation(f"unknown noise schedule {self.kind!r}")
        if self.sigma0 < 0.0 or self.sigma_min < 0.0 or not (0.0 < self.drop_ratio <= 1.0):
            raise ContractViolation("noise schedule parameters out of range")


def noise_value(schedule: NoiseSchedule, step: int) -> float:
    if step < 0:
        raise ContractViolation("step must be >= 0")
    if schedule.kind == "none":
        return schedule.sigma0
    if schedule.kind == "step":
        sigma = schedule.sigma0 * schedule.drop_ratio ** (step // schedule.drop_every)
        return max(schedule.sigma_min, sigma)
    frac = min(1.0, step / schedule.total_steps)
    return max(schedule.sigma_min, schedule.sigma0 * (1.0 - frac) ** 2)


# ---------------------------------------------------------------------------
# Replay buffer


class ReplayBuffer:
    """FIFO ring of transitions with uniform no-replacement batch sampling."""

    _FIELDS = (
        ("obs", OBSERVATION_SIZE, np.float64),
        ("probs", N_LEVELS, np.float64),
        ("price", 1, np.float64),
        ("role", 1, np.int8),
        ("reward", 1, np.float64),
        ("next_obs", OBSERVATION_SIZE, np.float64),
        ("mask", N_LEVELS, np.bool_),
        ("next_mask", N_LEVELS, np.bool_),
    )

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ContractViolation("capacity must be >= 1")
        self.capacity = capacity
        self._size = 0
        self._cursor = 0
        self._alloc = min(capacity, 1024)
        self._data = {
            name: np.zeros((self._alloc, width), dtype=dtype)
            for name, width, dtype in self._FIELDS
        }

    def __len__(self) -> int:
        return self._size

    def _grow_to(self, needed: int) -> None:
        new_alloc = self._alloc
        while new_alloc < needed:
            new_alloc = min(self.capacity, new_alloc * 2)
        for name in self._data:
            fresh = np.zeros((new_alloc, self._data[name].shape[1]), dtype=self._data[name].dtype)
            fresh[: self._size] = self._data[name][: self._size]
            self._data[name] = fresh
        self._alloc = new_alloc

    def push(
        self,
        obs: np.ndarray,
        probs: np.ndarray,
        price: float,
        role: int,
        reward: float,
        next_obs: np.ndarray,
        mask: np.ndarray,
        next_mask: np.ndarray,
    ) -> None:
        row = self._cursor
        if row >= self._alloc:
            self._grow_to(row + 1)
        self._data["obs"][row] = obs
        self._data["probs"][row] = probs
        self._data["price"][row, 0] = price
        self._data["role"][row, 0] = role
        self._data["reward"][row, 0] = reward
        self._data["next_obs"][row] = next_obs
        self._data["mask"][row] = mask
        self._data["next_mask"][row] = next_mask
        self._cursor = (self._cursor + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, n: int) -> dict[str, np.ndarray]:
        if n > self._size:
            raise ContractViolation(f"cannot sample {n} from {self._size} transitions")
        idx = rng.choice(self._size, size=n, replace=False)
        return {name: arr[idx] for name, arr in self._data.items()}


# ---------------------------------------------------------------------------
# Network bundle and learning steps


@dataclass
class AgentNetworks:
    mu_q: Mlp
    mu_sp: Mlp
    mu_bp: Mlp
    q: Mlp
    t_mu_q: Mlp
    t_mu_sp: Mlp
    t_mu_bp: Mlp
    t_q: Mlp
    adam_mu_q: AdamState
    adam_mu_sp: AdamState
    adam_mu_bp: AdamState
    adam_q: AdamState


def init_agent_networks(rng: np.random.Generator, hp: Hyperparams) -> AgentNetworks:
    """Fresh online networks with targets initialized equal to them."""
    mu_q = init_mlp((OBSERVATION_SIZE, HIDDEN, N_LEVELS), Head.LOG_SOFTMAX, rng)
    mu_sp = init_mlp((PRICE_ACTOR_IN, HIDDEN, 1), Head.TANH, rng)
    mu_bp = init_mlp((PRICE_ACTOR_IN, HIDDEN, 1), Head.TANH, rng)
    q = init_mlp((CRITIC_IN, HIDDEN, 1), Head.LINEAR, rng)
    return AgentNetworks(
        mu_q=mu_q,
        mu_sp=mu_sp,
        mu_bp=mu_bp,
        q=q,
        t_mu_q=clone_mlp(mu_q),
        t_mu_sp=clone_mlp(mu_sp),
        t_mu_bp=clone_mlp(mu_bp),
        t_q=clone_mlp(q),
        adam_mu_q=adam_init(mu_q.parameters(), alpha=hp.lr_quantity),
        adam_mu_sp=adam_init(mu_sp.parameters(), alpha=hp.lr_sell_price),
        adam_mu_bp=adam_init(mu_bp.parameters(), alpha=hp.lr_buy_price),
        adam_q=adam_init(q.parameters(), alpha=hp.lr_critic),
    )


def select_actions(
    nets: AgentNetworks,
    obs: np.ndarray,
    mask: np.ndarray,
    sigma_logit: float,
    sigma_price: float,
    rng: np.random.Generator,
) -> tuple[ActionPair, np.ndarray]:
    """Hybrid action: noisy masked quantity level plus the active role's price.

    Exploration noise perturbs the feasible logits; the price actor sees the
    resulting probability vector and its Tanh output is mapped to [0, 1] with
    clipped Gaussian noise.  Non-participation returns the (0, 0) pair.
    """
    logp, _ = forward(nets.mu_q, obs)
    if sigma_logit > 0.0:
        logp = logp + rng.normal(0.0, sigma_logit, size=N_LEVELS)
    probs = masked_softmax(logp, mask)
    level = int(np.argmax(probs))
    side = level_side(level)
    if side is Side.NON_PARTICIPANT:
        return NON_PARTICIPATION, probs
    actor = nets.mu_sp if side is Side.SELL else nets.mu_bp
    y, _ = forward(actor, np.concatenate([obs, probs]))
    magnitude = (float(y[0]) + 1.0) / 2.0
    if sigma_price > 0.0:
        magnitude += float(rng.normal(0.0, sigma_price))
    magnitude = min(1.0, max(0.0, magnitude))
    return ActionPair(quantity_level=level, price_magnitude=magnitude), probs


def _price_from_tanh(y: np.ndarray) -> np.ndarray:
    return np.clip((y + 1.0) / 2.0, 0.0, 1.0)


def _target_actions(
    nets: AgentNetworks, next_obs: np.ndarray, next_mask: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Greedy noiseless actions from the target actors, batched."""
    logp, _ = forward(nets.t_mu_q, next_obs)
    probs = masked_softmax(logp, next_mask)
    levels = np.argmax(np.where(next_mask, probs, -1.0), axis=1)
    roles = np.where(levels > LEVEL_ZERO, ROLE_SELL, np.where(levels < LEVEL_ZERO, ROLE_BUY, ROLE_NONE))
    x = np.concatenate([next_obs, probs], axis=1)
    sp, _ = forward(nets.t_mu_sp, x)
    bp, _ = forward(nets.t_mu_bp, x)
    price = np.where(
        roles[:, None] == ROLE_SELL,
        _price_from_tanh(sp),
        np.where(roles[:, None] == ROLE_BUY, _price_from_tanh(bp), 0.0),
    )
    return probs, price, roles


def update_critic(nets: AgentNetworks, batch: dict[str, np.ndarray], gamma: float) -> float:
    """One descent step on the mean squared temporal-difference error."""
    probs_next, price_next, _ = _target_actions(nets, batch["next_obs"], batch["next_mask"])
    x_next = np.concatenate([batch["next_obs"], probs_next, price_next], axis=1)
    q_next, _ = forward(nets.t_q, x_next)
    y = batch["reward"] + gamma * q_next

    x = np.concatenate([batch["obs"], batch["probs"], batch["price"]], axis=1)
    q_val, cache = forward(nets.q, x)
    err = q_val - y
    loss = float(np.mean(err**2))
    grads = backward(nets.q, cache, 2.0 * err / err.shape[0])
    adam_step(nets.adam_q, nets.q.parameters(), grads.parameters())
    return loss


def _role_priced(y_sp, y_bp, roles) -> np.ndarray:
    sell_rows = (roles == ROLE_SELL)[:, None]
    buy_rows = (roles == ROLE_BUY)[:, None]
    return np.where(sell_rows, (y_sp + 1.0) / 2.0, 0.0) + np.where(
        buy_rows, (y_bp + 1.0) / 2.0, 0.0
    )


def policy_value(nets: AgentNetworks, batch: dict[str, np.ndarray]) -> float:
    """Mean critic score of the fully recomputed (differentiable) actions."""
    obs, mask = batch["obs"], batch["mask"]
    roles = batch["role"][:, 0]
    logp, _ = forward(nets.mu_q, obs)
    probs = masked_softmax(logp, mask)
    x_price = np.concatenate([obs, probs], axis=1)
    y_sp, _ = forward(nets.mu_sp, x_price)
    y_bp, _ = forward(nets.mu_bp, x_price)
    price = _role_priced(y_sp, y_bp, roles)
    q_val, _ = forward(nets.q, np.concatenate([obs, probs, price], axis=1))
    return float(np.mean(q_val))


def policy_value_stored_probs(nets: AgentNetworks, batch: dict[str, np.ndarray]) -> float:
    """Mean critic score with behavior probabilities and recomputed prices."""
    obs, roles = batch["obs"], batch["role"][:, 0]
    x_price = np.concatenate([obs, batch["probs"]], axis=1)
    y_sp, _ = forward(nets.mu_sp, x_price)
    y_bp, _ = forward(nets.mu_bp, x_price)
    price = _role_priced(y_sp, y_bp, roles)
    q_val, _ = forward(nets.q, np.concatenate([obs, batch["probs"], price], axis=1))
    return float(np.mean(q_val))


def actor_gradients(
    nets: AgentNetworks, batch: dict[str, np.ndarray]
) -> tuple[dict[str, list[np.ndarray]], dict[str, bool]]:
    """Ascent gradients for the three actors, role-partitioned.

    The price actors are evaluated at the stored (behavior) probability
    vectors, where the critic's price slope is calibrated: evaluating them at
    the recomputed vector lets a quantity policy that stopped trading starve
    the price actors of meaningful gradient and lock the collapse in.  The
    quantity actor uses the full differentiable recompute: masked softmax
    probabilities feed the price actors and the critic, and the critic's
    action-input gradient is chained back through both paths.
    """
    obs, mask = batch["obs"], batch["mask"]
    roles = batch["role"][:, 0]
    n = obs.shape[0]
    sell_rows = (roles == ROLE_SELL)[:, None]
    buy_rows = (roles == ROLE_BUY)[:, None]
    grads: dict[str, list[np.ndarray]] = {}
    active = {"mu_q": True, "mu_sp": bool(sell_rows.any()), "mu_bp": bool(buy_rows.any())}

    # price-actor pass at the stored probability vectors
    x_stored = np.concatenate([obs, batch["probs"]], axis=1)
    y_sp_s, cache_sp = forward(nets.mu_sp, x_stored)
    y_bp_s, cache_bp = forward(nets.mu_bp, x_stored)
    price_s = _role_priced(y_sp_s, y_bp_s, roles)
    _, cache_cs = forward(nets.q, np.concatenate([obs, batch["probs"], price_s], axis=1))
    g_price_s = backward(nets.q, cache_cs, np.full((n, 1), 1.0 / n)).input_grad[:, -1:]
    for name, actor, cache, rows in (
        ("mu_sp", nets.mu_sp, cache_sp, sell_rows),
        ("mu_bp", nets.mu_bp, cache_bp, buy_rows),
    ):
        if not active[name]:
            grads[name] = [np.zeros_like(p) for p in actor.parameters()]
            continue
        rec = backward(actor, cache, np.where(rows, g_price_s * 0.5, 0.0))
        grads[name] = rec.parameters()

    # quantity-actor pass with fully recomputed actions
    logp, cache_q = forward(nets.mu_q, obs)
    probs = masked_softmax(logp, mask)
    x_price = np.concatenate([obs, probs], axis=1)
    y_sp, cache_sp2 = forward(nets.mu_sp, x_price)
    y_bp, cache_bp2 = forward(nets.mu_bp, x_price)
    price = _role_priced(y_sp, y_bp, roles)
    _, cache_c = forward(nets.q, np.concatenate([obs, probs, price], axis=1))
    critic_grad = backward(nets.q, cache_c, np.full((n, 1), 1.0 / n))
    g_probs = critic_grad.input_grad[:, OBSERVATION_SIZE : OBSERVATION_SIZE + N_LEVELS].copy()
    g_price = critic_grad.input_grad[:, -1:]
    # the critic also sees the probability vector through the price actors
    for actor, cache, rows in ((nets.mu_sp, cache_sp2, sell_rows), (nets.mu_bp, cache_bp2, buy_rows)):
        if rows.any():
            rec = backward(actor, cache, np.where(rows, g_price * 0.5, 0.0))
            g_probs += np.where(rows, rec.input_grad[:, OBSERVATION_SIZE:], 0.0)

    # chain through the masked softmax: d/dlogit_j = p_j (g_j - sum_k p_k g_k)
    inner = (probs * g_probs).sum(axis=1, keepdims=True)
    g_logp = probs * (g_probs - inner)
    grads["mu_q"] = backward(nets.mu_q, cache_q, g_logp).parameters()
    return grads, active


def update_actors(nets: AgentNetworks, batch: dict[str, np.ndarray]) -> dict[str, float]:
    """One ascent step per actor; roles absent from the batch skip their actor."""
    grads, active = actor_gradients(nets, batch)
    adam_of = {"mu_q": nets.adam_mu_q, "mu_sp": nets.adam_mu_sp, "mu_bp": nets.adam_mu_bp}
    norms: dict[str, float] = {}
    for name, gs in grads.items():
        norms[name] = float(np.sqrt(sum(float(np.sum(g * g)) for g in gs)))
        if active[name]:
            adam_step(adam_of[name], getattr(nets, name).parameters(), gs, maximize=True)
    return norms


def soft_update_targets(nets: AgentNetworks, tau: float) -> None:
    """Blend every target network toward its online twin: t <- tau*o + (1-tau)*t."""
    if not (0.0 < tau <= 1.0):
        raise ContractViolation("tau must lie in (0, 1]")
    for online, target in (
        (nets.mu_q, nets.t_mu_q),
        (nets.mu_sp, nets.t_mu_sp),
        (nets.mu_bp, nets.t_mu_bp),
        (nets.q, nets.t_q),
    ):
        for p, t in zip(online.parameters(), target.parameters()):
            t *= 1.0 - tau
            t += tau * p


# ---------------------------------------------------------------------------
# Agents


_HEADS = {
    "mu_q": Head.LOG_SOFTMAX,
    "mu_sp": Head.TANH,
    "mu_bp": Head.TANH,
    "q": Head.LINEAR,
    "t_mu_q": Head.LOG_SOFTMAX,
    "t_mu_sp": Head.TANH,
    "t_mu_bp": Head.TANH,
    "t_q": Head.LINEAR,
}


def _agent_rngs(seed: int, agent_index: int) -> dict[str, np.random.Generator]:
    return {
        name: np.random.default_rng(np.random.SeedSequence([seed, agent_index, k]))
        for k, name in enumerate(("init", "explore", "sample"))
    }


class BiddingAgent:
    """Interface shared by the proposed agent and the comparison policies."""

    kind = "abstract"
    trains = False

    def __init__(self, agent_id: str, seed: int, agent_index: int):
        self.agent_id = agent_id
        self._rngs = _agent_rngs(seed, agent_index)
        self.explore_steps = 0
        self.demotions = 0

    def act(self, obs: np.ndarray, mask: np.ndarray, private: dict, explore: bool) -> ActionPair:
        raise NotImplementedError

    def current_sigma(self) -> float:
        return 0.0

    def observe(
        self,
        obs: np.ndarray,
        action: ActionPair,
        executed_side: Side,
        reward: float,
        next_obs: np.ndarray,
        mask: np.ndarray,
        next_mask: np.ndarray,
        next_private: dict | None = None,
    ) -> None:
        pass

    def learn_if_due(self) -> float | None:
        """Run a learning update when the agent's schedule says so."""
        return None

    def checkpoint(self, directory: str | Path) -> None:
        save_tensors(directory, self._tensors(), self._meta())

    def restore(self, directory: str | Path) -> None:
        tensors, meta = load_tensors(directory)
        self._load(tensors, meta)

    # -- checkpoint internals ------------------------------------------------

    def _tensors(self) -> dict[str, np.ndarray]:
        return {}

    def _meta(self) -> dict:
        return {
            "kind": self.kind,
            "agent_id": self.agent_id,
            "explore_steps": self.explore_steps,
            "rng": {name: rng.bit_generator.state for name, rng in self._rngs.items()},
        }

    def _load(self, tensors: dict[str, np.ndarray], meta: dict) -> None:
        if meta["kind"] != self.kind:
            raise ContractViolation(
                f"checkpoint kind {meta['kind']!r} does not match agent kind {self.kind!r}"
            )
        self.explore_steps = meta["explore_steps"]
        for name, state in meta["rng"].items():
            self._rngs[name].bit_generator.state = state


class RandomAgent(BiddingAgent):
    """Uniform feasible quantity, uniform price magnitude in [0, 1]."""

    kind = "random"

    def act(self, obs, mask, private, explore):
        rng = self._rngs["explore"]
        level = uniform_feasible_level(mask, rng)
        if level == LEVEL_ZERO:
            return NON_PARTICIPATION
        return ActionPair(level, float(rng.uniform()))


class _ReplayAgentBase(BiddingAgent):
    """Shared replay/update plumbing for the network-based agents."""

    trains = True

    def __init__(self, agent_id, seed, agent_index, hp: Hyperparams,
                 noise_logit: NoiseSchedule, noise_price: NoiseSchedule):
        super().__init__(agent_id, seed, agent_index)
        self.hp = hp
        self.noise_logit = noise_logit
        self.noise_price = noise_price
        self.buffer = ReplayBuffer(hp.buffer_capacity)
        self.nets = init_agent_networks(self._rngs["init"], hp)
        self._last_probs = np.zeros(N_LEVELS)
        self._round_counter = 0

    def sigma(self) -> tuple[float, float]:
        return (
            noise_value(self.noise_logit, self.explore_steps),
            noise_value(self.noise_price, self.explore_steps),
        )

    def current_sigma(self) -> float:
        return noise_value(self.noise_logit, self.explore_steps)

    def observe(self, obs, action, executed_side, reward, next_obs, mask, next_mask,
                next_private=None):
        price = action.price_magnitude if executed_side is not Side.NON_PARTICIPANT else 0.0
        self.buffer.push(
            obs,
            self._last_probs,
            price,
            side_code(executed_side),
            reward,
            next_obs,
            mask,
            next_mask,
        )
        self._round_counter += 1

    def learn_if_due(self) -> float | None:
        if self._round_counter % self.hp.update_period != 0:
            return None
        if len(self.buffer) < self.hp.batch_size:
            return None
        batch = self.buffer.sample(self._rngs["sample"], self.hp.batch_size)
        loss = update_critic(self.nets, batch, self.hp.gamma)
        self._update_actors(batch)
        soft_update_targets(self.nets, self.hp.tau)
        return loss

    def _update_actors(self, batch) -> None:
        update_actors(self.nets, batch)

    def _tensors(self):
        out = {}
        for name in ("mu_q", "mu_sp", "mu_bp", "q", "t_mu_q", "t_mu_sp", "t_mu_bp", "t_q"):
            out.update(mlp_tensors(getattr(self.nets, name), name))
        for name in ("adam_mu_q", "adam_mu_sp", "adam_mu_bp", "adam_q"):
            state: AdamState = getattr(self.nets, name)
            for k, (m, v) in enumerate(zip(state.m, state.v)):
                out[f"{name}.m{k}"] = m
                out[f"{name}.v{k}"] = v
        return out

    def _meta(self):
        meta = super()._meta()
        meta["adam_steps"] = {
            name: getattr(self.nets, name).step
            for name in ("adam_mu_q", "adam_mu_sp", "adam_mu_bp", "adam_q")
        }
        meta["round_counter"] = self._round_counter
        return meta

    def _load(self, tensors, meta):
        super()._load(tensors, meta)
        for name in ("mu_q", "mu_sp", "mu_bp", "q", "t_mu_q", "t_mu_sp", "t_mu_bp", "t_q"):
            setattr(self.nets, name, mlp_from_tensors(tensors, name, _HEADS[name]))
        for name in ("adam_mu_q", "adam_mu_sp", "adam_mu_bp", "adam_q"):
            state: AdamState = getattr(self.nets, name)
            net = getattr(self.nets, name.removeprefix("adam_"))
            state.m = [tensors[f"{name}.m{k}"].copy() for k in range(len(net.parameters()))]
            state.v = [tensors[f"{name}.v{k}"].copy() for k in range(len(net.parameters()))]
            state.step = meta["adam_steps"][name]
        self._round_counter = meta["round_counter"]


class ProposedAgent(_ReplayAgentBase):
    """Hybrid quantity+price bidder trained with concurrent DDPG."""

    kind = "proposed"

    def act(self, obs, mask, private, explore):
        s_logit, s_price = self.sigma() if explore else (0.0, 0.0)
        if explore:
            self.explore_steps += 1
        action, probs = select_actions(
            self.nets, obs, mask, s_logit, s_price, self._rngs["explore"]
        )
        self._last_probs = probs
        return action


class DdpgQuantityAgent(_ReplayAgentBase):
    """Learns the quantity only; prices are fixed competitive."""

    kind = "ddpg_quantity"

    def act(self, obs, mask, private, explore):
        s_logit, _ = self.sigma() if explore else (0.0, 0.0)
        if explore:
            self.explore_steps += 1
        logp, _ = forward(self.nets.mu_q, obs)
        if s_logit > 0.0:
            logp = logp + self._rngs["explore"].normal(0.0, s_logit, size=N_LEVELS)
        probs = masked_softmax(logp, mask)
        self._last_probs = probs
        level = int(np.argmax(probs))
        side = level_side(level)
        if side is Side.NON_PARTICIPANT:
            return NON_PARTICIPATION
        return ActionPair(level, competitive_price_magnitude(side))

    def _update_actors(self, batch) -> None:
        # price is a fixed step function of the role: only the probability
        # path carries gradient into the quantity actor
        obs, mask = batch["obs"], batch["mask"]
        n = obs.shape[0]
        logp, cache_q = forward(self.nets.mu_q, obs)
        probs = masked_softmax(logp, mask)
        x_critic = np.concatenate([obs, probs, batch["price"]], axis=1)
        _, cache_c = forward(self.nets.q, x_critic)
        grad = backward(self.nets.q, cache_c, np.full((n, 1), 1.0 / n))
        g_probs = grad.input_grad[:, OBSERVATION_SIZE : OBSERVATION_SIZE + N_LEVELS]
        inner = (probs * g_probs).sum(axis=1, keepdims=True)
        g_logp = probs * (g_probs - inner)
        rec = backward(self.nets.mu_q, cache_q, g_logp)
        adam_step(self.nets.adam_mu_q, self.nets.mu_q.parameters(), rec.parameters(), maximize=True)


class DdpgPriceAgent(_ReplayAgentBase):
    """Learns the two price actors; quantities drawn uniformly feasible."""

    kind = "ddpg_price"

    def act(self, obs, mask, private, explore):
        _, s_price = self.sigma() if explore else (0.0, 0.0)
        if explore:
            self.explore_steps += 1
        rng = self._rngs["explore"]
        level = uniform_feasible_level(mask, rng)
        probs = np.zeros(N_LEVELS)
        probs[level] = 1.0
        self._last_probs = probs
        side = level_side(level)
        if side is Side.NON_PARTICIPANT:
            return NON_PARTICIPATION
        actor = self.nets.mu_sp if side is Side.SELL else self.nets.mu_bp
        y, _ = forward(actor, np.concatenate([obs, probs]))
        magnitude = (float(y[0]) + 1.0) / 2.0
        if s_price > 0.0:
            magnitude += float(rng.normal(0.0, s_price))
        return ActionPair(level, min(1.0, max(0.0, magnitude)))

    def _update_actors(self, batch) -> None:
        obs = batch["obs"]
        roles = batch["role"][:, 0]
        n = obs.shape[0]
        x_price = np.concatenate([obs, batch["probs"]], axis=1)
        y_sp, cache_sp = forward(self.nets.mu_sp, x_price)
        y_bp, cache_bp = forward(self.nets.mu_bp, x_price)
        sell_rows = (roles == ROLE_SELL)[:, None]
        buy_rows = (roles == ROLE_BUY)[:, None]
        price = np.where(sell_rows, (y_sp + 1.0) / 2.0, 0.0) + np.where(
            buy_rows, (y_bp + 1.0) / 2.0, 0.0
        )
        x_critic = np.concatenate([obs, batch["probs"], price], axis=1)
        _, cache_c = forward(self.nets.q, x_critic)
        grad = backward(self.nets.q, cache_c, np.full((n, 1), 1.0 / n))
        g_price = grad.input_grad[:, -1:]
        for actor, cache, rows, adam in (
            (self.nets.mu_sp, cache_sp, sell_rows, self.nets.adam_mu_sp),
            (self.nets.mu_bp, cache_bp, buy_rows, self.nets.adam_mu_bp),
        ):
            if not rows.any():
                continue
            rec = backward(actor, cache, np.where(rows, g_price * 0.5, 0.0))
            adam_step(adam, actor.parameters(), rec.parameters(), maximize=True)


class QLearningPriceAgent(BiddingAgent):
    """Tabular price bidder: 40 discretized states x 10 price bins.

    State = (previous clearing price in 5 bins, SOC in 4 bins, sign of net
    load); quantities are drawn uniformly feasible; greedy ties resolve to
    the lowest-index bin.
    """

    kind = "qlearning_price"
    N_STATES = 40
    N_PRICE_BINS = 10

    def __init__(self, agent_id, seed, agent_index, alpha=0.1, epsilon=0.1, gamma=0.9):
        super().__init__(agent_id, seed, agent_index)
        self.alpha = alpha
        self.epsilon = epsilon
        self.gamma = gamma
        self.table = np.zeros((self.N_STATES, self.N_PRICE_BINS))
        self._pending: tuple[int, int] | None = None

    @staticmethod
    def state_index(obs: np.ndarray, private: dict) -> int:
        price_bin = min(4, int(max(0.0, obs[0]) * 5))
        soc_bin = min(3, int(max(0.0, private["soc"]) * 4))
        net_bin = 1 if private["net_load_kw"] > 0.0 else 0
        return price_bin * 8 + soc_bin * 2 + net_bin

    def act(self, obs, mask, private, explore):
        rng = self._rngs["explore"]
        level = uniform_feasible_level(mask, rng)
        if level == LEVEL_ZERO:
            self._pending = None
            return NON_PARTICIPATION
        state = self.state_index(obs, private)
        if explore and rng.uniform() < self.epsilon:
            bin_ = int(rng.integers(self.N_PRICE_BINS))
        else:
            bin_ = int(np.argmax(self.table[state]))
        self._pending = (state, bin_)
        return ActionPair(level, (bin_ + 0.5) / self.N_PRICE_BINS)

    def observe(self, obs, action, executed_side, reward, next_obs, mask, next_mask,
                next_private=None):
        if self._pending is None or executed_side is Side.NON_PARTICIPANT:
            return
        state, bin_ = self._pending
        if next_private is None:
            # fall back on the stored-energy observation as a SOC proxy
            next_private = {"soc": min(1.0, next_obs[10]), "net_load_kw": next_obs[11] - next_obs[10]}
        next_state = self.state_index(next_obs, next_private)
        target = reward + self.gamma * float(np.max(self.table[next_state]))
        self.table[state, bin_] += self.alpha * (target - self.table[state, bin_])

    def _tensors(self):
        return {"qtable": self.table}

    def _load(self, tensors, meta):
        super()._load(tensors, meta)
        self.table = tensors["qtable"].copy()


AGENT_KINDS = {
    "proposed": ProposedAgent,
    "random": RandomAgent,
    "qlearning_price": QLearningPriceAgent,
    "ddpg_price": DdpgPriceAgent,
    "ddpg_quantity": DdpgQuantityAgent,
}


def make_agent(
    kind: str,
    agent_id: str,
    seed: int,
    agent_index: int,
    hp: Hyperparams,
    noise_logit: NoiseSchedule,
    noise_price: NoiseSchedule,
) -> BiddingAgent:
    if kind not in AGENT_KINDS:
        raise ContractViolation(f"unknown agent kind {kind!r}")
    cls = AGENT_KINDS[kind]
    if issubclass(cls, _ReplayAgentBase):
        return cls(agent_id, seed, agent_index, hp, noise_logit, noise_price)
    if cls is QLearningPriceAgent:
        return cls(agent_id, seed, agent_index, gamma=hp.gamma)
    return cls(agent_id, seed, agent_index)


def baseline_policy(
    kind: str,
    obs: np.ndarray,
    mask: np.ndarray,
    agent: BiddingAgent,
    private: dict | None = None,
    explore: bool = False,
) -> ActionPair:
    """One comparison-policy action; ``agent`` carries the policy's state."""
    if kind not in AGENT_KINDS or agent.kind != kind:
        raise ContractViolation(f"agent of kind {agent.kind!r} cannot serve {kind!r}")
    return agent.act(obs, mask, private or {}, explore)
