"""The market game: observations, actions, rewards, and the round loop.

One auction round is a synchronization barrier: every agent's action pair is
collected, the book is cleared once, device physics advance, and role-based
rewards plus next observations come back.  Exogenous weather, supplier price,
and base load series are pre-generated (seeded) or loaded from CSV, so a
(seed, config) pair fully determines every byte of output.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .der import (
    BatteryParams,
    BatteryState,
    ContractViolation,
    HvacParams,
    InternalConsistencyError,
    PvArray,
    QuantityRange,
    ThermalState,
    ValuationParams,
    feasible_quantity_range,
    hvac_step,
    post_clearing_dispatch,
    pv_output,
    temperature_comfort_ratio,
    thermostat_demand_kw,
    valuation,
)
from .market import (
    Bid,
    ClearingResult,
    MarketStats,
    OrderBook,
    Side,
    clear_market,
    compute_statistics,
)

OBSERVATION_SIZE = 13
N_LEVELS = 21
LEVEL_ZERO = 10  # grid index of 0 kW


def level_to_kw(level: int) -> float:
    return float(level - LEVEL_ZERO)


class IngestionError(ValueError):
    """An input file does not match its declared schema."""


# ---------------------------------------------------------------------------
# Observations and actions


@dataclass(frozen=True)
class Observation:
    """The 13 per-agent inputs, in canonical order (see ``vector``).

    The first ten fields echo the previous round's clearing outcome and
    market statistics (zeros on the first round of an episode); the last
    three are private forecasts and the current supplier price.
    """

    prev_clearing_price: float
    prev_clearing_quantity: float
    prev_seller_ratio: float
    prev_buyer_ratio: float
    prev_total_sell_kw: float
    prev_total_buy_kw: float
    prev_mean_sell_price: float
    prev_mean_buy_price: float
    prev_std_sell_price: float
    prev_std_buy_price: float
    available_energy_kwh: float
    load_forecast_kwh: float
    supplier_price: float

    def vector(self) -> np.ndarray:
        return np.array(
            [
                self.prev_clearing_price,
                self.prev_clearing_quantity,
                self.prev_seller_ratio,
                self.prev_buyer_ratio,
                self.prev_total_sell_kw,
                self.prev_total_buy_kw,
                self.prev_mean_sell_price,
                self.prev_mean_buy_price,
                self.prev_std_sell_price,
                self.prev_std_buy_price,
                self.available_energy_kwh,
                self.load_forecast_kwh,
                self.supplier_price,
            ]
        )


def normalize_observation(obs: Observation, n_agents: int, price_cap: float) -> np.ndarray:
    """Scale the raw observation into [0, 1] for network input.

    Prices are divided by the wholesale cap, community totals by the maximum
    community bid volume, per-agent energies by the 10 kWh scale (clipped:
    a full battery plus a round of peak PV can slightly exceed it).
    """
    v = obs.vector()
    price_idx = [0, 6, 7, 8, 9, 12]
    v[price_idx] = v[price_idx] / price_cap
    total_idx = [1, 4, 5]
    v[total_idx] = v[total_idx] / (10.0 * n_agents)
    v[10] = min(v[10] / 10.0, 1.0)
    v[11] = min(v[11] / 10.0, 1.0)
    return np.clip(v, -1.0, 1.0)


@dataclass(frozen=True)
class ActionPair:
    """Discrete quantity level plus continuous price magnitude in [0, 1].

    Level ``LEVEL_ZERO`` is non-participation and forces a zero magnitude;
    positive decoded kW sells, negative buys.
    """

    quantity_level: int
    price_magnitude: float

    def __post_init__(self) -> None:
        if not (0 <= self.quantity_level < N_LEVELS):
            raise ContractViolation(f"quantity level {self.quantity_level} out of grid")
        if not (0.0 <= self.price_magnitude <= 1.0):
            raise ContractViolation(f"price magnitude {self.price_magnitude} outside [0, 1]")
        if self.quantity_level == LEVEL_ZERO and self.price_magnitude != 0.0:
            raise ContractViolation("non-participation requires a zero price magnitude")

    @property
    def kw(self) -> float:
        return level_to_kw(self.quantity_level)

    @property
    def side(self) -> Side:
        if self.quantity_level > LEVEL_ZERO:
            return Side.SELL
        if self.quantity_level < LEVEL_ZERO:
            return Side.BUY
        return Side.NON_PARTICIPANT


NON_PARTICIPATION = ActionPair(quantity_level=LEVEL_ZERO, price_magnitude=0.0)


# ---------------------------------------------------------------------------
# Rewards


@dataclass(frozen=True)
class RewardBreakdown:
    """One agent's round reward split into its named components.

    ``total == cash + valuation + base_saving - generation_cost`` always;
    which components are live depends on the role.
    """

    side: Side
    cash: float
    valuation: float
    base_saving: float
    generation_cost: float

    @property
    def total(self) -> float:
        return self.cash + self.valuation + self.base_saving - self.generation_cost


def compute_seller_reward(
    *,
    accepted: bool,
    clearing_price: float,
    dispatched_kwh: float,
    base_kwh: float,
    pv_source_kwh: float,
    battery_source_kwh: float,
    cost_pv: float,
    cost_bat: float,
) -> RewardBreakdown:
    """Accepted sellers earn revenue plus base-load savings net of production
    cost on the energy sourced for the sale; rejected sellers pay the
    production cost of the energy they planned to waste."""
    cost = cost_pv * pv_source_kwh + cost_bat * battery_source_kwh
    if accepted:
        return RewardBreakdown(
            side=Side.SELL,
            cash=clearing_price * dispatched_kwh,
            valuation=0.0,
            base_saving=clearing_price * base_kwh,
            generation_cost=cost,
        )
    return RewardBreakdown(
        side=Side.SELL, cash=0.0, valuation=0.0, base_saving=0.0, generation_cost=cost
    )


def compute_buyer_reward(
    *,
    clearing_price: float,
    bid_price: float,
    dispatched_kwh: float,
    bid_kwh: float,
    value_dispatched: float,
    value_bid: float,
) -> RewardBreakdown:
    """Accepted (clearing price weakly below the bid): valuation of the
    dispatched energy minus its payment.  Rejected: expected comfort
    sacrifice offset by the payment saved."""
    if clearing_price <= bid_price:
        return RewardBreakdown(
            side=Side.BUY,
            cash=-clearing_price * dispatched_kwh,
            valuation=value_dispatched,
            base_saving=0.0,
            generation_cost=0.0,
        )
    return RewardBreakdown(
        side=Side.BUY,
        cash=bid_price * bid_kwh,
        valuation=-value_bid,
        base_saving=0.0,
        generation_cost=0.0,
    )


def compute_non_participant_reward(
    *,
    clearing_price: float,
    base_kwh: float,
    pv_kwh: float,
    battery_kwh: float,
    value: float,
    cost_pv: float,
    cost_bat: float,
) -> RewardBreakdown:
    """Self-supply: valuation of own generation use plus base-load savings
    net of generation cost."""
    return RewardBreakdown(
        side=Side.NON_PARTICIPANT,
        cash=0.0,
        valuation=value,
        base_saving=clearing_price * base_kwh,
        generation_cost=cost_pv * pv_kwh + cost_bat * battery_kwh,
    )


def episode_reward(round_totals: list[float]) -> float:
    """Sum of the single active role's reward over an episode's rounds."""
    if not round_totals:
        raise ContractViolation("an episode needs at least one round")
    return math.fsum(round_totals)


# ---------------------------------------------------------------------------
# Exogenous processes


@dataclass(frozen=True)
class ExogenousParams:
    # cooling-season defaults: nights stay warm enough that comfort is always
    # reachable by cooling alone and batteries cannot ride through the whole
    # night, so the market stays live after sunset
    t_out_mean_c: float = 29.0
    t_out_amplitude_c: float = 3.5
    t_out_peak_hour: float = 15.0
    t_out_noise_c: float = 0.3
    irradiance_noise: float = 0.05
    price_low: float = 0.2
    price_high: float = 0.4
    price_base: float = 0.3
    price_amplitude: float = 0.05
    price_peak_hour: float = 19.0
    price_noise: float = 0.005
    base_load_mean_kw: float = 1.1
    base_load_amplitude_kw: float = 0.5
    base_load_peak_hour: float = 20.0
    base_load_noise_kw: float = 0.05


@dataclass(frozen=True)
class ExogenousProfile:
    """Per-round exogenous series over the whole horizon."""

    t_out_c: np.ndarray
    irradiance: np.ndarray
    supplier_price: np.ndarray
    base_load_kw: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.t_out_c)
        for name in ("irradiance", "supplier_price", "base_load_kw"):
            if len(getattr(self, name)) != n:
                raise IngestionError(f"profile column {name!r} has mismatched length")
        if not (np.isfinite(self.t_out_c).all() and np.isfinite(self.base_load_kw).all()):
            raise IngestionError("profile contains non-finite values")
        if ((self.irradiance < 0.0) | (self.irradiance > 1.0)).any():
            raise IngestionError("irradiance must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.t_out_c)


def generate_exogenous(
    seed: int,
    days: int,
    rounds_per_day: int,
    params: ExogenousParams = ExogenousParams(),
) -> ExogenousProfile:
    """Synthesize diurnal weather, price, and base-load series.

    Outdoor temperature peaks mid-afternoon, irradiance is a clipped half
    sine over daylight, the supplier price stays within its configured band
    and peaks in the evening, base load peaks at night; all series carry
    seeded Gaussian perturbations.
    """
    if days < 1:
        raise ContractViolation("days must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7001]))
    n = days * rounds_per_day
    hour = (np.arange(n) % rounds_per_day) * 24.0 / rounds_per_day

    t_out = params.t_out_mean_c + params.t_out_amplitude_c * np.cos(
        2.0 * np.pi * (hour - params.t_out_peak_hour) / 24.0
    )
    t_out = t_out + rng.normal(0.0, params.t_out_noise_c, size=n)

    irr = np.sin(np.pi * (hour - 6.0) / 12.0)
    irr = np.where((hour >= 6.0) & (hour <= 18.0), np.maximum(irr, 0.0), 0.0)
    irr = np.clip(irr * (1.0 + rng.normal(0.0, params.irradiance_noise, size=n)), 0.0, 1.0)

    price = params.price_base + params.price_amplitude * np.cos(
        2.0 * np.pi * (hour - params.price_peak_hour) / 24.0
    )
    price = np.clip(
        price + rng.normal(0.0, params.price_noise, size=n), params.price_low, params.price_high
    )

    base = params.base_load_mean_kw + params.base_load_amplitude_kw * np.cos(
        2.0 * np.pi * (hour - params.base_load_peak_hour) / 24.0
    )
    base = np.clip(base + rng.normal(0.0, params.base_load_noise_kw, size=n), 0.5, 2.0)

    return ExogenousProfile(
        t_out_c=t_out, irradiance=irr, supplier_price=price, base_load_kw=base
    )


EXOGENOUS_COLUMNS = ("round", "t_out_c", "irradiance", "supplier_price", "base_load_kw")


def load_exogenous_csv(path: str | Path) -> ExogenousProfile:
    """Read an exogenous profile; a missing column names itself in the error."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in EXOGENOUS_COLUMNS:
            if col not in header:
                raise IngestionError(f"exogenous CSV is missing column {col!r}")
        rows = list(reader)
    if not rows:
        raise IngestionError("exogenous CSV has no data rows")
    try:
        cols = {
            name: np.array([float(r[name]) for r in rows])
            for name in EXOGENOUS_COLUMNS
            if name != "round"
        }
    except ValueError as exc:
        raise IngestionError(f"exogenous CSV has a non-numeric value: {exc}") from exc
    return ExogenousProfile(
        t_out_c=cols["t_out_c"],
        irradiance=cols["irradiance"],
        supplier_price=cols["supplier_price"],
        base_load_kw=cols["base_load_kw"],
    )


def write_exogenous_csv(path: str | Path, profile: ExogenousProfile) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EXOGENOUS_COLUMNS)
        for t in range(len(profile)):
            writer.writerow(
                [
                    t,
                    repr(float(profile.t_out_c[t])),
                    repr(float(profile.irradiance[t])),
                    repr(float(profile.supplier_price[t])),
                    repr(float(profile.base_load_kw[t])),
                ]
            )


# ---------------------------------------------------------------------------
# Houses and the environment


@dataclass(frozen=True)
class House:
    house_id: str
    battery: BatteryParams
    initial_soc: float
    hvac: HvacParams
    pv: PvArray
    valuation: ValuationParams
    base_scale: float = 1.0


@dataclass
class AgentView:
    """What one agent sees before acting: observation, feasibility, own state."""

    observation: Observation
    feasible: QuantityRange
    soc: float
    net_load_kw: float


@dataclass
class RoundRecord:
    """Everything logged about one agent in one round."""

    round_index: int
    agent_id: str
    side: Side
    demoted: bool
    bid_price: float
    bid_kw: float
    dispatched_kw: float
    accepted: bool
    reward: RewardBreakdown
    payment: float
    base_payment: float
    hvac_kw: float
    charge_kw: float
    discharge_kw: float
    curtailed_kw: float
    grid_makeup_kw: float
    t_in_start: float
    t_set: float
    t_out: float
    soc_start: float
    pv_kw: float
    base_kw: float


@dataclass
class RoundResult:
    round_index: int
    supplier_price: float
    clearing: ClearingResult
    stats: MarketStats
    rewards: dict[str, RewardBreakdown]
    views: dict[str, AgentView]
    records: dict[str, RoundRecord]
    demoted: tuple[str, ...]
    done: bool


@dataclass
class _RoundContext:
    pv_kw: float
    base_kw: float
    hvac_need_kw: float
    feasible: QuantityRange
    soc: float
    t_comf: float


class MarketEnv:
    """Deterministic multi-prosumer auction environment.

    Owns per-house battery and thermal state; all randomness lives in the
    pre-generated exogenous profile and in the agents.
    """

    def __init__(
        self,
        houses: list[House],
        profile: ExogenousProfile,
        rounds_per_day: int,
        price_cap: float = 0.4,
        supplier_capacity_kw: float = 1000.0,
        supplier_id: str = "supplier",
    ):
        if not houses:
            raise ContractViolation("need at least one house")
        if len(profile) % rounds_per_day != 0:
            raise ContractViolation("profile length must be a whole number of days")
        self.houses = {h.house_id: h for h in houses}
        if len(self.houses) != len(houses):
            raise ContractViolation("house ids must be unique")
        self.profile = profile
        self.rounds_per_day = rounds_per_day
        self.dt_h = 24.0 / rounds_per_day
        self.price_cap = price_cap
        self.supplier_capacity_kw = supplier_capacity_kw
        self.supplier_id = supplier_id

        self._battery: dict[str, BatteryState] = {}
        self._thermal: dict[str, ThermalState] = {}
        self._ctx: dict[str, _RoundContext] = {}
        self._round = 0
        self._round_in_day = 0
        self._prev_clearing_price: float | None = None

    @property
    def agent_ids(self) -> list[str]:
        return list(self.houses)

    @property
    def n_agents(self) -> int:
        return len(self.houses)

    @property
    def round_index(self) -> int:
        return self._round

    def normalize(self, obs: Observation) -> np.ndarray:
        return normalize_observation(obs, self.n_agents, self.price_cap)

    def bid_price(self, side: Side, magnitude: float, supplier_price: float) -> float:
        """Map a price magnitude onto the role's market-viable band.

        Buyers bid in [supplier price, cap]: anything lower can never beat
        the supplier's standing offer, and with midpoint pricing a bid at the
        band floor settles exactly at the supplier price.  Sellers ask in
        [0, supplier price]: asking above it can never clear.  Keeping the
        whole continuous range viable removes the acceptance cliff that
        otherwise sits inside the action space and destabilizes learning.
        """
        if side is Side.BUY:
            return supplier_price + magnitude * (self.price_cap - supplier_price)
        if side is Side.SELL:
            return magnitude * supplier_price
        return 0.0

    def price_magnitude(self, side: Side, bid_price: float, supplier_price: float) -> float:
        """Inverse of ``bid_price`` for log round-tripping."""
        if side is Side.BUY:
            return (bid_price - supplier_price) / (self.price_cap - supplier_price)
        if side is Side.SELL:
            return bid_price / supplier_price if supplier_price > 0.0 else 0.0
        return 0.0

    def reset(self, day: int = 0) -> dict[str, AgentView]:
        """Start an episode at the given simulated day; public fields zero."""
        if not (0 <= day * self.rounds_per_day < len(self.profile)):
            raise ContractViolation(f"day {day} outside the exogenous horizon")
        self._round = day * self.rounds_per_day
        self._round_in_day = 0
        self._prev_clearing_price = None
        for house_id, house in self.houses.items():
            self._battery[house_id] = BatteryState(
                energy_kwh=house.initial_soc * house.battery.capacity_kwh
            )
            self._thermal[house_id] = ThermalState(t_in=house.hvac.t_set)
        return self._build_views(None, None)

    def step(self, actions: dict[str, ActionPair]) -> RoundResult:
        """Run one auction round; see the module docstring for the sequence."""
        if set(actions) != set(self.houses):
            raise ContractViolation("need exactly one action per agent")
        if self._round >= len(self.profile):
            raise ContractViolation("exogenous horizon exhausted")

        t = self._round
        p_sup = float(self.profile.supplier_price[t])
        t_out = float(self.profile.t_out_c[t])

        bids: list[Bid] = []
        demoted: list[str] = []
        executed: dict[str, ActionPair] = {}
        for agent_id in self.houses:
            action = actions[agent_id]
            ctx = self._ctx[agent_id]
            kw = action.kw
            if not (ctx.feasible.q_min_kw - 1e-12 <= kw <= ctx.feasible.q_max_kw + 1e-12):
                demoted.append(agent_id)
                action = NON_PARTICIPATION
            executed[agent_id] = action
            side = action.side
            price = self.bid_price(side, action.price_magnitude, p_sup)
            bids.append(Bid(agent_id, side, price, abs(action.kw)))

        book = OrderBook(
            round_index=t,
            bids=tuple(bids),
            supplier_offer=Bid(self.supplier_id, Side.SELL, p_sup, self.supplier_capacity_kw),
        )
        fallback = self._prev_clearing_price if self._prev_clearing_price is not None else p_sup
        clearing = clear_market(book, fallback_price=fallback)
        stats = compute_statistics(book)
        bid_by_agent = {b.trader_id: b for b in bids}

        rewards: dict[str, RewardBreakdown] = {}
        records: dict[str, RoundRecord] = {}
        # Community balance: supplier injection + PV + discharge + makeup must
        # equal loads + charging + curtailment; prosumer-to-prosumer trades
        # cancel through the market's budget balance.
        residual = clearing.dispatch[self.supplier_id]
        for agent_id, house in self.houses.items():
            ctx = self._ctx[agent_id]
            bid = bid_by_agent[agent_id]
            q_d = clearing.dispatch[agent_id]
            outcome = post_clearing_dispatch(
                bid.side,
                q_d,
                base_kw=ctx.base_kw,
                pv_kw=ctx.pv_kw,
                hvac_need_kw=ctx.hvac_need_kw,
                battery=self._battery[agent_id],
                params=house.battery,
                dt_h=self.dt_h,
            )
            self._battery[agent_id] = outcome.battery
            t_in_start = self._thermal[agent_id].t_in
            self._thermal[agent_id] = hvac_step(
                self._thermal[agent_id], house.hvac, t_out, outcome.hvac_kw, self.dt_h
            )

            reward = self._reward_for(agent_id, house, ctx, bid, q_d, clearing, outcome)
            rewards[agent_id] = reward

            traded = clearing.accepted[agent_id]
            payment = (
                clearing.clearing_price * q_d * self.dt_h
                if bid.side is Side.BUY and traded
                else 0.0
            )
            base_price = clearing.clearing_price if traded else p_sup
            records[agent_id] = RoundRecord(
                round_index=t,
                agent_id=agent_id,
                side=bid.side,
                demoted=agent_id in demoted,
                bid_price=bid.price,
                bid_kw=bid.quantity,
                dispatched_kw=q_d,
                accepted=traded,
                reward=reward,
                payment=payment,
                base_payment=base_price * ctx.base_kw * self.dt_h,
                hvac_kw=outcome.hvac_kw,
                charge_kw=outcome.charge_kw,
                discharge_kw=outcome.discharge_kw,
                curtailed_kw=outcome.curtailed_kw,
                grid_makeup_kw=outcome.grid_makeup_kw,
                t_in_start=t_in_start,
                t_set=house.hvac.t_set,
                t_out=t_out,
                soc_start=ctx.soc,
                pv_kw=ctx.pv_kw,
                base_kw=ctx.base_kw,
            )
            residual += (
                ctx.pv_kw
                + outcome.discharge_kw
                + outcome.grid_makeup_kw
                - ctx.base_kw
                - outcome.hvac_kw
                - outcome.charge_kw
                - outcome.curtailed_kw
            )
        if abs(residual) > 1e-6:
            raise InternalConsistencyError(
                f"community power imbalance {residual} kW in round {t}"
            )

        self._prev_clearing_price = clearing.clearing_price
        self._round += 1
        self._round_in_day += 1
        done = self._round_in_day >= self.rounds_per_day
        views = self._build_views(clearing, stats)
        return RoundResult(
            round_index=t,
            supplier_price=p_sup,
            clearing=clearing,
            stats=stats,
            rewards=rewards,
            views=views,
            records=records,
            demoted=tuple(demoted),
            done=done,
        )

    # -- internals --------------------------------------------------------

    def _reward_for(
        self,
        agent_id: str,
        house: House,
        ctx: _RoundContext,
        bid: Bid,
        q_d: float,
        clearing: ClearingResult,
        outcome,
    ) -> RewardBreakdown:
        dt = self.dt_h
        costs = house.valuation
        if bid.side is Side.SELL:
            if clearing.accepted[agent_id]:
                battery_sold = min(outcome.discharge_kw, q_d)
                pv_sold = max(0.0, q_d - battery_sold)
                return compute_seller_reward(
                    accepted=True,
                    clearing_price=clearing.clearing_price,
                    dispatched_kwh=q_d * dt,
                    base_kwh=ctx.base_kw * dt,
                    pv_source_kwh=pv_sold * dt,
                    battery_source_kwh=battery_sold * dt,
                    cost_pv=costs.cost_pv,
                    cost_bat=costs.cost_bat,
                )
            pv_plan = min(bid.quantity, max(0.0, ctx.pv_kw - ctx.base_kw - ctx.hvac_need_kw))
            bat_plan = max(0.0, bid.quantity - pv_plan)
            return compute_seller_reward(
                accepted=False,
                clearing_price=clearing.clearing_price,
                dispatched_kwh=0.0,
                base_kwh=0.0,
                pv_source_kwh=pv_plan * dt,
                battery_source_kwh=bat_plan * dt,
                cost_pv=costs.cost_pv,
                cost_bat=costs.cost_bat,
            )
        if bid.side is Side.BUY:
            return compute_buyer_reward(
                clearing_price=clearing.clearing_price,
                bid_price=bid.price,
                dispatched_kwh=q_d * dt,
                bid_kwh=bid.quantity * dt,
                value_dispatched=self._buy_value(house, ctx, q_d),
                value_bid=self._buy_value(house, ctx, bid.quantity),
            )
        battery_use = outcome.charge_kw if outcome.charge_kw > 0.0 else outcome.discharge_kw
        value = valuation(
            q=ctx.pv_kw + battery_use,
            q_bat=outcome.charge_kw,
            q_hvac=outcome.hvac_kw,
            battery_charging=outcome.charge_kw > 0.0,
            soc=ctx.soc,
            t_comf=ctx.t_comf,
            beta=costs.beta,
        )
        return compute_non_participant_reward(
            clearing_price=clearing.clearing_price,
            base_kwh=ctx.base_kw * dt,
            pv_kwh=ctx.pv_kw * dt,
            battery_kwh=battery_use * dt,
            value=value,
            cost_pv=costs.cost_pv,
            cost_bat=costs.cost_bat,
        )

    def _buy_value(self, house: House, ctx: _RoundContext, quantity_kw: float) -> float:
        """Valuation of a bought quantity: the unmet HVAC need it serves.

        Purchased power serves unmet base load first, then unmet HVAC need,
        then battery charging.  Base load is always satisfied and carries no
        valuation; energy routed to storage is valued when it is later used
        (the discharge enters the self-supply valuation), so valuing it at
        purchase time would count the same energy twice and make buying to
        fill the battery an unbounded arbitrage against the market.
        """
        base_unmet = max(0.0, ctx.base_kw - ctx.pv_kw)
        hvac_unmet = max(0.0, ctx.hvac_need_kw - max(0.0, ctx.pv_kw - ctx.base_kw))
        to_base = min(quantity_kw, base_unmet)
        to_hvac = min(quantity_kw - to_base, hvac_unmet)
        return valuation(
            q=to_hvac,
            q_bat=0.0,
            q_hvac=to_hvac,
            battery_charging=False,
            soc=ctx.soc,
            t_comf=ctx.t_comf,
            beta=house.valuation.beta,
        )

    def _build_views(
        self, clearing: ClearingResult | None, stats: MarketStats | None
    ) -> dict[str, AgentView]:
        t = min(self._round, len(self.profile) - 1)
        p_sup = float(self.profile.supplier_price[t])
        t_out = float(self.profile.t_out_c[t])
        irr = float(self.profile.irradiance[t])
        views: dict[str, AgentView] = {}
        for agent_id, house in self.houses.items():
            battery = self._battery[agent_id]
            thermal = self._thermal[agent_id]
            pv_kw = pv_output(house.pv, irr)
            base_kw = float(self.profile.base_load_kw[t]) * house.base_scale
            need_kw = thermostat_demand_kw(thermal, house.hvac, t_out, self.dt_h)
            feasible = feasible_quantity_range(
                battery, house.battery, pv_kw, base_kw, need_kw, self.dt_h
            )
            soc = battery.soc(house.battery)
            t_comf = temperature_comfort_ratio(
                house.hvac.t_set, thermal.t_in, house.hvac.t_max_dev, house.hvac.comfort_floor
            )
            self._ctx[agent_id] = _RoundContext(
                pv_kw=pv_kw,
                base_kw=base_kw,
                hvac_need_kw=need_kw,
                feasible=feasible,
                soc=soc,
                t_comf=t_comf,
            )
            if clearing is None or stats is None:
                public = [0.0] * 10
            else:
                public = [
                    clearing.clearing_price,
                    clearing.clearing_quantity,
                    stats.seller_ratio,
                    stats.buyer_ratio,
                    stats.total_sell_kw,
                    stats.total_buy_kw,
                    stats.mean_sell_price,
                    stats.mean_buy_price,
                    stats.std_sell_price,
                    stats.std_buy_price,
                ]
            obs = Observation(
                *public,
                available_energy_kwh=battery.energy_kwh + pv_kw * self.dt_h,
                load_forecast_kwh=(need_kw + base_kw) * self.dt_h,
                supplier_price=p_sup,
            )
            views[agent_id] = AgentView(
                observation=obs,
                feasible=feasible,
                soc=soc,
                net_load_kw=base_kw + need_kw - pv_kw,
            )
        return views
