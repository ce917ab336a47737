"""Physical and economic models of one prosumer's devices.

Battery storage with charge/discharge losses, a first-order cooling model for
the HVAC load, PV generation, the logarithmic valuation of controllable
energy use, feasible bid-quantity determination, and the post-market control
that turns a dispatched quantity into device setpoints.

Quantities are average power in kW over one auction round; energies are
``power * dt`` with ``dt`` in hours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .market import Side


class ContractViolation(ValueError):
    """An operation was called outside its stated preconditions."""


class InternalConsistencyError(RuntimeError):
    """Device power accounting failed to balance beyond clipping tolerance."""


# ---------------------------------------------------------------------------
# Battery


@dataclass(frozen=True)
class BatteryParams:
    capacity_kwh: float
    max_charge_kw: float
    max_discharge_kw: float
    charge_eff: float
    discharge_eff: float
    soc_min: float
    soc_max: float

    def __post_init__(self) -> None:
        if not (0.0 < self.soc_min < self.soc_max <= 1.0):
            raise ContractViolation("require 0 < soc_min < soc_max <= 1")
        if self.capacity_kwh <= 0 or self.max_charge_kw <= 0 or self.max_discharge_kw <= 0:
            raise ContractViolation("capacity and rates must be positive")
        if not (0.0 < self.charge_eff <= 1.0 and 0.0 < self.discharge_eff <= 1.0):
            raise ContractViolation("efficiencies must lie in (0, 1]")

    @property
    def min_energy_kwh(self) -> float:
        return self.soc_min * self.capacity_kwh

    @property
    def max_energy_kwh(self) -> float:
        return self.soc_max * self.capacity_kwh


@dataclass(frozen=True)
class BatteryState:
    energy_kwh: float

    def soc(self, params: BatteryParams) -> float:
        return self.energy_kwh / params.capacity_kwh


def battery_step(
    state: BatteryState,
    params: BatteryParams,
    charge_kw: float,
    discharge_kw: float,
    dt_h: float,
) -> tuple[BatteryState, float, float]:
    """Advance the battery one round; returns (state', absorbed kW, delivered kW).

    Charging and discharging are mutually exclusive within a round.  The
    stored energy is clamped to the SOC window and the returned powers are the
    grid-side flows actually absorbed/delivered after clamping.
    """
    if charge_kw < 0.0 or discharge_kw < 0.0:
        raise ContractViolation("charge and discharge power must be non-negative")
    if charge_kw > 0.0 and discharge_kw > 0.0:
        raise ContractViolation("battery cannot charge and discharge in the same round")
    if charge_kw > params.max_charge_kw + 1e-12:
        raise ContractViolation(f"charge {charge_kw} kW exceeds rate {params.max_charge_kw}")
    if discharge_kw > params.max_discharge_kw + 1e-12:
        raise ContractViolation(
            f"discharge {discharge_kw} kW exceeds rate {params.max_discharge_kw}"
        )

    energy = state.energy_kwh + dt_h * charge_kw * params.charge_eff
    energy -= dt_h * discharge_kw / params.discharge_eff
    actual_charge, actual_discharge = charge_kw, discharge_kw
    if energy > params.max_energy_kwh:
        energy = params.max_energy_kwh
        actual_charge = (params.max_energy_kwh - state.energy_kwh) / (
            dt_h * params.charge_eff
        )
    elif energy < params.min_energy_kwh:
        energy = params.min_energy_kwh
        actual_discharge = (
            (state.energy_kwh - params.min_energy_kwh) * params.discharge_eff / dt_h
        )
    return BatteryState(energy_kwh=energy), max(0.0, actual_charge), max(0.0, actual_discharge)


def available_charge_kw(state: BatteryState, params: BatteryParams, dt_h: float) -> float:
    """Grid-side power the battery can absorb this round within SOC and rate."""
    headroom = (params.max_energy_kwh - state.energy_kwh) / (dt_h * params.charge_eff)
    return max(0.0, min(params.max_charge_kw, headroom))


def available_discharge_kw(state: BatteryState, params: BatteryParams, dt_h: float) -> float:
    """Grid-side power the battery can deliver this round within SOC and rate."""
    stock = (state.energy_kwh - params.min_energy_kwh) * params.discharge_eff / dt_h
    return max(0.0, min(params.max_discharge_kw, stock))


# ---------------------------------------------------------------------------
# HVAC and thermal comfort


@dataclass(frozen=True)
class HvacParams:
    """Cooling-season HVAC: first-order leak toward outdoors, linear cooling."""

    rated_kw: float
    t_set: float
    t_lb: float
    t_ub: float
    t_max_dev: float
    leak_per_h: float
    cool_gain_c_per_kwh: float
    comfort_floor: float

    def __post_init__(self) -> None:
        if not (self.t_lb <= self.t_set <= self.t_ub):
            raise ContractViolation("require t_lb <= t_set <= t_ub")
        if self.t_max_dev <= 0.0 or not (0.0 < self.comfort_floor < 1.0):
            raise ContractViolation("t_max_dev > 0 and comfort floor in (0, 1) required")


@dataclass(frozen=True)
class ThermalState:
    t_in: float


def hvac_step(
    state: ThermalState, params: HvacParams, t_out: float, q_hvac_kw: float, dt_h: float
) -> ThermalState:
    """One round of indoor temperature dynamics under ``q_hvac_kw`` of cooling."""
    if not (0.0 <= q_hvac_kw <= params.rated_kw + 1e-12):
        raise ContractViolation(f"q_hvac {q_hvac_kw} outside [0, {params.rated_kw}] kW")
    t_next = (
        state.t_in
        + params.leak_per_h * dt_h * (t_out - state.t_in)
        - params.cool_gain_c_per_kwh * q_hvac_kw * dt_h
    )
    return ThermalState(t_in=t_next)


def thermostat_demand_kw(
    state: ThermalState, params: HvacParams, t_out: float, dt_h: float
) -> float:
    """Cooling power that would move the room to the setpoint this round."""
    drift = state.t_in + params.leak_per_h * dt_h * (t_out - state.t_in)
    need = (drift - params.t_set) / (params.cool_gain_c_per_kwh * dt_h)
    return min(params.rated_kw, max(0.0, need))


def temperature_comfort_ratio(t_set: float, t_in: float, t_max_dev: float, floor: float) -> float:
    """Comfort in [floor, 1]: 1 at the setpoint, floor at/beyond the max deviation."""
    if t_max_dev <= 0.0 or floor <= 0.0:
        raise ContractViolation("t_max_dev and floor must be positive")
    deviation = min(abs(t_set - t_in), t_max_dev)
    return max(floor, 1.0 - deviation / t_max_dev)


# ---------------------------------------------------------------------------
# PV


@dataclass(frozen=True)
class PvArray:
    n_panels: int
    unit_kw: float

    def __post_init__(self) -> None:
        if self.n_panels < 0 or self.unit_kw <= 0.0:
            raise ContractViolation("n_panels >= 0 and unit_kw > 0 required")


def pv_output(array: PvArray, irradiance_fraction: float) -> float:
    if not (0.0 <= irradiance_fraction <= 1.0):
        raise ContractViolation("irradiance fraction must lie in [0, 1]")
    return array.n_panels * array.unit_kw * irradiance_fraction


# ---------------------------------------------------------------------------
# Valuation of controllable energy use


@dataclass(frozen=True)
class ValuationParams:
    beta: float
    cost_pv: float
    cost_bat: float

    def __post_init__(self) -> None:
        if self.beta <= 0.0 or self.cost_pv <= 0.0 or self.cost_bat <= 0.0:
            raise ContractViolation("valuation parameters must be positive")


def valuation(
    q: float,
    q_bat: float,
    q_hvac: float,
    battery_charging: bool,
    soc: float,
    t_comf: float,
    beta: float,
) -> float:
    """Logarithmic worth of controllable energy use.

    When the battery charges, the battery/HVAC shares split ``q_bat + q_hvac``
    and the battery share is weighted by 1/SOC; otherwise the whole quantity
    is valued at the comfort rate 1/t_comf.  Zero use has zero value.
    """
    if q < 0.0 or q_bat < 0.0 or q_hvac < 0.0:
        raise ContractViolation("valuation quantities must be non-negative")
    if soc <= 0.0 or t_comf <= 0.0:
        raise ContractViolation("SOC and comfort ratio must be positive")
    if q == 0.0:
        return 0.0
    if battery_charging and (q_bat + q_hvac) > 0.0:
        r_bat = q_bat / (q_bat + q_hvac)
        r_hvac = q_hvac / (q_bat + q_hvac)
    else:
        r_bat, r_hvac = 0.0, 1.0
    return math.log(1.0 + beta * q * (r_bat / soc + r_hvac / t_comf))


# ---------------------------------------------------------------------------
# Quantity space and post-market control


@dataclass(frozen=True)
class QuantityRange:
    """Feasible signed bid power: sell positive, buy negative, 0 always included."""

    q_min_kw: float
    q_max_kw: float
    granularity_kw: float = 1.0

    def __post_init__(self) -> None:
        if self.q_min_kw > 0.0 or self.q_max_kw < 0.0:
            raise ContractViolation("feasible range must contain 0")
        if self.q_min_kw < -10.0 or self.q_max_kw > 10.0:
            raise ContractViolation("feasible range must lie within [-10, 10] kW")


def feasible_quantity_range(
    battery: BatteryState,
    params: BatteryParams,
    pv_kw: float,
    base_kw: float,
    hvac_need_kw: float,
    dt_h: float,
) -> QuantityRange:
    """Bid-quantity bounds from forecast generation, loads, and SOC headroom.

    Sell capacity is the PV surplus after loads plus deliverable discharge
    power; buy capacity is the load deficit after PV plus absorbable charge
    power.  Both are clipped to the 10 kW action bound and 0 stays feasible.
    """
    if pv_kw < 0.0 or base_kw < 0.0 or hvac_need_kw < 0.0:
        raise ContractViolation("forecast powers must be non-negative")
    surplus = max(0.0, pv_kw - base_kw - hvac_need_kw)
    deficit = max(0.0, base_kw + hvac_need_kw - pv_kw)
    q_max = min(10.0, surplus + available_discharge_kw(battery, params, dt_h))
    q_min = -min(10.0, deficit + available_charge_kw(battery, params, dt_h))
    return QuantityRange(q_min_kw=q_min, q_max_kw=q_max)


@dataclass(frozen=True)
class DispatchOutcome:
    """Device setpoints implied by one round's market outcome.

    ``curtailed_kw`` is generation/import the devices could not absorb;
    ``grid_makeup_kw`` is supplier power drawn outside the market so the base
    load stays served.  Power balances exactly:
    received + pv + discharge + makeup == base + hvac + charge + delivered + curtailed.
    """

    charge_kw: float
    discharge_kw: float
    hvac_kw: float
    curtailed_kw: float
    grid_makeup_kw: float
    battery: BatteryState


def post_clearing_dispatch(
    side: Side,
    dispatched_kw: float,
    base_kw: float,
    pv_kw: float,
    hvac_need_kw: float,
    battery: BatteryState,
    params: BatteryParams,
    dt_h: float,
) -> DispatchOutcome:
    """Turn the dispatched market quantity into device flows for one round.

    The HVAC draws at most the thermostat's need (surplus is stored, never
    burned); the battery balances the node within its rate and SOC limits;
    any residual is reported as curtailment or supplier makeup.
    """
    if dispatched_kw < 0.0:
        raise ContractViolation("dispatched power is a magnitude, >= 0")
    received = dispatched_kw if side is Side.BUY else 0.0
    delivered = dispatched_kw if side is Side.SELL else 0.0

    discharge_cap = available_discharge_kw(battery, params, dt_h)
    charge_cap = available_charge_kw(battery, params, dt_h)

    headroom = received + pv_kw + discharge_cap - delivered - base_kw
    hvac_kw = min(hvac_need_kw, max(0.0, headroom))

    net = received + pv_kw - base_kw - hvac_kw - delivered
    if net >= 0.0:
        plan_charge, plan_discharge = min(net, charge_cap), 0.0
        curtailed, makeup = net - plan_charge, 0.0
    else:
        plan_charge, plan_discharge = 0.0, min(-net, discharge_cap)
        curtailed, makeup = 0.0, -net - plan_discharge

    state, actual_charge, actual_discharge = battery_step(
        battery, params, plan_charge, plan_discharge, dt_h
    )
    if abs(actual_charge - plan_charge) > 1e-9 or abs(actual_discharge - plan_discharge) > 1e-9:
        raise InternalConsistencyError(
            "battery clipped a flow that was computed within its limits: "
            f"charge {plan_charge}->{actual_charge}, discharge {plan_discharge}->{actual_discharge}"
        )
    residual = received + pv_kw + actual_discharge + makeup
    residual -= base_kw + hvac_kw + actual_charge + delivered + curtailed
    if abs(residual) > 1e-9:
        raise InternalConsistencyError(f"power imbalance {residual} kW after dispatch")

    return DispatchOutcome(
        charge_kw=actual_charge,
        discharge_kw=actual_discharge,
        hvac_kw=hvac_kw,
        curtailed_kw=curtailed,
        grid_makeup_kw=makeup,
        battery=state,
    )
