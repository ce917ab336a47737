"""Device model tests: battery bookkeeping, thermal dynamics, valuation, dispatch."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from temsim.der import (
    BatteryParams,
    BatteryState,
    ContractViolation,
    HvacParams,
    PvArray,
    QuantityRange,
    ThermalState,
    available_charge_kw,
    available_discharge_kw,
    battery_step,
    feasible_quantity_range,
    hvac_step,
    post_clearing_dispatch,
    pv_output,
    temperature_comfort_ratio,
    thermostat_demand_kw,
    valuation,
)
from temsim.market import Side

BAT = BatteryParams(
    capacity_kwh=10.0,
    max_charge_kw=3.0,
    max_discharge_kw=3.0,
    charge_eff=0.95,
    discharge_eff=0.95,
    soc_min=0.1,
    soc_max=0.8,
)

HVAC = HvacParams(
    rated_kw=3.0,
    t_set=23.0,
    t_lb=22.0,
    t_ub=24.0,
    t_max_dev=3.0,
    leak_per_h=0.5,
    cool_gain_c_per_kwh=2.0,
    comfort_floor=0.01,
)


# ---------------------------------------------------------------------------
# Battery


def test_battery_charges_with_efficiency_loss():
    state, absorbed, delivered = battery_step(
        BatteryState(5.0), BAT, charge_kw=3.0, discharge_kw=0.0, dt_h=1 / 12
    )
    assert state.energy_kwh == pytest.approx(5.2375)
    assert absorbed == 3.0
    assert delivered == 0.0


def test_battery_idle_is_identity():
    state, absorbed, delivered = battery_step(BatteryState(5.0), BAT, 0.0, 0.0, 1 / 12)
    assert state.energy_kwh == 5.0
    assert absorbed == delivered == 0.0


def test_battery_clamps_at_upper_soc_and_reports_zero_absorption():
    state, absorbed, _ = battery_step(BatteryState(8.0), BAT, 3.0, 0.0, 1 / 12)
    assert state.energy_kwh == 8.0
    assert absorbed == 0.0


def test_battery_rejects_simultaneous_flows():
    with pytest.raises(ContractViolation):
        battery_step(BatteryState(5.0), BAT, 1.0, 1.0, 1 / 12)
    with pytest.raises(ContractViolation):
        battery_step(BatteryState(5.0), BAT, -0.5, 0.0, 1 / 12)
    with pytest.raises(ContractViolation):
        battery_step(BatteryState(5.0), BAT, 0.0, 5.0, 1 / 12)


def test_battery_round_trip_efficiency_is_product_of_efficiencies():
    dt = 1 / 12
    start = BatteryState(4.0)
    charged, absorbed, _ = battery_step(start, BAT, 2.0, 0.0, dt)
    x = absorbed * dt  # grid-side energy in
    # discharge exactly back to the starting energy
    d_kw = (charged.energy_kwh - start.energy_kwh) * BAT.discharge_eff / dt
    final, _, delivered = battery_step(charged, BAT, 0.0, d_kw, dt)
    assert final.energy_kwh == pytest.approx(start.energy_kwh, abs=1e-12)
    assert delivered * dt == pytest.approx(BAT.charge_eff * BAT.discharge_eff * x, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(
        st.tuples(st.booleans(), st.floats(min_value=0.0, max_value=3.0)),
        min_size=1,
        max_size=50,
    )
)
def test_soc_never_leaves_window(actions):
    state = BatteryState(5.0)
    for is_charge, kw in actions:
        state, _, _ = battery_step(
            state, BAT, kw if is_charge else 0.0, 0.0 if is_charge else kw, 0.5
        )
        assert BAT.soc_min <= state.soc(BAT) <= BAT.soc_max + 1e-15


# ---------------------------------------------------------------------------
# HVAC


def test_hvac_equilibrium_without_cooling():
    state = hvac_step(ThermalState(25.0), HVAC, t_out=25.0, q_hvac_kw=0.0, dt_h=1 / 12)
    assert state.t_in == 25.0


def test_hvac_leak_toward_hot_outdoors():
    state = hvac_step(ThermalState(25.0), HVAC, t_out=35.0, q_hvac_kw=0.0, dt_h=1 / 12)
    assert state.t_in == pytest.approx(25.0 + 0.5 * (1 / 12) * 10.0)


def test_hvac_cooling_power():
    state = hvac_step(ThermalState(25.0), HVAC, t_out=25.0, q_hvac_kw=3.0, dt_h=1 / 12)
    assert state.t_in == pytest.approx(24.5)


def test_hvac_rejects_power_out_of_range():
    with pytest.raises(ContractViolation):
        hvac_step(ThermalState(25.0), HVAC, 25.0, 4.0, 1 / 12)


def test_thermostat_demand_reaches_setpoint():
    dt = 0.5
    state = ThermalState(25.0)
    need = thermostat_demand_kw(state, HVAC, t_out=25.0, dt_h=dt)
    assert 0.0 < need <= HVAC.rated_kw
    after = hvac_step(state, HVAC, 25.0, need, dt)
    assert after.t_in == pytest.approx(HVAC.t_set)


def test_thermostat_demand_zero_when_cool():
    assert thermostat_demand_kw(ThermalState(20.0), HVAC, t_out=20.0, dt_h=0.5) == 0.0


# ---------------------------------------------------------------------------
# Comfort ratio


def test_comfort_perfect_at_setpoint():
    assert temperature_comfort_ratio(23.0, 23.0, 3.0, 0.01) == 1.0


def test_comfort_saturates_at_floor():
    assert temperature_comfort_ratio(23.0, 27.0, 3.0, 0.01) == 0.01
    assert temperature_comfort_ratio(23.0, 26.0, 3.0, 0.01) == pytest.approx(0.01)


def test_comfort_half_deviation():
    assert temperature_comfort_ratio(23.0, 24.5, 3.0, 0.01) == pytest.approx(0.5)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-20.0, max_value=20.0), st.floats(min_value=-20.0, max_value=20.0))
def test_comfort_image_and_monotonicity(d1, d2):
    r1 = temperature_comfort_ratio(23.0, 23.0 + d1, 3.0, 0.01)
    r2 = temperature_comfort_ratio(23.0, 23.0 + d2, 3.0, 0.01)
    assert 0.01 <= r1 <= 1.0
    if abs(d1) <= abs(d2):
        assert r1 >= r2


# ---------------------------------------------------------------------------
# PV


def test_pv_full_sun():
    assert pv_output(PvArray(10, 0.48), 1.0) == pytest.approx(4.8)


def test_pv_night():
    assert pv_output(PvArray(10, 0.48), 0.0) == 0.0


def test_pv_partial():
    assert pv_output(PvArray(14, 0.48), 0.5) == pytest.approx(3.36)


# ---------------------------------------------------------------------------
# Valuation


def test_valuation_zero_quantity():
    assert valuation(0.0, 0.0, 0.0, False, 0.5, 1.0, 1.0) == 0.0


def test_valuation_discharging_values_comfort_only():
    v = valuation(1.0, 0.0, 1.0, False, 0.5, 1.0, 1.0)
    assert v == pytest.approx(math.log(2.0))


def test_valuation_charging_splits_battery_and_comfort():
    # q = 2 split evenly: log(1 + 1*2*(0.5/0.5 + 0.5/1)) = log(4)
    v = valuation(2.0, 1.0, 1.0, True, 0.5, 1.0, 1.0)
    assert v == pytest.approx(math.log(4.0))


def test_valuation_monotone_in_quantity_and_soc():
    lo = valuation(1.0, 0.5, 0.5, True, 0.5, 1.0, 2.0)
    hi = valuation(2.0, 1.0, 1.0, True, 0.5, 1.0, 2.0)
    assert hi > lo
    fuller = valuation(1.0, 0.5, 0.5, True, 0.8, 1.0, 2.0)
    assert fuller < lo


def test_valuation_rejects_degenerate_soc():
    with pytest.raises(ContractViolation):
        valuation(1.0, 1.0, 0.0, True, 0.0, 1.0, 1.0)


# ---------------------------------------------------------------------------
# Feasible quantity range


def test_range_pv_surplus_with_full_battery():
    full = BatteryState(BAT.max_energy_kwh)
    r = feasible_quantity_range(full, BAT, pv_kw=5.0, base_kw=2.0, hvac_need_kw=0.0, dt_h=0.5)
    assert r.q_max_kw == pytest.approx(6.0)  # surplus 3 + discharge rate 3
    assert r.q_min_kw == 0.0


def test_range_deficit_with_empty_battery():
    empty = BatteryState(BAT.min_energy_kwh)
    r = feasible_quantity_range(empty, BAT, pv_kw=0.0, base_kw=3.0, hvac_need_kw=1.0, dt_h=0.5)
    assert r.q_max_kw == 0.0
    assert r.q_min_kw == pytest.approx(-7.0)  # deficit 4 + charge rate 3


def test_range_degenerate_battery_and_no_forecast():
    params = BatteryParams(
        capacity_kwh=10.0,
        max_charge_kw=1e-12,
        max_discharge_kw=3.0,
        charge_eff=0.95,
        discharge_eff=0.95,
        soc_min=0.1,
        soc_max=0.8,
    )
    empty = BatteryState(params.min_energy_kwh)
    r = feasible_quantity_range(empty, params, 0.0, 0.0, 0.0, 0.5)
    assert r.q_max_kw == 0.0
    assert r.q_min_kw == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(min_value=1.0, max_value=8.0),
    st.floats(min_value=0.0, max_value=12.0),
    st.floats(min_value=0.0, max_value=5.0),
    st.floats(min_value=0.0, max_value=3.0),
)
def test_range_contains_zero_and_respects_bounds(energy, pv, base, hvac):
    state = BatteryState(energy)
    r = feasible_quantity_range(state, BAT, pv, base, hvac, 0.5)
    assert r.q_min_kw <= 0.0 <= r.q_max_kw
    assert -10.0 <= r.q_min_kw and r.q_max_kw <= 10.0


def test_quantity_range_must_contain_zero():
    with pytest.raises(ContractViolation):
        QuantityRange(q_min_kw=1.0, q_max_kw=2.0)


# ---------------------------------------------------------------------------
# Post-market control


def test_dispatch_buyer_charges_surplus():
    out = post_clearing_dispatch(
        Side.BUY, 2.0, base_kw=1.0, pv_kw=0.5, hvac_need_kw=1.0,
        battery=BatteryState(5.0), params=BAT, dt_h=0.5,
    )
    assert out.hvac_kw == pytest.approx(1.0)
    assert out.charge_kw == pytest.approx(0.5)
    assert out.discharge_kw == 0.0
    assert out.curtailed_kw == 0.0
    assert out.grid_makeup_kw == 0.0


def test_dispatch_seller_stores_pv_surplus_instead_of_discharging():
    out = post_clearing_dispatch(
        Side.SELL, 2.0, base_kw=1.0, pv_kw=4.0, hvac_need_kw=0.0,
        battery=BatteryState(5.0), params=BAT, dt_h=0.5,
    )
    assert out.discharge_kw == 0.0
    assert out.charge_kw == pytest.approx(1.0)


def test_dispatch_self_balanced_idles_battery():
    out = post_clearing_dispatch(
        Side.NON_PARTICIPANT, 0.0, base_kw=1.0, pv_kw=2.0, hvac_need_kw=1.0,
        battery=BatteryState(5.0), params=BAT, dt_h=0.5,
    )
    assert out.hvac_kw == pytest.approx(1.0)
    assert out.charge_kw == 0.0
    assert out.discharge_kw == 0.0


def test_dispatch_overbought_energy_is_curtailed_when_battery_full():
    out = post_clearing_dispatch(
        Side.BUY, 6.0, base_kw=0.5, pv_kw=0.0, hvac_need_kw=0.0,
        battery=BatteryState(BAT.max_energy_kwh), params=BAT, dt_h=0.5,
    )
    assert out.charge_kw == 0.0
    assert out.curtailed_kw == pytest.approx(5.5)


def test_dispatch_base_load_served_via_makeup_when_battery_empty():
    out = post_clearing_dispatch(
        Side.NON_PARTICIPANT, 0.0, base_kw=2.0, pv_kw=0.0, hvac_need_kw=1.5,
        battery=BatteryState(BAT.min_energy_kwh), params=BAT, dt_h=0.5,
    )
    assert out.hvac_kw == 0.0  # no power on hand for comfort
    assert out.grid_makeup_kw == pytest.approx(2.0)


@settings(max_examples=300, deadline=None)
@given(
    st.sampled_from([Side.BUY, Side.SELL, Side.NON_PARTICIPANT]),
    st.floats(min_value=0.0, max_value=10.0),
    st.floats(min_value=0.0, max_value=3.0),
    st.floats(min_value=0.0, max_value=7.0),
    st.floats(min_value=0.0, max_value=3.0),
    st.floats(min_value=1.0, max_value=8.0),
)
def test_dispatch_conserves_power(side, q_d, base, pv, hvac_need, energy):
    if side is Side.NON_PARTICIPANT:
        q_d = 0.0
    out = post_clearing_dispatch(side, q_d, base, pv, hvac_need, BatteryState(energy), BAT, 0.5)
    received = q_d if side is Side.BUY else 0.0
    delivered = q_d if side is Side.SELL else 0.0
    lhs = received + pv + out.discharge_kw + out.grid_makeup_kw
    rhs = base + out.hvac_kw + out.charge_kw + delivered + out.curtailed_kw
    assert lhs == pytest.approx(rhs, abs=1e-9)
    assert BAT.soc_min <= out.battery.soc(BAT) <= BAT.soc_max + 1e-15
    assert out.hvac_kw <= hvac_need + 1e-12
