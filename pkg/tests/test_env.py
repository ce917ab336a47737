"""Environment tests: observation assembly, reward fixtures, round stepping."""

import math

import numpy as np
import pytest

from temsim.der import (
    BatteryParams,
    ContractViolation,
    HvacParams,
    PvArray,
    ValuationParams,
)
from temsim.env import (
    LEVEL_ZERO,
    NON_PARTICIPATION,
    ActionPair,
    ExogenousProfile,
    House,
    IngestionError,
    MarketEnv,
    Observation,
    compute_buyer_reward,
    compute_non_participant_reward,
    compute_seller_reward,
    episode_reward,
    generate_exogenous,
    load_exogenous_csv,
    normalize_observation,
    write_exogenous_csv,
)
from temsim.market import Side


def make_house(house_id, n_panels=10, unit_kw=0.48, beta=15.0, t_set=23.0,
               initial_soc=0.5, base_scale=1.0):
    return House(
        house_id=house_id,
        battery=BatteryParams(
            capacity_kwh=10.0,
            max_charge_kw=3.0,
            max_discharge_kw=3.0,
            charge_eff=0.95,
            discharge_eff=0.95,
            soc_min=0.1,
            soc_max=0.8,
        ),
        initial_soc=initial_soc,
        hvac=HvacParams(
            rated_kw=3.0,
            t_set=t_set,
            t_lb=t_set - 1.0,
            t_ub=t_set + 1.0,
            t_max_dev=3.0,
            leak_per_h=0.5,
            cool_gain_c_per_kwh=2.0,
            comfort_floor=0.01,
        ),
        pv=PvArray(n_panels=n_panels, unit_kw=unit_kw),
        valuation=ValuationParams(beta=beta, cost_pv=0.05, cost_bat=0.02),
        base_scale=base_scale,
    )


def flat_profile(rounds, t_out=23.0, irradiance=0.0, price=0.3, base=1.0):
    return ExogenousProfile(
        t_out_c=np.full(rounds, t_out),
        irradiance=np.full(rounds, irradiance),
        supplier_price=np.full(rounds, price),
        base_load_kw=np.full(rounds, base),
    )


def buy(kw, magnitude):
    return ActionPair(quantity_level=LEVEL_ZERO - kw, price_magnitude=magnitude)


def sell(kw, magnitude):
    return ActionPair(quantity_level=LEVEL_ZERO + kw, price_magnitude=magnitude)


# ---------------------------------------------------------------------------
# Observations


def test_cold_start_observation_has_zero_public_fields():
    env = MarketEnv([make_house("h0")], flat_profile(48), rounds_per_day=48)
    views = env.reset()
    obs = views["h0"].observation
    assert obs.vector()[:10].tolist() == [0.0] * 10
    assert obs.supplier_price == 0.3
    assert obs.available_energy_kwh > 0.0


def test_observation_copies_previous_round_outcome():
    houses = [make_house("a", initial_soc=0.1, n_panels=0, unit_kw=0.5),
              make_house("b", initial_soc=0.1, n_panels=10, unit_kw=0.5)]
    env = MarketEnv(houses, flat_profile(48, irradiance=1.0), rounds_per_day=48)
    env.reset()
    result = env.step({"a": buy(2, 0.875), "b": sell(2, 0.5)})
    obs = result.views["a"].observation
    assert obs.prev_clearing_price == result.clearing.clearing_price
    assert obs.prev_clearing_quantity == result.clearing.clearing_quantity
    assert obs.prev_seller_ratio == result.stats.seller_ratio
    assert obs.prev_mean_buy_price == result.stats.mean_buy_price
    assert obs.prev_std_sell_price == result.stats.std_sell_price


def test_available_energy_sums_battery_and_round_pv():
    # E_bat = 5 kWh, PV 4.8 kW over a 5-minute round: 5 + 4.8/12
    env = MarketEnv(
        [make_house("h0", n_panels=10, unit_kw=0.48, initial_soc=0.5)],
        flat_profile(288, irradiance=1.0),
        rounds_per_day=288,
    )
    views = env.reset()
    assert views["h0"].observation.available_energy_kwh == pytest.approx(5.0 + 4.8 / 12.0)


def test_observation_field_order_is_frozen():
    # golden ordering: downstream networks and logs index by position
    obs = Observation(*[float(k) for k in range(13)])
    assert obs.vector().tolist() == [float(k) for k in range(13)]
    assert [f.name for f in __import__("dataclasses").fields(Observation)] == [
        "prev_clearing_price",
        "prev_clearing_quantity",
        "prev_seller_ratio",
        "prev_buyer_ratio",
        "prev_total_sell_kw",
        "prev_total_buy_kw",
        "prev_mean_sell_price",
        "prev_mean_buy_price",
        "prev_std_sell_price",
        "prev_std_buy_price",
        "available_energy_kwh",
        "load_forecast_kwh",
        "supplier_price",
    ]


def test_normalized_observation_lies_in_unit_box():
    obs = Observation(0.38, 55.0, 0.4, 0.6, 45.0, 80.0, 0.2, 0.3, 0.05, 0.02, 11.0, 4.0, 0.33)
    v = normalize_observation(obs, n_agents=10, price_cap=0.4)
    assert v.shape == (13,)
    assert np.all(v >= -1.0) and np.all(v <= 1.0)
    assert v[0] == pytest.approx(0.38 / 0.4)
    assert v[1] == pytest.approx(55.0 / 100.0)
    assert v[10] == 1.0  # clipped: full battery plus a round of peak PV


# ---------------------------------------------------------------------------
# Reward fixtures (hand-computed)


def test_seller_accepted_fixture():
    r = compute_seller_reward(
        accepted=True, clearing_price=0.3, dispatched_kwh=2.0, base_kwh=1.0,
        pv_source_kwh=2.0, battery_source_kwh=0.0, cost_pv=0.05, cost_bat=0.02,
    )
    assert r.total == pytest.approx(0.8)
    assert (r.cash, r.base_saving, r.generation_cost) == (pytest.approx(0.6), pytest.approx(0.3), pytest.approx(0.1))


def test_seller_rejected_pays_wasted_production():
    r = compute_seller_reward(
        accepted=False, clearing_price=0.3, dispatched_kwh=0.0, base_kwh=0.0,
        pv_source_kwh=1.0, battery_source_kwh=0.5, cost_pv=0.05, cost_bat=0.02,
    )
    assert r.total == pytest.approx(-(0.05 + 0.01))


def test_buyer_accepted_fixture():
    r = compute_buyer_reward(
        clearing_price=0.3, bid_price=0.35, dispatched_kwh=2.0, bid_kwh=2.0,
        value_dispatched=0.9, value_bid=0.95,
    )
    assert r.total == pytest.approx(0.3)


def test_buyer_boundary_is_weakly_accepted():
    r = compute_buyer_reward(
        clearing_price=0.35, bid_price=0.35, dispatched_kwh=1.0, bid_kwh=1.0,
        value_dispatched=0.5, value_bid=0.5,
    )
    assert r.total == pytest.approx(0.5 - 0.35)
    assert r.valuation == 0.5  # accepted branch


def test_buyer_rejected_fixture():
    r = compute_buyer_reward(
        clearing_price=0.4, bid_price=0.2, dispatched_kwh=0.0, bid_kwh=1.0,
        value_dispatched=0.0, value_bid=0.7,
    )
    assert r.total == pytest.approx(-0.7 + 0.2)


def test_idle_non_participant_earns_nothing():
    r = compute_non_participant_reward(
        clearing_price=0.3, base_kwh=0.0, pv_kwh=0.0, battery_kwh=0.0,
        value=0.0, cost_pv=0.05, cost_bat=0.02,
    )
    assert r.total == 0.0


def test_episode_reward_sums_rounds():
    assert episode_reward([0.8, 0.3, 0.0]) == pytest.approx(1.1)
    assert episode_reward([0.0, 0.0]) == 0.0
    assert episode_reward([0.42]) == 0.42
    with pytest.raises(ContractViolation):
        episode_reward([])


# ---------------------------------------------------------------------------
# Round stepping


def test_all_non_participants_keeps_market_empty_but_physics_moves():
    houses = [make_house("a", t_set=23.0), make_house("b", t_set=23.0)]
    env = MarketEnv(houses, flat_profile(48, t_out=35.0), rounds_per_day=48)
    views = env.reset()
    t_in_before = {a: env._thermal[a].t_in for a in env.agent_ids}
    result = env.step({a: NON_PARTICIPATION for a in env.agent_ids})
    assert result.clearing.clearing_quantity == 0.0
    for agent_id in env.agent_ids:
        assert result.rewards[agent_id].side is Side.NON_PARTICIPANT
        # hot outdoors leaks in; HVAC self-supplies from the battery
        assert env._thermal[agent_id].t_in != t_in_before[agent_id]


def test_two_agent_round_matches_hand_computation():
    # Hot round: both thermostats demand 3 kW. The seller's PV (8 kW) covers
    # base 1 + HVAC 3 and sells 2; the buyer (no PV) buys 2 to serve base 1
    # and 1 kW of cooling.  Supplier price 0.3: seller magnitude 2/3 asks
    # 0.2, buyer magnitude 0.5 bids 0.3 + 0.5*(0.4-0.3) = 0.35.
    seller = make_house("s", n_panels=16, unit_kw=0.5, beta=1.0, initial_soc=0.1)
    buyer = make_house("b", n_panels=0, unit_kw=0.5, beta=1.0, initial_soc=0.1)
    env = MarketEnv(
        [seller, buyer], flat_profile(48, t_out=35.0, irradiance=1.0), rounds_per_day=48
    )
    env.reset()
    result = env.step({"s": sell(2, 2.0 / 3.0), "b": buy(2, 0.5)})

    assert result.clearing.clearing_price == pytest.approx(0.275)
    assert result.clearing.clearing_quantity == pytest.approx(2.0)

    # Seller: revenue 0.275*1 kWh + base saving 0.275*0.5 kWh - PV cost 0.05*1 kWh
    assert result.rewards["s"].total == pytest.approx(0.275 + 0.1375 - 0.05)
    assert result.records["s"].hvac_kw == pytest.approx(3.0)
    assert result.records["s"].charge_kw == pytest.approx(2.0)  # leftover surplus
    # Buyer: of 2 kW bought, 1 serves base (unvalued) and 1 cools at comfort 1
    v = math.log(1.0 + 1.0 * 1.0 * 1.0)
    assert result.rewards["b"].total == pytest.approx(v - 0.275 * 1.0)
    assert result.records["b"].payment == pytest.approx(0.275)
    assert result.records["b"].hvac_kw == pytest.approx(1.0)


def test_infeasible_action_is_demoted_and_logged():
    house = make_house("h", n_panels=0, initial_soc=0.1)  # cannot sell anything
    env = MarketEnv([house], flat_profile(48), rounds_per_day=48)
    env.reset()
    result = env.step({"h": sell(5, 0.5)})
    assert result.demoted == ("h",)
    assert result.records["h"].side is Side.NON_PARTICIPANT
    assert result.records["h"].demoted
    assert result.rewards["h"].side is Side.NON_PARTICIPANT


def test_seeded_round_is_reproducible():
    def run():
        houses = [make_house(f"h{i}", n_panels=6 + i) for i in range(10)]
        profile = generate_exogenous(seed=3, days=1, rounds_per_day=48)
        env = MarketEnv(houses, profile, rounds_per_day=48)
        env.reset()
        rng = np.random.default_rng(11)
        outputs = []
        for _ in range(10):
            actions = {}
            for agent_id in env.agent_ids:
                feasible = env._ctx[agent_id].feasible
                lo = LEVEL_ZERO + int(math.ceil(feasible.q_min_kw))
                hi = LEVEL_ZERO + int(math.floor(feasible.q_max_kw))
                level = int(rng.integers(lo, hi + 1))
                mag = 0.0 if level == LEVEL_ZERO else float(rng.uniform())
                actions[agent_id] = ActionPair(level, mag)
            result = env.step(actions)
            outputs.append(
                (
                    result.clearing.clearing_price,
                    result.clearing.clearing_quantity,
                    tuple(sorted((a, r.total) for a, r in result.rewards.items())),
                )
            )
        return outputs

    assert run() == run()


def test_rounds_roll_over_into_done():
    env = MarketEnv([make_house("h")], flat_profile(4), rounds_per_day=4)
    env.reset()
    flags = [env.step({"h": NON_PARTICIPATION}).done for _ in range(4)]
    assert flags == [False, False, False, True]


def test_step_requires_action_per_agent():
    env = MarketEnv([make_house("h")], flat_profile(48), rounds_per_day=48)
    env.reset()
    with pytest.raises(ContractViolation):
        env.step({})


# ---------------------------------------------------------------------------
# Exogenous processes


def test_irradiance_is_zero_at_midnight():
    profile = generate_exogenous(seed=1, days=2, rounds_per_day=48)
    assert profile.irradiance[0] == 0.0
    assert profile.irradiance[48] == 0.0


def test_supplier_price_respects_band():
    profile = generate_exogenous(seed=2, days=5, rounds_per_day=48)
    assert profile.supplier_price.min() >= 0.2
    assert profile.supplier_price.max() <= 0.4


def test_same_seed_reproduces_profile():
    a = generate_exogenous(seed=9, days=2, rounds_per_day=48)
    b = generate_exogenous(seed=9, days=2, rounds_per_day=48)
    assert np.array_equal(a.t_out_c, b.t_out_c)
    assert np.array_equal(a.irradiance, b.irradiance)
    assert np.array_equal(a.supplier_price, b.supplier_price)
    assert np.array_equal(a.base_load_kw, b.base_load_kw)


def test_exogenous_csv_round_trip(tmp_path):
    profile = generate_exogenous(seed=4, days=1, rounds_per_day=24)
    path = tmp_path / "exo.csv"
    write_exogenous_csv(path, profile)
    loaded = load_exogenous_csv(path)
    assert np.array_equal(profile.t_out_c, loaded.t_out_c)
    assert np.array_equal(profile.supplier_price, loaded.supplier_price)


def test_exogenous_csv_missing_column_is_named(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("round,t_out_c,irradiance,base_load_kw\n0,25.0,0.5,1.0\n")
    with pytest.raises(IngestionError, match="supplier_price"):
        load_exogenous_csv(path)
