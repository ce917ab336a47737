"""Clearing engine tests: hand-traced rounds, brute-force oracle, auction properties."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from temsim.market import (
    Bid,
    ClearingResult,
    MarketError,
    OrderBook,
    Side,
    clear_market,
    compute_statistics,
)

SUPPLIER = "supplier"


def book_of(buys, sells, supplier_price=10.0, supplier_capacity=0.0, nonparticipants=0):
    bids = []
    for k, (p, q) in enumerate(buys):
        bids.append(Bid(f"b{k}", Side.BUY, p, q))
    for k, (p, q) in enumerate(sells):
        bids.append(Bid(f"s{k}", Side.SELL, p, q))
    for k in range(nonparticipants):
        bids.append(Bid(f"n{k}", Side.NON_PARTICIPANT, 0.0, 0.0))
    offer = Bid(SUPPLIER, Side.SELL, supplier_price, supplier_capacity)
    return OrderBook(round_index=0, bids=tuple(bids), supplier_offer=offer)


def max_uniform_volume(book):
    """Brute-force oracle: best uniform-price volume over all candidate prices.

    At a uniform price p the tradable volume is min(demand willing to pay
    >= p, supply willing to accept <= p); enumerate all bid prices and the
    midpoints between adjacent ones.
    """
    sells = [b for b in book.bids if b.side is Side.SELL] + [book.supplier_offer]
    buys = [b for b in book.bids if b.side is Side.BUY]
    prices = sorted({b.price for b in sells} | {b.price for b in buys})
    candidates = list(prices)
    candidates += [(a + b) / 2 for a, b in zip(prices, prices[1:])]
    best = 0.0
    for p in candidates:
        demand = sum(b.quantity for b in buys if b.price >= p)
        supply = sum(s.quantity for s in sells if s.price <= p)
        best = max(best, min(demand, supply))
    return best


def check_auction_invariants(book, result):
    """Budget balance, individual rationality, and merit order for one round."""
    sells = {b.trader_id: b for b in book.bids if b.side is Side.SELL}
    sells[book.supplier_offer.trader_id] = book.supplier_offer
    buys = {b.trader_id: b for b in book.bids if b.side is Side.BUY}

    bought = math.fsum(result.dispatch[t] for t in buys)
    sold = math.fsum(result.dispatch[t] for t in sells)
    assert bought == pytest.approx(result.clearing_quantity, abs=1e-9)
    assert sold == pytest.approx(result.clearing_quantity, abs=1e-9)

    for tid, bid in buys.items():
        assert 0.0 <= result.dispatch[tid] <= bid.quantity + 1e-12
        if result.accepted[tid]:
            assert bid.price >= result.clearing_price
    for tid, bid in sells.items():
        assert 0.0 <= result.dispatch[tid] <= bid.quantity + 1e-12
        if result.accepted[tid]:
            assert bid.price <= result.clearing_price

# Zero-quantity bids are vacuously rejected and carry no merit-order weight.
    accepted_buy_prices = [buys[t].price for t in buys if result.accepted[t]]
    rejected_buy_prices = [
        buys[t].price for t in buys if not result.accepted[t] and buys[t].quantity > 0.0
    ]
    if accepted_buy_prices and rejected_buy_prices:
        assert max(rejected_buy_prices) <= min(accepted_buy_prices)
    accepted_sell = [sells[t].price for t in sells if result.accepted[t]]
    rejected_sell = [
        sells[t].price for t in sells if not result.accepted[t] and sells[t].quantity > 0.0
    ]
    if accepted_sell and rejected_sell:
        assert min(rejected_sell) >= max(accepted_sell)


def test_two_by_two_hand_example():
    book = book_of(buys=[(0.5, 2.0), (0.3, 1.0)], sells=[(0.2, 2.0), (0.4, 2.0)])
    result = clear_market(book, fallback_price=0.3)
    assert result.clearing_quantity == 2.0
    assert result.clearing_price == pytest.approx(0.35)
    assert result.dispatch["b0"] == 2.0
    assert result.dispatch["s0"] == 2.0
    assert not result.accepted["b1"]
    assert not result.accepted["s1"]


def test_empty_buy_side_carries_price_over():
    book = book_of(buys=[], sells=[(0.2, 2.0)], supplier_capacity=100.0)
    result = clear_market(book, fallback_price=0.31)
    assert result.clearing_quantity == 0.0
    assert result.clearing_price == 0.31
    assert all(q == 0.0 for q in result.dispatch.values())
    assert not any(result.accepted.values())


def test_single_buyer_against_supplier():
    book = book_of(buys=[(0.35, 2.0)], sells=[], supplier_price=0.30, supplier_capacity=1000.0)
    result = clear_market(book, fallback_price=0.30)
    assert result.clearing_quantity == 2.0
    assert result.clearing_price == pytest.approx(0.325)
    assert result.dispatch["b0"] == 2.0
    assert result.dispatch[SUPPLIER] == pytest.approx(2.0)


def test_marginal_buyer_rationed_pro_rata():
    # Supply of 3 kW at 0.2 faces 2 kW strictly inside and two 2 kW bids at
    # the marginal price 0.4: each marginal buyer gets 0.5 kW.
    book = book_of(
        buys=[(0.6, 2.0), (0.4, 2.0), (0.4, 2.0)],
        sells=[(0.2, 3.0)],
    )
    result = clear_market(book, fallback_price=0.3)
    assert result.clearing_quantity == 3.0
    assert result.dispatch["b0"] == 2.0
    assert result.dispatch["b1"] == pytest.approx(0.5)
    assert result.dispatch["b2"] == pytest.approx(0.5)
    check_auction_invariants(book, result)


def test_duplicate_trader_rejected():
    offer = Bid(SUPPLIER, Side.SELL, 0.3, 100.0)
    bids = (Bid("a", Side.BUY, 0.3, 1.0), Bid("a", Side.SELL, 0.2, 1.0))
    with pytest.raises(MarketError, match="duplicate"):
        clear_market(OrderBook(0, bids, offer), fallback_price=0.3)


def test_supplier_offer_must_sell():
    with pytest.raises(MarketError, match="sell"):
        clear_market(
            OrderBook(0, (), Bid(SUPPLIER, Side.BUY, 0.3, 10.0)), fallback_price=0.3
        )


def test_clearing_is_deterministic():
    book = book_of(
        buys=[(0.5, 2.0), (0.4, 1.5), (0.4, 2.5)],
        sells=[(0.1, 1.0), (0.4, 3.0)],
        supplier_price=0.45,
        supplier_capacity=50.0,
    )
    first = clear_market(book, fallback_price=0.3)
    second = clear_market(book, fallback_price=0.3)
    assert first == second


price_grid = st.sampled_from([0.05 * k for k in range(1, 9)])
quantity_grid = st.integers(min_value=0, max_value=4)


@st.composite
def random_books(draw):
    n = draw(st.integers(min_value=1, max_value=8))
    bids = []
    for k in range(n):
        side = draw(st.sampled_from([Side.BUY, Side.SELL, Side.NON_PARTICIPANT]))
        if side is Side.NON_PARTICIPANT:
            bids.append(Bid(f"t{k}", side, 0.0, 0.0))
        else:
            bids.append(Bid(f"t{k}", side, draw(price_grid), float(draw(quantity_grid))))
    supplier_price = draw(price_grid)
    supplier_capacity = float(draw(st.integers(min_value=0, max_value=1000)))
    offer = Bid(SUPPLIER, Side.SELL, supplier_price, supplier_capacity)
    return OrderBook(0, tuple(bids), offer)


@settings(max_examples=300, deadline=None)
@given(random_books())
def test_cleared_volume_matches_brute_force(book):
    result = clear_market(book, fallback_price=0.3)
    assert result.clearing_quantity == pytest.approx(max_uniform_volume(book), abs=1e-9)
    check_auction_invariants(book, result)


def test_statistics_hand_example():
    book = book_of(buys=[(0.5, 3.0)], sells=[(0.2, 2.0), (0.4, 1.0)])
    stats = compute_statistics(book)
    assert stats.seller_ratio == pytest.approx(2 / 3)
    assert stats.buyer_ratio == pytest.approx(1 / 3)
    assert stats.total_sell_kw == 3.0
    assert stats.total_buy_kw == 3.0
    assert stats.mean_sell_price == pytest.approx(0.3)
    assert stats.mean_buy_price == pytest.approx(0.5)
    assert stats.std_sell_price == pytest.approx(0.1)
    assert stats.std_buy_price == 0.0


def test_statistics_all_nonparticipants():
    book = book_of(buys=[], sells=[], nonparticipants=4)
    stats = compute_statistics(book)
    assert stats == compute_statistics(book)  # pure
    for value in (
        stats.seller_ratio,
        stats.buyer_ratio,
        stats.total_sell_kw,
        stats.total_buy_kw,
        stats.mean_sell_price,
        stats.mean_buy_price,
        stats.std_sell_price,
        stats.std_buy_price,
    ):
        assert value == 0.0


def test_statistics_identical_sells_have_zero_std():
    book = book_of(buys=[], sells=[(0.3, 1.0), (0.3, 1.0)])
    stats = compute_statistics(book)
    assert stats.mean_sell_price == pytest.approx(0.3)
    assert stats.std_sell_price == 0.0


def test_statistics_exclude_supplier():
    book = book_of(buys=[(0.5, 1.0)], sells=[], supplier_price=0.3, supplier_capacity=500.0)
    stats = compute_statistics(book)
    assert stats.seller_ratio == 0.0
    assert stats.total_sell_kw == 0.0


def test_nonparticipant_bid_must_be_zero():
    with pytest.raises(MarketError):
        Bid("x", Side.NON_PARTICIPANT, 0.1, 0.0)


def test_prosumer_quantity_bound_enforced():
    offer = Bid(SUPPLIER, Side.SELL, 0.3, 1000.0)
    book = OrderBook(0, (Bid("a", Side.BUY, 0.3, 11.0),), offer)
    with pytest.raises(MarketError, match="exceeds"):
        clear_market(book, fallback_price=0.3)
