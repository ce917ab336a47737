"""Uniform double auction: order book, merit-order clearing, round statistics.

One auction round works on a snapshot order book: every prosumer submits
exactly one bid (possibly a non-participant placeholder) and the electricity
supplier contributes an always-present sell offer.  All accepted trades settle
at a single uniform price; the marginal side is rationed pro-rata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum


class Side(Enum):
    BUY = "buy"
    SELL = "sell"
    NON_PARTICIPANT = "none"


class MarketError(ValueError):
    """Raised for order books that violate the market contract."""


@dataclass(frozen=True)
class Bid:
    """One trader's submission for one round.

    ``quantity`` is average power in kW over the round.  Non-participants
    submit a (0, 0) placeholder so participation ratios stay computable.
    """

    trader_id: str
    side: Side
    price: float
    quantity: float

    def __post_init__(self) -> None:
        if self.price < 0.0 or self.quantity < 0.0:
            raise MarketError(
                f"bid {self.trader_id}: price and quantity must be non-negative"
            )
        if self.side is Side.NON_PARTICIPANT and (self.price != 0.0 or self.quantity != 0.0):
            raise MarketError(
                f"bid {self.trader_id}: non-participant placeholder must be (0, 0)"
            )


# Paper-scale bound on a single prosumer's bid quantity, in kW.
MAX_BID_KW = 10.0


@dataclass(frozen=True)
class OrderBook:
    """All bids of one round plus the supplier's standing sell offer."""

    round_index: int
    bids: tuple[Bid, ...]
    supplier_offer: Bid

    def validate(self) -> None:
        if self.round_index < 0:
            raise MarketError("round_index must be >= 0")
        if self.supplier_offer.side is not Side.SELL:
            raise MarketError("supplier offer must be a sell bid")
        seen: set[str] = {self.supplier_offer.trader_id}
        for bid in self.bids:
            if bid.trader_id in seen:
                raise MarketError(f"duplicate trader_id {bid.trader_id!r}")
            seen.add(bid.trader_id)
            if bid.quantity > MAX_BID_KW:
                raise MarketError(
                    f"bid {bid.trader_id}: quantity {bid.quantity} exceeds {MAX_BID_KW} kW"
                )


@dataclass(frozen=True)
class ClearingResult:
    """Uniform-price outcome of one round.

    ``dispatch`` maps every trader (supplier included) to dispatched power in
    kW; rejected and non-participant traders appear with 0.
    """

    clearing_price: float
    clearing_quantity: float
    dispatch: dict[str, float] = field(default_factory=dict)
    accepted: dict[str, bool] = field(default_factory=dict)


@dataclass(frozen=True)
class MarketStats:
    """Published per-round statistics over prosumer bids (supplier excluded)."""

    seller_ratio: float
    buyer_ratio: float
    total_sell_kw: float
    total_buy_kw: float
    mean_sell_price: float
    mean_buy_price: float
    std_sell_price: float
    std_buy_price: float


#: Column order of the per-round market log.
MARKET_LOG_COLUMNS = (
    "round",
    "clearing_price",
    "clearing_quantity",
    "r_s",
    "r_b",
    "q_tot_s",
    "q_tot_b",
    "m_s",
    "m_b",
    "std_s",
    "std_b",
    "supplier_price",
)


def _marginal_prices(buys: list[Bid], sells: list[Bid]) -> tuple[float, float] | None:
    """Walk the merit-order curves; return (marginal buy, marginal sell) price.

    ``buys`` must be sorted descending and ``sells`` ascending by price.
    Returns None when the curves do not cross.
    """
    i = j = 0
    rb = rs = 0.0
    matched = False
    b_star = s_star = 0.0
    while True:
        while i < len(buys) and rb <= 0.0:
            rb = buys[i].quantity if buys[i].quantity > 0.0 else 0.0
            if rb == 0.0:
                i += 1
        while j < len(sells) and rs <= 0.0:
            rs = sells[j].quantity if sells[j].quantity > 0.0 else 0.0
            if rs == 0.0:
                j += 1
        if i >= len(buys) or j >= len(sells) or buys[i].price < sells[j].price:
            break
        step = min(rb, rs)
        matched = True
        b_star, s_star = buys[i].price, sells[j].price
        rb -= step
        rs -= step
        if rb <= 0.0:
            i += 1
            rb = 0.0
        if rs <= 0.0:
            j += 1
            rs = 0.0
    return (b_star, s_star) if matched else None


def _fill_side(
    bids: list[Bid], marginal_price: float, target: float, dispatch: dict[str, float]
) -> None:
    """Dispatch one side up to ``target`` kW.

    Bids strictly inside the cross are filled fully; bids at the marginal
    price share the remainder pro-rata by quantity.  Individual fills never
    exceed the bid quantity; the last marginal bid absorbs rounding dust so
    both sides sum to the cleared volume.
    """
    inside = [b for b in bids if b.quantity > 0.0 and _better(b, marginal_price)]
    marginal = [b for b in bids if b.quantity > 0.0 and b.price == marginal_price]
    for b in inside:
        dispatch[b.trader_id] = b.quantity
    remainder = target - math.fsum(b.quantity for b in inside)
    total_marginal = math.fsum(b.quantity for b in marginal)
    if total_marginal <= 0.0 or remainder <= 0.0:
        return
    left = remainder
    for k, b in enumerate(marginal):
        if k == len(marginal) - 1:
            fill = min(b.quantity, max(0.0, left))
        else:
            fill = min(b.quantity, b.quantity * remainder / total_marginal, max(0.0, left))
        dispatch[b.trader_id] = fill
        left -= fill


def _better(bid: Bid, marginal_price: float) -> bool:
    if bid.side is Side.BUY:
        return bid.price > marginal_price
    return bid.price < marginal_price


def clear_market(book: OrderBook, fallback_price: float) -> ClearingResult:
    """Clear one round by merit order at the uniform midpoint price.

    Buy bids are sorted descending and sell bids (supplier included)
    ascending by price; the cleared volume is the intersection of the two
    step curves and the clearing price the midpoint of the marginal accepted
    buy and sell prices.  Without a cross the round clears zero volume at
    ``fallback_price`` (previous round's price, or the supplier price on the
    first round).
    """
    book.validate()
    traders = [b.trader_id for b in book.bids] + [book.supplier_offer.trader_id]
    dispatch = {t: 0.0 for t in traders}

    buys = sorted(
        (b for b in book.bids if b.side is Side.BUY),
        key=lambda b: b.price,
        reverse=True,
    )
    sells = sorted(
        [b for b in book.bids if b.side is Side.SELL] + [book.supplier_offer],
        key=lambda b: b.price,
    )

    cross = _marginal_prices(buys, sells)
    if cross is None:
        return ClearingResult(
            clearing_price=fallback_price,
            clearing_quantity=0.0,
            dispatch=dispatch,
            accepted={t: False for t in traders},
        )

    b_star, s_star = cross
    buy_depth = math.fsum(b.quantity for b in buys if b.price >= b_star)
    sell_depth = math.fsum(s.quantity for s in sells if s.price <= s_star)
    volume = min(buy_depth, sell_depth)

    _fill_side([b for b in buys if b.price >= b_star], b_star, volume, dispatch)
    _fill_side([s for s in sells if s.price <= s_star], s_star, volume, dispatch)

    accepted = {t: dispatch[t] > 0.0 for t in traders}
    return ClearingResult(
        clearing_price=(b_star + s_star) / 2.0,
        clearing_quantity=volume,
        dispatch=dispatch,
        accepted=accepted,
    )


def _mean_std(prices: list[float]) -> tuple[float, float]:
    # Population statistics; degenerate sides report zeros.
    if not prices:
        return 0.0, 0.0
    mean = math.fsum(prices) / len(prices)
    if len(prices) == 1:
        return mean, 0.0
    var = math.fsum((p - mean) ** 2 for p in prices) / len(prices)
    return mean, math.sqrt(var)


def compute_statistics(book: OrderBook) -> MarketStats:
    """Aggregate prosumer bids into the published round statistics.

    Ratios are taken over all prosumer agents (non-participants included);
    price means and standard deviations are quantity-unweighted population
    statistics.  The supplier offer is excluded throughout.
    """
    n_agents = len(book.bids)
    sells = [b for b in book.bids if b.side is Side.SELL]
    buys = [b for b in book.bids if b.side is Side.BUY]
    m_s, std_s = _mean_std([b.price for b in sells])
    m_b, std_b = _mean_std([b.price for b in buys])
    return MarketStats(
        seller_ratio=len(sells) / n_agents if n_agents else 0.0,
        buyer_ratio=len(buys) / n_agents if n_agents else 0.0,
        total_sell_kw=math.fsum(b.quantity for b in sells),
        total_buy_kw=math.fsum(b.quantity for b in buys),
        mean_sell_price=m_s,
        mean_buy_price=m_b,
        std_sell_price=std_s,
        std_buy_price=std_b,
    )
