"""Seller-driven double auction over Good and Right, repeated over an episode.

Quantities are divisible here (exact rationals). Each market: incomes and
supply arrive, sellers post Good offers, buyers declare demand, Rights are
issued by the contested-garment rule on the offered Good, buyers post Right
offers, then orders are matched against offers cheapest first. A buyer can
only take Good against a Right: its own unlisted Rights first, after that it
has to buy a Right together with each unit of Good. Unsold Rights expire at
the end of the market.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Protocol, Sequence

from .fairness import ClaimsProblem, DegenerateClaimsError, contested_garment_distribution
from .market import frustration
from .numbers import Rational

NOISE_GRID = 10**6


# -- configuration ---------------------------------------------------------------

@dataclass(frozen=True)
class EconConstants:
    c_store: Fraction = Fraction(-1, 2)
    c_end_supply: Fraction = Fraction(1, 10)
    c_in_stock: Fraction = Fraction(2)
    c_missing: Fraction = Fraction(-1)
    c_money: Fraction = Fraction(1, 10)


@dataclass(frozen=True)
class BuyerProfile:
    id: int
    income: Fraction
    demand: Fraction


@dataclass(frozen=True)
class EpisodeConfig:
    markets: int = 10
    buyers: tuple[BuyerProfile, ...] = (
        BuyerProfile(1, Fraction(4, 4), Fraction(1, 2)),
        BuyerProfile(2, Fraction(5, 4), Fraction(1, 2)),
        BuyerProfile(3, Fraction(6, 4), Fraction(1, 2)),
        BuyerProfile(4, Fraction(1, 4), Fraction(5, 2)),
    )
    sellers: tuple[int, ...] = (5, 6, 7, 8)
    supply_base: Fraction = Fraction(1, 4)
    supply_sd: Fraction = Fraction(1, 40)
    constants: EconConstants = EconConstants()
    seed: int = 0

    def problems(self) -> list[str]:
        out = []
        ids = [b.id for b in self.buyers] + list(self.sellers)
        if len(set(ids)) != len(ids):
            out.append("participant ids must be unique")
        if self.markets < 1:
            out.append("market count must be at least 1")
        for b in self.buyers:
            if b.demand <= 0:
                out.append(f"buyer {b.id}: demand must be positive")
            if b.income < 0:
                out.append(f"buyer {b.id}: income must be non-negative")
        if self.supply_base < 0 or self.supply_sd < 0:
            out.append("supply base and spread must be non-negative")
        return out


def draw_supply(rng: random.Random, base: Fraction, sd: Fraction) -> Fraction:
    """``base + Normal(0, sd)`` by Box-Muller, snapped to a 1e-6 grid, floored at 0."""
    u1 = 1.0 - rng.random()  # in (0, 1], keeps the log finite
    u2 = rng.random()
    z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
    noise = Fraction(round(float(sd) * z * NOISE_GRID), NOISE_GRID)
    return max(Fraction(0), base + noise)


# -- declarations ----------------------------------------------------------------

@dataclass(frozen=True)
class SellerOffer:
    seller: int
    quantity: Fraction
    price: Fraction


@dataclass(frozen=True)
class RightOffer:
    buyer: int
    quantity: Fraction
    price: Fraction


@dataclass(frozen=True)
class BuyerOrder:
    buyer: int
    good_volume: Fraction = Fraction(0)
    good_cap: Fraction = Fraction(0)
    right_volume: Fraction = Fraction(0)
    right_cap: Fraction = Fraction(0)


@dataclass
class Holdings:
    money: Fraction = Fraction(0)
    good: Fraction = Fraction(0)


@dataclass(frozen=True)
class View:
    """What a participant sees when it has to act."""

    t: int
    markets: int
    pid: int
    holdings: Holdings
    demand: Fraction = Fraction(0)
    rights: Fraction = Fraction(0)
    offers: tuple[SellerOffer, ...] = ()
    right_offers: tuple[RightOffer, ...] = ()


class Strategy(Protocol):
    def seller_offer(self, view: View) -> SellerOffer | None: ...
    def declare_demand(self, view: View) -> Fraction: ...
    def right_offer(self, view: View) -> RightOffer | None: ...
    def order(self, view: View) -> BuyerOrder | None: ...
    def observe(self, t: int, utility: Fraction) -> None: ...


# -- matching --------------------------------------------------------------------

@dataclass(frozen=True)
class Trade:
    step: int
    commodity: str  # "G" or "R"
    quantity: Fraction
    price: Fraction
    seller: int
    buyer: int


def issue_rights(offered: Rational, demands: dict[int, Fraction]) -> dict[int, Fraction]:
    problem = ClaimsProblem(Fraction(offered), demands)
    if problem.supply > 0 and problem.total_demand == 0:
        raise DegenerateClaimsError("Good offered but every declared demand is zero")
    return contested_garment_distribution(problem)


def _by_price(items: Sequence, rng: random.Random) -> list[int]:
    """Indices in ascending price; equal prices in random order."""
    return [k for _, _, k in sorted((item.price, rng.random(), k) for k, item in enumerate(items))]


def clear_market(
    offers: Sequence[SellerOffer],
    right_offers: Sequence[RightOffer],
    orders: Sequence[BuyerOrder],
    rights: dict[int, Fraction],
    holdings: dict[int, Holdings],
    rng: random.Random,
) -> list[Trade]:
    """Match orders to offers cheapest first, moving Money and Good in ``holdings``.

    ``rights`` are the Rights issued this market; the listed part of a buyer's
    Rights is reserved for sale and cannot back its own purchases.
    """
    listed = {b: Fraction(0) for b in rights}
    for ro in right_offers:
        listed[ro.buyer] += ro.quantity
    own = {b: rights[b] - listed[b] for b in rights}
    right_left = [ro.quantity for ro in right_offers]
    right_order = _by_price(right_offers, rng)
    sellers_of_rights = {ro.buyer for ro in right_offers if ro.quantity > 0}
    good_want = {o.buyer: o.good_volume for o in orders}
    right_want = {o.buyer: o.right_volume for o in orders}
    by_buyer = {o.buyer: o for o in orders}
    trades: list[Trade] = []

    def cheapest_right(buyer: int) -> int | None:
        if buyer in sellers_of_rights or right_want[buyer] <= 0:
            return None
        k = next((k for k in right_order if right_left[k] > 0), None)
        if k is None or right_offers[k].price > by_buyer[buyer].right_cap:
            return None
        return k

    def capacity(buyer: int, offer: SellerOffer, left: Fraction) -> tuple[Fraction, int | None]:
        o = by_buyer[buyer]
        if good_want[buyer] <= 0 or o.good_cap < offer.price:
            return Fraction(0), None
        money = holdings[buyer].money
        if own[buyer] > 0:
            return min(left, good_want[buyer], own[buyer], money / offer.price), None
        k = cheapest_right(buyer)
        if k is None:
            return Fraction(0), None
        unit = offer.price + right_offers[k].price
        return min(left, good_want[buyer], right_want[buyer], right_left[k], money / unit), k

    for offer in (offers[k] for k in _by_price(offers, rng)):
        left = offer.quantity
        while left > 0:
            ready = [b for b in sorted(by_buyer) if capacity(b, offer, left)[0] > 0]
            if not ready:
                break
            buyer = rng.choice(ready)
            q, k = capacity(buyer, offer, left)
            if k is None:
                own[buyer] -= q
            else:
                ro = right_offers[k]
                right_left[k] -= q
                right_want[buyer] -= q
                holdings[buyer].money -= q * ro.price
                holdings[ro.buyer].money += q * ro.price
                trades.append(Trade(len(trades), "R", q, ro.price, ro.buyer, buyer))
            holdings[buyer].money -= q * offer.price
            holdings[offer.seller].money += q * offer.price
            holdings[offer.seller].good -= q
            holdings[buyer].good += q
            good_want[buyer] -= q
            left -= q
            trades.append(Trade(len(trades), "G", q, offer.price, offer.seller, buyer))
    return trades


# -- utilities -------------------------------------------------------------------

def seller_utility(delta_money: Fraction, good: Fraction, t: int, markets: int, c: EconConstants = EconConstants()) -> Fraction:
    end = 1 if t == markets else 0
    return delta_money + c.c_store * good + end * c.c_end_supply * good


def buyer_utility(
    good: Fraction, demand: Fraction, money: Fraction, t: int, markets: int, c: EconConstants = EconConstants()
) -> Fraction:
    if demand <= 0:
        raise ValueError("demand must be positive")
    ratio = good / demand
    end = 1 if t == markets else 0
    return c.c_in_stock * min(Fraction(1), ratio) + c.c_missing * max(Fraction(0), 1 - ratio) + end * c.c_money * money


# -- episodes --------------------------------------------------------------------

@dataclass(frozen=True)
class Clamp:
    participant: int
    what: str
    message: str


@dataclass
class MarketResult:
    t: int
    supply: dict[int, Fraction]
    offers: list[SellerOffer]
    declared: dict[int, Fraction]
    rights: dict[int, Fraction]
    right_offers: list[RightOffer]
    orders: list[BuyerOrder]
    trades: list[Trade]
    purchased: dict[int, Fraction]
    holdings: dict[int, Holdings]  # after trading, before consumption
    consumed: dict[int, Fraction]
    utilities: dict[int, Fraction]
    frustration: dict[int, Fraction | None]
    clamps: list[Clamp] = field(default_factory=list)


@dataclass
class SellerEpisode:
    config: EpisodeConfig
    markets: list[MarketResult]

    def frustration_series(self, buyer: int) -> list[Fraction | None]:
        return [m.frustration[buyer] for m in self.markets]


def _copy(h: dict[int, Holdings]) -> dict[int, Holdings]:
    return {k: Holdings(v.money, v.good) for k, v in h.items()}


def _nonneg(x, pid: int, what: str, clamps: list[Clamp]) -> Fraction:
    x = Fraction(x)
    if x < 0:
        clamps.append(Clamp(pid, what, f"{what} {x} raised to 0"))
        return Fraction(0)
    return x


def _clamp_offer(offer: SellerOffer | None, pid: int, stock: Fraction, clamps: list[Clamp]) -> SellerOffer | None:
    if offer is None:
        return None
    if offer.price <= 0:
        clamps.append(Clamp(pid, "offer", f"non-positive price {offer.price}; offer dropped"))
        return None
    q = _nonneg(offer.quantity, pid, "offer quantity", clamps)
    if q > stock:
        clamps.append(Clamp(pid, "offer", f"quantity {q} above stock {stock}"))
        q = stock
    return SellerOffer(pid, q, Fraction(offer.price)) if q > 0 else None


def _clamp_right_offer(offer: RightOffer | None, pid: int, rights: Fraction, clamps: list[Clamp]) -> RightOffer | None:
    if offer is None:
        return None
    price = _nonneg(offer.price, pid, "right price", clamps)
    q = _nonneg(offer.quantity, pid, "right quantity", clamps)
    if q > rights:
        clamps.append(Clamp(pid, "right offer", f"quantity {q} above issued Rights {rights}"))
        q = rights
    return RightOffer(pid, q, price) if q > 0 else None


def _clamp_order(order: BuyerOrder | None, pid: int, clamps: list[Clamp]) -> BuyerOrder:
    if order is None:
        return BuyerOrder(pid)
    return BuyerOrder(
        pid,
        _nonneg(order.good_volume, pid, "good volume", clamps),
        _nonneg(order.good_cap, pid, "good cap", clamps),
        _nonneg(order.right_volume, pid, "right volume", clamps),
        _nonneg(order.right_cap, pid, "right cap", clamps),
    )


def run_seller_episode(cfg: EpisodeConfig, strategies: dict[int, Strategy]) -> SellerEpisode:
    problems = cfg.problems()
    if problems:
        raise ValueError("; ".join(problems))
    missing = {b.id for b in cfg.buyers} | set(cfg.sellers)
    missing -= set(strategies)
    if missing:
        raise ValueError(f"no strategy for participants {sorted(missing)}")
    supply_rng = random.Random(2 * cfg.seed)
    match_rng = random.Random(2 * cfg.seed + 1)
    holdings = {pid: Holdings() for pid in [b.id for b in cfg.buyers] + list(cfg.sellers)}
    T = cfg.markets
    results = []
    for t in range(1, T + 1):
        clamps: list[Clamp] = []
        for b in cfg.buyers:
            holdings[b.id].money += b.income
        supply = {s: draw_supply(supply_rng, cfg.supply_base, cfg.supply_sd) for s in cfg.sellers}
        for s, g in supply.items():
            holdings[s].good += g
        money_before = {pid: h.money for pid, h in holdings.items()}

        offers = []
        for s in cfg.sellers:
            view = View(t, T, s, Holdings(holdings[s].money, holdings[s].good))
            offer = _clamp_offer(strategies[s].seller_offer(view), s, holdings[s].good, clamps)
            if offer is not None:
                offers.append(offer)
        offers_seen = tuple(offers)

        declared = {}
        for b in cfg.buyers:
            view = View(t, T, b.id, Holdings(holdings[b.id].money, holdings[b.id].good), b.demand, offers=offers_seen)
            declared[b.id] = _nonneg(strategies[b.id].declare_demand(view), b.id, "declared demand", clamps)
        offered = sum((o.quantity for o in offers), Fraction(0))
        try:
            rights = issue_rights(offered, declared)
        except DegenerateClaimsError as exc:
            clamps.append(Clamp(0, "rights", f"{exc}; no Rights issued"))
            rights = {b.id: Fraction(0) for b in cfg.buyers}

        right_offers = []
        for b in cfg.buyers:
            view = View(t, T, b.id, Holdings(holdings[b.id].money, holdings[b.id].good), b.demand, rights[b.id], offers_seen)
            ro = _clamp_right_offer(strategies[b.id].right_offer(view), b.id, rights[b.id], clamps)
            if ro is not None:
                right_offers.append(ro)

        orders = []
        for b in cfg.buyers:
            view = View(
                t, T, b.id, Holdings(holdings[b.id].money, holdings[b.id].good), b.demand, rights[b.id],
                offers_seen, tuple(right_offers),
            )
            orders.append(_clamp_order(strategies[b.id].order(view), b.id, clamps))

        good_before = {b.id: holdings[b.id].good for b in cfg.buyers}
        trades = clear_market(offers, right_offers, orders, rights, holdings, match_rng)
        purchased = {b.id: holdings[b.id].good - good_before[b.id] for b in cfg.buyers}
        after = _copy(holdings)

        utilities = {}
        for s in cfg.sellers:
            delta = holdings[s].money - money_before[s]
            utilities[s] = seller_utility(delta, holdings[s].good, t, T, cfg.constants)
        consumed = {}
        for b in cfg.buyers:
            h = holdings[b.id]
            utilities[b.id] = buyer_utility(h.good, b.demand, h.money, t, T, cfg.constants)
            consumed[b.id] = min(h.good, b.demand)
            h.good -= consumed[b.id]
        for pid, u in utilities.items():
            strategies[pid].observe(t, u)

        results.append(MarketResult(
            t=t,
            supply=supply,
            offers=offers,
            declared=declared,
            rights=rights,
            right_offers=right_offers,
            orders=orders,
            trades=trades,
            purchased=purchased,
            holdings=after,
            consumed=consumed,
            utilities=utilities,
            frustration={b.id: frustration(rights[b.id], purchased[b.id]) for b in cfg.buyers},
            clamps=clamps,
        ))
    return SellerEpisode(cfg, results)
