"""Ascending auction over Couples (one Good paired with one Right).

Buyers are visited in ascending id order. Each computes its optimal number of
Couples at the current price and, if that is at least what it holds, outbids:
Couples still priced at ``pc`` are bought (own first, then other holders,
then freshly composed from uncoupled Good and Right) and re-tagged at
``(1 + eps) * pc``. Once nothing is left at ``pc`` every price rises by
``1 + eps`` and initial holders of Good and Right are credited ``eps`` times
the old unit price. Trading stops after a full round without a purchase.

Cash model
    Buyer cash starts at Money endowment plus 1 per endowed Right; seller cash
    at 1 per endowed Good. Taking an endowed item at the initial price pays
    nothing, since the credit already covers it. Earmarked funds (carried
    from earlier markets) pay for Couples first and never become Money items.

Every state change is logged as an event; ``replay`` recomputes all amounts
from the scenario and the event skeleton and must land on the same state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

from .market import (
    Basket,
    BuyerSpec,
    Commodity,
    Scenario,
    Solution,
    ValidationReport,
    frustration,
    validate_scenario,
)
from .numbers import fmt, parse_rational


class ScenarioInvalid(ValueError):
    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__("; ".join(str(v) for v in report.violations))


class ReplayMismatch(AssertionError):
    pass


def optimal_basket(
    buyer: BuyerSpec, price: Fraction, budget: Fraction, earmark: Fraction = Fraction(0)
) -> tuple[int, Fraction]:
    """Best Couple count and leftover money at Couple price ``price``.

    ``budget`` is cash plus held Couples valued at ``price``; ``earmark`` is
    the part of the budget that carries no Money utility. Money is valued
    linearly as cash (Money items are only bought at the end). The objective
    is concave, so the scan stops at the first non-positive gain; ties go to
    the smaller count.
    """
    if price <= 0:
        raise ValueError("Couple price must be positive")
    u, slope = buyer.good_utility, buyer.slope
    regular = budget - earmark
    cap = math.floor(budget / price)

    def money_value(x: int) -> Fraction:
        return min(budget - price * x, regular)

    x = 0
    while x < cap:
        gain = u.marginal(x + 1) - slope * (money_value(x) - money_value(x + 1))
        if gain <= 0:
            break
        x += 1
    return x, budget - price * x


@dataclass
class Couple:
    id: str
    good_item: str
    right_item: str
    owner: int
    tag: Fraction
    raised: bool
    earmarked: Fraction = Fraction(0)
    stamp: int = 0
    right_owner: int = 0


@dataclass
class AuctionState:
    pg: Fraction
    pr: Fraction
    pc: Fraction
    eps: Fraction
    cash: dict[int, Fraction]
    earmark: dict[int, Fraction]
    surplus: dict[int, Fraction]
    free_goods: dict[int, list[str]]
    free_rights: dict[int, list[str]]
    couples: dict[str, Couple] = field(default_factory=dict)
    system: Fraction = Fraction(0)
    iteration: int = 1
    round: int = 0
    stamp: int = 0

    @classmethod
    def initial(cls, s: Scenario) -> "AuctionState":
        cash: dict[int, Fraction] = {}
        surplus: dict[int, Fraction] = {}
        for b in s.buyers:
            surplus[b.id] = Fraction(b.rights)
            cash[b.id] = Fraction(b.money) + surplus[b.id]
        for seller in s.sellers:
            surplus[seller.id] = Fraction(seller.good)
            cash[seller.id] = surplus[seller.id]
        return cls(
            pg=Fraction(1),
            pr=Fraction(1),
            pc=Fraction(2),
            eps=s.epsilon,
            cash=cash,
            earmark={b.id: b.earmark for b in s.buyers},
            surplus=surplus,
            free_goods={x.id: [f"g{x.id}.{k}" for k in range(1, x.good + 1)] for x in s.sellers},
            free_rights={b.id: [f"r{b.id}.{k}" for k in range(1, b.rights + 1)] for b in s.buyers},
        )

    # -- queries -----------------------------------------------------------
    def held(self, buyer: int) -> list[Couple]:
        return [c for c in self.couples.values() if c.owner == buyer]

    def at_current_price(self) -> list[Couple]:
        return [c for c in self.couples.values() if not c.raised]

    def composable(self) -> bool:
        return any(self.free_goods.values()) and any(self.free_rights.values())

    def available(self) -> bool:
        return bool(self.at_current_price()) or self.composable()

    def participant_cash(self) -> Fraction:
        return sum(self.cash.values(), Fraction(0)) + sum(self.earmark.values(), Fraction(0))

    def committed_earmark(self, buyer: int) -> Fraction:
        held = sum((min(c.earmarked, self.pc) for c in self.held(buyer)), Fraction(0))
        return self.earmark[buyer] + held

    def rights_traded(self, buyer: int) -> tuple[int, int]:
        """Endowed Rights of ``buyer`` now in others' Couples, and others' Rights in its own."""
        sold = sum(1 for c in self.couples.values() if c.right_owner == buyer and c.owner != buyer)
        bought = sum(1 for c in self.couples.values() if c.owner == buyer and c.right_owner != buyer)
        return sold, bought

    def snapshot(self) -> dict:
        return {
            "prices": {"G": fmt(self.pg), "R": fmt(self.pr), "C": fmt(self.pc)},
            "cash": {str(k): fmt(v) for k, v in sorted(self.cash.items())},
            "earmark": {str(k): fmt(v) for k, v in sorted(self.earmark.items())},
            "system": fmt(self.system),
            "couples": {
                c.id: [c.owner, fmt(c.tag), c.good_item, c.right_item] for c in self.couples.values()
            },
            "free_goods": {str(k): list(v) for k, v in sorted(self.free_goods.items())},
            "free_rights": {str(k): list(v) for k, v in sorted(self.free_rights.items())},
        }

    # -- mutations shared by the live run and the replay ---------------------
    def _charge(self, buyer: int, amount: Fraction) -> Fraction:
        """Debit earmark first, then cash; returns the earmarked part."""
        from_earmark = min(self.earmark[buyer], amount)
        self.earmark[buyer] -= from_earmark
        self.cash[buyer] -= amount - from_earmark
        return from_earmark

    def _refund(self, couple: Couple, amount: Fraction) -> tuple[Fraction, Fraction]:
        to_earmark = min(couple.earmarked, amount)
        self.earmark[couple.owner] += to_earmark
        self.cash[couple.owner] += amount - to_earmark
        return to_earmark, amount - to_earmark

    def affordable(self, buyer: int, couple: Couple | None) -> bool:
        refund = self.pc if couple is not None and couple.owner == buyer else Fraction(0)
        return self.cash[buyer] + self.earmark[buyer] + refund >= (1 + self.eps) * self.pc

    def buy_existing(self, buyer: int, couple: Couple) -> dict:
        seller = couple.owner
        to_earmark, to_cash = self._refund(couple, self.pc)
        price = (1 + self.eps) * self.pc
        self.system += price - self.pc
        used = self._charge(buyer, price)
        self.stamp += 1
        couple.owner, couple.tag, couple.raised = buyer, price, True
        couple.earmarked, couple.stamp = used, self.stamp
        return {
            "kind": "buy",
            "buyer": buyer,
            "couple": couple.id,
            "source": "self" if seller == buyer else "holder",
            "from": seller,
            "paid_prev": fmt(self.pc),
            "refund_earmark": fmt(to_earmark),
            "refund_cash": fmt(to_cash),
            "price": fmt(price),
            "earmark_used": fmt(used),
        }

    def compose(self, buyer: int, right_owner: int, good_owner: int, couple_id: str | None = None) -> dict:
        right_item = self.free_rights[right_owner].pop(0)
        good_item = self.free_goods[good_owner].pop(0)
        price = (1 + self.eps) * self.pc
        # endowed items taken at the initial price: the surplus credit already paid for them
        self.system += price
        used = self._charge(buyer, price)
        self.stamp += 1
        cid = couple_id or f"c{len(self.couples) + 1}"
        self.couples[cid] = Couple(cid, good_item, right_item, buyer, price, True, used, self.stamp, right_owner)
        return {
            "kind": "buy",
            "buyer": buyer,
            "couple": cid,
            "source": "compose",
            "from": None,
            "right_from": right_owner,
            "good_from": good_owner,
            "good_item": good_item,
            "right_item": right_item,
            "paid_prev": "0",
            "refund_earmark": "0",
            "refund_cash": "0",
            "price": fmt(price),
            "earmark_used": fmt(used),
        }

    def raise_prices(self, s: Scenario) -> list[dict]:
        events = [{"kind": "raise", "iteration": self.iteration}]
        old_g, old_r = self.pg, self.pr
        for b in s.buyers:
            if b.rights:
                amount = self.eps * old_r * b.rights
                self.system -= amount
                self.cash[b.id] += amount
                self.surplus[b.id] += amount
                events.append({"kind": "topup", "participant": b.id, "amount": fmt(amount)})
        for seller in s.sellers:
            if seller.good:
                amount = self.eps * old_g * seller.good
                self.system -= amount
                self.cash[seller.id] += amount
                self.surplus[seller.id] += amount
                events.append({"kind": "topup", "participant": seller.id, "amount": fmt(amount)})
        self.pg *= 1 + self.eps
        self.pr *= 1 + self.eps
        self.pc = self.pg + self.pr
        for c in self.couples.values():
            c.raised = False
        self.iteration += 1
        self.round = 0
        events[0].update(prices={"G": fmt(self.pg), "R": fmt(self.pr), "C": fmt(self.pc)})
        return events

    def sweep(self, s: Scenario, carry: bool = False) -> tuple[dict[int, Basket], dict[int, Fraction], list[dict]]:
        """Withdraw unsold endowed items, turn cash into whole Money items.

        Unsold Good and Right stay with the system together with their credit,
        so no basket ends up holding Good without Right. With ``carry``, each
        buyer's net Right-sale proceeds move from cash to its earmark first.
        """
        baskets: dict[int, Basket] = {}
        residues: dict[int, Fraction] = {}
        events = []
        for b in s.buyers:
            left = len(self.free_rights[b.id])
            if left:
                withdrawn = left * self.pr
                self.cash[b.id] -= withdrawn
                self.system += withdrawn
                events.append({"kind": "release", "participant": b.id, "items": left, "amount": fmt(withdrawn)})
        for seller in s.sellers:
            left = len(self.free_goods[seller.id])
            if left:
                withdrawn = left * self.pg
                self.cash[seller.id] -= withdrawn
                self.system += withdrawn
                events.append({"kind": "release", "participant": seller.id, "items": left, "amount": fmt(withdrawn)})
        if carry:
            for b in s.buyers:
                sold, bought = self.rights_traded(b.id)
                if sold > bought:
                    amount = min((sold - bought) * self.pr, self.cash[b.id])
                    self.cash[b.id] -= amount
                    self.earmark[b.id] += amount
                    events.append({"kind": "retain", "participant": b.id, "rights": sold - bought, "amount": fmt(amount)})
        for pid in s.participant_ids():
            money = math.floor(self.cash[pid])
            residue = self.cash[pid] - money
            residues[pid] = residue
            self.system += residue
            self.cash[pid] = Fraction(0)
            baskets[pid] = Basket(couple=len(self.held(pid)), money=money)
            events.append({"kind": "sweep", "participant": pid, "money_items": money, "residue": fmt(residue)})
        return baskets, residues, events


@dataclass
class AuctionOutcome:
    solution: Solution
    frustration: dict[int, Fraction | None]
    couples: dict[int, int]
    paid: dict[int, Fraction]  # total tags of held Couples
    residues: dict[int, Fraction]
    earmark_left: dict[int, Fraction]
    iterations: int
    rounds: list[int]
    system: Fraction
    termination: str
    clamps: int = 0

    @property
    def prices(self):
        return self.solution.prices


@dataclass
class AuctionRun:
    outcome: AuctionOutcome
    events: list[dict]
    terminal: dict


class _Auction:
    def __init__(self, s: Scenario, carry: bool = False):
        self.s = s
        self.carry = carry
        self.st = AuctionState.initial(s)
        self.events: list[dict] = []
        self.rounds: list[int] = []
        self.clamps = 0
        self.order = sorted(b.id for b in s.buyers)
        self.buyers = {b.id: b for b in s.buyers}

    def emit(self, event: dict) -> None:
        event["seq"] = len(self.events)
        self.events.append(event)

    def _sources(self, buyer: int) -> Iterator[Couple]:
        current = self.st.at_current_price()
        yield from sorted((c for c in current if c.owner == buyer), key=lambda c: c.stamp)
        yield from sorted((c for c in current if c.owner != buyer), key=lambda c: (c.owner, c.stamp))

    def _compose_pair(self, buyer: int) -> tuple[int, int] | None:
        rights = self.st.free_rights
        right_owner = buyer if rights.get(buyer) else next((b for b in sorted(rights) if rights[b]), None)
        good_owner = next((s for s in sorted(self.st.free_goods) if self.st.free_goods[s]), None)
        if right_owner is None or good_owner is None:
            return None
        return right_owner, good_owner

    def outbid(self, buyer: int, wanted: int) -> int:
        bought = 0
        while bought < wanted:
            couple = next(self._sources(buyer), None)
            if couple is None and self._compose_pair(buyer) is None:
                break
            if not self.st.affordable(buyer, couple):
                self.clamps += 1
                self.emit({"kind": "clamp", "buyer": buyer, "wanted": wanted, "bought": bought})
                break
            if couple is not None:
                self.emit(self.st.buy_existing(buyer, couple))
            else:
                right_owner, good_owner = self._compose_pair(buyer)
                self.emit(self.st.compose(buyer, right_owner, good_owner))
            bought += 1
        return bought

    def consider(self, buyer: int) -> int:
        st = self.st
        held = st.held(buyer)
        o, o_plus = len(held), sum(c.raised for c in held)
        budget = st.cash[buyer] + st.earmark[buyer] + st.pc * o
        s_b, _ = optimal_basket(self.buyers[buyer], st.pc, budget, st.committed_earmark(buyer))
        self.emit({
            "kind": "basket", "buyer": buyer, "optimal": s_b, "held": o, "held_raised": o_plus,
            "budget": fmt(budget),
        })
        if s_b < o:
            return 0
        return self.outbid(buyer, s_b - o_plus)

    def run(self) -> AuctionRun:
        st = self.st
        self.emit({"kind": "start", "carry": self.carry, **st.snapshot()})
        termination = "no purchases in a full round"
        if not st.available():
            termination = "nothing to trade"
            self.rounds.append(0)
        else:
            while True:
                st.round += 1
                self.emit({"kind": "round", "iteration": st.iteration, "round": st.round})
                purchases = 0
                for buyer in self.order:
                    purchases += self.consider(buyer)
                    if not st.available():
                        break
                if not st.available():
                    # nothing left at the current price: the round and the iteration stop here
                    self.emit({"kind": "cut", "iteration": st.iteration, "round": st.round})
                    self.rounds.append(st.round)
                    for event in st.raise_prices(self.s):
                        self.emit(event)
                elif purchases == 0:
                    self.rounds.append(st.round)
                    break
        self.emit({"kind": "end", "reason": termination, "iteration": st.iteration})
        paid = {b: sum((c.tag for c in st.held(b)), Fraction(0)) for b in self.order}
        held = {b: len(st.held(b)) for b in self.order}
        baskets, residues, events = st.sweep(self.s, self.carry)
        for event in events:
            self.emit(event)
        terminal = st.snapshot()
        self.emit({"kind": "terminal", **terminal})
        prices = {
            Commodity.GOOD: st.pg,
            Commodity.RIGHT: st.pr,
            Commodity.COUPLE: st.pc,
            Commodity.MONEY: Fraction(1),
        }
        outcome = AuctionOutcome(
            solution=Solution(prices, baskets),
            frustration={b.id: frustration(b.rights, held[b.id]) for b in self.s.buyers},
            couples=held,
            paid=paid,
            residues=residues,
            earmark_left=dict(st.earmark),
            iterations=len(self.rounds),
            rounds=list(self.rounds),
            system=st.system,
            termination=termination,
            clamps=self.clamps,
        )
        return AuctionRun(outcome, self.events, terminal)


def run_auction(s: Scenario, carry: bool = False) -> AuctionRun:
    """Validate ``s`` and run the auction; ``carry`` keeps Right-sale proceeds
    out of the Money sweep as earmarked funds for a following market."""
    report = validate_scenario(s)
    if not report.ok:
        raise ScenarioInvalid(report)
    return _Auction(s, carry).run()


# -- replay ----------------------------------------------------------------------

def replay(s: Scenario, events: list[dict]) -> Iterator[tuple[dict, AuctionState]]:
    """Re-apply the event log, recomputing every amount from the rules.

    Yields ``(event, state_after_event)``. Raises ReplayMismatch if a recorded
    amount or the terminal snapshot disagrees with the recomputation.
    """
    st = AuctionState.initial(s)
    swept = False
    carry = bool(events and events[0].get("carry"))
    settle = ("release", "retain", "sweep")

    def check(event: dict, key: str, value) -> None:
        if key in event and event[key] != value:
            raise ReplayMismatch(f"event {event.get('seq')}: {key}={event[key]!r}, recomputed {value!r}")

    for event in events:
        kind = event["kind"]
        if kind == "buy":
            if event["source"] == "compose":
                redo = st.compose(event["buyer"], event["right_from"], event["good_from"], event["couple"])
            else:
                couple = st.couples[event["couple"]]
                if couple.raised:
                    raise ReplayMismatch(f"event {event['seq']}: Couple {couple.id} is not at the current price")
                redo = st.buy_existing(event["buyer"], couple)
            for key in ("price", "paid_prev", "earmark_used", "refund_cash", "refund_earmark", "from"):
                check(event, key, redo.get(key))
        elif kind == "raise":
            redo = st.raise_prices(s)
            check(event, "prices", redo[0]["prices"])
        elif kind in settle and not swept:
            swept = True
            _, _, redo = st.sweep(s, carry)
            recorded = [{k: v for k, v in e.items() if k != "seq"} for e in events if e["kind"] in settle]
            if recorded != redo:
                raise ReplayMismatch("terminal sweep differs from recomputation")
        elif kind == "terminal":
            snap = {k: v for k, v in event.items() if k not in ("kind", "seq")}
            if snap != st.snapshot():
                raise ReplayMismatch("terminal state differs from recomputation")
        yield event, st


def replay_terminal(s: Scenario, events: list[dict]) -> AuctionState:
    st = None
    for _, st in replay(s, events):
        pass
    if st is None:
        raise ReplayMismatch("empty trace")
    return st


def parse_prices(event: dict) -> dict[str, Fraction]:
    return {k: parse_rational(v) for k, v in event["prices"].items()}
