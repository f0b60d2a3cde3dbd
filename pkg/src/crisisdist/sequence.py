"""A crisis episode: the same participants meet in a run of Couple auctions.

Before every market the Rights are issued afresh from the Good supply and
the buyers' demands. Money endowments, demands and Good utilities stay the
same from market to market; what a buyer carries forward is the money it
got for Rights it sold (plus any such money it has not spent yet). That
money can only go towards Couples, which raises the buyer's willingness to
pay by a constant.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction

from .auction import AuctionRun, run_auction
from .fairness import RULES, ClaimsProblem, PriorityOrder, round_indivisible
from .market import BuyerSpec, Scenario, ValidationReport, frustration, validate_scenario, willingness_to_pay
from .numbers import parse_rational


def issue_rights(s: Scenario) -> dict[int, int]:
    """Whole Rights per buyer from the configured rule; ties in rounding go to lower ids."""
    problem = ClaimsProblem(s.total_good, {b.id: b.demand for b in s.buyers})
    shares = RULES[s.fairness](problem)
    return round_indivisible(shares, PriorityOrder(sorted(shares)))


def update_willingness(b: BuyerSpec, y: Fraction) -> BuyerSpec:
    """Credit ``y`` as earmarked funds: every positive quantity becomes worth ``y`` more."""
    if y < 0:
        raise ValueError("carried funds must be non-negative")
    return dataclasses.replace(b, earmark=b.earmark + y)


def potential_willingness(b: BuyerSpec, x: int) -> Fraction:
    if x == 0:
        return Fraction(0)
    return willingness_to_pay(b, x) + b.earmark


def market_scenario(s: Scenario, rights: dict[int, int], earmarks: dict[int, Fraction]) -> Scenario:
    buyers = [dataclasses.replace(b, rights=rights[b.id], earmark=earmarks.get(b.id, Fraction(0))) for b in s.buyers]
    return dataclasses.replace(s, buyers=tuple(buyers), markets=1)


@dataclass
class MarketRecord:
    index: int
    scenario: Scenario
    rights: dict[int, int]
    proceeds: dict[int, Fraction]
    frustration: dict[int, Fraction | None]
    run: AuctionRun

    @property
    def outcome(self):
        return self.run.outcome


@dataclass
class EpisodeState:
    t: int = 0
    carried: dict[int, Fraction] = field(default_factory=dict)
    frustration: dict[int, list[Fraction | None]] = field(default_factory=dict)
    markets: list[MarketRecord] = field(default_factory=list)
    aborted: ValidationReport | None = None

    @property
    def complete(self) -> bool:
        return self.aborted is None


def run_episode(s: Scenario, markets: int | None = None, accumulate: bool = False) -> EpisodeState:
    """Run ``markets`` (default ``s.markets``) Couple auctions back to back.

    By default a buyer carries its unspent earmark plus the new proceeds. With
    ``accumulate`` the shift is a lasting change of preference instead: each
    market's earmark is the previous market's earmark plus the new proceeds,
    whether or not it was spent.

    Stops early, keeping the markets already run, if a market's scenario
    fails validation.
    """
    total = s.markets if markets is None else markets
    state = EpisodeState(
        carried={b.id: b.earmark for b in s.buyers},
        frustration={b.id: [] for b in s.buyers},
    )
    for t in range(1, total + 1):
        rights = issue_rights(s)
        ms = market_scenario(s, rights, state.carried)
        report = validate_scenario(ms)
        if not report.ok:
            state.aborted = report
            break
        # the last market has no successor, so its proceeds are swept into Money
        run = run_auction(ms, carry=t < total)
        out = run.outcome
        proceeds = {b.id: Fraction(0) for b in s.buyers}
        for event in run.events:
            if event["kind"] == "retain":
                proceeds[event["participant"]] = parse_rational(event["amount"])
        shares = {b.id: frustration(rights[b.id], out.couples[b.id]) for b in s.buyers}
        for pid, f in shares.items():
            state.frustration[pid].append(f)
        if accumulate:
            state.carried = {b.id: update_willingness(b, proceeds[b.id]).earmark for b in ms.buyers}
        else:
            state.carried = dict(out.earmark_left)
        state.markets.append(MarketRecord(t, ms, rights, proceeds, shares, run))
        state.t = t
    return state
