"""Three-commodity market model: participants, utilities, validation, solutions.

Items are integers and prices are exact rationals; Money always costs 1.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .numbers import Rational, fmt


class Commodity(str, enum.Enum):
    GOOD = "G"
    RIGHT = "R"
    MONEY = "M"
    COUPLE = "C"


@dataclass(frozen=True)
class PiecewiseConcaveUtility:
    """Utility of whole items given by non-increasing marginal values.

    Item ``k`` (1-based) adds ``marginals[k-1]``; items past the list add 0.
    """

    marginals: tuple[Fraction, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(Fraction(v) for v in self.marginals))

    def problems(self) -> list[str]:
        out = []
        if any(v < 0 for v in self.marginals):
            out.append("negative marginal value")
        if any(a < b for a, b in zip(self.marginals, self.marginals[1:])):
            out.append("marginal values must be non-increasing")
        return out

    def marginal(self, k: int) -> Fraction:
        if 1 <= k <= len(self.marginals):
            return self.marginals[k - 1]
        return Fraction(0)

    def value(self, x: int) -> Fraction:
        if x < 0:
            raise ValueError("negative quantity")
        return sum(self.marginals[:x], Fraction(0))

    __call__ = value


@dataclass(frozen=True)
class LinearMoneyUtility:
    slope: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "slope", Fraction(self.slope))

    def value(self, x: Rational) -> Fraction:
        return self.slope * x

    __call__ = value


@dataclass(frozen=True)
class BuyerSpec:
    id: int
    money: int
    rights: int
    good_utility: PiecewiseConcaveUtility
    money_utility: LinearMoneyUtility = LinearMoneyUtility()
    demand: int = 0
    # funds carried from earlier markets, spendable on Couples only
    earmark: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "earmark", Fraction(self.earmark))

    @property
    def slope(self) -> Fraction:
        return self.money_utility.slope


@dataclass(frozen=True)
class SellerSpec:
    id: int
    good: int


@dataclass(frozen=True)
class Scenario:
    buyers: tuple[BuyerSpec, ...]
    sellers: tuple[SellerSpec, ...]
    epsilon: Fraction
    markets: int = 1
    seed: int = 0
    fairness: str = "cgd"
    mechanism: str = "couple"

    def __post_init__(self):
        object.__setattr__(self, "buyers", tuple(self.buyers))
        object.__setattr__(self, "sellers", tuple(self.sellers))
        object.__setattr__(self, "epsilon", Fraction(self.epsilon))

    @property
    def total_money(self) -> int:
        return sum(b.money for b in self.buyers)

    @property
    def total_rights(self) -> int:
        return sum(b.rights for b in self.buyers)

    @property
    def total_good(self) -> int:
        return sum(s.good for s in self.sellers)

    @property
    def total_earmark(self) -> Fraction:
        return sum((b.earmark for b in self.buyers), Fraction(0))

    def buyer(self, pid: int) -> BuyerSpec:
        for b in self.buyers:
            if b.id == pid:
                return b
        raise KeyError(pid)

    def seller(self, pid: int) -> SellerSpec:
        for s in self.sellers:
            if s.id == pid:
                return s
        raise KeyError(pid)

    def participant_ids(self) -> list[int]:
        return [b.id for b in self.buyers] + [s.id for s in self.sellers]


# -- willingness and frustration ---------------------------------------------

def willingness_to_pay(buyer: BuyerSpec, x: int) -> Fraction:
    """Money amount whose utility equals that of ``x`` items of Good."""
    if x < 0:
        raise ValueError("negative quantity")
    return buyer.good_utility.value(x) / buyer.slope


def frustration(rights: Rational, purchased: Rational) -> Fraction | None:
    """Share of the assigned rights left unused; ``None`` when no rights were assigned."""
    rights, purchased = Fraction(rights), Fraction(purchased)
    if rights < 0 or purchased < 0:
        raise ValueError("rights and purchases must be non-negative")
    if rights == 0:
        return None
    return max(Fraction(0), rights - purchased) / rights


# -- validation ----------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    code: str
    participant: int | None
    message: str

    def __str__(self):
        who = f"participant {self.participant}: " if self.participant is not None else ""
        return f"[{self.code}] {who}{self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    degenerate: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}

    def add(self, code: str, participant: int | None, message: str) -> None:
        self.violations.append(Violation(code, participant, message))


def _max_gain_over(utility: PiecewiseConcaveUtility, slope: Fraction, lo: int, hi: int) -> Fraction:
    """max of u(x) - slope*x over integers lo..hi (concave, so one candidate point)."""
    above = sum(1 for v in utility.marginals if v > slope)
    x = min(max(above, lo), hi)
    return utility.value(x) - slope * x


def _check_buyer(b: BuyerSpec, report: ValidationReport, strict: bool) -> None:
    for problem in b.good_utility.problems():
        report.add("utility", b.id, problem)
    if b.slope <= 0:
        report.add("utility", b.id, "money utility slope must be positive")
        return
    if b.money < 0 or b.rights < 0 or b.demand < 0:
        report.add("endowment", b.id, "money, rights and demand must be non-negative")
        return
    if b.earmark < 0:
        report.add("endowment", b.id, "earmarked funds must be non-negative")
    if b.money == 0:
        if b.rights == 0 and b.demand == 0:
            report.degenerate.append(b.id)
        else:
            report.add("zero-money", b.id, "a buyer without money may hold no rights and no demand")
        return
    if b.demand == 0:
        report.add("demand", b.id, "demand must be positive")
    if b.money < 4 * b.rights:
        report.add("A1", b.id, f"money {b.money} < 4 * rights {b.rights}")
    if b.rights >= 1:
        # u(x) - 2*slope*x is concave, so its minimum on 1..r sits at an end point
        worst = min(b.good_utility.value(x) - 2 * b.slope * x for x in {1, b.rights})
        if worst <= 0:
            report.add("A2", b.id, "fair share not worth twice its money price")
        elif strict and b.good_utility.marginal(b.rights) <= 2 * b.slope:
            report.add("A2-marginal", b.id, f"item {b.rights} of the fair share is worth <= 2 money units")
    lo = math.ceil(Fraction(b.money, 2))
    if _max_gain_over(b.good_utility, b.slope, lo, b.money) >= 0:
        report.add("A3", b.id, "spending half the money or more on Good at unit price would pay off")


def validate_scenario(s: Scenario, strict: bool = False) -> ValidationReport:
    """Check every assumption the couple auction relies on; report all violations.

    ``strict`` adds the marginal form of the fair-share assumption: every one of
    a buyer's first ``rights`` items is worth more than 2 money units.
    """
    report = ValidationReport()
    ids = s.participant_ids()
    if len(set(ids)) != len(ids):
        report.add("ids", None, "participant ids must be unique across buyers and sellers")
    if s.markets < 1:
        report.add("markets", None, "market count must be at least 1")
    if s.fairness not in ("cgd", "cea", "proportional"):
        report.add("fairness", None, f"unknown fairness rule {s.fairness!r}")
    if not 0 < s.epsilon < 1:
        report.add("epsilon", None, f"epsilon {fmt(s.epsilon)} must lie strictly between 0 and 1")
    for b in s.buyers:
        _check_buyer(b, report, strict)
        if b.money > 0 and not s.epsilon > Fraction(2, b.money):
            report.add("epsilon", b.id, f"epsilon {fmt(s.epsilon)} <= 2/{b.money}")
    for seller in s.sellers:
        if seller.good < 0:
            report.add("endowment", seller.id, "negative Good endowment")
    if s.total_rights != s.total_good:
        report.add("rights", None, f"rights issued {s.total_rights} != Good supplied {s.total_good}")
    return report


# -- solutions -------------------------------------------------------------------

@dataclass(frozen=True)
class Basket:
    good: int = 0
    right: int = 0
    couple: int = 0
    money: int = 0
    residual_cash: Fraction = Fraction(0)

    @property
    def goods(self) -> int:
        return self.good + self.couple

    @property
    def rights(self) -> int:
        return self.right + self.couple

    def price(self, prices: Mapping[Commodity, Fraction]) -> Fraction:
        return (
            self.good * prices[Commodity.GOOD]
            + self.right * prices[Commodity.RIGHT]
            + self.couple * prices[Commodity.COUPLE]
            + self.money * prices.get(Commodity.MONEY, Fraction(1))
            + self.residual_cash
        )


@dataclass(frozen=True)
class Solution:
    prices: Mapping[Commodity, Fraction]
    baskets: Mapping[int, Basket]


class StructuralError(ValueError):
    """A basket names a participant or more items than the endowments contain."""


class OracleInapplicable(RuntimeError):
    """Exhaustive basket search would exceed the configured size cap."""


@dataclass
class FeasibilityReport:
    issues: dict[int, list[str]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not any(self.issues.values())

    def __bool__(self):
        return self.ok


def endowment_price(pid: int, prices: Mapping[Commodity, Fraction], s: Scenario) -> Fraction:
    try:
        b = s.buyer(pid)
        return b.money * prices.get(Commodity.MONEY, Fraction(1)) + b.rights * prices[Commodity.RIGHT]
    except KeyError:
        return s.seller(pid).good * prices[Commodity.GOOD]


def _check_structure(sol: Solution, s: Scenario) -> None:
    known = set(s.participant_ids())
    stray = set(sol.baskets) - known
    if stray:
        raise StructuralError(f"baskets for unknown participants {sorted(stray)}")
    baskets = sol.baskets.values()
    if any(min(x.good, x.right, x.couple, x.money) < 0 or x.residual_cash < 0 for x in baskets):
        raise StructuralError("negative basket entry")
    if sum(x.goods for x in baskets) > s.total_good:
        raise StructuralError("baskets hold more Good than was endowed")
    if sum(x.rights for x in baskets) > s.total_rights:
        raise StructuralError("baskets hold more Right than was endowed")
    if sum(x.money for x in baskets) > s.total_money:
        raise StructuralError("baskets hold more Money than was endowed")


def is_feasible(sol: Solution, s: Scenario) -> FeasibilityReport:
    _check_structure(sol, s)
    report = FeasibilityReport()
    for pid, basket in sol.baskets.items():
        issues = []
        price, budget = basket.price(sol.prices), endowment_price(pid, sol.prices, s)
        if price > budget:
            issues.append(f"basket price {fmt(price)} exceeds endowment price {fmt(budget)}")
        if basket.goods > basket.rights:
            issues.append(f"{basket.goods} Good against {basket.rights} Right")
        report.issues[pid] = issues
    return report


def basket_utility(pid: int, basket: Basket, s: Scenario) -> Fraction:
    try:
        b = s.buyer(pid)
    except KeyError:
        return basket.money + basket.residual_cash
    return b.good_utility.value(basket.goods) + b.slope * (basket.money + basket.residual_cash)


def best_feasible_utility(
    pid: int, prices: Mapping[Commodity, Fraction], s: Scenario, cap: int = 10**6
) -> tuple[Fraction, Basket]:
    """Exhaustive search for the best feasible basket at ``prices``.

    Every split of Good and Right counts (Good never above Right) is tried;
    Money is then filled greedily, which is exact because its utility is
    linear and positive. Desk-scale only.
    """
    g, r, m = s.total_good, s.total_rights, s.total_money
    if (g + 1) * (r + 1) > cap:
        raise OracleInapplicable(f"{(g + 1) * (r + 1)} Good/Right splits exceed cap {cap}")
    budget = endowment_price(pid, prices, s)
    pg, pr = prices[Commodity.GOOD], prices[Commodity.RIGHT]
    pm = prices.get(Commodity.MONEY, Fraction(1))
    best: tuple[Fraction, Basket] | None = None
    for n_good in range(g + 1):
        for n_right in range(n_good, r + 1):
            left = budget - n_good * pg - n_right * pr
            if left < 0:
                break
            n_money = min(m, math.floor(left / pm))
            basket = Basket(good=n_good, right=n_right, money=n_money)
            value = basket_utility(pid, basket, s)
            if best is None or value > best[0]:
                best = (value, basket)
    assert best is not None
    return best


@dataclass
class EquilibriumCheck:
    status: str  # "equilibrium", "not-equilibrium" or "inapplicable"
    reasons: dict[int, str] = field(default_factory=dict)

    def __bool__(self):
        return self.status == "equilibrium"


def is_equilibrium(sol: Solution, s: Scenario, cap: int = 10**6) -> EquilibriumCheck:
    feasible = is_feasible(sol, s)
    if not feasible:
        reasons = {pid: "; ".join(v) for pid, v in feasible.issues.items() if v}
        return EquilibriumCheck("not-equilibrium", reasons)
    reasons = {}
    for pid in s.participant_ids():
        basket = sol.baskets.get(pid, Basket())
        price, budget = basket.price(sol.prices), endowment_price(pid, sol.prices, s)
        if price != budget:
            reasons[pid] = f"basket price {fmt(price)} != endowment price {fmt(budget)}"
            continue
        try:
            best, better = best_feasible_utility(pid, sol.prices, s, cap)
        except OracleInapplicable as exc:
            return EquilibriumCheck("inapplicable", {pid: str(exc)})
        have = basket_utility(pid, basket, s)
        if best > have:
            reasons[pid] = f"utility {fmt(have)} below attainable {fmt(best)} with {better}"
    return EquilibriumCheck("not-equilibrium" if reasons else "equilibrium", reasons)


def total_cash_bound(s: Scenario) -> Fraction:
    """Money in the system: endowed Money plus carried earmarks."""
    return s.total_money + s.total_earmark

