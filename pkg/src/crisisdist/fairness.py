"""Fair division of a scarce supply among claimants.

Three divisible rules (proportional, constrained equal awards, contested
garment) work in exact rationals. ``round_indivisible`` adapts any of them to
whole items by rounding down and handing the surplus out along a priority
order.

Allocations are plain dicts ``{buyer_id: Fraction}`` that keep the insertion
order of the claims they were computed from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Hashable, Iterable, Mapping, Sequence

from .numbers import Rational

BuyerId = Hashable
Allocation = Dict[BuyerId, Fraction]


class DegenerateClaimsError(ValueError):
    """Positive supply against all-zero claims; no rule is defined."""


class InfeasibleRoundingError(ValueError):
    """More surplus units than buyers with a fractional share."""


@dataclass(frozen=True)
class ClaimsProblem:
    supply: Fraction
    demands: Mapping[BuyerId, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "supply", Fraction(self.supply))
        object.__setattr__(
            self, "demands", {b: Fraction(d) for b, d in dict(self.demands).items()}
        )
        if self.supply < 0:
            raise ValueError(f"supply must be non-negative, got {self.supply}")
        for b, d in self.demands.items():
            if d < 0:
                raise ValueError(f"demand of {b!r} is negative: {d}")

    @classmethod
    def of(cls, supply: Rational, demands: Iterable[Rational]) -> "ClaimsProblem":
        """Build a problem with buyers numbered 1..n in the given order."""
        return cls(Fraction(supply), {i + 1: Fraction(d) for i, d in enumerate(demands)})

    @property
    def total_demand(self) -> Fraction:
        return sum(self.demands.values(), Fraction(0))

    @property
    def is_crisis(self) -> bool:
        return self.supply <= self.total_demand


@dataclass(frozen=True)
class PriorityOrder:
    order: tuple

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(self.order))
        if len(set(self.order)) != len(self.order):
            raise ValueError("priority order lists a buyer twice")

    def check_covers(self, buyers: Iterable[BuyerId]) -> None:
        if set(buyers) != set(self.order):
            raise ValueError("priority order must list every buyer exactly once")


def _full(problem: ClaimsProblem) -> Allocation | None:
    if problem.supply >= problem.total_demand:
        return dict(problem.demands)
    return None


def proportional_distribution(problem: ClaimsProblem) -> Allocation:
    total = problem.total_demand
    if total == 0 and problem.supply > 0:
        raise DegenerateClaimsError("all demands are zero but supply is positive")
    full = _full(problem)
    if full is not None:
        return full
    return {b: problem.supply * d / total for b, d in problem.demands.items()}


def constrained_equal_distribution(problem: ClaimsProblem) -> Allocation:
    """Recursive form: settle any claim below the equal split, recurse on the rest."""
    shares = {b: Fraction(0) for b in problem.demands}
    remaining = list(problem.demands)
    supply = problem.supply
    while remaining:
        equal = supply / len(remaining)
        small = next((b for b in remaining if problem.demands[b] < equal), None)
        if small is None:
            for b in remaining:
                shares[b] = equal
            break
        shares[small] = problem.demands[small]
        supply -= problem.demands[small]
        remaining.remove(small)
    return shares


def cea_threshold(problem: ClaimsProblem) -> Fraction:
    """The cap ``lam`` with ``sum(min(d, lam)) == supply`` (largest claim if supply covers all)."""
    claims = sorted(problem.demands.values())
    if not claims:
        return Fraction(0)
    if problem.supply >= sum(claims):
        return claims[-1]
    left = problem.supply
    for i, d in enumerate(claims):
        n_rest = len(claims) - i
        if d * n_rest >= left:
            return left / n_rest
        left -= d
    raise AssertionError("unreachable: supply below total demand")


def constrained_equal_by_threshold(problem: ClaimsProblem) -> Allocation:
    lam = cea_threshold(problem)
    return {b: min(d, lam) for b, d in problem.demands.items()}


def contested_garment_distribution(problem: ClaimsProblem) -> Allocation:
    """Talmud rule: equal awards on half-claims, losses the same way past the half-sum."""
    full = _full(problem)
    if full is not None:
        return full
    half = {b: d / 2 for b, d in problem.demands.items()}
    total = problem.total_demand
    if problem.supply <= total / 2:
        return constrained_equal_distribution(ClaimsProblem(problem.supply, half))
    loss = constrained_equal_distribution(ClaimsProblem(total - problem.supply, half))
    return {b: d - loss[b] for b, d in problem.demands.items()}


RULES: dict[str, Callable[[ClaimsProblem], Allocation]] = {
    "proportional": proportional_distribution,
    "cea": constrained_equal_distribution,
    "cgd": contested_garment_distribution,
}


def distribute_by_parts(
    problem: ClaimsProblem,
    parts: Sequence[Sequence[BuyerId]],
    part_supplies: Sequence[Rational],
    rule: Callable[[ClaimsProblem], Allocation] = contested_garment_distribution,
) -> Allocation:
    """Apply ``rule`` separately inside each group of buyers.

    Groups come from an outside social-preference ranking; each group gets its
    own slice of the supply.
    """
    seen = [b for part in parts for b in part]
    if len(seen) != len(problem.demands) or set(seen) != set(problem.demands):
        raise ValueError("parts must partition the buyers")
    if sum(map(Fraction, part_supplies), Fraction(0)) != problem.supply:
        raise ValueError("part supplies must add up to the total supply")
    out: Allocation = {}
    for part, supply in zip(parts, part_supplies):
        sub = ClaimsProblem(Fraction(supply), {b: problem.demands[b] for b in part})
        out.update(rule(sub))
    return {b: out[b] for b in problem.demands}


def round_indivisible(allocation: Mapping[BuyerId, Rational], order: PriorityOrder) -> dict[BuyerId, int]:
    """Round every share down, then give one extra unit to the first buyers in
    ``order`` that still have a fractional part, until the total is restored.
    """
    order.check_covers(allocation)
    shares = {b: Fraction(a) for b, a in allocation.items()}
    floors = {b: math.floor(a) for b, a in shares.items()}
    surplus = math.floor(sum(shares.values(), Fraction(0))) - sum(floors.values())
    eligible = [b for b in order.order if shares[b] != floors[b]]
    if surplus > len(eligible):
        raise InfeasibleRoundingError(
            f"surplus {surplus} exceeds {len(eligible)} buyers with fractional shares"
        )
    for b in eligible[:surplus]:
        floors[b] += 1
    return floors
