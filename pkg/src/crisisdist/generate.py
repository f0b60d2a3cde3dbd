"""Random scenarios that satisfy the couple-auction assumptions by construction.

Buyers get marginal values above twice their money slope for each item of
their fair share, a decreasing tail after that, and enough Money that no
buyer ever wants to sink half of it into Good at unit price.
"""

from __future__ import annotations

import math
import random
from fractions import Fraction

from .market import (
    BuyerSpec,
    LinearMoneyUtility,
    PiecewiseConcaveUtility,
    Scenario,
    SellerSpec,
    validate_scenario,
)

SLOPES = (Fraction(1), Fraction(1, 2), Fraction(3, 2), Fraction(2))


def _a3_threshold(u: PiecewiseConcaveUtility, slope: Fraction) -> int:
    """Smallest x0 with u(x) < slope * x for every x >= x0."""
    # past cap / slope the line beats the utility's ceiling; walk down from there
    x0 = math.floor(u.value(len(u.marginals)) / slope) + 1
    while x0 > 1 and u.value(x0 - 1) < slope * (x0 - 1):
        x0 -= 1
    return x0


def random_buyer(
    rng: random.Random,
    pid: int,
    rights: int,
    eps: Fraction,
    money_cap: int,
    spread: int = 12,
    tail: int = 4,
) -> BuyerSpec:
    slope = rng.choice(SLOPES)
    head = [2 * slope + Fraction(rng.randint(1, spread * 4), 4) for _ in range(rights)]
    low = min(head, default=2 * slope + spread)
    rest = [Fraction(rng.randint(0, int(low * 4)), 4) for _ in range(rng.randint(0, tail))]
    marginals = sorted(head + rest, reverse=True)
    u = PiecewiseConcaveUtility(tuple(marginals))
    floor_money = max(4 * rights, 2 * _a3_threshold(u, slope), math.floor(2 / eps) + 1, 1)
    money = rng.randint(floor_money, max(floor_money, money_cap))
    demand = max(rights, 1) + rng.randint(0, 3)
    return BuyerSpec(pid, money, rights, u, LinearMoneyUtility(slope), demand)


def random_scenario(
    rng: random.Random,
    max_buyers: int = 8,
    max_sellers: int = 4,
    max_total_money: int = 10**4,
    max_rights: int = 4,
    epsilons=(Fraction(1, 4), Fraction(1, 10)),
    markets: int = 1,
) -> Scenario:
    """Draw until the result passes strict validation (usually the first try)."""
    while True:
        eps = rng.choice(epsilons)
        n_buyers = rng.randint(1, max_buyers)
        n_sellers = rng.randint(1, max_sellers)
        cap = max_total_money // n_buyers
        buyers = [
            random_buyer(rng, i + 1, rng.randint(0, max_rights), eps, cap) for i in range(n_buyers)
        ]
        goods = [0] * n_sellers
        for _ in range(sum(b.rights for b in buyers)):
            goods[rng.randrange(n_sellers)] += 1
        sellers = [SellerSpec(n_buyers + j + 1, g) for j, g in enumerate(goods)]
        s = Scenario(buyers, sellers, eps, markets=markets, seed=rng.randrange(2**32))
        if validate_scenario(s, strict=True).ok and s.total_money <= max_total_money:
            return s


def random_episode(
    rng: random.Random,
    markets: int = 5,
    max_buyers: int = 6,
    max_sellers: int = 3,
    max_total_money: int = 2000,
    max_demand: int = 4,
    epsilons=(Fraction(1, 4), Fraction(1, 10)),
    fairness: str = "cgd",
) -> Scenario:
    """A scenario for ``run_episode`` whose per-market Rights (issued from
    supply and demands) already meet the strict assumptions.

    Supply is kept at or below total demand, so every market is a crisis.
    """
    from .sequence import issue_rights

    while True:
        eps = rng.choice(epsilons)
        n_buyers = rng.randint(1, max_buyers)
        demands = [rng.randint(1, max_demand) for _ in range(n_buyers)]
        supply = rng.randint(0, sum(demands))
        n_sellers = rng.randint(1, max_sellers)
        goods = [0] * n_sellers
        for _ in range(supply):
            goods[rng.randrange(n_sellers)] += 1
        sellers = [SellerSpec(n_buyers + j + 1, g) for j, g in enumerate(goods)]
        probe = Scenario(
            [BuyerSpec(i + 1, 1, 0, PiecewiseConcaveUtility(()), demand=d) for i, d in enumerate(demands)],
            sellers,
            eps,
            fairness=fairness,
        )
        rights = issue_rights(probe)
        cap = max_total_money // n_buyers
        buyers = []
        for i, d in enumerate(demands):
            b = random_buyer(rng, i + 1, rights[i + 1], eps, cap)
            buyers.append(BuyerSpec(b.id, b.money, b.rights, b.good_utility, b.money_utility, d))
        s = Scenario(buyers, sellers, eps, markets=markets, seed=rng.randrange(2**32), fairness=fairness)
        if validate_scenario(s, strict=True).ok and s.total_money <= max_total_money:
            return s
