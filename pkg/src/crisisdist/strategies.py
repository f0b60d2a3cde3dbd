"""Scripted baseline strategies for the seller-driven market."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .seller import BuyerOrder, EpisodeConfig, RightOffer, SellerOffer, Strategy, View


class Pass:
    """Never offers or orders; declares its true demand."""

    def seller_offer(self, view: View) -> SellerOffer | None:
        return None

    def declare_demand(self, view: View) -> Fraction:
        return view.demand

    def right_offer(self, view: View) -> RightOffer | None:
        return None

    def order(self, view: View) -> BuyerOrder | None:
        return None

    def observe(self, t: int, utility: Fraction) -> None:
        pass


@dataclass
class TruthfulFixed:
    """Fixed prices, true demand.

    Sellers offer their whole stock at ``ask``. Buyers order what they lack
    up to their demand, list the Rights they cannot afford to use at
    ``right_price``, and buy missing Rights up to ``right_cap``.
    """

    ask: Fraction = Fraction(2)
    good_cap: Fraction = Fraction(4)
    right_price: Fraction = Fraction(1, 2)
    right_cap: Fraction = Fraction(1)
    _listed: Fraction = field(default=Fraction(0), repr=False)

    def seller_offer(self, view: View) -> SellerOffer | None:
        return SellerOffer(view.pid, view.holdings.good, self.ask)

    def declare_demand(self, view: View) -> Fraction:
        return view.demand

    def _need(self, view: View) -> Fraction:
        return max(Fraction(0), view.demand - view.holdings.good)

    def right_offer(self, view: View) -> RightOffer | None:
        cheapest = min((o.price for o in view.offers), default=None)
        affordable = view.holdings.money / cheapest if cheapest else Fraction(0)
        usable = min(view.rights, self._need(view), affordable)
        self._listed = view.rights - usable
        if self._listed <= 0:
            return None
        return RightOffer(view.pid, self._listed, self.right_price)

    def order(self, view: View) -> BuyerOrder | None:
        need = self._need(view)
        if need <= 0:
            return None
        own = view.rights - self._listed
        return BuyerOrder(view.pid, need, self.good_cap, max(Fraction(0), need - own), self.right_cap)

    def observe(self, t: int, utility: Fraction) -> None:
        pass


@dataclass
class HillClimb(TruthfulFixed):
    """TruthfulFixed whose own selling price walks by ``step`` after each market:
    it keeps going in the direction that last raised its utility and turns
    around otherwise. Sellers move ``ask``; buyers move ``right_price``.
    """

    step: Fraction = Fraction(1, 10)
    role: str = "buyer"
    _direction: int = field(default=1, repr=False)
    _last: Fraction | None = field(default=None, repr=False)

    def observe(self, t: int, utility: Fraction) -> None:
        if self._last is not None and utility < self._last:
            self._direction = -self._direction
        self._last = utility
        if self.role == "seller":
            self.ask = max(self.step, self.ask + self._direction * self.step)
        else:
            self.right_price = max(Fraction(0), self.right_price + self._direction * self.step)


BASELINES = ("pass", "truthful", "hill-climb")


def baseline(name: str, cfg: EpisodeConfig) -> dict[int, Strategy]:
    """One fresh strategy object per participant."""
    if name == "pass":
        return {pid: Pass() for pid in [b.id for b in cfg.buyers] + list(cfg.sellers)}
    if name == "truthful":
        return {pid: TruthfulFixed() for pid in [b.id for b in cfg.buyers] + list(cfg.sellers)}
    if name == "hill-climb":
        out: dict[int, Strategy] = {b.id: HillClimb(role="buyer") for b in cfg.buyers}
        out.update({s: HillClimb(role="seller") for s in cfg.sellers})
        return out
    raise ValueError(f"unknown strategy {name!r}; choose from {', '.join(BASELINES)}")
