"""Result tables and traces written by ``crisisdist run``.

Every run writes four CSV files in long format, so one schema serves both
mechanisms. Each rational appears twice: exact (``25/8``) and as a decimal
with six places.

prices.csv      market, series, value, value_decimal
frustration.csv market, buyer, frustration, frustration_decimal
trades.csv      market, step, commodity, qty, qty_decimal, price, price_decimal, from, to
holdings.csv    market, participant, role, item, amount, amount_decimal

Price series are ``G``, ``R``, ``C`` (terminal prices) for the Couple auction
and ``ask_mean``, ``right_ask_mean``, ``good_cap_mean``, ``right_cap_mean``,
``G_trade_mean``, ``R_trade_mean`` (volume-weighted) for the seller market. A
series with no observations is left blank. Holdings items are ``G``, ``R``,
``C``, ``M``, ``cash``, ``earmark`` and ``utility``.

trace.jsonl starts with a header line holding the scenario document; the
lines after it are mechanism specific (see ``trace_lines``).
"""

from __future__ import annotations

import csv
import io
import json
from fractions import Fraction
from pathlib import Path

from .market import Commodity, basket_utility
from .numbers import fmt, fmt_decimal, parse_rational
from .scenario_io import SellerSetup, scenario_document
from .seller import SellerEpisode
from .sequence import EpisodeState

TRACE_FORMAT = "crisisdist-trace"
TRACE_VERSION = 1

COLUMNS = {
    "prices": ("market", "series", "value", "value_decimal"),
    "frustration": ("market", "buyer", "frustration", "frustration_decimal"),
    "trades": ("market", "step", "commodity", "qty", "qty_decimal", "price", "price_decimal", "from", "to"),
    "holdings": ("market", "participant", "role", "item", "amount", "amount_decimal"),
}


def _pair(value: Fraction | int | None) -> tuple[str, str]:
    if value is None:
        return "", ""
    return fmt(value), fmt_decimal(value)


def _mean(pairs: list[tuple[Fraction, Fraction]]) -> Fraction | None:
    """Weighted mean of (value, weight) pairs; None if the total weight is 0."""
    weight = sum((w for _, w in pairs), Fraction(0))
    if weight == 0:
        return None
    return sum((v * w for v, w in pairs), Fraction(0)) / weight


def couple_tables(ep: EpisodeState) -> dict[str, list[tuple]]:
    rows: dict[str, list[tuple]] = {name: [] for name in COLUMNS}
    for rec in ep.markets:
        t, out = rec.index, rec.outcome
        for key in (Commodity.GOOD, Commodity.RIGHT, Commodity.COUPLE):
            rows["prices"].append((t, key.value, *_pair(out.prices[key])))
        for b in rec.scenario.buyers:
            rows["frustration"].append((t, b.id, *_pair(rec.frustration[b.id])))
        prices = {}
        step = 0
        for event in rec.run.events:
            if event["kind"] in ("start", "raise"):
                prices = {k: parse_rational(v) for k, v in event["prices"].items()}
            if event["kind"] != "buy":
                continue
            step += 1
            if event["source"] == "compose":
                # a fresh Couple: one Right and one Good change hands at current prices
                rows["trades"].append((t, step, "R", *_pair(1), *_pair(prices["R"]), event["right_from"], event["buyer"]))
                rows["trades"].append((t, step, "G", *_pair(1), *_pair(prices["G"]), event["good_from"], event["buyer"]))
            else:
                price = parse_rational(event["price"])
                rows["trades"].append((t, step, "C", *_pair(1), *_pair(price), event["from"], event["buyer"]))
        s = rec.scenario
        terminal = rec.run.terminal
        for pid in s.participant_ids():
            basket = out.solution.baskets[pid]
            role = "buyer" if any(b.id == pid for b in s.buyers) else "seller"
            items = [
                ("G", basket.good), ("R", basket.right), ("C", basket.couple), ("M", basket.money),
                ("cash", basket.residual_cash),
                ("earmark", parse_rational(terminal["earmark"].get(str(pid), "0"))),
                ("utility", basket_utility(pid, basket, s)),
            ]
            rows["holdings"].extend((t, pid, role, item, *_pair(v)) for item, v in items)
    return rows


def seller_tables(ep: SellerEpisode) -> dict[str, list[tuple]]:
    rows: dict[str, list[tuple]] = {name: [] for name in COLUMNS}
    buyers = [b.id for b in ep.config.buyers]
    for m in ep.markets:
        t = m.t
        series = {
            "ask_mean": _mean([(o.price, o.quantity) for o in m.offers]),
            "right_ask_mean": _mean([(o.price, o.quantity) for o in m.right_offers]),
            "good_cap_mean": _mean([(o.good_cap, o.good_volume) for o in m.orders]),
            "right_cap_mean": _mean([(o.right_cap, o.right_volume) for o in m.orders]),
            "G_trade_mean": _mean([(x.price, x.quantity) for x in m.trades if x.commodity == "G"]),
            "R_trade_mean": _mean([(x.price, x.quantity) for x in m.trades if x.commodity == "R"]),
        }
        rows["prices"].extend((t, name, *_pair(v)) for name, v in series.items())
        rows["frustration"].extend((t, b, *_pair(m.frustration[b])) for b in buyers)
        rows["trades"].extend(
            (t, x.step, x.commodity, *_pair(x.quantity), *_pair(x.price), x.seller, x.buyer) for x in m.trades
        )
        for pid in buyers + list(ep.config.sellers):
            h = m.holdings[pid]
            role = "buyer" if pid in buyers else "seller"
            items = [("G", h.good), ("M", h.money)]
            if role == "buyer":
                items.append(("R", m.rights[pid]))
            items.append(("utility", m.utilities[pid]))
            rows["holdings"].extend((t, pid, role, item, *_pair(v)) for item, v in items)
    return rows


def render_csv(name: str, rows: list[tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS[name])
    w.writerows(rows)
    return buf.getvalue()


def write_tables(out_dir: Path, rows: dict[str, list[tuple]]) -> list[Path]:
    paths = []
    for name in COLUMNS:
        path = out_dir / f"{name}.csv"
        path.write_text(render_csv(name, rows.get(name, [])), encoding="utf-8")
        paths.append(path)
    return paths


# -- traces ---------------------------------------------------------------------------

def _seller_market_line(m) -> dict:
    return {
        "kind": "market",
        "market": m.t,
        "supply": {str(k): fmt(v) for k, v in m.supply.items()},
        "offers": [[o.seller, fmt(o.quantity), fmt(o.price)] for o in m.offers],
        "declared": {str(k): fmt(v) for k, v in m.declared.items()},
        "rights": {str(k): fmt(v) for k, v in m.rights.items()},
        "right_offers": [[o.buyer, fmt(o.quantity), fmt(o.price)] for o in m.right_offers],
        "orders": [
            [o.buyer, fmt(o.good_volume), fmt(o.good_cap), fmt(o.right_volume), fmt(o.right_cap)] for o in m.orders
        ],
        "trades": [[x.step, x.commodity, fmt(x.quantity), fmt(x.price), x.seller, x.buyer] for x in m.trades],
        "holdings": {str(k): [fmt(h.money), fmt(h.good)] for k, h in m.holdings.items()},
        "consumed": {str(k): fmt(v) for k, v in m.consumed.items()},
        "utilities": {str(k): fmt(v) for k, v in m.utilities.items()},
        "clamps": [[c.participant, c.what, c.message] for c in m.clamps],
    }


def trace_lines(setup, ep) -> list[dict]:
    """Couple runs: per market a ``market`` line with the market's own scenario,
    then that market's auction events tagged with ``market``. Seller runs: one
    ``market`` line per market with declarations, trades and holdings."""
    header = {"kind": "header", "format": TRACE_FORMAT, "version": TRACE_VERSION, "scenario": scenario_document(setup)}
    lines = [header]
    if isinstance(setup, SellerSetup):
        lines.extend(_seller_market_line(m) for m in ep.markets)
        return lines
    for rec in ep.markets:
        lines.append({
            "kind": "market",
            "market": rec.index,
            "scenario": scenario_document(rec.scenario),
            "rights": {str(k): v for k, v in rec.rights.items()},
        })
        lines.extend({"market": rec.index, **e} for e in rec.run.events)
    if ep.aborted is not None:
        lines.append({"kind": "aborted", "market": ep.t + 1, "violations": [str(v) for v in ep.aborted.violations]})
    return lines


def render_trace(lines: list[dict]) -> str:
    return "".join(json.dumps(line, separators=(",", ":")) + "\n" for line in lines)
