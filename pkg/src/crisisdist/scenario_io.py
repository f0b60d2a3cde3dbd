"""Scenario files: JSON documents with a format tag and version.

A file describes either a Couple-auction scenario (``"mechanism": "couple"``)
or a seller-market episode (``"mechanism": "seller"``). Counts are JSON
integers; rationals are strings such as ``"3/4"`` (plain integers are also
accepted). Floats and unknown fields are rejected, and every problem found is
reported at once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any

from .market import BuyerSpec, LinearMoneyUtility, PiecewiseConcaveUtility, Scenario, SellerSpec, validate_scenario
from .numbers import fmt, parse_rational
from .seller import BuyerProfile, EconConstants, EpisodeConfig
from .strategies import BASELINES

FORMAT = "crisisdist-scenario"
VERSION = 1


class ScenarioFormatError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("\n".join(problems))


@dataclass(frozen=True)
class SellerSetup:
    config: EpisodeConfig
    strategy: str = "truthful"


_MISSING = object()


class _Reader:
    def __init__(self):
        self.problems: list[str] = []

    def fields(self, obj: Any, path: str, required: set[str], optional: set[str] = frozenset()) -> dict | None:
        if not isinstance(obj, dict):
            self.problems.append(f"{path}: expected an object")
            return None
        for key in sorted(set(obj) - required - set(optional)):
            self.problems.append(f"{path}.{key}: unknown field")
        for key in sorted(required - set(obj)):
            self.problems.append(f"{path}.{key}: missing field")
        return obj

    def integer(self, obj: dict, key: str, path: str, default: int | None = None) -> int:
        if key not in obj:
            # a missing required field is reported by ``fields``
            return 0 if default is None else default
        value = obj[key]
        if isinstance(value, bool) or not isinstance(value, int):
            self.problems.append(f"{path}.{key}: expected an integer, got {value!r}")
            return 0
        return value

    def rational(self, value: Any, where: str, default: Fraction | None = None) -> Fraction:
        if value is _MISSING:
            # a missing required field is reported by ``fields``
            return Fraction(0) if default is None else default
        try:
            return parse_rational(value)
        except ValueError as exc:
            self.problems.append(f"{where}: {exc}")
            return Fraction(0)

    def items(self, obj: dict, key: str, path: str) -> list:
        value = obj.get(key, [])
        if not isinstance(value, list):
            self.problems.append(f"{path}.{key}: expected a list")
            return []
        return value


_COUPLE_TOP = {"format", "version", "mechanism", "epsilon", "buyers", "sellers"}
_COUPLE_OPT = {"markets", "seed", "fairness"}
_SELLER_TOP = {"format", "version", "mechanism", "buyers", "sellers"}
_SELLER_OPT = {"markets", "seed", "strategy", "supply", "constants"}
_CONSTANTS = ("c_store", "c_end_supply", "c_in_stock", "c_missing", "c_money")


def _read_couple(doc: dict, r: _Reader) -> Scenario:
    r.fields(doc, "$", _COUPLE_TOP, _COUPLE_OPT)
    buyers = []
    for k, raw in enumerate(r.items(doc, "buyers", "$")):
        path = f"$.buyers[{k}]"
        b = r.fields(raw, path, {"id", "money", "rights", "marginals", "demand"}, {"slope", "earmark"})
        if b is None:
            continue
        marginals = b.get("marginals", [])
        if not isinstance(marginals, list):
            r.problems.append(f"{path}.marginals: expected a list")
            marginals = []
        buyers.append(BuyerSpec(
            id=r.integer(b, "id", path),
            money=r.integer(b, "money", path),
            rights=r.integer(b, "rights", path),
            good_utility=PiecewiseConcaveUtility(
                tuple(r.rational(v, f"{path}.marginals[{j}]") for j, v in enumerate(marginals))
            ),
            money_utility=LinearMoneyUtility(r.rational(b.get("slope", _MISSING), f"{path}.slope", Fraction(1))),
            demand=r.integer(b, "demand", path),
            earmark=r.rational(b.get("earmark", _MISSING), f"{path}.earmark", Fraction(0)),
        ))
    sellers = []
    for k, raw in enumerate(r.items(doc, "sellers", "$")):
        path = f"$.sellers[{k}]"
        s = r.fields(raw, path, {"id", "good"})
        if s is not None:
            sellers.append(SellerSpec(r.integer(s, "id", path), r.integer(s, "good", path)))
    fairness = doc.get("fairness", "cgd")
    if not isinstance(fairness, str):
        r.problems.append(f"$.fairness: expected a string, got {fairness!r}")
        fairness = "cgd"
    return Scenario(
        buyers,
        sellers,
        r.rational(doc.get("epsilon", _MISSING), "$.epsilon"),
        markets=r.integer(doc, "markets", "$", 1),
        seed=r.integer(doc, "seed", "$", 0),
        fairness=fairness,
        mechanism="couple",
    )


def _read_seller(doc: dict, r: _Reader) -> SellerSetup:
    r.fields(doc, "$", _SELLER_TOP, _SELLER_OPT)
    buyers = []
    for k, raw in enumerate(r.items(doc, "buyers", "$")):
        path = f"$.buyers[{k}]"
        b = r.fields(raw, path, {"id", "income", "demand"})
        if b is not None:
            buyers.append(BuyerProfile(
                r.integer(b, "id", path),
                r.rational(b.get("income", _MISSING), f"{path}.income"),
                r.rational(b.get("demand", _MISSING), f"{path}.demand"),
            ))
    sellers = []
    for k, raw in enumerate(r.items(doc, "sellers", "$")):
        path = f"$.sellers[{k}]"
        s = r.fields(raw, path, {"id"})
        if s is not None:
            sellers.append(r.integer(s, "id", path))
    defaults = EpisodeConfig()
    supply = doc.get("supply", {})
    r.fields(supply, "$.supply", set(), {"base", "sd"})
    supply = supply if isinstance(supply, dict) else {}
    constants = doc.get("constants", {})
    r.fields(constants, "$.constants", set(), set(_CONSTANTS))
    constants = constants if isinstance(constants, dict) else {}
    base = EconConstants()
    econ = EconConstants(**{
        name: r.rational(constants.get(name, _MISSING), f"$.constants.{name}", getattr(base, name)) for name in _CONSTANTS
    })
    strategy = doc.get("strategy", "truthful")
    if strategy not in BASELINES:
        r.problems.append(f"$.strategy: unknown strategy {strategy!r}; choose from {', '.join(BASELINES)}")
        strategy = "truthful"
    cfg = EpisodeConfig(
        markets=r.integer(doc, "markets", "$", defaults.markets),
        buyers=tuple(buyers),
        sellers=tuple(sellers),
        supply_base=r.rational(supply.get("base", _MISSING), "$.supply.base", defaults.supply_base),
        supply_sd=r.rational(supply.get("sd", _MISSING), "$.supply.sd", defaults.supply_sd),
        constants=econ,
        seed=r.integer(doc, "seed", "$", 0),
    )
    return SellerSetup(cfg, strategy)


def parse_scenario(text: str, source: str = "<string>") -> Scenario | SellerSetup:
    """Parse a scenario document; raises ScenarioFormatError listing every problem.

    Only the file format is checked here; economic assumptions are left to
    ``validate_scenario`` and ``EpisodeConfig.problems``.
    """
    if not text.strip():
        raise ScenarioFormatError([f"{source}: empty file"])
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError([f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}"]) from None
    r = _Reader()
    if not isinstance(doc, dict):
        raise ScenarioFormatError([f"{source}: top level must be an object"])
    if doc.get("format") != FORMAT:
        r.problems.append(f"$.format: expected {FORMAT!r}, got {doc.get('format')!r}")
    if doc.get("version") != VERSION:
        r.problems.append(f"$.version: unsupported version {doc.get('version')!r} (this reader knows {VERSION})")
    mechanism = doc.get("mechanism")
    if mechanism == "couple":
        result: Scenario | SellerSetup = _read_couple(doc, r)
    elif mechanism == "seller":
        result = _read_seller(doc, r)
    else:
        raise ScenarioFormatError(r.problems + [f"$.mechanism: expected 'couple' or 'seller', got {mechanism!r}"])
    if r.problems:
        raise ScenarioFormatError([f"{source}: {p}" for p in r.problems])
    return result


class ScenarioValidationError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("\n".join(problems))


def scenario_problems(obj: Scenario | SellerSetup) -> list[str]:
    """Every violated assumption, as printable lines; empty when valid."""
    if isinstance(obj, SellerSetup):
        return obj.config.problems()
    return [str(v) for v in validate_scenario(obj).violations]


def load_scenario(path: str | Path, validate: bool = True) -> Scenario | SellerSetup:
    """Read and check a scenario file. Format problems raise ScenarioFormatError;
    with ``validate``, violated assumptions raise ScenarioValidationError."""
    path = Path(path)
    obj = parse_scenario(path.read_text(encoding="utf-8"), str(path))
    if validate:
        problems = scenario_problems(obj)
        if problems:
            raise ScenarioValidationError([f"{path}: {p}" for p in problems])
    return obj


def scenario_document(obj: Scenario | SellerSetup) -> dict:
    if isinstance(obj, SellerSetup):
        cfg = obj.config
        return {
            "format": FORMAT,
            "version": VERSION,
            "mechanism": "seller",
            "markets": cfg.markets,
            "seed": cfg.seed,
            "strategy": obj.strategy,
            "buyers": [{"id": b.id, "income": fmt(b.income), "demand": fmt(b.demand)} for b in cfg.buyers],
            "sellers": [{"id": s} for s in cfg.sellers],
            "supply": {"base": fmt(cfg.supply_base), "sd": fmt(cfg.supply_sd)},
            "constants": {name: fmt(getattr(cfg.constants, name)) for name in _CONSTANTS},
        }
    return {
        "format": FORMAT,
        "version": VERSION,
        "mechanism": "couple",
        "epsilon": fmt(obj.epsilon),
        "markets": obj.markets,
        "seed": obj.seed,
        "fairness": obj.fairness,
        "buyers": [
            {
                "id": b.id,
                "money": b.money,
                "rights": b.rights,
                "marginals": [fmt(v) for v in b.good_utility.marginals],
                "slope": fmt(b.slope),
                "demand": b.demand,
                "earmark": fmt(b.earmark),
            }
            for b in obj.buyers
        ],
        "sellers": [{"id": s.id, "good": s.good} for s in obj.sellers],
    }


def dump_scenario(obj: Scenario | SellerSetup) -> str:
    return json.dumps(scenario_document(obj), indent=2) + "\n"


def save_scenario(obj: Scenario | SellerSetup, path: str | Path) -> None:
    Path(path).write_text(dump_scenario(obj), encoding="utf-8")


def bundled(name: str) -> Path:
    """Path of a scenario shipped with the package, e.g. ``bundled("table1.scn")``."""
    return Path(str(resources.files("crisisdist") / "scenarios" / name))
