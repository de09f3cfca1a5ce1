"""Scenario configuration files.

The format is TOML. Grammar (every key optional except ``scenario``)::

    scenario = "<name>"              # one of the registered scenarios
    seed     = <int>
    out      = "<directory>"

    [topology]
    kind = "full_mesh" | "static" | "client_server" | "peer_to_peer" | "pub_sub"
    [topology.mesh]        # MeshParams fields
    [topology.hyparview]   # HyParViewParams fields
    [topology.pubsub]      # PubSubParams fields

    [sim]                  # SimConfig fields except seed and record_events
    [sim.per_link_rtt]     # "a,b" = <duration>

    [params]               # fields of the scenario's parameter dataclass

Numbers may be written with units: durations ``"20ms"``, ``"1.5s"``,
``"250us"``; sizes ``"64KB"``, ``"1MB"`` (powers of 1024); rates
``"12.5MB/s"``. Unknown keys anywhere are an error.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Optional

from .scenarios.workloads import SCENARIOS, RunContext
from .service import TOPOLOGIES, HyParViewParams, MeshParams, PubSubParams
from .sim import SimConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


_UNITS = {
    "": 1.0, "s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9, "min": 60.0,
    "b": 1.0, "kb": 1024.0, "mb": 1024.0 ** 2, "gb": 1024.0 ** 3,
}
_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z]*)(/s)?\s*$")


def parse_quantity(value: Any) -> float | int:
    """``"20ms"`` -> 0.02, ``"64KB"`` -> 65536, ``3`` -> 3."""
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return value
    m = _QUANTITY.match(str(value))
    if not m:
        raise ConfigError(f"cannot parse {value!r} as a number")
    number, unit = m.group(1), m.group(2).lower()
    if unit not in _UNITS:
        raise ConfigError(f"unknown unit {m.group(2)!r} in {value!r}")
    scaled = float(number) * _UNITS[unit]
    if unit == "" and re.fullmatch(r"[-+]?\d+", number):
        return int(number)
    return scaled


def _coerce(type_name: str, value: Any, where: str) -> Any:
    optional = "Optional" in type_name or "None" in type_name
    if value is None or (optional and value == "none"):
        if optional:
            return None
        raise ConfigError(f"{where} may not be empty")
    base = type_name.replace("Optional[", "").replace("]", "").replace("| None", "").strip()
    try:
        if base == "bool":
            if not isinstance(value, bool):
                raise ConfigError(f"{where} must be true or false")
            return value
        if base == "str":
            if not isinstance(value, str):
                raise ConfigError(f"{where} must be a string")
            return value
        if base == "int":
            number = parse_quantity(value)
            if float(number) != int(number):
                raise ConfigError(f"{where} must be a whole number")
            return int(number)
        if base == "float":
            return float(parse_quantity(value))
        # free-form ratio strings etc. fall through to the raw value
        return value
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def build_dataclass(cls, values: Mapping[str, Any], where: str, skip: tuple[str, ...] = ()):
    known = {f.name: f for f in fields(cls) if f.name not in skip}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    coerced = {k: _coerce(str(known[k].type), v, f"{where}.{k}") for k, v in values.items()}
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _overrides(cls, values: Mapping[str, Any], where: str, skip: tuple[str, ...] = ()) -> dict:
    # validate by building the dataclass, but keep only the keys the user set
    build_dataclass(cls, values, where, skip)
    known = {f.name: f for f in fields(cls)}
    return {k: _coerce(str(known[k].type), v, f"{where}.{k}") for k, v in values.items()}


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    params: dict[str, Any] = field(default_factory=dict)
    kind: Optional[str] = None
    sim: dict[str, Any] = field(default_factory=dict)
    mesh: dict[str, Any] = field(default_factory=dict)
    hyparview: dict[str, Any] = field(default_factory=dict)
    pubsub: dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    out: Optional[str] = None

    def context(self, seed: int, record_events: bool = False) -> RunContext:
        return RunContext(seed=seed, kind=self.kind, sim=self.sim, mesh=self.mesh,
                          hyparview=self.hyparview, pubsub=self.pubsub,
                          record_events=record_events)

    def with_param(self, name: str, raw: Any) -> ScenarioConfig:
        """Copy with one parameter replaced; ``sim.x`` and ``topology.mesh.x`` address other tables."""
        data = {"params": dict(self.params), "sim": dict(self.sim), "mesh": dict(self.mesh),
                "hyparview": dict(self.hyparview), "pubsub": dict(self.pubsub)}
        parts = name.split(".")
        if len(parts) == 1:
            table, key = "params", parts[0]
        elif len(parts) == 2 and parts[0] == "sim":
            table, key = "sim", parts[1]
        elif len(parts) == 3 and parts[0] == "topology" and parts[1] in ("mesh", "hyparview", "pubsub"):
            table, key = parts[1], parts[2]
        elif len(parts) == 2 and parts[0] == "params":
            table, key = "params", parts[1]
        else:
            raise ConfigError(f"cannot address parameter {name!r}")
        data[table][key] = raw
        links = data["sim"].get("per_link_rtt")
        if isinstance(links, Mapping):
            data["sim"]["per_link_rtt"] = {",".join(k) if isinstance(k, tuple) else k: v
                                           for k, v in links.items()}
        raw_doc = {"scenario": self.scenario, "params": data["params"], "sim": data["sim"],
                   "topology": {k: v for k, v in (("kind", self.kind), ("mesh", data["mesh"]),
                                                  ("hyparview", data["hyparview"]),
                                                  ("pubsub", data["pubsub"])) if v is not None}}
        if self.seed is not None:
            raw_doc["seed"] = self.seed
        if self.out is not None:
            raw_doc["out"] = self.out
        return parse_config(raw_doc)


_TOP_KEYS = {"scenario", "seed", "out", "topology", "sim", "params"}
_TOPOLOGY_KEYS = {"kind", "mesh", "hyparview", "pubsub"}


def _table(doc: Mapping, key: str, where: str) -> dict:
    value = doc.get(key, {})
    if not isinstance(value, Mapping):
        raise ConfigError(f"{where} must be a table")
    return dict(value)


def parse_config(doc: Mapping[str, Any]) -> ScenarioConfig:
    unknown = sorted(set(doc) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    name = doc.get("scenario")
    if not isinstance(name, str):
        raise ConfigError("`scenario` must be given as a string")
    scenario = SCENARIOS.get(name)
    if scenario is None:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")

    topology = _table(doc, "topology", "[topology]")
    unknown = sorted(set(topology) - _TOPOLOGY_KEYS)
    if unknown:
        raise ConfigError(f"unknown key(s) in [topology]: {', '.join(unknown)}")
    kind = topology.get("kind")
    if kind is not None:
        if kind not in TOPOLOGIES:
            raise ConfigError(f"unknown topology kind {kind!r}; choose from {', '.join(TOPOLOGIES)}")
        if kind not in scenario.topologies:
            raise ConfigError(f"scenario {name!r} does not run on {kind!r}; "
                              f"supported: {', '.join(scenario.topologies)}")

    sim = _table(doc, "sim", "[sim]")
    links = sim.pop("per_link_rtt", None)
    sim = _overrides(SimConfig, sim, "[sim]", skip=("seed", "record_events", "per_link_rtt"))
    if links is not None:
        if not isinstance(links, Mapping):
            raise ConfigError("[sim.per_link_rtt] must be a table")
        parsed = {}
        for pair, rtt in links.items():
            ends = tuple(s.strip() for s in pair.split(","))
            if len(ends) != 2 or not all(ends):
                raise ConfigError(f"[sim.per_link_rtt] key {pair!r} must look like \"a,b\"")
            parsed[ends] = float(parse_quantity(rtt))
        sim["per_link_rtt"] = parsed

    seed = doc.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise ConfigError("`seed` must be an integer")
    out = doc.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("`out` must be a string")

    params_table = _table(doc, "params", "[params]")
    build_dataclass(scenario.params, params_table, "[params]")
    known = {f.name: f for f in fields(scenario.params)}
    params = {k: _coerce(str(known[k].type), v, f"[params].{k}") for k, v in params_table.items()}

    return ScenarioConfig(
        scenario=name, params=params, kind=kind, sim=sim,
        mesh=_overrides(MeshParams, _table(topology, "mesh", "[topology.mesh]"), "[topology.mesh]"),
        hyparview=_overrides(HyParViewParams, _table(topology, "hyparview", "[topology.hyparview]"),
                             "[topology.hyparview]"),
        pubsub=_overrides(PubSubParams, _table(topology, "pubsub", "[topology.pubsub]"),
                          "[topology.pubsub]"),
        seed=seed, out=out)


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(doc)
