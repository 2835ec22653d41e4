"""Photon-collection efficiency chain and heralded entanglement rates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .config import ConfigError, load_data, load_toml, num

PROVENANCES = ("measured", "computed", "assumed")


@dataclass(frozen=True)
class EfficiencyFactor:
    name: str
    value: float
    relative_uncertainty: float = 0.0
    provenance: str = "measured"

    def __post_init__(self):
        if not 0 <= self.value <= 1:
            raise ValueError(f"{self.name}: efficiency {self.value} outside [0, 1]")
        if self.relative_uncertainty < 0:
            raise ValueError(f"{self.name}: negative uncertainty")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"{self.name}: provenance must be one of {PROVENANCES}")


def solid_angle_fraction(na: float) -> float:
    """Fraction of 4 pi inside a cone of numerical aperture na (vacuum)."""
    if not 0 <= na <= 1:
        raise ValueError("na must be in [0, 1]")
    return (1 - math.sqrt(1 - na * na)) / 2


def chain(factors: Iterable[EfficiencyFactor]) -> tuple[float, float]:
    """Product of the factors and its absolute uncertainty (relative errors in quadrature)."""
    factors = list(factors)
    if not factors:
        raise ValueError("empty efficiency chain")
    value = math.prod(f.value for f in factors)
    rel = math.sqrt(sum(f.relative_uncertainty**2 for f in factors))
    return value, value * rel


def total_two_sided(per_side: tuple[float, float]) -> float:
    a, b = per_side
    for v in (a, b):
        if not 0 <= v <= 1:
            raise ValueError("per-side efficiencies must be in [0, 1]")
    if a + b > 1:
        raise ValueError("two-sided efficiency exceeds 1")
    return a + b


@dataclass(frozen=True)
class RateModel:
    success_probability: float
    attempt_rate: float  # 1/s
    directions_per_node: int = 1

    def __post_init__(self):
        if not 0 <= self.success_probability <= 1:
            raise ValueError("success probability must be in [0, 1]")
        if not self.attempt_rate > 0:
            raise ValueError("attempt rate must be positive")
        if self.directions_per_node not in (1, 2):
            raise ValueError("directions_per_node must be 1 or 2")


def entanglement_rate(model: RateModel) -> float:
    return model.success_probability * model.attempt_rate * model.directions_per_node


def attempt_rate_from(rate: float, success_probability: float) -> float:
    if success_probability <= 0:
        raise ValueError("success probability must be positive")
    return rate / success_probability


def rate_ratio(new: RateModel, baseline: RateModel) -> float:
    base = entanglement_rate(baseline)
    if base <= 0:
        raise ValueError("baseline rate is zero")
    return entanglement_rate(new) / base


def factor_from_config(entry: dict) -> EfficiencyFactor:
    name = entry.get("name", "factor")
    prov = entry.get("provenance", "measured")
    if "na" in entry:
        return EfficiencyFactor(name, solid_angle_fraction(num(entry["na"], f"{name}.na")), 0.0, prov)
    if "value" not in entry:
        raise ConfigError(f"factor '{name}': needs 'value' or 'na'")
    v = num(entry["value"], f"{name}.value")
    u = num(entry.get("uncertainty", 0), f"{name}.uncertainty")
    return EfficiencyFactor(name, v, u / v if v else 0.0, prov)


@dataclass
class ScenarioResult:
    name: str
    per_side: float
    per_side_uncertainty: float
    baseline_attempt_rate: float
    baseline: RateModel
    new: RateModel
    ratio: float
    efficiency_ratio_squared: float
    direction_factor: float
    assumed: dict


def load_scenario(path=None) -> dict:
    if path is None:
        return load_data("rate_scenario.toml")
    return load_toml(path)


def run_scenario(scn: dict, topology: str | None = None) -> ScenarioResult:
    """Evaluate a rate scenario.

    Two-photon heralding succeeds with probability proportional to the
    product of both nodes' collection efficiencies, so
    p_new = p_base (eta_new / eta_base)^2 with all other factors held equal.
    """
    factors = [factor_from_config(f) for f in scn["factors"]]
    eta, deta = chain(factors)
    b = scn["baseline"]
    p_base = num(b["success_probability"], "baseline.success_probability")
    r_base = num(b["rate_per_s"], "baseline.rate_per_s")
    eta_base = num(b["collection_efficiency_per_node"], "baseline.collection_efficiency_per_node")
    attempt = attempt_rate_from(r_base, p_base)
    topo = topology or scn.get("scenario", {}).get("topology", "two-node")
    if topo not in ("two-node", "three-node"):
        raise ConfigError(f"unknown topology {topo!r}")
    dirs = int(scn["new"].get("directions_per_node", 1))
    if topo == "three-node":
        dirs = 1  # each direction serves a different neighbour: one link sees one direction
    gain = (eta / eta_base) ** 2
    base = RateModel(p_base, attempt, int(b.get("directions_per_node", 1)))
    new = RateModel(min(1.0, p_base * gain), attempt, dirs)
    common = scn.get("common", {})
    assumed = {
        "baseline_collection_efficiency_per_node": eta_base,
        "branching_ratio": num(common.get("branching_ratio", 1)),
        "detector_efficiency": num(common.get("detector_efficiency", 1)),
        "attempt_rate_equal": True,
        "topology": topo,
    }
    return ScenarioResult(scn.get("scenario", {}).get("name", "scenario"), eta, deta, attempt,
                          base, new, rate_ratio(new, base), gain, dirs / base.directions_per_node,
                          assumed)
