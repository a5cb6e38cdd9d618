"""Scenario and estimator registry."""

from __future__ import annotations

from types import ModuleType

from stf.scenarios import ballistic, bearing, linear

SCENARIOS: dict[int, ModuleType] = {1: linear, 2: bearing, 3: ballistic}
CONFIG_CLASSES = {1: linear.Scenario1Config, 2: bearing.Scenario2Config, 3: ballistic.Scenario3Config}


def scenario_module(scenario: int) -> ModuleType:
    try:
        return SCENARIOS[scenario]
    except KeyError:
        raise ValueError(f"unknown scenario {scenario!r}; expected one of {sorted(SCENARIOS)}") from None


def estimator_names(scenario: int) -> list[str]:
    """All estimators of a scenario, in registry order (``truth`` last)."""
    names = [n for _, ns in scenario_module(scenario).FAMILIES.values() for n in ns]
    return [n for n in names if n != "truth"] + ["truth"]


def family_of(scenario: int) -> dict[str, str]:
    return {n: fam for fam, (_, ns) in scenario_module(scenario).FAMILIES.items() for n in ns}


def check_estimators(scenario: int, names) -> list[str]:
    known = family_of(scenario)
    names = list(names)
    if not names:
        raise ValueError("estimator list is empty")
    unknown = [n for n in names if n not in known]
    if unknown:
        raise ValueError(
            f"unknown estimator(s) {unknown} for scenario {scenario}; registry: {', '.join(estimator_names(scenario))}"
        )
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate estimator names in {names}")
    return names
