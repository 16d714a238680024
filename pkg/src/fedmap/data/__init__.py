"""Packaged scenarios."""
from importlib import resources


def walkthrough_scenario_path():
    return str(resources.files(__name__) / "walkthrough" / "scenario.json")
