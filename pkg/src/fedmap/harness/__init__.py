"""Simulation harness: random worlds, the centralized oracle, and scenario runs."""
from .generate import build_world, gen_random_world
from .oracle import OracleWorld, merge_documents
from .scenario import Deployment, load_scenario, run_scenario, validate_scenario

__all__ = ["build_world", "gen_random_world", "OracleWorld", "merge_documents", "Deployment",
           "load_scenario", "run_scenario", "validate_scenario"]
