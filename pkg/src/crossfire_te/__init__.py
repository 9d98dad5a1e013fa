"""Crossfire link-flooding attacks against destination-based traffic engineering.

A discrete-time fluid simulator with a Crossfire attacker, an event-driven
penalization defense, and two TE engines: GATE (genetic link-weight search)
and ReMOTE (attack-aware routing-tree bisection).
"""
from .lemma import coupling_probability, coupling_probability_bruteforce, monotonicity_check
from .routing import RoutingInstance, routing_diff, shortest_path_tree
from .sim import ScenarioConfig, desk_scenario, run_batch, run_scenario, simulate
from .topology import Topology, load_graphml

__version__ = "0.1.0"
