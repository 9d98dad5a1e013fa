"""Pieces shared by the traffic-engineering engines."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .routing import RoutingInstance
from .topology import Topology
from .traffic import loads_from_demands


@dataclass
class TEResult:
    routing: RoutingInstance
    fallback: bool = False
    # True when the engine could not bring every triggering link under threshold.
    relief_failed: bool = False
    failed: bool = False
    trace: dict = field(default_factory=dict)

    @property
    def flagged(self) -> bool:
        return self.fallback or self.relief_failed or self.failed


def capacities(topo: Topology) -> np.ndarray:
    return np.array([l.capacity for l in topo.links])


def relieved(topo: Topology, r: RoutingInstance, demands, links, threshold: float,
             load: Optional[np.ndarray] = None) -> bool:
    """Every link in ``links`` stays strictly below threshold under ``r``."""
    if load is None:
        load = loads_from_demands(topo, r, demands)
    caps = capacities(topo)
    return all(load[l] < threshold * caps[l] for l in links)


def max_utilization(topo: Topology, r: RoutingInstance, demands) -> float:
    load = loads_from_demands(topo, r, demands)
    return float((load / capacities(topo)).max()) if len(load) else 0.0
