"""Attack-unaware load balancing: genetic search over integer link weights.

A chromosome is a vector of link costs; the routing it induces is the
deterministic shortest-path instance from :func:`routing.shortest_path_tree`.
Fitness is the resulting maximum link utilization.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .routing import (RoutingError, RoutingInstance, gateway_trees, shortest_path_tree,
                      tree_routes)
from .te_base import TEResult, capacities, relieved
from .topology import Topology
from .traffic import Host, demand_matrix, loads_from_demands


@dataclass(frozen=True)
class WeightChromosome:
    weights: tuple

    def validate(self, w_max: int, n_links: int):
        if len(self.weights) != n_links:
            raise ValueError(f"chromosome has {len(self.weights)} genes, topology has {n_links} links")
        if any(not 1 <= w <= w_max for w in self.weights):
            raise ValueError(f"weights must lie in [1, {w_max}]")


@dataclass(frozen=True)
class GaConfig:
    population: int = 50
    generations: int = 100
    mutation_rate: float = 0.05
    tournament_size: int = 4
    w_max: int = 20
    repeat_penalty: float = 1000.0

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if not 0 <= self.mutation_rate <= 1:
            raise ValueError("mutation_rate must lie in [0, 1]")
        if self.generations < 0 or self.tournament_size < 1 or self.w_max < 1:
            raise ValueError("generations >= 0, tournament_size >= 1, w_max >= 1 required")


class InstanceMemory:
    """Fingerprints of adopted instances plus a cheap gateway-route key for each.

    Two weight vectors with different gateway routes can never induce the same
    instance, so the full instance is only built when the route key matches.
    """

    def __init__(self):
        self.fingerprints: set[str] = set()
        self.route_keys: set = set()

    def add(self, topo: Topology, r: RoutingInstance, g_set=None):
        from .routing import gateway_paths
        self.fingerprints.add(r.fingerprint())
        routes = gateway_paths(topo, r, g_set)
        self.route_keys.add(_route_key(routes))

    def __contains__(self, fp):
        return fp in self.fingerprints

    def __len__(self):
        return len(self.fingerprints)


def _route_key(routes) -> tuple:
    return tuple(sorted((k, tuple(v)) for k, v in routes.items()))


def _as_demands(hosts) -> dict:
    if isinstance(hosts, Mapping):
        return dict(hosts)
    return demand_matrix(hosts)


def fitness(topo: Topology, chrom, hosts, past_fingerprints=(), cfg: Optional[GaConfig] = None,
            g_set=None) -> float:
    """Max link utilization under the instance ``chrom`` induces, plus repeat penalty.

    ``hosts`` may be a host list or a ready demand matrix.  ``past_fingerprints``
    may be a plain set of fingerprints or an :class:`InstanceMemory`.
    """
    cfg = cfg or GaConfig()
    weights = chrom.weights if isinstance(chrom, WeightChromosome) else tuple(chrom)
    demands = _as_demands(hosts)
    return _fitness(topo, weights, demands, past_fingerprints, cfg, g_set, capacities(topo))


def _fitness(topo, weights, demands, past, cfg, g_set, caps) -> float:
    trees = gateway_trees(topo, weights, g_set)
    dests = sorted({m for _, m in demands} | set(topo.node_ids))
    try:
        routes = tree_routes(topo, trees, dests)
    except RoutingError:
        return math.inf
    load = np.zeros(len(caps))
    for (g, m), rate in demands.items():
        if g != m:
            load[routes[(g, m)]] += rate
    value = float((load / caps).max()) if demands else 0.0
    if past:
        if isinstance(past, InstanceMemory):
            hit = _route_key(routes) in past.route_keys and \
                shortest_path_tree(topo, weights, g_set=g_set).fingerprint() in past
        else:
            hit = shortest_path_tree(topo, weights, g_set=g_set).fingerprint() in past
        if hit:
            value += cfg.repeat_penalty
    return value


@dataclass
class GaResult:
    weights: tuple
    fitness: float
    # best fitness after each generation
    history: list = field(default_factory=list)

    def write_trace(self, fh_or_path):
        own = isinstance(fh_or_path, (str, bytes)) or hasattr(fh_or_path, "__fspath__")
        fh = open(fh_or_path, "w", newline="") if own else fh_or_path
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["generation", "best_fitness"])
            for i, f in enumerate(self.history):
                w.writerow([i, repr(float(f))])
        finally:
            if own:
                fh.close()


def genetic_search(topo: Topology, hosts, cfg: GaConfig, past_fingerprints, rng,
                   incumbent: Optional[Sequence[int]] = None, g_set=None) -> GaResult:
    """Generational GA with tournament selection, uniform crossover and elitism.

    The incumbent is the starting best; generation one mixes it with random
    immigrants, later generations breed from the previous one.  With zero
    generations the incumbent is returned untouched.
    """
    n = len(topo.links)
    demands = _as_demands(hosts)
    caps = capacities(topo)
    cache: dict[tuple, float] = {}

    def evaluate(w) -> float:
        key = tuple(int(x) for x in w)
        if key not in cache:
            cache[key] = _fitness(topo, key, demands, past_fingerprints, cfg, g_set, caps)
        return cache[key]

    if incumbent is None:
        incumbent = (1,) * n
    incumbent = tuple(int(min(max(w, 1), cfg.w_max)) for w in incumbent)
    best_w, best_f = incumbent, evaluate(incumbent)
    history = []
    pop = None
    fit = None
    for gen in range(cfg.generations):
        if pop is None:
            pop = rng.integers(1, cfg.w_max + 1, size=(cfg.population, n))
            pop[0] = incumbent
        else:
            children = np.empty_like(pop)
            children[0] = best_w
            for i in range(1, cfg.population):
                a = pop[_tournament(fit, cfg.tournament_size, rng)]
                b = pop[_tournament(fit, cfg.tournament_size, rng)]
                mask = rng.random(n) < 0.5
                child = np.where(mask, a, b)
                mut = rng.random(n) < cfg.mutation_rate
                if mut.any():
                    child[mut] = rng.integers(1, cfg.w_max + 1, size=int(mut.sum()))
                children[i] = child
            pop = children
        fit = np.array([evaluate(w) for w in pop])
        i = int(np.argmin(fit))
        if fit[i] < best_f:
            best_w, best_f = tuple(int(x) for x in pop[i]), float(fit[i])
        history.append(best_f)
    return GaResult(best_w, best_f, history)


def _tournament(fit: np.ndarray, k: int, rng) -> int:
    idx = rng.integers(len(fit), size=min(k, len(fit)))
    return int(idx[np.argmin(fit[idx])])


def gate_step(topo: Topology, hosts, cfg: GaConfig, past_fingerprints, rng,
              incumbent: Optional[Sequence[int]] = None, g_set=None) -> RoutingInstance:
    res = genetic_search(topo, hosts, cfg, past_fingerprints, rng, incumbent, g_set)
    return shortest_path_tree(topo, res.weights, g_set=g_set)


class GateEngine:
    """Stateful wrapper used by the simulation: remembers weights and past instances."""

    def __init__(self, topo: Topology, rng, cfg: Optional[GaConfig] = None, threshold: float = 0.9,
                 g_set=None):
        self.cfg = cfg or GaConfig()
        self.rng = rng
        self.threshold = threshold
        self.g_set = g_set
        self.weights = (1,) * len(topo.links)
        self.memory = InstanceMemory()
        self.last_search: Optional[GaResult] = None

    def adopt(self, topo: Topology, r: RoutingInstance):
        """Record an instance adopted by someone else (initial routing, another engine)."""
        self.memory.add(topo, r, self.g_set)

    def step(self, topo: Topology, r: RoutingInstance, report, hosts: Sequence[Host]) -> TEResult:
        demands = demand_matrix(hosts)
        res = genetic_search(topo, demands, self.cfg, self.memory, self.rng, self.weights, self.g_set)
        new = shortest_path_tree(topo, res.weights, g_set=self.g_set)
        self.weights = res.weights
        self.last_search = res
        self.memory.add(topo, new, self.g_set)
        load = loads_from_demands(topo, new, demands)
        ok = relieved(topo, new, demands, report.links if report else (), self.threshold, load)
        return TEResult(new, relief_failed=not ok,
                        trace={"engine": "gate", "best_fitness": res.fitness,
                               "max_util": float((load / capacities(topo)).max())})
