"""The attack/defense interaction loop, scenario configuration, batches and export.

Draw order on the single RNG stream, per timestep: benign rehoming, then
attacker sampling, then whatever the TE engine consumes.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .attacker import AttackerState, apply_plan, build_plan
from .defense import FloodEvent, FloodReport, PenaltyLedger, on_flood_event
from .routing import DisruptionLedger, RoutingInstance, dst_sets, hop_count_routing, record_migration
from .te_base import capacities, relieved
from .te_gate import GaConfig, GateEngine
from .te_remote import InverseResidualFallback, RemoteEngine
from .topology import GBPS, Topology, bundled, bundled_names, load_graphml
from .traffic import (BENIGN, demand_matrix, flooded_links, link_sources, loads_from_demands,
                      make_hosts, rehome_benign, route_demands, write_load_rows)

TE_SCHEMES = ("remote", "gate")
CSV_HEADER = ["scenario", "te", "seed", "link_util_pct", "timesteps", "mods_per_node",
              "bot_detect_pct", "false_pos_pct", "target_detected"]


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    # bundled topology name or a GraphML path
    topology_path: str = "AttMpls"
    te_scheme: str = "remote"
    host_count: int = 1000
    b_size: float = 0.1
    b_part: float = 1.0
    p_rehome: float = 0.0
    d_min: int = 2
    flood_threshold: float = 0.9
    link_capacity: float = GBPS
    rate_max: float = 1e6
    max_timesteps: int = 60
    seed: int = 0
    repetitions: int = 20
    max_flows_per_bot: int = 1000
    ga_population: int = 50
    ga_generations: int = 100
    ga_mutation_rate: float = 0.05
    ga_tournament_size: int = 4
    ga_w_max: int = 20
    # ReMOTE falls back to GATE; with this off it uses inverse-residual shortest paths
    remote_fallback_gate: bool = True
    gateways: Optional[list] = None
    target: Optional[str] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("b_size", "b_part", "p_rehome", "flood_threshold", "ga_mutation_rate"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.b_part == 0:
            raise ConfigError("b_part must be > 0")
        if self.flood_threshold == 0:
            raise ConfigError("flood_threshold must be > 0")
        if self.host_count < 1:
            raise ConfigError("host_count must be >= 1")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.te_scheme not in TE_SCHEMES:
            raise ConfigError(f"te_scheme must be one of {TE_SCHEMES}, got {self.te_scheme!r}")
        if self.d_min < 1 or self.max_timesteps < 0:
            raise ConfigError("d_min >= 1 and max_timesteps >= 0 required")
        if not self.link_capacity > 0 or not self.rate_max > 0:
            raise ConfigError("link_capacity and rate_max must be positive")

    def ga(self) -> GaConfig:
        return GaConfig(self.ga_population, self.ga_generations, self.ga_mutation_rate,
                        self.ga_tournament_size, self.ga_w_max)

    def replace(self, **kw) -> "ScenarioConfig":
        return dataclasses.replace(self, **kw)

    @classmethod
    def from_mapping(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def desk_scenario(label: str = "1", te: str = "remote", **overrides) -> ScenarioConfig:
    """Desk-scale versions of the evaluation scenarios (1, 1.a, 1.b, 1.c).

    1,000 hosts at up to 1 Mbps keep the aggregate-demand to capacity ratio
    of 10,000 hosts at up to 100 Kbps into 1 Gbps links.  The GA budget is
    trimmed so a 20-seed batch finishes in seconds.
    """
    shapes = {
        "1": dict(b_part=1.0, p_rehome=0.0),
        "1.a": dict(b_part=1.0, p_rehome=1.0),
        "1.b": dict(b_part=0.5, p_rehome=0.0),
        "1.c": dict(b_part=0.1, p_rehome=0.0),
    }
    if label not in shapes:
        raise ConfigError(f"unknown scenario {label!r}; choose from {sorted(shapes)}")
    base = dict(name=f"{label}", te_scheme=te, host_count=1000, b_size=0.1, rate_max=1e6,
                topology_path="Xspedius", ga_population=12, ga_generations=8, max_timesteps=60)
    base.update(shapes[label])
    base.update(overrides)
    return ScenarioConfig(**base)


def load_topology(cfg: ScenarioConfig) -> Topology:
    src = cfg.topology_path
    data = bundled(src) if src in bundled_names() else src
    gw = set(cfg.gateways) if cfg.gateways else None
    return load_graphml(data, capacity_default=cfg.link_capacity, gateways=gw, target=cfg.target)


@dataclass
class RunMetrics:
    scenario: str
    te: str
    seed: int
    mean_link_utilization_pct: float
    timesteps_to_conclusive: int
    modifications_per_node: float
    bot_detect_rate_pct: float
    false_positive_pct: float
    target_detected: bool
    conclusive: bool = False
    max_link_utilization_pct: float = 0.0
    flood_events: int = 0
    fallback_steps: int = 0
    relief_violations: int = 0
    verdict: Optional[dict] = None

    def csv_row(self) -> list:
        return [self.scenario, self.te, self.seed, f"{self.mean_link_utilization_pct:.6f}",
                self.timesteps_to_conclusive, f"{self.modifications_per_node:.6f}",
                f"{self.bot_detect_rate_pct:.6f}", f"{self.false_positive_pct:.6f}",
                int(self.target_detected)]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class StepRecord:
    timestep: int
    flooded: list
    fallback: bool
    relief_failed: bool
    # every triggering link below threshold under the new routing
    relieved: bool
    changes: int
    mean_util: float
    max_util: float
    suspects: Optional[int] = None
    phase: Optional[str] = None
    # size of the intersection of affected sets over all flood steps so far
    common_dst: Optional[int] = None


@dataclass
class RunResult:
    metrics: RunMetrics
    steps: list = field(default_factory=list)
    plans: list = field(default_factory=list)
    disruption: Optional[DisruptionLedger] = None
    engine: object = None
    topology: Optional[Topology] = None


def _make_engine(cfg: ScenarioConfig, topo: Topology, rng):
    gate = GateEngine(topo, rng, cfg.ga(), cfg.flood_threshold)
    if cfg.te_scheme == "gate":
        return gate
    fallback = gate if cfg.remote_fallback_gate else InverseResidualFallback(cfg.flood_threshold)
    return RemoteEngine(fallback, cfg.flood_threshold)


def simulate(cfg: ScenarioConfig, topo: Optional[Topology] = None, engine=None,
             load_log=None, initial: Optional[RoutingInstance] = None) -> RunResult:
    """Run one scenario and keep the per-step trace.

    ``load_log`` (an open text file) receives the per-timestep link-load CSV.
    ``initial`` replaces the default hop-count starting routing.
    """
    topo = topo or load_topology(cfg)
    rng = np.random.default_rng(cfg.seed)
    hosts = make_hosts(topo, cfg.host_count, cfg.b_size, cfg.rate_max, rng)
    bots = [h.id for h in hosts if h.is_bot]
    attacker = AttackerState(bots, cfg.d_min, cfg.b_part, per_bot_rate=cfg.rate_max,
                             max_flows_per_bot=cfg.max_flows_per_bot)
    engine = engine or _make_engine(cfg, topo, rng)
    r = initial if initial is not None else hop_count_routing(topo)
    if hasattr(engine, "adopt"):
        engine.adopt(topo, r)
    g_set = sorted(topo.gateways)
    thr = cfg.flood_threshold
    caps = capacities(topo)
    ledger = PenaltyLedger()
    disruption = DisruptionLedger()
    state = None
    steps, plans = [], []
    verdict = None
    common = None

    for t in range(1, cfg.max_timesteps + 1):
        rehome_benign(hosts, cfg.p_rehome, rng, topo.destinations)
        benign = [h for h in hosts if h.kind == BENIGN]
        free = caps - loads_from_demands(topo, r, demand_matrix(benign))
        dst = dst_sets(topo, r, g_set)
        if bots:
            plan = build_plan(topo, r, free, attacker, g_set, topo.target, thr, rng, hosts, dst=dst)
            apply_plan(hosts, plan)
            plans.append(plan.to_json(t))
        state = route_demands(topo, r, hosts, state)
        if load_log is not None:
            write_load_rows(load_log, t, state, topo, thr, header=(t == 1))
        hot = sorted(flooded_links(state.advance(), topo, thr))
        if not hot:
            continue
        src = link_sources(topo, r, hosts)
        events = [FloodEvent(l, frozenset(src.get(l, ())), frozenset(dst.get(l, ()))) for l in hot]
        involved = set().union(*(e.src for e in events))
        report = FloodReport(t, events, {h.id: h.current_dest for h in hosts if h.id in involved})
        affected = set().union(*(e.dst for e in events))
        common = affected if common is None else common & affected
        ledger, outcome = on_flood_event(ledger, report, engine, r, topo, hosts)
        new = outcome.routing
        demands = demand_matrix(hosts)
        load = loads_from_demands(topo, new, demands)
        util = load / caps
        te = outcome.te
        before = disruption.cumulative
        disruption = record_migration(disruption, r, new, t)
        steps.append(StepRecord(
            timestep=t, flooded=hot, fallback=te.fallback, relief_failed=te.relief_failed or te.failed,
            relieved=relieved(topo, new, demands, hot, thr, load),
            changes=disruption.cumulative - before, mean_util=float(util.mean()),
            max_util=float(util.max()), suspects=te.trace.get("suspects"), phase=te.trace.get("phase"),
            common_dst=len(common)))
        r = new
        if outcome.verdict is not None:
            verdict = outcome.verdict
            break

    metrics = _metrics(cfg, topo, hosts, steps, disruption, verdict)
    return RunResult(metrics, steps, plans, disruption, engine, topo)


def _metrics(cfg, topo, hosts, steps, disruption, verdict) -> RunMetrics:
    bots = {h.id for h in hosts if h.is_bot}
    n_benign = len(hosts) - len(bots)
    deduced = set(verdict.deduced_bots) if verdict else set()
    detect = 100.0 * len(deduced & bots) / len(bots) if bots else 0.0
    false_pos = 100.0 * len(deduced - bots) / n_benign if n_benign else 0.0
    util = float(np.mean([s.mean_util for s in steps])) * 100 if steps else 0.0
    max_util = max((s.max_util for s in steps), default=0.0) * 100
    return RunMetrics(
        scenario=cfg.name, te=cfg.te_scheme, seed=cfg.seed,
        mean_link_utilization_pct=util,
        timesteps_to_conclusive=len(steps),
        modifications_per_node=disruption.cumulative / len(topo.nodes),
        bot_detect_rate_pct=detect,
        false_positive_pct=false_pos,
        target_detected=bool(verdict) and verdict.deduced_target == frozenset({topo.target}),
        conclusive=verdict is not None,
        max_link_utilization_pct=max_util,
        flood_events=len(steps),
        fallback_steps=sum(s.fallback for s in steps),
        relief_violations=sum(not s.relieved and not (s.fallback or s.relief_failed) for s in steps),
        verdict=json.loads(verdict.to_json()) if verdict else None,
    )


def run_scenario(cfg: ScenarioConfig) -> RunMetrics:
    return simulate(cfg).metrics


# -- batches -----------------------------------------------------------

SUMMARY_FIELDS = ("mean_link_utilization_pct", "timesteps_to_conclusive", "modifications_per_node",
                  "bot_detect_rate_pct", "false_positive_pct")


@dataclass
class BatchReport:
    runs: list
    # metric -> {"mean", "std", "half_width"}
    summary: dict
    target_detect_rate: float
    conclusive_rate: float

    @property
    def cfg_name(self):
        return self.runs[0].scenario if self.runs else ""


def summarize(values: Sequence[float], z: float = 1.959963984540054) -> dict:
    a = np.asarray(values, dtype=float)
    std = float(a.std(ddof=1)) if len(a) > 1 else 0.0
    return {"mean": float(a.mean()), "std": std, "half_width": z * std / math.sqrt(len(a))}


def run_batch(cfg: ScenarioConfig, repetitions: Optional[int] = None, seed_base: Optional[int] = None,
              topo: Optional[Topology] = None) -> BatchReport:
    reps = cfg.repetitions if repetitions is None else repetitions
    if reps < 1:
        raise ConfigError("repetitions must be >= 1")
    base = cfg.seed if seed_base is None else seed_base
    topo = topo or load_topology(cfg)
    runs = [simulate(cfg.replace(seed=base + i), topo).metrics for i in range(reps)]
    summary = {f: summarize([getattr(m, f) for m in runs]) for f in SUMMARY_FIELDS}
    return BatchReport(runs, summary,
                       target_detect_rate=sum(m.target_detected for m in runs) / reps,
                       conclusive_rate=sum(m.conclusive for m in runs) / reps)


# -- export ------------------------------------------------------------

def export(result, path, fmt: str = "csv") -> Path:
    """Write a RunMetrics or BatchReport as CSV or JSON."""
    path = Path(path)
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    text = to_csv(result) if fmt == "csv" else to_json(result)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def to_csv(result) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    if isinstance(result, RunMetrics):
        w.writerow(result.csv_row())
    else:
        for m in result.runs:
            w.writerow(m.csv_row())
        s = result.summary
        first = result.runs[0]
        w.writerow([first.scenario, first.te, "mean",
                    f"{s['mean_link_utilization_pct']['mean']:.6f}",
                    f"{s['timesteps_to_conclusive']['mean']:.6f}",
                    f"{s['modifications_per_node']['mean']:.6f}",
                    f"{s['bot_detect_rate_pct']['mean']:.6f}",
                    f"{s['false_positive_pct']['mean']:.6f}",
                    f"{result.target_detect_rate:.6f}"])
    return buf.getvalue()


def to_json(result) -> str:
    if isinstance(result, RunMetrics):
        doc = result.to_dict()
    else:
        doc = {"runs": [m.to_dict() for m in result.runs], "summary": result.summary,
               "target_detect_rate": result.target_detect_rate,
               "conclusive_rate": result.conclusive_rate}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
