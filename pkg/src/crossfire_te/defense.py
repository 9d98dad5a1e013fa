"""TE-agnostic defense workflow: penalize on every flood event, then hand over to TE.

Penalization keeps two hash tables, one for source IPs and one for nodes,
and follows an event-counting rule: +1 for every appearance, +2 for a host
that reappears after changing destination, -1 decay for every tracked key
that was not implicated this time.
"""
from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .routing import RoutingInstance
from .te_base import TEResult
from .topology import Topology
from .traffic import Host

logger = logging.getLogger(__name__)

STABLE_WINDOW = 5


class ContractError(RuntimeError):
    pass


@dataclass(frozen=True)
class FloodEvent:
    link: int
    src: frozenset
    dst: frozenset


@dataclass
class FloodReport:
    timestep: int
    events: list[FloodEvent]
    # destination of each reported source host at flood time
    dests: dict = field(default_factory=dict)

    def __bool__(self):
        return bool(self.events)

    @property
    def links(self) -> list[int]:
        return [e.link for e in self.events]


@dataclass
class Verdict:
    deduced_target: frozenset
    deduced_bots: frozenset
    conclusive_at: int
    target_penalties: dict = field(default_factory=dict)
    ip_penalties: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "timestep": self.conclusive_at,
            "deduced_target": sorted(self.deduced_target),
            "bots": sorted(self.deduced_bots),
            "target_penalties": dict(sorted(self.target_penalties.items())),
            "ip_penalty_count": len(self.ip_penalties),
        }, sort_keys=True)


@dataclass
class PenaltyLedger:
    suspect_ips: dict = field(default_factory=dict)
    suspect_targets: dict = field(default_factory=dict)
    top_suspects_history: deque = field(default_factory=lambda: deque(maxlen=STABLE_WINDOW))
    timestep: int = 0
    # destination each host had at its last appearance on a flooded link
    last_dest: dict = field(default_factory=dict)
    # absolute report timestep of the last penalize call
    last_report: Optional[int] = None

    def top_suspects(self) -> frozenset:
        if not self.suspect_targets:
            return frozenset()
        best = max(self.suspect_targets.values())
        return frozenset(n for n, p in self.suspect_targets.items() if p == best)

    def reset(self):
        self.suspect_ips.clear()
        self.suspect_targets.clear()
        self.top_suspects_history.clear()
        self.last_dest.clear()
        self.timestep = 0


def affected_set(report: FloodReport) -> set:
    """Union of the Dst sets of all flooded links in the report."""
    out = set()
    for e in report.events:
        out |= e.dst
    return out


def _decay(table: dict, hit: set):
    for key in [k for k in table if k not in hit]:
        if table[key] <= 1:
            del table[key]
        else:
            table[key] -= 1


def penalize(ledger: PenaltyLedger, report: FloodReport, hosts: Optional[Sequence[Host]] = None) -> PenaltyLedger:
    """Apply one report's evidence to the ledger (in place) and return it."""
    if ledger.last_report is not None and report.timestep <= ledger.last_report:
        raise ContractError(f"report {report.timestep} is not after {ledger.last_report}")
    nodes = affected_set(report)
    sources = set()
    for e in report.events:
        sources |= e.src
    dest_of = dict(report.dests)
    moved = {}
    if hosts is not None:
        by_id = {h.id: h for h in hosts}
        for hid in sources:
            h = by_id[hid]
            dest_of.setdefault(hid, h.current_dest)
            moved[hid] = h.prev_dest is not None and h.prev_dest != h.current_dest

    targets = ledger.suspect_targets
    for n in nodes:
        targets[n] = targets.get(n, 0) + 1
    _decay(targets, nodes)

    ips = ledger.suspect_ips
    for hid in sources:
        dest = dest_of.get(hid)
        seen = ledger.last_dest.get(hid)
        if hid in moved:
            changed = moved[hid] and hid in ledger.last_dest
        else:  # no host records: compare with the destination seen last time
            changed = seen is not None and dest is not None and seen != dest
        bonus = 2 if changed else 1
        ips[hid] = ips.get(hid, 0) + bonus
        ledger.last_dest[hid] = dest
    _decay(ips, sources)

    ledger.timestep += 1
    ledger.last_report = report.timestep
    ledger.top_suspects_history.append(ledger.top_suspects())
    return ledger


def conclusive(ledger: PenaltyLedger) -> bool:
    """Top-penalized node set identical over the last five recorded steps."""
    h = ledger.top_suspects_history
    if len(h) < STABLE_WINDOW:
        return False
    first = h[0]
    return bool(first) and all(s == first for s in h)


def deduce(ledger: PenaltyLedger) -> Verdict:
    if not conclusive(ledger):
        raise ContractError("deduce() called before penalization is conclusive")
    tau = ledger.timestep
    verdict = Verdict(
        deduced_target=ledger.top_suspects(),
        deduced_bots=frozenset(h for h, p in ledger.suspect_ips.items() if p > tau + 1),
        conclusive_at=ledger.last_report,
        target_penalties=dict(ledger.suspect_targets),
        ip_penalties=dict(ledger.suspect_ips),
    )
    ledger.reset()
    return verdict


@dataclass
class EventOutcome:
    routing: RoutingInstance
    te: Optional[TEResult] = None
    verdict: Optional[Verdict] = None


def on_flood_event(ledger: PenaltyLedger, report: FloodReport, te_engine, r: RoutingInstance,
                   topo: Topology, hosts: Sequence[Host]) -> tuple[PenaltyLedger, EventOutcome]:
    """Handle one flood report: penalize, run TE, report a verdict if conclusive.

    Penalization reads only the report and never feeds the TE engine, so its
    placement before the TE call is a sequencing choice, not a dependency.
    """
    if not report:
        return ledger, EventOutcome(r)
    penalize(ledger, report, hosts)
    try:
        te = te_engine.step(topo, r, report, hosts)
    except Exception as exc:  # an engine bug must not take the network down
        logger.warning("TE engine failed at t=%s: %s", report.timestep, exc)
        te = TEResult(r, failed=True, relief_failed=True, trace={"error": str(exc)})
    verdict = deduce(ledger) if conclusive(ledger) else None
    return ledger, EventOutcome(te.routing, te, verdict)
