"""Attack-aware TE that narrows the suspect region by repeated tree bisection.

Every flood event splits the routing subtree behind the flooded link into two
halves of similar demand and node count and moves one half onto a new path
from a gateway.  The attacker's next choice of link then reveals which half
holds the target.  Once the suspect set is down to a couple of nodes the
engine switches to giving each remaining suspect its own node-disjoint path.
Anything the engine cannot handle is passed to a plain load balancer for
that one cycle.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .defense import FloodReport
from .routing import (InfeasiblePathError, RoutingError, RoutingInstance, RoutingLoopError,
                      dst_sets, link_disjoint_path, path, path_nodes, shortest_path_tree)
from .te_base import TEResult, capacities, relieved
from .topology import Topology
from .traffic import Host, demand_matrix, loads_from_demands

logger = logging.getLogger(__name__)

BISECTION = "bisection"
DISAMBIGUATION = "disambiguation"
# suspect-set size at which bisection hands over to disambiguation
SWITCH_SIZE = 2


class FallbackSignal(RoutingError):
    """The current cycle has to be handled by the fallback engine."""


class EmptySplitError(FallbackSignal):
    pass


class RepeatedInstanceError(FallbackSignal):
    pass


class DisconnectedSetError(FallbackSignal):
    pass


@dataclass
class RemoteState:
    suspect_tree_nodes: set = field(default_factory=set)
    phase: str = BISECTION
    couple_counts: dict = field(default_factory=dict)
    past_instances: set = field(default_factory=set)
    bisection_steps: int = 0
    trace: list = field(default_factory=list)


# -- tree structure ----------------------------------------------------

def _parents(topo: Topology, r: RoutingInstance, nodes, g_set) -> dict:
    """Parent of each node inside ``nodes`` on its gateway path (None for roots).

    A node's parent is its predecessor on the path from the first gateway
    (in id order) whose predecessor also lies in ``nodes``.
    """
    nodes = set(nodes)
    out = {}
    for n in sorted(nodes):
        out[n] = None
        for g in sorted(g_set):
            if g == n:
                continue
            links = path(topo, r, g, n)
            prev = topo.links[links[-1]].source
            if prev in nodes:
                out[n] = prev
                break
    return out


def _tree(topo, r, nodes, g_set):
    """(root, children, parent) of the subtree induced by ``nodes``.

    Raises DisconnectedSetError unless the set forms a single rooted tree.
    """
    par = _parents(topo, r, nodes, g_set)
    roots = [n for n, p in par.items() if p is None]
    if len(roots) != 1:
        raise DisconnectedSetError(f"node set forms {len(roots)} trees")
    children: dict = {n: [] for n in par}
    for n, p in par.items():
        if p is not None:
            children[p].append(n)
    order = _preorder(roots[0], children)
    if len(order) != len(par):
        raise DisconnectedSetError("node set is not a single tree")
    return roots[0], children, par


def _preorder(root, children) -> list:
    # Destination-based routing need not form a tree, so parents can cycle.
    order, stack, seen = [], [root], {root}
    while stack:
        n = stack.pop()
        order.append(n)
        for c in sorted(children[n], reverse=True):
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return order


def is_connected_subtree(topo, r, nodes, g_set) -> bool:
    if not nodes:
        return False
    try:
        _tree(topo, r, nodes, g_set)
    except (DisconnectedSetError, RoutingError):
        return False
    return True


def _subtree(n, children) -> set:
    return set(_preorder(n, children))


def ranked_cuts(topo: Topology, r: RoutingInstance, dst_t, demands: Mapping[str, float], g_set=None):
    """Every split of the routing subtree over ``dst_t``, most balanced first.

    Yields ``(kept, detached, cut_link)`` triples: ``detached`` is the part
    below ``cut_link``, ``kept`` the part that stays attached to the subtree
    root.  Both halves should be close in demand and in size, so the primary
    score is the larger of the two imbalances, each as a fraction of its
    total; then demand imbalance, node-count imbalance and link id break
    ties.  Scores come from one pass after a bottom-up aggregation.
    """
    g_set = topo.gateways if g_set is None else g_set
    nodes = set(dst_t)
    if len(nodes) < 2:
        raise EmptySplitError("a single node cannot be split")
    root, children, par = _tree(topo, r, nodes, g_set)
    order = _preorder(root, children)
    dem = {n: float(demands.get(n, 0.0)) for n in nodes}
    cnt = {n: 1 for n in nodes}
    for n in reversed(order):
        p = par[n]
        if p is not None:
            dem[p] += dem[n]
            cnt[p] += cnt[n]
    total_d, total_c = dem[root], cnt[root]
    scored = []
    for n in order:
        p = par[n]
        if p is None:
            continue
        cut = r.next_hop(p, n)
        d_gap = abs(total_d - 2 * dem[n])
        c_gap = abs(total_c - 2 * cnt[n])
        share = max(d_gap / total_d if total_d > 0 else 0.0, c_gap / total_c)
        scored.append(((share, d_gap, c_gap, cut), n))
    scored.sort()
    for (*_, cut), n in scored:
        detached = _subtree(n, children)
        yield nodes - detached, detached, cut


def bisect_tree(topo: Topology, r: RoutingInstance, dst_t, demands: Mapping[str, float], g_set=None):
    """Split the routing subtree over ``dst_t`` at its most balanced link.

    Returns ``(kept, detached, cut_link)``; see :func:`ranked_cuts` for the score.
    """
    return next(ranked_cuts(topo, r, dst_t, demands, g_set))


# -- rehoming ----------------------------------------------------------

def _reroute(topo, r, dests, new_path, src) -> RoutingInstance:
    """Point every node of ``new_path`` (except its end) at the next link, for ``dests``."""
    updates = {}
    for node, lid in zip(path_nodes(topo, src, new_path), new_path):
        updates.setdefault(node, {}).update({d: lid for d in dests})
    return r.with_updates(updates)


def _check_loop_free(topo, r, dests):
    for d in dests:
        for n in topo.node_ids:
            if n != d:
                path(topo, r, n, d)


def rehome(topo: Topology, r: RoutingInstance, detached_set, demands: Mapping[str, float], loads,
           g_set=None, threshold: float = 0.9, past_instances=()) -> RoutingInstance:
    """Reattach ``detached_set`` to a gateway through a new feasible path.

    The new path avoids the links of the current gateway paths to the
    subtree root, passes through no detached node, and every hop keeps
    ``threshold * capacity - load >= detached demand``.  Only entries for the
    detached destinations change, and only at nodes on the new path.
    """
    return _rehome(topo, r, detached_set, demands, loads, g_set, threshold, past_instances)[0]


def _rehome(topo, r, detached_set, demands, loads, g_set, threshold, past_instances):
    g_set = sorted(topo.gateways if g_set is None else g_set)
    detached = set(detached_set)
    root, _, _ = _tree(topo, r, detached, g_set)
    demand = sum(float(demands.get(n, 0.0)) for n in detached)
    caps = capacities(topo)
    residual = threshold * caps - np.asarray(loads, dtype=float)
    forbidden = set()
    for g in g_set:
        if g != root:
            forbidden.update(path(topo, r, g, root))
    best = None
    for g in g_set:
        if g == root or g in detached:
            continue
        try:
            p = link_disjoint_path(topo, residual, forbidden, g, root, max(demand, 1e-9),
                                   forbidden_nodes=detached)
        except InfeasiblePathError:
            continue
        if best is None or len(p) < len(best[1]):
            best = (g, p)
    if best is None:
        raise InfeasiblePathError(f"no feasible disjoint path for subtree rooted at {root!r}")
    g, p = best
    new = _reroute(topo, r, detached, p, g)
    _check_loop_free(topo, new, detached)
    if new.fingerprint() in past_instances:
        raise RepeatedInstanceError("rehomed instance was adopted before")
    return new, g, p


def _node_demand(demands) -> dict:
    out: dict = {}
    for (g, m), rate in demands.items():
        if g != m:
            out[m] = out.get(m, 0.0) + rate
    return out


# -- disambiguation ----------------------------------------------------

def disambiguate(state: RemoteState, topo: Topology, r: RoutingInstance, suspects, g_set=None,
                 demands: Optional[Mapping[str, float]] = None, loads=None,
                 threshold: float = 0.9) -> tuple[RoutingInstance, bool]:
    """Give each suspect a gateway path sharing no intermediate node with the others.

    Suspects are handled in id order.  A suspect whose current path already
    avoids the reserved nodes keeps it; otherwise only its own destination
    entries are moved.  Returns ``(instance, flagged)``; ``flagged`` is set
    when some suspect only got a link-disjoint path or none at all.
    """
    g_set = sorted(topo.gateways if g_set is None else g_set)
    suspects = sorted(suspects)
    if len(suspects) < 2:
        raise ValueError("disambiguation needs at least two suspects")
    demands = demands or {}
    caps = capacities(topo)
    load = np.zeros(len(caps)) if loads is None else np.array(loads, dtype=float)
    g = g_set[0]
    cur = {s: path(topo, r, g, s) for s in suspects}
    inner = {s: set(path_nodes(topo, g, cur[s])[1:]) for s in suspects}
    # A suspect that another suspect's path runs through keeps its path;
    # the one behind it is the one that moves.
    upstream = {s for s in suspects if any(s in inner[o] - {o} for o in suspects if o != s)}
    ordered = sorted(suspects, key=lambda s: (s not in upstream, s))
    reserved_nodes: set = set()
    reserved_links: set = set()
    flagged = False
    out = r
    for s in ordered:
        nodes = set(path_nodes(topo, g, path(topo, out, g, s))[1:])
        links = set(path(topo, out, g, s))
        if not (nodes & reserved_nodes):
            reserved_nodes |= nodes
            reserved_links |= links
            continue
        d = float(demands.get(s, 0.0))
        residual = threshold * caps - load
        old = path(topo, out, g, s)
        residual[old] += d  # its own traffic leaves the old path
        new_path = None
        for avoid_nodes, avoid_links in ((reserved_nodes, set()), (set(), reserved_links)):
            try:
                new_path = link_disjoint_path(topo, residual, avoid_links, g, s, max(d, 1e-9),
                                              forbidden_nodes=avoid_nodes)
                if avoid_links:
                    flagged = True
                break
            except InfeasiblePathError:
                continue
        if new_path is None:
            flagged = True
            reserved_nodes |= nodes
            reserved_links |= links
            continue
        cand = _reroute(topo, out, [s], new_path, g)
        try:
            _check_loop_free(topo, cand, [s])
        except RoutingLoopError:
            flagged = True
            continue
        load[old] -= d
        load[new_path] += d
        out = cand
        reserved_nodes |= set(path_nodes(topo, g, new_path)[1:])
        reserved_links |= set(new_path)
    return out, flagged


# -- relief ------------------------------------------------------------

def _relieve(topo, r, demands, node_dem, links, suspects, g_set, threshold, past):
    """Move suspect-free subtrees off links that are still above threshold."""
    caps = capacities(topo)
    for _ in range(len(topo.node_ids)):
        load = loads_from_demands(topo, r, demands)
        hot = [l for l in links if load[l] >= threshold * caps[l]]
        if not hot:
            return r
        l = hot[0]
        dst = dst_sets(topo, r, g_set).get(l, set())
        free_nodes = dst - set(suspects)
        if not free_nodes:
            raise FallbackSignal(f"link {l} carries only suspects")
        par = _parents(topo, r, free_nodes, g_set)
        children: dict = {n: [] for n in par}
        for n, p in par.items():
            if p is not None:
                children[p].append(n)
        excess = load[l] - threshold * caps[l]
        subs = [(sum(node_dem.get(m, 0.0) for m in sub), n, sub)
                for n in sorted(par) for sub in [_subtree(n, children)]]
        # smallest subtree that clears the excess first, then the rest largest first
        subs.sort(key=lambda x: (x[0] <= excess, x[0] if x[0] > excess else -x[0], x[1]))
        moved = False
        for _, n, sub in subs:
            try:
                r = rehome(topo, r, sub, node_dem, load, g_set, threshold, past)
                moved = True
                break
            except (FallbackSignal, InfeasiblePathError, RoutingLoopError):
                continue
        if not moved:
            raise FallbackSignal(f"no suspect-free subtree of link {l} can be moved")
    raise FallbackSignal("relief did not converge")


# -- one engine cycle --------------------------------------------------

def _primary_dst(report: FloodReport, prev: set) -> set:
    best = max(report.events, key=lambda e: (len(e.dst & prev), len(e.dst), -e.link))
    return set(best.dst)


def remote_step(state: RemoteState, topo: Topology, r: RoutingInstance, report: FloodReport, loads,
                demands, g_set, fallback_engine, threshold: float = 0.9,
                hosts: Optional[Sequence[Host]] = None) -> tuple[RemoteState, TEResult]:
    """Run one cycle.  ``demands`` is the (gateway, destination) demand matrix."""
    if not report:
        raise ValueError("remote_step needs a non-empty flood report")
    g_set = sorted(topo.gateways if g_set is None else g_set)
    node_dem = _node_demand(demands)
    prev = state.suspect_tree_nodes
    dst_t = _primary_dst(report, prev)
    cand = dst_t & prev if prev else set()
    if not cand or not is_connected_subtree(topo, r, cand, g_set):
        cand = dst_t
        state.phase = BISECTION
    state.suspect_tree_nodes = cand
    for n in cand:
        state.couple_counts[n] = state.couple_counts.get(n, 0) + 1
    rec = {"phase": state.phase, "suspects": len(cand), "cut_link": None,
           "rehome_path": None, "fallback": False}
    try:
        if state.phase == BISECTION and len(cand) <= SWITCH_SIZE:
            state.phase = DISAMBIGUATION
            rec["phase"] = DISAMBIGUATION
        flagged = False
        if state.phase == BISECTION:
            # the most balanced split whose detached half can be rehomed
            for kept, detached, cut in ranked_cuts(topo, r, cand, node_dem, g_set):
                try:
                    new, g, p = _rehome(topo, r, detached, node_dem, loads, g_set, threshold,
                                        state.past_instances)
                    break
                except (InfeasiblePathError, RoutingLoopError, RepeatedInstanceError) as exc:
                    last = exc
            else:
                raise last
            state.bisection_steps += 1
            rec["cut_link"] = cut
            rec["rehome_path"] = path_nodes(topo, g, p)
        elif len(cand) >= 2:
            new, flagged = disambiguate(state, topo, r, cand, g_set, node_dem, loads, threshold)
        else:
            new = r
        new = _relieve(topo, new, demands, node_dem, report.links, cand, g_set, threshold,
                       state.past_instances)
        load = loads_from_demands(topo, new, demands)
        if float((load / capacities(topo)).max()) >= threshold:
            raise FallbackSignal("maximum utilization still above threshold")
        if new is not r and new.fingerprint() in state.past_instances:
            raise RepeatedInstanceError("instance was adopted before")
    except (FallbackSignal, InfeasiblePathError, RoutingError) as exc:
        logger.debug("fallback at t=%s: %s", report.timestep, exc)
        rec["fallback"] = True
        rec["reason"] = str(exc)
        state.trace.append(rec)
        te = fallback_engine.step(topo, r, report, hosts)
        state.past_instances.add(te.routing.fingerprint())
        te.fallback = True
        te.trace = {**te.trace, **rec}
        return state, te
    state.past_instances.add(new.fingerprint())
    state.trace.append(rec)
    rec["disjoint_flagged"] = flagged
    return state, TEResult(new, trace={"engine": "remote", **rec})


class InverseResidualFallback:
    """Load-adaptive shortest paths, used when GA search is off.

    A single recomputation from 1 / residual weights tends to swing all
    traffic onto the previously idle links.  Instead every round multiplies
    each link weight by ``1 + utilization`` under the last candidate, and the
    candidate with the lowest maximum utilization wins.
    """

    def __init__(self, threshold: float = 0.9, g_set=None, rounds: int = 8):
        self.threshold = threshold
        self.g_set = g_set
        self.rounds = rounds

    def step(self, topo: Topology, r: RoutingInstance, report, hosts) -> TEResult:
        demands = demand_matrix(hosts)
        caps = capacities(topo)
        load = loads_from_demands(topo, r, demands)
        weights = np.ones(len(caps))
        best = None
        for _ in range(self.rounds):
            weights = weights * (1 + load / caps)
            cand = shortest_path_tree(topo, list(weights), g_set=self.g_set)
            load = loads_from_demands(topo, cand, demands)
            util = float((load / caps).max())
            if best is None or util < best[0]:
                best = (util, cand)
        new = best[1]
        ok = relieved(topo, new, demands, report.links, self.threshold)
        return TEResult(new, relief_failed=not ok, trace={"engine": "inverse-residual"})


class RemoteEngine:
    def __init__(self, fallback, threshold: float = 0.9, g_set=None):
        self.state = RemoteState()
        self.fallback = fallback
        self.threshold = threshold
        self.g_set = g_set

    def adopt(self, topo: Topology, r: RoutingInstance):
        self.state.past_instances.add(r.fingerprint())
        if hasattr(self.fallback, "adopt"):
            self.fallback.adopt(topo, r)

    def step(self, topo: Topology, r: RoutingInstance, report, hosts: Sequence[Host]) -> TEResult:
        demands = demand_matrix(hosts)
        loads = loads_from_demands(topo, r, demands)
        self.state, te = remote_step(self.state, topo, r, report, loads, demands, self.g_set,
                                     self.fallback, self.threshold, hosts)
        if not te.fallback and hasattr(self.fallback, "adopt"):
            self.fallback.adopt(topo, te.routing)
        return te
