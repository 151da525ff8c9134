"""Interaction graph between gNBs: connectivity criteria and pruning.

Nodes are gNB ids; an edge exists where the chosen connectivity criterion
strictly exceeds the threshold.  When belief propagation fails to converge
the graph is pruned one edge at a time: the lightest edge whose removal
keeps every connected component intact is dropped (reverse delete).
"""

from __future__ import annotations

from dataclasses import dataclass

from .configspace import candidate_beams
from .geometry import distance
from .phy import covers
from .scenario import occupancy

CRITERIA = ("distance", "los", "coverage")


class AlreadyForestError(RuntimeError):
    """Raised when pruning is requested but no edge lies on a cycle."""


@dataclass(frozen=True)
class InteractionGraph:
    nodes: tuple
    edges: dict  # (g, h) with g < h -> weight
    criterion: str = "coverage"
    threshold: float = 0.0

    def __post_init__(self):
        for (g, h), w in self.edges.items():
            if g == h:
                raise ValueError("self-edges are not allowed")
            if g > h:
                raise ValueError("edge keys must be ordered pairs")
            if not (w >= 0.0) or w != w:
                raise ValueError(f"edge ({g},{h}) has invalid weight {w}")

    def neighbors(self, node) -> tuple:
        out = [h if g == node else g for (g, h) in self.edges if node in (g, h)]
        return tuple(sorted(out))

    def without_edge(self, edge) -> "InteractionGraph":
        edges = {e: w for e, w in self.edges.items() if e != edge}
        return InteractionGraph(self.nodes, edges, self.criterion, self.threshold)

    def component_count(self) -> int:
        seen = set()
        count = 0
        for start in self.nodes:
            if start in seen:
                continue
            count += 1
            stack = [start]
            while stack:
                n = stack.pop()
                if n in seen:
                    continue
                seen.add(n)
                stack.extend(self.neighbors(n))
        return count

    def is_forest(self) -> bool:
        return len(self.edges) == len(self.nodes) - self.component_count()


def _connected_without(graph: InteractionGraph, edge) -> bool:
    """Whether the endpoints of ``edge`` stay connected after its removal."""
    g, h = edge
    adj: dict = {n: [] for n in graph.nodes}
    for (a, b) in graph.edges:
        if (a, b) == edge:
            continue
        adj[a].append(b)
        adj[b].append(a)
    stack = [g]
    seen = {g}
    while stack:
        n = stack.pop()
        if n == h:
            return True
        for m in adj[n]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return False


def coverage_sets(sites, occupied, scenario, limits=None) -> dict:
    """Occupied zones reachable by each gNB through any candidate beam."""
    if limits is None:
        limits = scenario.limits
    out = {}
    for site in sites:
        covered = set()
        beams = candidate_beams(site, occupied, scenario, limits)
        for zone_id in occupied:
            zone = scenario.area.zone(zone_id)
            if any(covers(site, b, zone, range_m=limits.range_m) for b in beams):
                covered.add(zone_id)
        out[site.id] = covered
    return out


def connectivity_score(g, h, criterion, scenario, t, cov_sets=None) -> float:
    """Pairwise connectivity value under one of the supported criteria."""
    if g.id == h.id:
        raise ValueError("connectivity is defined between distinct gNBs")
    if criterion == "distance":
        return 1.0 / distance(g.position, h.position)
    if criterion == "los":
        table = scenario.losmap.lookup(("gnb", g.id), ("gnb", h.id))
        if table is not None:
            return 1.0 if table else 0.0
        return 1.0 if scenario.losmap.segment_clear(g.position, h.position) else 0.0
    if criterion == "coverage":
        if cov_sets is None:
            occupied = occupancy(scenario, t) if not scenario.trace.empty else frozenset()
            cov_sets = coverage_sets([g, h], occupied, scenario)
        a, b = cov_sets[g.id], cov_sets[h.id]
        union = len(a | b)
        return len(a & b) / union if union else 0.0
    raise ValueError(f"unknown criterion '{criterion}' (expected one of {CRITERIA})")


def build_graph(sites, criterion, c_thr, scenario, t, cov_sets=None) -> InteractionGraph:
    """Graph with an edge wherever the criterion strictly exceeds ``c_thr``."""
    if c_thr < 0:
        raise ValueError("threshold must be nonnegative")
    sites = sorted(sites, key=lambda s: s.id)
    if criterion == "coverage" and cov_sets is None:
        occupied = occupancy(scenario, t) if not scenario.trace.empty else frozenset()
        cov_sets = coverage_sets(sites, occupied, scenario)
    edges = {}
    for i, g in enumerate(sites):
        for h in sites[i + 1 :]:
            score = connectivity_score(g, h, criterion, scenario, t, cov_sets)
            if score > c_thr:
                edges[(g.id, h.id)] = score
    return InteractionGraph(tuple(s.id for s in sites), edges, criterion, c_thr)


def prune_once(graph: InteractionGraph) -> InteractionGraph:
    """Remove the lightest edge whose removal keeps all components connected.

    Ties break toward the lowest (g, h) id pair.  Raises AlreadyForestError
    when every edge is a bridge.
    """
    for edge, _ in sorted(graph.edges.items(), key=lambda kv: (kv[1], kv[0])):
        if _connected_without(graph, edge):
            return graph.without_edge(edge)
    raise AlreadyForestError("graph is already a forest; nothing to prune")
