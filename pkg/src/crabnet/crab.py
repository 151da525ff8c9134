"""Belief-propagation engine for coordinated beam selection.

Each gNB is a node holding a categorical variable over its candidate
configurations.  Edge potentials score how well two neighbors' choices play
together (the network rate with everyone else silent).  Synchronous message
rounds run until per-node convergence; if the loopy graph refuses to settle
within the iteration budget, the weakest cycle edge is pruned and the run
restarts.  A forest always converges, so termination is guaranteed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .configspace import BeamConfig, NetworkConfig
from .graph import AlreadyForestError, InteractionGraph, prune_once
from .phy import network_rate

DEFAULT_MAX_ITERS = 50
DEFAULT_TOL_FACTOR = 1e-5


class DegeneracyError(RuntimeError):
    """A message or marginal normalized to zero mass."""


# ---------------------------------------------------------------------------
# Compatibility


def compatibility(site_g, site_h, cfg_g: BeamConfig, cfg_h: BeamConfig, link_stats, occupied) -> float:
    """Network rate when only gNBs g and h transmit, everyone else silent.

    ``link_stats`` provides averaged |h~|^2 gains via ``gain(site, beam, zone_id)``
    (an AverageGainCache or anything matching it).
    """
    lo, hi = sorted((cfg_g, cfg_h), key=lambda c: c.gnb_id)
    config = NetworkConfig((lo, hi))
    return network_rate(config, link_stats.gain, occupied, link_stats.params)


def _config_power_arrays(site, configs, cache, occupied_sorted, params):
    """Per-config best/total per-RB received power over the occupied zones."""
    n_zones = len(occupied_sorted)
    best = np.zeros((len(configs), n_zones))
    total = np.zeros((len(configs), n_zones))
    for ci, cfg in enumerate(configs):
        split = cfg.power_per_beam_w
        for bi, beam in enumerate(cfg.beams):
            for zi, zone_id in enumerate(occupied_sorted):
                gain = cache.gain(site, beam, zone_id)
                if gain is None:
                    continue
                p = split[bi] / params.rb_count * gain
                total[ci, zi] += p
                best[ci, zi] = max(best[ci, zi], p)
    return best, total


def compatibility_table(site_g, site_h, configs_g, configs_h, cache, occupied) -> np.ndarray:
    """Dense pairwise compatibility values for one edge, zones vectorized.

    Equivalent to calling :func:`compatibility` entry by entry; the serving
    beam at a zone is the strongest covering beam (ties to the lower gNB id)
    and every other covering beam interferes.
    """
    if site_g.id > site_h.id:
        raise ValueError("edge sites must be passed in id order")
    params = cache.params
    occupied_sorted = sorted(occupied)
    best_g, tot_g = _config_power_arrays(site_g, configs_g, cache, occupied_sorted, params)
    best_h, tot_h = _config_power_arrays(site_h, configs_h, cache, occupied_sorted, params)

    noise = params.noise_floor_w
    per_rb = params.rb_bandwidth_hz * params.slot_fraction
    table = np.zeros((len(configs_g), len(configs_h)))
    for zi in range(len(occupied_sorted)):
        bg = best_g[:, zi][:, None]
        bh = best_h[:, zi][None, :]
        serving = np.where(bg >= bh, bg, bh)  # tie -> lower id (g)
        interference = tot_g[:, zi][:, None] + tot_h[:, zi][None, :] - serving
        table += params.rb_count * per_rb * np.log2(1.0 + serving / (noise + interference))
    return table


# ---------------------------------------------------------------------------
# Message passing


@dataclass
class BeliefState:
    """Directed messages, per-node convergence flags, and the round counter."""

    messages: dict  # (src, dst) -> np.ndarray over the destination's configs
    converged: dict = field(default_factory=dict)
    iteration: int = 0

    def copy_shell(self) -> "BeliefState":
        return BeliefState(dict(self.messages), dict(self.converged), self.iteration)


def _directed_edges(graph: InteractionGraph):
    for (g, h) in sorted(graph.edges):
        yield (g, h)
        yield (h, g)


def _edge_table(tables, src, dst) -> np.ndarray:
    """Table oriented so rows index the source's configs."""
    if (src, dst) in tables:
        return tables[(src, dst)]
    return tables[(dst, src)].T


def init_messages(graph: InteractionGraph, sizes: dict, rng: np.random.Generator) -> BeliefState:
    """Uniform-random messages in (0, 1), normalized to unit mass."""
    messages = {}
    for (src, dst) in _directed_edges(graph):
        m = rng.uniform(0.0, 1.0, sizes[dst])
        messages[(src, dst)] = m / m.sum()
    return BeliefState(messages, {n: False for n in graph.nodes})


def bp_round(state: BeliefState, tables: dict, graph: InteractionGraph) -> BeliefState:
    """One synchronous flooding round; converged nodes re-emit frozen messages."""
    new_messages = {}
    for (src, dst) in _directed_edges(graph):
        old = state.messages[(src, dst)]
        if state.converged.get(src, False):
            new_messages[(src, dst)] = old
            continue
        table = _edge_table(tables, src, dst)
        prod = np.ones(table.shape[0])
        for k in graph.neighbors(src):
            if k == dst:
                continue
            prod = prod * state.messages[(k, src)]
        msg = prod @ table
        mass = msg.sum()
        if mass <= 0.0:
            raise DegeneracyError(f"message {src}->{dst} normalized to zero mass")
        new_messages[(src, dst)] = msg / mass
    return BeliefState(new_messages, dict(state.converged), state.iteration + 1)


def node_converged(prev: BeliefState, curr: BeliefState, node, graph: InteractionGraph, tol_factor: float) -> bool:
    """Outgoing-message stability test for one node.

    The node has settled when its largest message change falls below
    ``tol_factor`` times the smallest value carried by its most recent
    outgoing messages (or the messages stopped changing entirely).
    """
    out_edges = [(node, h) for h in graph.neighbors(node)]
    if not out_edges:
        return True
    change = max(float(np.max(np.abs(curr.messages[e] - prev.messages[e]))) for e in out_edges)
    if change == 0.0:
        return True
    floor = min(float(np.min(curr.messages[e])) for e in out_edges)
    return change < tol_factor * floor


def has_converged(prev: BeliefState, curr: BeliefState, graph: InteractionGraph, tol_factor: float = DEFAULT_TOL_FACTOR) -> bool:
    return all(node_converged(prev, curr, n, graph, tol_factor) for n in graph.nodes)


def marginals(state: BeliefState, graph: InteractionGraph, sizes: dict) -> list:
    """Per-node beliefs: normalized products of incoming messages.

    Nodes without neighbors get the uniform distribution (empty product).
    """
    out = []
    for node in graph.nodes:
        nbrs = graph.neighbors(node)
        if not nbrs:
            out.append(np.full(sizes[node], 1.0 / sizes[node]))
            continue
        prod = np.ones(sizes[node])
        for h in nbrs:
            prod = prod * state.messages[(h, node)]
        mass = prod.sum()
        if mass <= 0.0:
            raise DegeneracyError(f"marginal at node {node} normalized to zero mass")
        out.append(prod / mass)
    return out


def entropy_bits(pi: np.ndarray) -> float:
    p = pi[pi > 0]
    return float(-(p * np.log2(p)).sum())


def run_crab(
    graph: InteractionGraph,
    tables: dict,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol_factor: float = DEFAULT_TOL_FACTOR,
    *,
    sizes: dict,
    rng: np.random.Generator,
):
    """Message passing with prune-and-restart until convergence.

    Returns ``(marginals_by_node, diagnostics)`` where diagnostics carry the
    per-attempt iteration counts, the pruned edges, and per-node entropies.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    current = graph
    attempts = []
    pruned = []
    while True:
        state = init_messages(current, sizes, rng)
        converged = False
        for _ in range(max_iters):
            prev = state
            state = bp_round(state, tables, current)
            for node in current.nodes:
                if not state.converged[node] and node_converged(prev, state, node, current, tol_factor):
                    state.converged[node] = True
            if all(state.converged.values()):
                converged = True
                break
        attempts.append({"iterations": state.iteration, "converged": converged})
        if converged:
            pis = marginals(state, current, sizes)
            diagnostics = {
                "attempts": attempts,
                "prunes": len(pruned),
                "pruned_edges": pruned,
                "converged": True,
                "entropy_bits": {int(n): entropy_bits(pi) for n, pi in zip(current.nodes, pis)},
            }
            return pis, diagnostics
        if current.is_forest():
            raise RuntimeError(
                "belief propagation failed to converge on a forest within "
                f"{max_iters} iterations; increase max_iters"
            )
        before = current
        current = prune_once(current)
        removed = set(before.edges) - set(current.edges)
        pruned.extend(sorted(removed))


def sample_config(pi: np.ndarray, candidates, rng: np.random.Generator) -> BeamConfig:
    """Draw one candidate configuration from the categorical belief ``pi``."""
    pi = np.asarray(pi, dtype=float)
    if abs(float(pi.sum()) - 1.0) > 1e-6:
        raise ValueError("belief must sum to 1")
    if len(candidates) != len(pi):
        raise ValueError("belief and candidate list sizes differ")
    cdf = np.cumsum(pi)
    idx = int(np.searchsorted(cdf, rng.random(), side="right"))
    return candidates[min(idx, len(candidates) - 1)]
