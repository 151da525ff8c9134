"""Brute-force references: centralized optimum and exact pairwise marginals.

Test-grade code by design.  Both operations materialize the full product
space and refuse instances above a size cap, so an accidentally exponential
test fails loudly instead of hanging CI.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .crab import DegeneracyError

DEFAULT_CAP = 10**6


def _space_size(candidate_sets) -> int:
    return math.prod(len(c) for c in candidate_sets)


def exhaustive_best(candidate_sets, rate_fn, cap: int = DEFAULT_CAP):
    """Exact argmax of ``rate_fn`` over the product of the candidate sets.

    ``rate_fn`` receives one tuple holding a choice per set.  Ties resolve
    to the lexicographically smallest index tuple.  Returns (choice, value).
    """
    size = _space_size(candidate_sets)
    if size > cap:
        raise ValueError(f"product space has {size} points, above the cap of {cap}")
    best_combo = None
    best_value = -math.inf
    for combo in itertools.product(*candidate_sets):
        value = rate_fn(combo)
        if value > best_value:
            best_value = value
            best_combo = combo
    return best_combo, best_value


def exact_marginals(graph, tables, sizes: dict, cap: int = DEFAULT_CAP) -> list:
    """Marginals of the distribution proportional to the product of edge tables.

    The joint tensor over all nodes is materialized by broadcasting each edge
    table onto its pair of axes, normalized, and summed down to one marginal
    per node (in ``graph.nodes`` order).
    """
    nodes = list(graph.nodes)
    shape = tuple(sizes[n] for n in nodes)
    if math.prod(shape) > cap:
        raise ValueError(f"joint space has {math.prod(shape)} points, above the cap of {cap}")
    axis = {n: i for i, n in enumerate(nodes)}
    joint = np.ones(shape)
    for (g, h), table in tables.items():
        if (g, h) not in graph.edges:
            continue
        dims = [1] * len(nodes)
        dims[axis[g]] = sizes[g]
        dims[axis[h]] = sizes[h]
        joint = joint * np.asarray(table).reshape(dims)
    z = joint.sum()
    if z <= 0.0:
        raise DegeneracyError("partition function is zero; joint distribution is degenerate")
    out = []
    for n in nodes:
        other_axes = tuple(i for i in range(len(nodes)) if i != axis[n])
        out.append(joint.sum(axis=other_axes) / z)
    return out
