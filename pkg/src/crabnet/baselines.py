"""Baseline beam-selection strategies: density clustering and a UCB bandit."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.cluster import DBSCAN

from .configspace import BeamConfig, is_feasible
from .geometry import bearing
from .phy import Beam, rate_rb, received_power_w

DBSCAN_EPS_M = 15.0
DBSCAN_MIN_PTS = 2
DBSCAN_BEAM_WIDTH_DEG = 10.0
UCB_ITERATION_CAP = 10_000


# ---------------------------------------------------------------------------
# Clustering baseline


def dbscan_config(
    site,
    vehicle_positions,
    eps: float = DBSCAN_EPS_M,
    min_pts: int = DBSCAN_MIN_PTS,
    *,
    beam_width_deg: float = DBSCAN_BEAM_WIDTH_DEG,
    direction_quantum_deg: float = 1.0,
) -> BeamConfig:
    """Fixed-width beams at the largest vehicle clusters near one gNB.

    Clusters come from density clustering over the raw vehicle positions
    (noise points ignored); one beam per cluster, aimed at the centroid
    bearing, placed in decreasing cluster-size order and dropped when it
    would overlap an already-placed beam or break the antenna budget.
    """
    positions = np.asarray(list(vehicle_positions), dtype=float).reshape(-1, 2)
    if len(positions) == 0:
        return BeamConfig(site, ())
    labels = DBSCAN(eps=eps, min_samples=min_pts).fit_predict(positions)
    clusters = []
    for label in sorted(set(labels)):
        if label < 0:
            continue
        members = positions[labels == label]
        clusters.append((len(members), label, members.mean(axis=0)))
    clusters.sort(key=lambda c: (-c[0], c[1]))

    placed = []
    for _, _, centroid in clusters:
        if len(placed) >= site.max_beams:
            break
        if tuple(centroid) == tuple(site.position):
            continue
        direction = (
            round(bearing(site.position, centroid) / direction_quantum_deg)
            * direction_quantum_deg
        ) % 360.0
        beam = Beam.aimed(direction, beam_width_deg)
        if is_feasible(BeamConfig(site, tuple(placed) + (beam,)), site):
            placed.append(beam)
    return BeamConfig(site, tuple(placed))


# ---------------------------------------------------------------------------
# UCB bandit baseline


@dataclass
class ArmStats:
    """Pull counts and running mean rewards over a fixed candidate list."""

    counts: np.ndarray
    means: np.ndarray
    fingerprint: tuple = ()

    @classmethod
    def fresh(cls, n_arms: int, fingerprint=()) -> "ArmStats":
        return cls(np.zeros(n_arms, dtype=int), np.zeros(n_arms), fingerprint)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def ucb_select(stats: ArmStats, c: float) -> int:
    """Lowest-index unpulled arm first, then the max upper-confidence index."""
    unpulled = np.flatnonzero(stats.counts == 0)
    if len(unpulled):
        return int(unpulled[0])
    bonus = c * np.sqrt(np.log(stats.total) / stats.counts)
    return int(np.argmax(stats.means + bonus))


def ucb_update(stats: ArmStats, arm: int, reward: float) -> None:
    stats.counts[arm] += 1
    stats.means[arm] += (reward - stats.means[arm]) / stats.counts[arm]


def run_ucb(stats: ArmStats, reward_fn, iterations: int, c: float = np.sqrt(2.0)) -> list:
    """Select/observe/update loop, hard-capped at UCB_ITERATION_CAP pulls."""
    pulls = []
    for _ in range(min(iterations, UCB_ITERATION_CAP)):
        arm = ucb_select(stats, c)
        ucb_update(stats, arm, reward_fn(arm))
        pulls.append(arm)
    return pulls


def ucb_reward(site, cfg: BeamConfig, other_configs, link_stats, occupied) -> float:
    """Rate delivered by one gNB's config while the others keep theirs.

    Sums, over the occupied zones this config covers, the all-RB rate with
    interference from every covering beam of the other gNBs' live configs.
    """
    params = link_stats.params
    total = 0.0
    split = cfg.power_per_beam_w
    for zone_id in sorted(occupied):
        signal = 0.0
        for bi, beam in enumerate(cfg.beams):
            gain = link_stats.gain(site, beam, zone_id)
            if gain is not None:
                signal = max(signal, received_power_w(split[bi], gain, params))
        if signal == 0.0:
            continue
        interference = 0.0
        for other in other_configs:
            if other.gnb_id == site.id:
                continue
            other_split = other.power_per_beam_w
            for bi, beam in enumerate(other.beams):
                gain = link_stats.gain(other.site, beam, zone_id)
                if gain is not None:
                    interference += received_power_w(other_split[bi], gain, params)
        total += params.rb_count * rate_rb(signal, interference, params)
    return total
