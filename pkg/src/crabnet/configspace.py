"""Feasible per-gNB beam configurations and demand-driven candidate generation.

A configuration is feasible when its beams fit the antenna budget (sum of
per-beam element counts within the UPA size) and no two beams overlap in
azimuth.  Candidate generation is demand driven: beam directions come from
the bearings of occupied zones in range, so the candidate set stays small
enough for pairwise compatibility tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import bearing, distance
from .phy import (
    Beam,
    CandidateLimits,
    beams_conflict,
    covers,
    dbm_to_watts,
    pathloss_db,
    rate_rb,
    received_power_w,
)


@dataclass(frozen=True)
class BeamConfig:
    """Beams simultaneously active at one gNB; empty means silent."""

    site: object  # GnbSite
    beams: tuple = ()

    @property
    def gnb_id(self) -> int:
        return self.site.id

    @property
    def is_null(self) -> bool:
        return len(self.beams) == 0

    @property
    def key(self):
        """Hashable fingerprint used for change detection and arm identity."""
        return (self.site.id, tuple((b.direction_deg, b.hpbw_deg) for b in self.beams))

    @property
    def power_per_beam_w(self) -> tuple:
        return power_split(self, self.site.tx_power_dbm)


@dataclass(frozen=True)
class NetworkConfig:
    """One BeamConfig per gNB, ordered by gNB id."""

    configs: tuple

    def __post_init__(self):
        ids = [c.gnb_id for c in self.configs]
        if ids != sorted(ids):
            raise ValueError("configs must be ordered by gNB id")


def power_split(cfg: BeamConfig, p_dbm: float) -> tuple:
    """Equal linear split of the transmit power over the active beams."""
    active = [b for b in cfg.beams if not b.null]
    if not active:
        return ()
    share = dbm_to_watts(p_dbm) / len(active)
    return tuple(share for _ in cfg.beams)


def is_feasible(cfg: BeamConfig, site) -> bool:
    """Antenna budget, pairwise non-overlap, and beam-count check."""
    active = [b for b in cfg.beams if not b.null]
    if len(cfg.beams) > site.max_beams:
        return False
    if sum(b.element_count for b in active) > site.upa_side**2:
        return False
    for i in range(len(active)):
        for j in range(i + 1, len(active)):
            if beams_conflict(active[i], active[j]):
                return False
    return True


def _quantize(angle_deg: float, quantum: float) -> float:
    return (round(angle_deg / quantum) * quantum) % 360.0


def candidate_beams(site, occupied, scenario, limits: CandidateLimits) -> list:
    """Deduplicated beams aimed at the occupied-zone bearings within range."""
    directions = set()
    for zone_id in occupied:
        zone = scenario.area.zone(zone_id)
        if distance(site.position, zone.center) > limits.range_m:
            continue
        directions.add(_quantize(bearing(site.position, zone.center), limits.direction_quantum_deg))
    return [
        Beam.aimed(d, w) for d in sorted(directions) for w in sorted(limits.widths_deg)
    ]


def _geometric_gain(site, beam, zone, carrier_ghz) -> float:
    # ranking fallback when no averaged channel statistics are supplied
    return 10.0 ** (-pathloss_db(distance(site.position, zone.center), carrier_ghz, True) / 10.0)


def _config_rate_proxy(site, beams, covered_by_beam, gains, radio) -> float:
    """Interference-free rate of a config, used only to rank candidates."""
    if not beams:
        return 0.0
    share = dbm_to_watts(site.tx_power_dbm) / len(beams)
    total = 0.0
    for beam in beams:
        for zone_id in covered_by_beam[beam]:
            total += radio.rb_count * rate_rb(
                received_power_w(share, gains[(beam, zone_id)], radio), 0.0, radio
            )
    return total


def enumerate_candidates(
    site, occupied, scenario, limits: CandidateLimits | None = None, gain_fn=None
) -> list:
    """Feasible candidate configurations for one gNB given current occupancy.

    Beams aim at occupied-zone bearings (quantized); single-beam configs are
    ranked by an interference-free rate proxy and multi-beam configs are
    grown greedily from the best singles.  The returned list is sorted best
    first with the silent config last, truncated to ``limits.max_configs``
    (the silent config is dropped only when the cap leaves no room for it).

    ``gain_fn(beam, zone_id)`` supplies averaged channel gains for ranking;
    a deterministic pathloss-only proxy is used when omitted.
    """
    if limits is None:
        limits = scenario.limits
    radio = scenario.radio
    null_cfg = BeamConfig(site, ())
    beams = candidate_beams(site, occupied, scenario, limits)
    if not beams:
        return [null_cfg]

    covered_by_beam = {}
    gains = {}
    occupied_sorted = sorted(occupied)
    for beam in beams:
        cov = []
        for zone_id in occupied_sorted:
            zone = scenario.area.zone(zone_id)
            if covers(site, beam, zone, range_m=limits.range_m):
                g = (
                    gain_fn(beam, zone_id)
                    if gain_fn is not None
                    else _geometric_gain(site, beam, zone, radio.carrier_ghz)
                )
                if g is not None:
                    cov.append(zone_id)
                    gains[(beam, zone_id)] = g
        covered_by_beam[beam] = cov

    def proxy(beams_tuple):
        return _config_rate_proxy(site, beams_tuple, covered_by_beam, gains, radio)

    def beam_sort_key(beam):
        return (-proxy((beam,)), beam.direction_deg, beam.hpbw_deg)

    ranked_beams = sorted(beams, key=beam_sort_key)

    def canonical(beams_iter):
        return tuple(sorted(beams_iter, key=lambda b: (b.direction_deg, b.hpbw_deg)))

    configs = {canonical((beam,)): None for beam in ranked_beams}
    seeds = ranked_beams[: min(8, len(ranked_beams))]
    for seed in seeds:
        chain = [seed]
        for beam in ranked_beams:
            if beam in chain or len(chain) >= site.max_beams:
                continue
            trial = BeamConfig(site, tuple(chain) + (beam,))
            if is_feasible(trial, site):
                chain.append(beam)
                configs.setdefault(canonical(chain), None)

    ranked = sorted(
        (BeamConfig(site, bt) for bt in configs),
        key=lambda c: (-proxy(c.beams), c.key),
    )
    ranked = [c for c in ranked if is_feasible(c, site)]

    # configs whose beams reach the same occupied zones are interchangeable;
    # keep only the best-ranked representative of each coverage footprint
    seen = set()
    distinct = []
    for cfg in ranked:
        footprint = frozenset(z for b in cfg.beams for z in covered_by_beam[b])
        if footprint not in seen:
            seen.add(footprint)
            distinct.append(cfg)

    if limits.max_configs == 1:
        return [distinct[0]] if distinct else [null_cfg]
    head = distinct[: limits.max_configs - 1]
    return head + [null_cfg]
