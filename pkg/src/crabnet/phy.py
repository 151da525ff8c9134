"""Antenna, beam, channel and rate math for square uniform planar arrays.

All arrays are square with side N (N^2 elements, half-wavelength spacing).
Angles are azimuths in degrees; angles fed to array responses are measured
relative to the array normal, everything else lives in the global frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import bearing, circular_distance, distance, wrap_deg

HPBW_CONSTANT_DEG = 102.0  # main-lobe width of a side-N array is ~102/N degrees


# ---------------------------------------------------------------------------
# Beams


@dataclass(frozen=True)
class Beam:
    """One transmit beam: global direction, half-power width, array side used.

    ``null`` marks the silent placeholder beam; its other fields are ignored.
    """

    direction_deg: float = 0.0
    hpbw_deg: float = 0.0
    side: int = 0
    null: bool = False

    @classmethod
    def aimed(cls, direction_deg: float, hpbw_deg: float) -> "Beam":
        return cls(direction_deg % 360.0, hpbw_deg, elements_for(hpbw_deg))

    @classmethod
    def null_beam(cls) -> "Beam":
        return cls(null=True)

    @property
    def element_count(self) -> int:
        return 0 if self.null else self.side * self.side


NULL_BEAM = Beam.null_beam()


def hpbw_of(n: int) -> float:
    """Half-power beam width (degrees) of a side-``n`` square array."""
    if n < 1:
        raise ValueError("array side must be >= 1")
    return HPBW_CONSTANT_DEG / n


def elements_for(hpbw_deg: float) -> int:
    """Array side needed for a given half-power beam width."""
    if hpbw_deg <= 0:
        raise ValueError("beam width must be positive")
    return max(1, round(HPBW_CONSTANT_DEG / hpbw_deg))


def beams_conflict(a: Beam, b: Beam) -> bool:
    """Whether two beams of one gNB overlap in azimuth (null never conflicts)."""
    if a.null or b.null:
        return False
    return circular_distance(a.direction_deg, b.direction_deg) < (a.hpbw_deg + b.hpbw_deg) / 2.0


# ---------------------------------------------------------------------------
# Array responses


def spatial_signature(n: int, angle_deg: float) -> np.ndarray:
    """Array response of a side-``n`` square array toward ``angle_deg``.

    The response is the length-n vector with entries exp(j*pi*k*sin(angle)),
    k = 0..n-1, tiled n times (one copy per row of the square array), so the
    result has length n^2 and Euclidean norm n.
    """
    if n < 1:
        raise ValueError("array side must be >= 1")
    phase = math.pi * math.sin(math.radians(angle_deg))
    row = np.exp(1j * phase * np.arange(n))
    return np.tile(row, n)


def beamforming_vector(n: int, angle_deg: float) -> np.ndarray:
    """Unit-norm steering weights for a side-``n`` array toward ``angle_deg``."""
    return spatial_signature(n, angle_deg) / n


def signature_inner(n: int, angle_a_deg, angle_b_deg):
    """Closed form for s(n, a)^H s(n, b) without materializing the vectors.

    Vectorized over the angle arguments; used on the hot path of channel
    averaging where building length-n^2 vectors per cluster would dominate.
    """
    delta = np.sin(np.radians(np.asarray(angle_b_deg, dtype=float))) - np.sin(
        np.radians(np.asarray(angle_a_deg, dtype=float))
    )
    x = math.pi * delta
    # geometric series sum_{k<n} e^{jkx}, with the removable singularity at x=0
    num = 1.0 - np.exp(1j * n * x)
    den = 1.0 - np.exp(1j * x)
    small = np.abs(den) < 1e-12
    series = np.where(small, n, np.divide(num, np.where(small, 1.0, den)))
    return n * series


# ---------------------------------------------------------------------------
# Radio profile


@dataclass(frozen=True)
class RadioParams:
    """Carrier/bandwidth/noise constants of the default NR FR2-style profile."""

    carrier_ghz: float = 52.0
    total_bandwidth_hz: float = 400e6
    rb_bandwidth_hz: float = 1.44e6  # 12 subcarriers x 120 kHz
    rb_count: int = 264
    slots_per_frame: int = 10
    noise_density_dbm_hz: float = -174.0
    rx_side: int = 8

    def __post_init__(self):
        if self.rb_bandwidth_hz * self.rb_count > self.total_bandwidth_hz + 1e-6:
            raise ValueError("resource blocks exceed the total bandwidth")
        if not (0.0 < self.slot_fraction <= 1.0):
            raise ValueError("slot fraction must lie in (0, 1]")

    @property
    def slot_fraction(self) -> float:
        return 1.0 / self.slots_per_frame

    @property
    def noise_floor_w(self) -> float:
        """Thermal noise power over one resource block, watts."""
        return 10.0 ** ((self.noise_density_dbm_hz - 30.0) / 10.0) * self.rb_bandwidth_hz


@dataclass(frozen=True)
class CandidateLimits:
    """Knobs bounding candidate-beam generation and coverage geometry."""

    max_configs: int = 64
    widths_deg: tuple = (5.0, 10.0, 15.0)
    direction_quantum_deg: float = 1.0
    range_m: float = 400.0
    gain_window: int = 1000


RADIO_PROFILES = {
    "nr-fr2-52": RadioParams(),
}


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


# ---------------------------------------------------------------------------
# Cluster channel model


@dataclass(frozen=True)
class ChannelDraw:
    """One realization of the clustered channel for a single resource block."""

    cluster_count: int
    gains: np.ndarray  # complex, per cluster
    departure_deg: np.ndarray  # per cluster, relative to the transmit array normal
    arrival_deg: np.ndarray  # per cluster, relative to the receive array normal
    pathloss_db: float
    shadowing_db: float


def pathloss_db(distance_m: float, carrier_ghz: float, los: bool) -> float:
    """Street-canyon urban-micro pathloss, LoS/NLoS variants."""
    d = max(distance_m, 1.0)  # model is not valid below ~1 m; clamp
    slope = 21.0 if los else 31.9
    return 32.4 + slope * math.log10(d) + 20.0 * math.log10(carrier_ghz)


def shadowing_sigma_db(los: bool) -> float:
    return 4.0 if los else 8.2


def cluster_rate(los: bool) -> float:
    """Poisson rate for the extra-cluster count (total clusters = 1 + Poisson)."""
    return 2.0 if los else 3.0


ANGLE_SPREAD_DEG = 10.0


def draw_shadowing(los: bool, rng: np.random.Generator) -> float:
    return float(rng.normal(0.0, shadowing_sigma_db(los)))


def _draw_cluster_geometry(site, zone_center, rx_pointing_deg, los, rng):
    """Cluster count and departure/arrival angles (relative to array normals)."""
    n_clusters = 1 + int(rng.poisson(cluster_rate(los)))
    out_bearing = bearing(site.position, zone_center)
    back_bearing = (out_bearing + 180.0) % 360.0
    dep = wrap_deg(out_bearing - site.array_azimuth_deg) + rng.normal(
        0.0, ANGLE_SPREAD_DEG, n_clusters
    )
    arr = wrap_deg(back_bearing - rx_pointing_deg) + rng.normal(0.0, ANGLE_SPREAD_DEG, n_clusters)
    return n_clusters, dep, arr


def draw_channel(
    site,
    zone,
    beam: Beam,
    rb: int,
    rng: np.random.Generator,
    *,
    los: bool,
    params: RadioParams,
    shadowing_db: float,
    rx_pointing_deg: float | None = None,
) -> ChannelDraw:
    """Draw the clustered channel between ``site`` and ``zone`` for one RB.

    Per-cluster gains are circularly-symmetric complex Gaussian with second
    moment equal to the linear pathloss+shadowing gain, so the assembled
    channel power matches the link budget in expectation.  Deterministic for
    a fixed generator state.  ``rx_pointing_deg`` defaults to the receiver
    facing the transmitter.
    """
    if beam.null:
        raise ValueError("cannot draw a channel for the null beam")
    if rx_pointing_deg is None:
        rx_pointing_deg = round(bearing(zone.center, site.position))
    n_clusters, dep, arr = _draw_cluster_geometry(
        site, zone.center, rx_pointing_deg, los, rng
    )
    pl_db = pathloss_db(distance(site.position, zone.center), params.carrier_ghz, los)
    gain_lin = 10.0 ** (-(pl_db + shadowing_db) / 10.0)
    scale = math.sqrt(gain_lin / 2.0)
    gains = scale * (rng.standard_normal(n_clusters) + 1j * rng.standard_normal(n_clusters))
    return ChannelDraw(
        cluster_count=n_clusters,
        gains=gains,
        departure_deg=dep,
        arrival_deg=arr,
        pathloss_db=pl_db,
        shadowing_db=shadowing_db,
    )


def effective_channel(
    w: np.ndarray, draw: ChannelDraw, v: np.ndarray, n: int, n_rx: int
) -> complex:
    """Scalar channel w^H H v for a clustered channel matrix H.

    H is sqrt(1/L) * sum_l gains[l] * u_l mu_l^H with u_l, mu_l the receive
    and transmit array responses at the cluster angles; the product is
    evaluated cluster by cluster without assembling H.
    """
    if w.shape != (n_rx * n_rx,):
        raise ValueError(f"receive weights must have length {n_rx * n_rx}")
    if v.shape != (n * n,):
        raise ValueError(f"transmit weights must have length {n * n}")
    acc = 0.0 + 0.0j
    for gain, dep, arr in zip(draw.gains, draw.departure_deg, draw.arrival_deg):
        u = spatial_signature(n_rx, arr)
        mu = spatial_signature(n, dep)
        acc += gain * np.vdot(w, u) * np.vdot(mu, v)
    return complex(acc / math.sqrt(draw.cluster_count))


# ---------------------------------------------------------------------------
# Rates


def rate_rb(signal_w: float, interference_w: float, params: RadioParams) -> float:
    """Achievable bits of one resource block in one slot fraction."""
    if signal_w < 0 or interference_w < 0:
        raise ValueError("powers must be nonnegative")
    sinr = signal_w / (params.noise_floor_w + interference_w)
    return params.rb_bandwidth_hz * params.slot_fraction * math.log2(1.0 + sinr)


def covers(site, beam: Beam, zone, *, range_m: float = 400.0) -> bool:
    """Whether ``beam`` of ``site`` reaches ``zone`` (boundary inclusive)."""
    if beam.null:
        return False
    if distance(site.position, zone.center) > range_m:
        return False
    off = circular_distance(bearing(site.position, zone.center), beam.direction_deg)
    return off <= beam.hpbw_deg / 2.0


def received_power_w(tx_power_w: float, gain: float, params: RadioParams) -> float:
    """Per-RB received power for a beam with an even power split over RBs."""
    return tx_power_w / params.rb_count * gain


@dataclass
class LinkBudget:
    """Serving/interfering per-RB powers for one zone under one network config."""

    zone_id: int
    serving: tuple | None  # (gnb_id, beam_index)
    signal_w: float  # per-RB serving power, 0 when unserved
    interference_w: float  # per-RB sum over the other covering beams


def zone_link_budget(zone_id, entries, params: RadioParams) -> LinkBudget:
    """Pick the strongest covering beam as serving, the rest interfere.

    ``entries`` is an iterable of (gnb_id, beam_index, tx_power_w, gain) for
    every covering beam; ties go to the lowest (gnb_id, beam_index).
    """
    best = None
    best_key = None
    total = 0.0
    for gnb_id, beam_idx, tx_w, gain in entries:
        p = received_power_w(tx_w, gain, params)
        total += p
        key = (-p, gnb_id, beam_idx)
        if best_key is None or key < best_key:
            best_key = key
            best = (gnb_id, beam_idx, p)
    if best is None:
        return LinkBudget(zone_id, None, 0.0, 0.0)
    gnb_id, beam_idx, p = best
    return LinkBudget(zone_id, (gnb_id, beam_idx), p, total - p)


def instantaneous_link_gains(
    site,
    zone,
    beam: Beam,
    rng: np.random.Generator,
    *,
    los: bool,
    params: RadioParams,
    shadowing_db: float,
    rx_pointing_deg: float,
) -> np.ndarray:
    """Per-RB scalar channels h~ for one link in one slot.

    One cluster geometry is drawn for the link; per-cluster gains are
    independent across resource blocks (the channel is flat within an RB).
    Returns a complex array of length ``params.rb_count``.
    """
    n_clusters, dep, arr = _draw_cluster_geometry(
        site, zone.center, rx_pointing_deg, los, rng
    )
    pl_db = pathloss_db(distance(site.position, zone.center), params.carrier_ghz, los)
    scale = math.sqrt(10.0 ** (-(pl_db + shadowing_db) / 10.0) / 2.0)
    shape = (n_clusters, params.rb_count)
    gains = scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    rx = signature_inner(params.rx_side, 0.0, arr) / params.rx_side
    tx = signature_inner(beam.side, wrap_deg(beam.direction_deg - site.array_azimuth_deg), dep) / beam.side
    weights = (np.conj(tx) * rx) / math.sqrt(n_clusters)
    return weights @ gains


# ---------------------------------------------------------------------------
# Averaged link statistics

_TAG_SHADOW, _TAG_AVG, _TAG_INST, _TAG_BP, _TAG_ENACT = 1, 2, 3, 4, 5


def derived_rng(seed: int, tag: int, *key) -> np.random.Generator:
    """Independent generator for a (seed, tag, key...) coordinate.

    Keys are hashed into the seed sequence, so draws cannot be reordered by
    parallel or out-of-order evaluation.
    """
    return np.random.default_rng([int(seed), int(tag)] + [int(k) for k in key])


class AverageGainCache:
    """Window-averaged |h~|^2 per (gNB, beam, zone) for one decision period.

    Channel realizations are drawn once per (gNB, zone) pair and reused for
    every beam, which is statistically equivalent and far cheaper than
    redrawing per beam.  Shadowing is drawn once per (gNB, zone) pair and
    shared with the instantaneous draws of the same period.
    """

    def __init__(self, scenario, seed: int, period: int, window: int | None = None):
        self.scenario = scenario
        self.params = scenario.radio
        self.seed = int(seed)
        self.period = int(period)
        self.window = int(window if window is not None else scenario.limits.gain_window)
        self._shadow = {}
        self._real = {}
        self._gain = {}

    def shadowing_db(self, site, zone_id: int) -> float:
        key = (site.id, zone_id)
        if key not in self._shadow:
            zone = self.scenario.area.zone(zone_id)
            los = self.scenario.losmap.segment_clear(site.position, zone.center)
            rng = derived_rng(self.seed, _TAG_SHADOW, self.period, site.id, zone_id)
            self._shadow[key] = (draw_shadowing(los, rng), los)
        return self._shadow[key][0]

    def link_los(self, site, zone_id: int) -> bool:
        self.shadowing_db(site, zone_id)
        return self._shadow[(site.id, zone_id)][1]

    def _realization(self, site, zone_id: int):
        key = (site.id, zone_id)
        if key in self._real:
            return self._real[key]
        zone = self.scenario.area.zone(zone_id)
        shadow_db = self.shadowing_db(site, zone_id)
        los = self.link_los(site, zone_id)
        rng = derived_rng(self.seed, _TAG_AVG, self.period, site.id, zone_id)

        counts = 1 + rng.poisson(cluster_rate(los), self.window)
        total = int(counts.sum())
        dep_off = rng.normal(0.0, ANGLE_SPREAD_DEG, total)
        arr_off = rng.normal(0.0, ANGLE_SPREAD_DEG, total)
        pl_db = pathloss_db(distance(site.position, zone.center), self.params.carrier_ghz, los)
        scale = math.sqrt(10.0 ** (-(pl_db + shadow_db) / 10.0) / 2.0)
        gains = scale * (rng.standard_normal(total) + 1j * rng.standard_normal(total))

        out_bearing = bearing(site.position, zone.center)
        back_bearing = (out_bearing + 180.0) % 360.0
        rx_pointing = float(round(back_bearing))
        dep_rel = wrap_deg(out_bearing - site.array_azimuth_deg) + dep_off
        arr_rel = wrap_deg(back_bearing - rx_pointing) + arr_off

        rx_factor = signature_inner(self.params.rx_side, 0.0, arr_rel) / self.params.rx_side
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        rec = {
            "dep_rel": dep_rel,
            "weighted": gains * rx_factor,
            "starts": starts,
            "inv_sqrt": 1.0 / np.sqrt(counts),
        }
        self._real[key] = rec
        return rec

    def gain(self, site, beam: Beam, zone_id: int) -> float | None:
        """Averaged |h~|^2 for a covering beam; None when the beam misses."""
        zone = self.scenario.area.zone(zone_id)
        if not covers(site, beam, zone, range_m=self.scenario.limits.range_m):
            return None
        key = (site.id, beam.direction_deg, beam.hpbw_deg, zone_id)
        if key not in self._gain:
            rec = self._realization(site, zone_id)
            tx = (
                signature_inner(
                    beam.side,
                    wrap_deg(beam.direction_deg - site.array_azimuth_deg),
                    rec["dep_rel"],
                )
                / beam.side
            )
            per_cluster = rec["weighted"] * np.conj(tx)
            per_draw = np.add.reduceat(per_cluster, rec["starts"]) * rec["inv_sqrt"]
            self._gain[key] = float(np.mean(np.abs(per_draw) ** 2))
        return self._gain[key]

    def gain_fn(self, site):
        """Bind the lookup to one site, e.g. for candidate ranking."""
        return lambda beam, zone_id: self.gain(site, beam, zone_id)


def network_rate(config, gain_lookup, occupied, params: RadioParams, *, rb_sets=None) -> float:
    """Total rate of a network configuration over the occupied zones.

    ``config`` is a NetworkConfig (configspace); ``gain_lookup(site, beam, zone_id)``
    returns the averaged |h|^2 for covering beams and None otherwise.
    ``rb_sets`` optionally maps zone id -> RB count; all RBs by default.
    """
    total = 0.0
    for zone_id in sorted(occupied):
        entries = []
        for cfg in config.configs:
            site = cfg.site
            if not cfg.beams:
                continue
            split = cfg.power_per_beam_w
            for beam_idx, beam in enumerate(cfg.beams):
                gain = gain_lookup(site, beam, zone_id)
                if gain is None:
                    continue
                entries.append((site.id, beam_idx, split[beam_idx], gain))
        budget = zone_link_budget(zone_id, entries, params)
        if budget.serving is None:
            continue
        n_rb = params.rb_count if rb_sets is None else rb_sets.get(zone_id, 0)
        total += n_rb * rate_rb(budget.signal_w, budget.interference_w, params)
    return total
