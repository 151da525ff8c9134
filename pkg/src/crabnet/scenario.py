"""World model: zone grid, gNB sites, vehicle trace, line-of-sight geometry.

A scenario is immutable after loading and safe to share across workers.
Config files are TOML with [area], [[gnbs]], [trace], optional [blockage],
[radio], [limits] and [cqi] sections; the trace is a CSV with columns
t_s, vehicle_id, x_m, y_m (header required).
"""

from __future__ import annotations

import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from shapely.geometry import LineString, Polygon

from .geometry import bearing, distance  # re-exported: bearing is part of this module's surface
from .phy import RADIO_PROFILES, CandidateLimits, RadioParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "Zone",
    "GnbSite",
    "VehicleSample",
    "LosMap",
    "ServiceArea",
    "Scenario",
    "ScenarioError",
    "load_scenario",
    "occupancy",
    "bearing",
    "is_los",
]


class ScenarioError(ValueError):
    """Raised for malformed or inconsistent scenario configuration."""


@dataclass(frozen=True)
class Zone:
    id: int
    center: tuple
    row: int
    col: int


@dataclass(frozen=True)
class GnbSite:
    id: int
    position: tuple
    array_azimuth_deg: float
    tx_power_dbm: float
    upa_side: int
    max_beams: int
    rf_chains: int

    def __post_init__(self):
        if self.upa_side < 1:
            raise ScenarioError(f"gnb {self.id}: upa side must be >= 1")
        if self.max_beams > self.rf_chains:
            raise ScenarioError(f"gnb {self.id}: max beams exceeds RF chains")
        if not (0.0 <= self.array_azimuth_deg < 360.0):
            raise ScenarioError(f"gnb {self.id}: array azimuth must lie in [0, 360)")


@dataclass(frozen=True)
class VehicleSample:
    time_s: float
    vehicle_id: int
    position: tuple


@dataclass(frozen=True)
class LosMap:
    """Blockage polygons and/or a precomputed pairwise visibility table.

    The table maps frozensets of entity keys (e.g. ("gnb", 3)) to booleans;
    pairs missing from the table fall back to the polygon test.
    """

    polygons: tuple = ()
    table: dict | None = None

    def lookup(self, key_a, key_b):
        if self.table is None:
            return None
        if key_a == key_b:
            return True
        return self.table.get(frozenset((key_a, key_b)))

    def segment_clear(self, a, b) -> bool:
        """True unless the open segment a-b passes through a polygon interior."""
        if not self.polygons:
            return True
        seg = LineString([tuple(a), tuple(b)])
        # boundary grazing does not block: require interior/interior overlap
        return not any(seg.relate_pattern(poly, "T********") for poly in self.polygons)


@dataclass(frozen=True)
class ServiceArea:
    """Axis-aligned service area tiled exactly by square zones.

    Positions map to zones by half-open cells [x, x+side) x [y, y+side);
    points on the far edges (or outside) belong to no zone.
    """

    origin: tuple
    width_m: float
    height_m: float
    zone_side_m: float = 10.0

    def __post_init__(self):
        for name, extent in (("width_m", self.width_m), ("height_m", self.height_m)):
            n = extent / self.zone_side_m
            if abs(n - round(n)) > 1e-9 or extent <= 0:
                raise ScenarioError(
                    f"area.{name}={extent} is not a positive multiple of "
                    f"zone_side_m={self.zone_side_m}; zones would not tile the area"
                )

    @property
    def n_cols(self) -> int:
        return round(self.width_m / self.zone_side_m)

    @property
    def n_rows(self) -> int:
        return round(self.height_m / self.zone_side_m)

    @property
    def zone_count(self) -> int:
        return self.n_cols * self.n_rows

    def zone_at(self, position) -> int | None:
        col = math.floor((position[0] - self.origin[0]) / self.zone_side_m)
        row = math.floor((position[1] - self.origin[1]) / self.zone_side_m)
        if 0 <= col < self.n_cols and 0 <= row < self.n_rows:
            return row * self.n_cols + col
        return None

    def zone(self, zone_id: int) -> Zone:
        if not (0 <= zone_id < self.zone_count):
            raise ScenarioError(f"zone id {zone_id} out of range")
        row, col = divmod(zone_id, self.n_cols)
        cx = self.origin[0] + (col + 0.5) * self.zone_side_m
        cy = self.origin[1] + (row + 0.5) * self.zone_side_m
        return Zone(zone_id, (cx, cy), row, col)


class VehicleTrace:
    """Per-vehicle time-sorted position samples with linear interpolation."""

    def __init__(self, samples):
        by_vehicle: dict[int, list] = {}
        for s in samples:
            by_vehicle.setdefault(s.vehicle_id, []).append(s)
        self._tracks = {}
        for vid, rows in sorted(by_vehicle.items()):
            times = np.array([r.time_s for r in rows], dtype=float)
            if np.any(np.diff(times) <= 0):
                raise ScenarioError(f"vehicle {vid}: sample times must strictly increase")
            xs = np.array([r.position[0] for r in rows], dtype=float)
            ys = np.array([r.position[1] for r in rows], dtype=float)
            self._tracks[vid] = (times, xs, ys)

    @property
    def empty(self) -> bool:
        return not self._tracks

    @property
    def span(self) -> tuple | None:
        if self.empty:
            return None
        lo = min(t[0] for t, _, _ in self._tracks.values())
        hi = max(t[-1] for t, _, _ in self._tracks.values())
        return (lo, hi)

    @property
    def vehicle_ids(self) -> tuple:
        return tuple(self._tracks)

    def vehicles_in_window(self, t0: float, t1: float) -> tuple:
        out = []
        for vid, (times, _, _) in self._tracks.items():
            if times[0] <= t1 and times[-1] >= t0:
                out.append(vid)
        return tuple(out)

    def positions_at(self, t: float) -> dict:
        """Interpolated positions of vehicles whose own span covers ``t``."""
        out = {}
        for vid, (times, xs, ys) in self._tracks.items():
            if times[0] <= t <= times[-1]:
                out[vid] = (float(np.interp(t, times, xs)), float(np.interp(t, times, ys)))
        return out


@dataclass(frozen=True)
class Scenario:
    area: ServiceArea
    sites: tuple
    trace: VehicleTrace
    losmap: LosMap = field(default_factory=LosMap)
    radio: RadioParams = field(default_factory=RadioParams)
    limits: CandidateLimits = field(default_factory=CandidateLimits)
    cqi_table: tuple | None = None

    def site(self, gnb_id: int) -> GnbSite:
        for s in self.sites:
            if s.id == gnb_id:
                return s
        raise ScenarioError(f"unknown gNB id {gnb_id}")

    def trace_covers(self, t: float) -> bool:
        span = self.trace.span
        return span is not None and span[0] <= t <= span[1]


def occupancy(scenario: Scenario, t: float) -> frozenset:
    """Ids of zones holding at least one vehicle at time ``t``."""
    if scenario.trace.empty:
        return frozenset()
    lo, hi = scenario.trace.span
    if not (lo <= t <= hi):
        raise ScenarioError(f"t={t} outside the trace span [{lo}, {hi}]")
    zones = set()
    for pos in scenario.trace.positions_at(t).values():
        zid = scenario.area.zone_at(pos)
        if zid is not None:
            zones.add(zid)
    return frozenset(zones)


def is_los(scenario: Scenario, a, b) -> bool:
    """Line-of-sight between two positions (polygon-edge grazing is clear)."""
    return scenario.losmap.segment_clear(a, b)


# ---------------------------------------------------------------------------
# Loading


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ScenarioError(f"missing '{key}' in [{where}]")
    return table[key]


def _load_trace_csv(path: Path) -> VehicleTrace:
    expected = ["t_s", "vehicle_id", "x_m", "y_m"]
    samples = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ScenarioError(f"{path}: trace CSV is empty (header row required)")
        if [h.strip() for h in header] != expected:
            raise ScenarioError(f"{path}: trace header must be {','.join(expected)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t, vid, x, y = float(row[0]), int(row[1]), float(row[2]), float(row[3])
            except (ValueError, IndexError) as exc:
                raise ScenarioError(f"{path}:{lineno}: bad trace row: {exc}") from None
            samples.append(VehicleSample(t, vid, (x, y)))
    return VehicleTrace(samples)


def load_scenario(config_path) -> Scenario:
    """Load and fully resolve a scenario config file and its trace."""
    config_path = Path(config_path)
    try:
        with open(config_path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {config_path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{config_path}: {exc}") from None

    area_t = _require(doc, "area", "top level")
    area = ServiceArea(
        origin=tuple(area_t.get("origin", (0.0, 0.0))),
        width_m=float(_require(area_t, "width_m", "area")),
        height_m=float(_require(area_t, "height_m", "area")),
        zone_side_m=float(area_t.get("zone_side_m", 10.0)),
    )

    sites = []
    seen = set()
    for i, g in enumerate(doc.get("gnbs", [])):
        try:
            site = GnbSite(
                id=int(_require(g, "id", f"gnbs[{i}]")),
                position=(float(g["x"]), float(g["y"])),
                array_azimuth_deg=float(g.get("psi_deg", 0.0)),
                tx_power_dbm=float(g.get("p_dbm", 33.0)),
                upa_side=int(g.get("nt", 64)),
                max_beams=int(g.get("b_max", 4)),
                rf_chains=int(g.get("rf_chains", 4)),
            )
        except KeyError as exc:
            raise ScenarioError(f"gnbs[{i}]: missing field {exc}") from None
        if site.id in seen:
            raise ScenarioError(f"duplicate gNB id {site.id}")
        seen.add(site.id)
        sites.append(site)
    sites.sort(key=lambda s: s.id)

    trace_t = doc.get("trace", {})
    if "path" in trace_t:
        trace_path = Path(trace_t["path"])
        if not trace_path.is_absolute():
            trace_path = config_path.parent / trace_path
        trace = _load_trace_csv(trace_path)
    else:
        trace = VehicleTrace([])

    polygons = []
    for j, verts in enumerate(doc.get("blockage", {}).get("polygons", [])):
        if len(verts) < 3:
            raise ScenarioError(f"blockage.polygons[{j}]: need at least 3 vertices")
        polygons.append(Polygon([tuple(v) for v in verts]))
    losmap = LosMap(polygons=tuple(polygons))

    radio_t = doc.get("radio", {})
    profile = radio_t.get("profile", "nr-fr2-52")
    if profile not in RADIO_PROFILES:
        raise ScenarioError(f"unknown radio profile '{profile}'")
    base = RADIO_PROFILES[profile]
    radio = RadioParams(
        carrier_ghz=float(radio_t.get("carrier_ghz", base.carrier_ghz)),
        total_bandwidth_hz=float(radio_t.get("total_bandwidth_hz", base.total_bandwidth_hz)),
        rb_bandwidth_hz=float(radio_t.get("rb_bandwidth_hz", base.rb_bandwidth_hz)),
        rb_count=int(radio_t.get("rb_count", base.rb_count)),
        slots_per_frame=int(radio_t.get("slots_per_frame", base.slots_per_frame)),
        noise_density_dbm_hz=float(
            radio_t.get("noise_density_dbm_hz", base.noise_density_dbm_hz)
        ),
        rx_side=int(radio_t.get("rx_side", base.rx_side)),
    )

    limits_t = doc.get("limits", {})
    limits = CandidateLimits(
        max_configs=int(limits_t.get("max_configs", 64)),
        widths_deg=tuple(float(w) for w in limits_t.get("widths_deg", (5.0, 10.0, 15.0))),
        direction_quantum_deg=float(limits_t.get("direction_quantum_deg", 1.0)),
        range_m=float(limits_t.get("range_m", 400.0)),
        gain_window=int(limits_t.get("gain_window", 1000)),
    )
    if limits.max_configs < 1:
        raise ScenarioError("limits.max_configs must be >= 1")

    cqi_table = None
    if "cqi" in doc:
        ses = doc["cqi"].get("spectral_efficiencies")
        if ses is not None:
            if len(ses) != 15:
                raise ScenarioError("cqi.spectral_efficiencies must list 15 values")
            cqi_table = tuple(float(x) for x in ses)

    return Scenario(
        area=area,
        sites=tuple(sites),
        trace=trace,
        losmap=losmap,
        radio=radio,
        limits=limits,
        cqi_table=cqi_table,
    )
