"""Time-stepped downlink evaluation: association, scheduling, link adaptation.

Every decision period the active policy picks per-slot beam configurations
for each gNB; every slot the harness associates occupied zones to their
strongest beam, runs proportional-fair resource allocation, maps per-RB SINR
through the CQI table, and accumulates delivered bits net of beam-reselection
and handover overheads.
"""

from __future__ import annotations

import bisect
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import baselines, crab
from .configspace import BeamConfig, enumerate_candidates
from .geometry import bearing
from .graph import build_graph, coverage_sets
from .phy import (
    _TAG_BP,
    _TAG_ENACT,
    _TAG_INST,
    AverageGainCache,
    derived_rng,
    instantaneous_link_gains,
    received_power_w,
)
from .scenario import Scenario, occupancy

logger = logging.getLogger("crabnet.simulate")

# 4-bit CQI table: spectral efficiency (bits/s/Hz) for CQI 1..15; CQI 0 is outage.
DEFAULT_CQI_SE = (
    0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141,
    2.4063, 2.7305, 3.3223, 3.9023, 4.5234, 5.1152, 5.5547,
)

PF_EWMA_FACTOR = 0.1
ALGORITHMS = ("crab", "dbscan", "ucb", "random")

EVENT_COLUMNS = ("t", "gnb", "config_id", "zone", "rb_count", "sinr_db", "bits")


def sinr_to_cqi(sinr: float, table=DEFAULT_CQI_SE) -> int:
    """Largest CQI whose spectral efficiency fits under log2(1+sinr)."""
    if sinr < 0:
        raise ValueError("sinr must be nonnegative")
    return bisect.bisect_right(table, math.log2(1.0 + sinr))


def cqi_to_se(cqi: int, table=DEFAULT_CQI_SE) -> float:
    if not (0 <= cqi <= len(table)):
        raise ValueError(f"cqi must lie in 0..{len(table)}")
    return 0.0 if cqi == 0 else table[cqi - 1]


def _se_per_rb(sinr: np.ndarray, table) -> np.ndarray:
    idx = np.searchsorted(table, np.log2(1.0 + sinr), side="right")
    padded = np.concatenate(([0.0], table))
    return padded[idx]


@dataclass(frozen=True)
class SimConfig:
    duration_s: float = 10.0
    decision_period_s: float = 1.0
    slot_s: float = 0.1
    channel_tick_s: float = 0.001
    seed: int = 0
    algorithm: str = "crab"
    beam_reselect_s: float = 0.023
    handover_s: float = 0.043
    criterion: str = "coverage"
    threshold: float = 0.15
    max_iters: int = 50
    tol_factor: float = 1e-5
    ucb_c: float = math.sqrt(2.0)
    ucb_train_iters: int = baselines.UCB_ITERATION_CAP
    dbscan_eps_m: float = baselines.DBSCAN_EPS_M
    dbscan_min_pts: int = baselines.DBSCAN_MIN_PTS

    def __post_init__(self):
        ratio = self.decision_period_s / self.slot_s
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("slot must divide the decision period")
        if self.channel_tick_s > self.slot_s:
            raise ValueError("channel tick cannot exceed the slot")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm '{self.algorithm}'")

    @property
    def slots_per_period(self) -> int:
        return round(self.decision_period_s / self.slot_s)

    @property
    def gain_window(self) -> int:
        return round(self.decision_period_s / self.channel_tick_s)


@dataclass
class MetricsReport:
    algorithm: str
    seed: int
    duration_s: float
    total_bits: float = 0.0
    per_gnb_bits: dict = field(default_factory=dict)
    per_gnb_config_changes: dict = field(default_factory=dict)
    config_changes_per_gnb_per_s: dict = field(default_factory=dict)
    per_gnb_overhead_airtime_s: dict = field(default_factory=dict)
    per_vehicle_bits: dict = field(default_factory=dict)
    per_vehicle_served_s: dict = field(default_factory=dict)
    per_vehicle_handovers: dict = field(default_factory=dict)
    per_vehicle_overhead_s: dict = field(default_factory=dict)
    vehicles_appearing: int = 0
    covered_vehicle_fraction: float = 0.0
    jain_fairness: float = 1.0
    overhead_lost_bits: float = 0.0
    period_diagnostics: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def strkeys(d):
            return {str(k): v for k, v in sorted(d.items())}

        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "duration_s": self.duration_s,
            "total_bits": self.total_bits,
            "per_gnb_bits": strkeys(self.per_gnb_bits),
            "per_gnb_config_changes": strkeys(self.per_gnb_config_changes),
            "config_changes_per_gnb_per_s": strkeys(self.config_changes_per_gnb_per_s),
            "per_gnb_overhead_airtime_s": strkeys(self.per_gnb_overhead_airtime_s),
            "per_vehicle_bits": strkeys(self.per_vehicle_bits),
            "per_vehicle_served_s": strkeys(self.per_vehicle_served_s),
            "per_vehicle_handovers": strkeys(self.per_vehicle_handovers),
            "per_vehicle_overhead_s": strkeys(self.per_vehicle_overhead_s),
            "vehicles_appearing": self.vehicles_appearing,
            "covered_vehicle_fraction": self.covered_vehicle_fraction,
            "jain_fairness": self.jain_fairness,
            "overhead_lost_bits": self.overhead_lost_bits,
            "period_diagnostics": self.period_diagnostics,
        }


def jain_index(values) -> float:
    """Jain fairness of a collection of rates; 1.0 when all are equal."""
    xs = np.asarray(list(values), dtype=float)
    if len(xs) == 0:
        return 1.0
    sq = float((xs**2).sum())
    if sq == 0.0:
        return 1.0
    return float(xs.sum() ** 2 / (len(xs) * sq))


# ---------------------------------------------------------------------------
# Association and scheduling


def associate(zone, configs, link_stats):
    """Serving (gnb_id, beam_index) for a zone, or None when uncovered.

    Picks the covering beam with the highest average received power; ties go
    to the lowest (gnb_id, beam_index).
    """
    best = None
    best_key = None
    for cfg in configs:
        split = cfg.power_per_beam_w
        for bi, beam in enumerate(cfg.beams):
            gain = link_stats.gain(cfg.site, beam, zone.id)
            if gain is None:
                continue
            p = received_power_w(split[bi], gain, link_stats.params)
            key = (-p, cfg.gnb_id, bi)
            if best_key is None or key < best_key:
                best_key = key
                best = (cfg.gnb_id, bi)
    return best


def pf_schedule(zone_ids, rates: np.ndarray, ewma: np.ndarray):
    """Assign each RB to the zone maximizing instantaneous rate over history.

    ``rates`` is (zones, rbs); ``ewma`` the per-zone average achieved rate.
    RBs where every zone has zero rate stay unassigned.  Returns a list of
    RB index arrays aligned with ``zone_ids``.
    """
    if len(zone_ids) == 0:
        return []
    metric = rates / np.maximum(ewma, 1e-12)[:, None]
    winners = np.argmax(metric, axis=0)
    assignable = rates[winners, np.arange(rates.shape[1])] > 0.0
    return [
        np.flatnonzero((winners == zi) & assignable) for zi in range(len(zone_ids))
    ]


# ---------------------------------------------------------------------------
# Policies


class LazyCandidates:
    """Per-gNB candidate lists, enumerated on first access.

    Ranking candidates fills the averaged-gain cache, which is the expensive
    part of a decision period; policies that never look (dbscan) skip it.
    """

    def __init__(self, scenario, occupied, cache):
        self._scenario = scenario
        self._occupied = occupied
        self._cache = cache
        self._lists = {}

    def __getitem__(self, gnb_id):
        if gnb_id not in self._lists:
            site = self._scenario.site(gnb_id)
            self._lists[gnb_id] = enumerate_candidates(
                site, self._occupied, self._scenario,
                self._scenario.limits, gain_fn=self._cache.gain_fn(site),
            )
        return self._lists[gnb_id]


@dataclass
class PeriodContext:
    scenario: Scenario
    sim: SimConfig
    period: int
    t0: float
    n_slots: int
    occupied: frozenset
    candidates: LazyCandidates  # gnb id -> list[BeamConfig]
    cache: AverageGainCache
    prev_enacted: dict  # gnb id -> BeamConfig enacted in the last slot so far


class Policy:
    """Per-period planner returning one configuration per gNB per slot."""

    name = "base"

    def plan_period(self, ctx: PeriodContext):
        raise NotImplementedError


class RandomPolicy(Policy):
    name = "random"

    def plan_period(self, ctx):
        plan = {}
        for site in ctx.scenario.sites:
            cands = ctx.candidates[site.id]
            rng = derived_rng(ctx.sim.seed, _TAG_ENACT, ctx.period, site.id)
            draws = rng.integers(0, len(cands), ctx.n_slots)
            plan[site.id] = [cands[int(i)] for i in draws]
        return plan, None


class DbscanPolicy(Policy):
    name = "dbscan"

    def plan_period(self, ctx):
        plan = {}
        positions = ctx.scenario.trace.positions_at(ctx.t0) if ctx.scenario.trace_covers(ctx.t0) else {}
        rng_m = ctx.scenario.limits.range_m
        for site in ctx.scenario.sites:
            nearby = [
                p
                for _, p in sorted(positions.items())
                if math.hypot(p[0] - site.position[0], p[1] - site.position[1]) <= rng_m
            ]
            cfg = baselines.dbscan_config(
                site, nearby, ctx.sim.dbscan_eps_m, ctx.sim.dbscan_min_pts,
                direction_quantum_deg=ctx.scenario.limits.direction_quantum_deg,
            )
            plan[site.id] = [cfg] * ctx.n_slots
        return plan, None


class UcbPolicy(Policy):
    """Each gNB trains a UCB bandit over its candidate list every period,
    against the other gNBs' currently-enacted configurations, then enacts
    its next selection for the whole period.  Arm statistics persist across
    periods as long as the candidate list is unchanged."""

    name = "ucb"

    def __init__(self):
        self.stats = {}

    def plan_period(self, ctx):
        plan = {}
        diag = {}
        for site in ctx.scenario.sites:
            cands = ctx.candidates[site.id]
            fingerprint = tuple(c.key for c in cands)
            stats = self.stats.get(site.id)
            if stats is None or stats.fingerprint != fingerprint:
                stats = baselines.ArmStats.fresh(len(cands), fingerprint)
                self.stats[site.id] = stats
            others = [cfg for gid, cfg in sorted(ctx.prev_enacted.items()) if gid != site.id]
            memo = {}

            def reward(arm, _site=site, _cands=cands, _others=others, _memo=memo):
                if arm not in _memo:
                    _memo[arm] = baselines.ucb_reward(
                        _site, _cands[arm], _others, ctx.cache, ctx.occupied
                    )
                return _memo[arm]

            baselines.run_ucb(stats, reward, ctx.sim.ucb_train_iters, ctx.sim.ucb_c)
            chosen = baselines.ucb_select(stats, ctx.sim.ucb_c)
            plan[site.id] = [cands[chosen]] * ctx.n_slots
            diag[str(site.id)] = {"arm": chosen, "pulls": stats.total}
        return plan, {"ucb": diag}


class CrabPolicy(Policy):
    """Belief propagation over the interaction graph, sampling a fresh
    configuration from each marginal every slot.  Isolated nodes fall back
    to their top-ranked candidate instead of sampling the uniform belief."""

    name = "crab"

    def plan_period(self, ctx):
        sim, scenario = ctx.sim, ctx.scenario
        sites = scenario.sites
        cov = coverage_sets(sites, ctx.occupied, scenario)
        graph = build_graph(sites, sim.criterion, sim.threshold, scenario, ctx.t0, cov_sets=cov)

        tables = {}
        for (g, h) in sorted(graph.edges):
            table = crab.compatibility_table(
                scenario.site(g), scenario.site(h),
                ctx.candidates[g], ctx.candidates[h],
                ctx.cache, ctx.occupied,
            )
            tables[(g, h)] = table
        # a pair whose every joint choice scores zero carries no preference;
        # keep the factorization non-degenerate by dropping such edges
        dead = [e for e, t in tables.items() if float(np.max(t)) == 0.0]
        for e in dead:
            graph = graph.without_edge(e)
            del tables[e]

        sizes = {site.id: len(ctx.candidates[site.id]) for site in sites}
        rng_bp = derived_rng(sim.seed, _TAG_BP, ctx.period)
        pis, diag = crab.run_crab(
            graph, tables, sim.max_iters, sim.tol_factor, sizes=sizes, rng=rng_bp
        )
        pi_by_node = dict(zip(graph.nodes, pis))

        plan = {}
        for site in sites:
            cands = ctx.candidates[site.id]
            if not graph.neighbors(site.id):
                plan[site.id] = [cands[0]] * ctx.n_slots
                continue
            rng = derived_rng(sim.seed, _TAG_ENACT, ctx.period, site.id)
            plan[site.id] = [
                crab.sample_config(pi_by_node[site.id], cands, rng) for _ in range(ctx.n_slots)
            ]
        diag = dict(diag)
        diag["edges"] = [list(e) for e in sorted(graph.edges)]
        return plan, diag


class ScriptedPolicy(Policy):
    """Test hook: delegates planning to a callable ``script(ctx) -> plan``."""

    name = "scripted"

    def __init__(self, script):
        self.script = script

    def plan_period(self, ctx):
        return self.script(ctx), None


def make_policy(sim: SimConfig) -> Policy:
    return {
        "crab": CrabPolicy,
        "dbscan": DbscanPolicy,
        "ucb": UcbPolicy,
        "random": RandomPolicy,
    }[sim.algorithm]()


# ---------------------------------------------------------------------------
# Main loop


def run(sim: SimConfig, scenario: Scenario, policy: Policy | None = None, events_writer=None) -> MetricsReport:
    """Run one simulation and return its metrics report.

    ``events_writer`` is an optional csv.writer-like object receiving one row
    per served zone per slot (header written by the caller).
    """
    if policy is None:
        policy = make_policy(sim)
    params = scenario.radio
    cqi_table = scenario.cqi_table or DEFAULT_CQI_SE
    spp = sim.slots_per_period
    n_slots_total = round(sim.duration_s / sim.slot_s)
    n_periods = math.ceil(n_slots_total / spp)

    null_cfg = {s.id: BeamConfig(s, ()) for s in scenario.sites}
    prev_cfg = dict(null_cfg)
    gnb_bits = {s.id: 0.0 for s in scenario.sites}
    gnb_changes = {s.id: 0 for s in scenario.sites}
    ewma = {s.id: {} for s in scenario.sites}
    config_ids = {}

    veh_bits: dict = {}
    veh_served_s: dict = {}
    veh_handovers: dict = {}
    veh_last_gnb: dict = {}
    served_once: set = set()
    overhead_lost_bits = 0.0
    diagnostics = []

    def config_id(cfg: BeamConfig) -> int:
        key = cfg.key
        if key not in config_ids:
            config_ids[key] = len(config_ids)
        return config_ids[key]

    for period in range(n_periods):
        t0 = period * sim.decision_period_s
        n_slots = min(spp, n_slots_total - period * spp)
        occupied = occupancy(scenario, t0) if scenario.trace_covers(t0) else frozenset()
        cache = AverageGainCache(scenario, sim.seed, period, window=sim.gain_window)
        candidates = LazyCandidates(scenario, occupied, cache)
        ctx = PeriodContext(
            scenario=scenario, sim=sim, period=period, t0=t0, n_slots=n_slots,
            occupied=occupied, candidates=candidates, cache=cache,
            prev_enacted=dict(prev_cfg),
        )
        plan, diag = policy.plan_period(ctx)
        if diag is not None:
            record = {"period": period, **diag}
            logger.info("%s", json.dumps(record, sort_keys=True, default=str))
            diagnostics.append(record)

        for s_idx in range(n_slots):
            t = t0 + s_idx * sim.slot_s
            abs_slot = period * spp + s_idx
            enacted = {gid: plan[gid][s_idx] for gid in plan}
            changed = {}
            for gid, cfg in enacted.items():
                changed[gid] = cfg.key != prev_cfg[gid].key
                if changed[gid]:
                    gnb_changes[gid] += 1
                prev_cfg[gid] = cfg

            positions = scenario.trace.positions_at(t) if scenario.trace_covers(t) else {}
            zone_vehicles: dict = {}
            for vid, pos in sorted(positions.items()):
                zid = scenario.area.zone_at(pos)
                if zid is not None:
                    zone_vehicles.setdefault(zid, []).append(vid)

            active_configs = [enacted[s.id] for s in scenario.sites]
            by_gnb: dict = {}
            for zid in sorted(zone_vehicles):
                zone = scenario.area.zone(zid)
                serving = associate(zone, active_configs, cache)
                if serving is None:
                    continue
                by_gnb.setdefault(serving[0], []).append((zid, serving[1]))

            for gid in sorted(by_gnb):
                site = scenario.site(gid)
                zones = by_gnb[gid]
                cfg = enacted[gid]
                split = cfg.power_per_beam_w
                rates = np.zeros((len(zones), params.rb_count))
                sinrs = []
                for zi, (zid, beam_idx) in enumerate(zones):
                    zone = scenario.area.zone(zid)
                    rx_pointing = float(round(bearing(zone.center, site.position)))
                    signal_p = None
                    interference = np.zeros(params.rb_count)
                    for other in scenario.sites:
                        ocfg = enacted[other.id]
                        osplit = ocfg.power_per_beam_w
                        for bi, beam in enumerate(ocfg.beams):
                            if cache.gain(other, beam, zid) is None:
                                continue
                            rng = derived_rng(sim.seed, _TAG_INST, abs_slot, other.id, zid)
                            h = instantaneous_link_gains(
                                other, zone, beam, rng,
                                los=cache.link_los(other, zid),
                                params=params,
                                shadowing_db=cache.shadowing_db(other, zid),
                                rx_pointing_deg=rx_pointing,
                            )
                            power = np.abs(h) ** 2 * (osplit[bi] / params.rb_count)
                            if other.id == gid and bi == beam_idx:
                                signal_p = power
                            else:
                                interference += power
                    if signal_p is None:
                        sinr = np.zeros(params.rb_count)
                    else:
                        sinr = signal_p / (params.noise_floor_w + interference)
                    sinrs.append(sinr)
                    rates[zi] = params.rb_bandwidth_hz * _se_per_rb(sinr, cqi_table)

                zone_ids = [z for z, _ in zones]
                hist = np.array([ewma[gid].get(z, 0.0) for z in zone_ids])
                alloc = pf_schedule(zone_ids, rates, hist)

                oh_g = sim.beam_reselect_s if changed[gid] else 0.0
                for zi, (zid, _) in enumerate(zones):
                    rb_idx = alloc[zi]
                    rho = float(rates[zi, rb_idx].sum())  # scheduled bits/s
                    ewma[gid][zid] = (1 - PF_EWMA_FACTOR) * ewma[gid].get(zid, 0.0) + PF_EWMA_FACTOR * rho
                    vehicles = zone_vehicles[zid]
                    share = rho / len(vehicles)
                    zone_bits = 0.0
                    for vid in vehicles:
                        served_once.add(vid)
                        oh_v = 0.0
                        last = veh_last_gnb.get(vid)
                        if last is not None and last != gid:
                            veh_handovers[vid] = veh_handovers.get(vid, 0) + 1
                            oh_v = sim.handover_s
                        veh_last_gnb[vid] = gid
                        airtime = max(0.0, sim.slot_s - oh_g - oh_v)
                        bits = share * airtime
                        veh_bits[vid] = veh_bits.get(vid, 0.0) + bits
                        veh_served_s[vid] = veh_served_s.get(vid, 0.0) + airtime
                        overhead_lost_bits += share * (sim.slot_s - airtime)
                        zone_bits += bits
                    gnb_bits[gid] += zone_bits
                    if events_writer is not None:
                        pool = sinrs[zi][rb_idx] if len(rb_idx) else sinrs[zi]
                        mean_sinr = float(np.mean(pool)) if len(pool) else 0.0
                        sinr_db = 10.0 * math.log10(mean_sinr) if mean_sinr > 0 else float("-inf")
                        events_writer.writerow(
                            [f"{t:.3f}", gid, config_id(enacted[gid]), zid,
                             int(len(rb_idx)), f"{sinr_db:.3f}", repr(zone_bits)]
                        )

    appearing = scenario.trace.vehicles_in_window(0.0, sim.duration_s)
    rates_per_vehicle = {vid: veh_bits.get(vid, 0.0) / sim.duration_s for vid in appearing}
    report = MetricsReport(
        algorithm=getattr(policy, "name", sim.algorithm),
        seed=sim.seed,
        duration_s=sim.duration_s,
        per_gnb_bits=dict(gnb_bits),
        per_gnb_config_changes=dict(gnb_changes),
        config_changes_per_gnb_per_s={g: c / sim.duration_s for g, c in gnb_changes.items()},
        per_gnb_overhead_airtime_s={g: c * sim.beam_reselect_s for g, c in gnb_changes.items()},
        per_vehicle_bits={v: veh_bits.get(v, 0.0) for v in appearing},
        per_vehicle_served_s={v: veh_served_s.get(v, 0.0) for v in appearing},
        per_vehicle_handovers={v: veh_handovers.get(v, 0) for v in appearing},
        per_vehicle_overhead_s={v: veh_handovers.get(v, 0) * sim.handover_s for v in appearing},
        vehicles_appearing=len(appearing),
        covered_vehicle_fraction=(len(served_once & set(appearing)) / len(appearing)) if appearing else 0.0,
        jain_fairness=jain_index(rates_per_vehicle.values()),
        overhead_lost_bits=overhead_lost_bits,
        period_diagnostics=diagnostics,
    )
    report.total_bits = float(sum(report.per_gnb_bits.values()))
    return report
