"""Time-slotted simulation loop.

Slot order: advance mobility, collect reassociation requests, let the
scheduler decide (timed), validate the decision, realize the channel, score
per-user rates and satisfaction, record metrics. Users whose demands are
missed abort and re-request in the next slot; their rates still count toward
the overall rate but not the effective one.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import mobility
from .association import ActiveLink
from .model import (
    Antenna,
    Association,
    BaseStation,
    Decision,
    Demand,
    LevyParams,
    MACRO,
    NetworkConfig,
    PICO,
    PathLossExponents,
    Rect,
    SlotMetrics,
    UserSlotRecord,
    UserState,
    validate_decision,
)
from .radio import ChannelState, GainContext, perceived_rates
from .schedulers import SchedulerView, make_scheduler


class SchedulerViolationError(RuntimeError):
    """A scheduler emitted a decision that breaks the structural constraints."""

    def __init__(self, slot_index: int, violations):
        self.slot_index = slot_index
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"invalid decision at slot {slot_index}: {lines}")


@dataclass(frozen=True)
class MacroParams:
    carrier_hz: float = 1.9e9
    subchannel_count: int = 18
    subchannel_bandwidth_hz: float = 1.8e6
    tx_power_dbm: float = 43.0


@dataclass(frozen=True)
class PicoParams:
    carrier_hz: float = 28e9
    subchannel_count: int = 3
    subchannel_bandwidth_hz: float = 14.4e6
    tx_power_dbm: float = 33.0
    antenna: Antenna = Antenna(10.0 ** 1.5, 30.0, 90.0)  # 15 dBi, 30 deg beam


@dataclass(frozen=True)
class UserParams:
    tx_power_dbm: float = 30.0
    antenna: Optional[Antenna] = None  # None: mirror the pico antenna


@dataclass(frozen=True)
class DemandProfile:
    demand: Demand
    weight: float


DEFAULT_DEMAND_MIX = (
    DemandProfile(Demand(15e6, 1e6), 3.0),
    DemandProfile(Demand(15e6, 15e6), 4.0),
    DemandProfile(Demand(0.1e6, 15e6), 3.0),
)


@dataclass(frozen=True)
class Scenario:
    """Complete description of one experiment (before seeding)."""

    area: Rect = Rect(-1000.0, 1000.0, -500.0, 500.0)
    n_subslots: int = 8
    slot_duration_us: float = 65535.0
    pilot_time_us: float = 20.0
    obstacle_density_per_m2: float = 4.4e-4
    obstacle_mean_length_m: float = 55.0
    noise_psd_dbm_hz: float = -174.0
    ple: PathLossExponents = PathLossExponents(2.0, 3.37, 2.55, 5.76)
    levy: LevyParams = LevyParams(beta_f=0.5, beta_r=0.5)
    rng_seed: int = 1
    mbs_positions: tuple[tuple[float, float], ...] = ((-500.0, 0.0), (500.0, 0.0))
    macro: MacroParams = MacroParams()
    pbs_positions: Optional[tuple[tuple[float, float], ...]] = None
    pbs_count: int = 12
    pico: PicoParams = PicoParams()
    users: int = 40
    user_params: UserParams = UserParams()
    demand_mix: tuple[DemandProfile, ...] = DEFAULT_DEMAND_MIX

    def user_antenna(self) -> Antenna:
        if self.user_params.antenna is not None:
            return self.user_params.antenna
        # terminals carry mmWave antennas symmetrical to the pico side
        return self.pico.antenna

    def with_overrides(self, **kwargs) -> "Scenario":
        return replace(self, **kwargs)


def build_network(scenario: Scenario, rng: np.random.Generator) -> NetworkConfig:
    """Materialize stations; pico positions are drawn uniformly when not given."""
    stations_m = []
    for i, pos in enumerate(scenario.mbs_positions):
        stations_m.append(BaseStation(
            id=i, kind=MACRO, position=(float(pos[0]), float(pos[1])),
            carrier_hz=scenario.macro.carrier_hz,
            subchannel_count=scenario.macro.subchannel_count,
            subchannel_bandwidth_hz=scenario.macro.subchannel_bandwidth_hz,
            tx_power_dbm_per_subchannel=scenario.macro.tx_power_dbm,
            antenna=Antenna(1.0, 360.0, 360.0),
        ))
    if scenario.pbs_positions is not None:
        pico_positions = [tuple(map(float, p)) for p in scenario.pbs_positions]
    else:
        area = scenario.area
        xs = rng.uniform(area.x_min, area.x_max, scenario.pbs_count)
        ys = rng.uniform(area.y_min, area.y_max, scenario.pbs_count)
        pico_positions = list(zip(xs.tolist(), ys.tolist()))
    stations_p = []
    for j, pos in enumerate(pico_positions):
        stations_p.append(BaseStation(
            id=len(stations_m) + j, kind=PICO, position=pos,
            carrier_hz=scenario.pico.carrier_hz,
            subchannel_count=scenario.pico.subchannel_count,
            subchannel_bandwidth_hz=scenario.pico.subchannel_bandwidth_hz,
            tx_power_dbm_per_subchannel=scenario.pico.tx_power_dbm,
            antenna=scenario.pico.antenna,
        ))
    return NetworkConfig(
        area=scenario.area,
        mbs_list=tuple(stations_m),
        pbs_list=tuple(stations_p),
        n_subslots=scenario.n_subslots,
        slot_duration_us=scenario.slot_duration_us,
        pilot_time_us=scenario.pilot_time_us,
        obstacle_density_per_m2=scenario.obstacle_density_per_m2,
        obstacle_mean_length_m=scenario.obstacle_mean_length_m,
        noise_psd_dbm_hz=scenario.noise_psd_dbm_hz,
        ple=scenario.ple,
        levy=scenario.levy,
        rng_seed=scenario.rng_seed,
    )


def _profile_counts(n: int, mix: tuple[DemandProfile, ...]) -> list[int]:
    """Largest-remainder split of n users over the demand profiles."""
    total = sum(p.weight for p in mix)
    exact = [n * p.weight / total for p in mix]
    counts = [int(x) for x in exact]
    leftovers = sorted(range(len(mix)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in range(n - sum(counts)):
        counts[leftovers[i]] += 1
    return counts


def build_users(scenario: Scenario, rng: np.random.Generator) -> dict[int, UserState]:
    counts = _profile_counts(scenario.users, scenario.demand_mix)
    demands: list[Demand] = []
    for count, profile in zip(counts, scenario.demand_mix):
        demands.extend([profile.demand] * count)
    antenna = scenario.user_antenna()
    users: dict[int, UserState] = {}
    area = scenario.area
    for uid in range(scenario.users):
        position = np.array([
            rng.uniform(area.x_min, area.x_max),
            rng.uniform(area.y_min, area.y_max),
        ])
        users[uid] = UserState(
            id=uid,
            position=position,
            velocity=np.zeros(2),
            phase=mobility.initial_phase(rng, scenario.levy),
            demand=demands[uid],
            antenna=antenna,
            tx_power_dbm=scenario.user_params.tx_power_dbm,
        )
    return users


@dataclass
class World:
    config: NetworkConfig
    users: dict[int, UserState]
    slot: int = 0
    prev_decision: Optional[Decision] = None
    prev_links: tuple[ActiveLink, ...] = ()


def step(world: World, scheduler, mob_rng: np.random.Generator,
         los_rng: np.random.Generator) -> SlotMetrics:
    """Run one slot and mutate the world in place."""
    config = world.config
    slot_s = config.slot_duration_s
    for uid in sorted(world.users):
        mobility.advance(world.users[uid], slot_s, mob_rng, config.levy, config.area)

    reassoc = tuple(uid for uid in sorted(world.users)
                    if world.users[uid].needs_association)
    view = SchedulerView(config=config, users=world.users, reassoc_ids=reassoc,
                         prev_links=world.prev_links, slot_index=world.slot)

    t0 = time.perf_counter_ns()
    decision = scheduler.decide(view)
    decision_us = (time.perf_counter_ns() - t0) / 1000.0

    known = set(world.users)
    for uid in decision.association:
        if uid not in known:
            raise ValueError(f"decision references unknown user {uid}")
    violations = validate_decision(decision, config, world.prev_decision, reassoc)
    if violations:
        raise SchedulerViolationError(world.slot, violations)

    for uid, user in world.users.items():
        link = decision.association.get(uid)
        if link is None:
            user.assoc = None
        else:
            bs_id, chan = link
            if (user.assoc is None or user.assoc.bs_id != bs_id
                    or user.assoc.subchannel != chan):
                user.assoc = Association(bs_id, chan, world.slot)

    ctx = GainContext(config, world.users, decision)
    channel = ChannelState(config, ctx.positions, los_rng)
    term_cache: dict = {}
    realized: dict[int, tuple[float, float]] = {}
    for uid in sorted(decision.association):
        realized[uid] = perceived_rates(ctx, channel, uid, term_cache)

    overall = 0.0
    effective = 0.0
    satisfied_count = 0
    records = []
    for uid in sorted(world.users):
        user = world.users[uid]
        ul, dl = realized.get(uid, (0.0, 0.0))
        satisfied = (user.assoc is not None and ul >= user.demand.ul_bps
                     and dl >= user.demand.dl_bps)
        user.satisfied_last_slot = satisfied
        overall += ul + dl
        if satisfied:
            effective += ul + dl
            satisfied_count += 1
        link = decision.association.get(uid)
        records.append(UserSlotRecord(
            user_id=uid, ul_bps=ul, dl_bps=dl, satisfied=satisfied,
            bs_id=link[0] if link else None,
            subchannel=link[1] if link else None,
        ))

    scheduler.observe(view, decision, realized)

    metrics = SlotMetrics(
        slot_index=world.slot,
        overall_rate_bps=overall,
        effective_rate_bps=effective,
        satisfied_count=satisfied_count,
        decision_time_us=decision_us,
        per_user=tuple(records),
    )
    world.prev_decision = decision
    world.prev_links = tuple(ActiveLink(bs_id, uid)
                             for uid, (bs_id, _c) in sorted(decision.association.items()))
    world.slot += 1
    return metrics


@dataclass
class RunLog:
    algo: str
    slots: int
    seeds: tuple[int, ...]
    per_seed: dict[int, list[SlotMetrics]]
    scsa_diagnostics: dict[int, list[dict]]

    _FIELDS = ("overall_rate_bps", "effective_rate_bps", "satisfied_count",
               "decision_time_us")

    def seed_means(self, seed: int) -> dict[str, float]:
        rows = self.per_seed[seed]
        if not rows:
            return {name: float("nan") for name in self._FIELDS}
        return {name: float(np.mean([getattr(m, name) for m in rows]))
                for name in self._FIELDS}

    def aggregates(self) -> dict[str, float]:
        """Mean over seeds of the per-seed slot means."""
        if not self.seeds or self.slots == 0:
            return {name: float("nan") for name in self._FIELDS}
        per_seed = [self.seed_means(seed) for seed in self.seeds]
        return {name: float(np.mean([m[name] for m in per_seed]))
                for name in self._FIELDS}


def run_seed(scenario: Scenario, algo: str, slots: int, seed: int,
             collect_diagnostics: bool = False) -> tuple[list[SlotMetrics], list[dict]]:
    """One seeded repetition: fresh topology, users and RNG streams."""
    seq = np.random.SeedSequence(seed)
    init_ss, mob_ss, los_ss, sched_ss = seq.spawn(4)
    init_rng = np.random.default_rng(init_ss)
    config = build_network(scenario, init_rng)
    users = build_users(scenario, init_rng)
    scheduler = make_scheduler(algo, np.random.default_rng(sched_ss),
                               collect_diagnostics=collect_diagnostics)
    world = World(config=config, users=users)
    mob_rng = np.random.default_rng(mob_ss)
    los_rng = np.random.default_rng(los_ss)
    log = [step(world, scheduler, mob_rng, los_rng) for _ in range(slots)]
    diagnostics = getattr(scheduler, "diagnostics", None) or []
    return log, diagnostics


def run(scenario: Scenario, algo: str, slots: int, seeds: tuple[int, ...],
        collect_diagnostics: bool = False) -> RunLog:
    """Seeded repetitions of one scenario under one algorithm."""
    per_seed: dict[int, list[SlotMetrics]] = {}
    diag: dict[int, list[dict]] = {}
    for seed in seeds:
        log, diagnostics = run_seed(scenario, algo, slots, seed, collect_diagnostics)
        per_seed[seed] = log
        diag[seed] = diagnostics
    return RunLog(algo=algo, slots=slots, seeds=tuple(seeds), per_seed=per_seed,
                  scsa_diagnostics=diag)
