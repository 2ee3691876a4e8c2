"""Core domain types, unit conventions and the per-slot decision checker.

Unit discipline: powers enter in dBm at the configuration boundary and are
converted once to linear watts; all rate math happens in the linear domain.
Geometry is 2-D, in meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Optional, Sequence, Union

import numpy as np

SPEED_OF_LIGHT = 2.998e8  # m/s

MACRO = "macro"
PICO = "pico"


def dbm_to_watts(p_dbm: float) -> float:
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def watts_to_dbm(p_w: float) -> float:
    if p_w <= 0.0:
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * math.log10(p_w) + 30.0


@dataclass(frozen=True)
class Rect:
    """Closed axis-aligned rectangle, meters."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self) -> None:
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError(f"degenerate area bounds {self}")

    @property
    def diagonal(self) -> float:
        return math.hypot(self.x_max - self.x_min, self.y_max - self.y_min)

    def contains(self, point) -> bool:
        x, y = float(point[0]), float(point[1])
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def clamp(self, point: np.ndarray) -> np.ndarray:
        return np.array(
            [
                min(max(float(point[0]), self.x_min), self.x_max),
                min(max(float(point[1]), self.y_min), self.y_max),
            ]
        )


@dataclass(frozen=True)
class Antenna:
    """Directional antenna: linear directivity, main beam and search sector widths."""

    directivity_linear: float
    main_beam_deg: float
    sector_deg: float

    def __post_init__(self) -> None:
        if self.directivity_linear <= 0.0:
            raise ValueError("directivity must be positive")
        if not (0.0 < self.main_beam_deg <= 360.0):
            raise ValueError("main beam width must lie in (0, 360] degrees")
        if not (0.0 < self.sector_deg <= 360.0):
            raise ValueError("sector width must lie in (0, 360] degrees")


#: Omnidirectional antenna used by macro cells and by users on the sub-6 GHz band.
OMNI_ANTENNA = Antenna(directivity_linear=1.0, main_beam_deg=360.0, sector_deg=360.0)


@dataclass(frozen=True)
class PathLossExponents:
    lte_los: float
    lte_nlos: float
    mmw_los: float
    mmw_nlos: float

    def __post_init__(self) -> None:
        for name in ("lte_los", "lte_nlos", "mmw_los", "mmw_nlos"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"path loss exponent {name} must be positive")

    def exponent(self, band: str, los: bool) -> float:
        if band == MACRO:
            return self.lte_los if los else self.lte_nlos
        if band == PICO:
            return self.mmw_los if los else self.mmw_nlos
        raise ValueError(f"unknown band {band!r}")


@dataclass(frozen=True)
class LevyParams:
    """Truncated Levy walk parameters.

    The piecewise (k, rho) pairs map flight length to flight duration; the
    split point is ``flight_cutoff_m``.
    """

    beta_f: float
    beta_r: float
    k_short: float = 30.55
    rho_short: float = 0.89
    k_long: float = 0.76
    rho_long: float = 0.28
    flight_cutoff_m: float = 500.0
    max_pause_s: float = 3600.0

    def __post_init__(self) -> None:
        for name in ("beta_f", "beta_r"):
            beta = getattr(self, name)
            if not (0.0 < beta < 2.0):
                raise ValueError(f"{name}={beta} must lie in (0, 2)")


@dataclass(frozen=True)
class BaseStation:
    id: int
    kind: str  # MACRO or PICO; doubles as the band tag
    position: tuple[float, float]
    carrier_hz: float
    subchannel_count: int
    subchannel_bandwidth_hz: float
    tx_power_dbm_per_subchannel: float
    antenna: Antenna

    def __post_init__(self) -> None:
        if self.kind not in (MACRO, PICO):
            raise ValueError(f"unknown base station kind {self.kind!r}")
        if self.subchannel_count < 1:
            raise ValueError("subchannel_count must be >= 1")
        if self.carrier_hz <= 0.0 or self.subchannel_bandwidth_hz <= 0.0:
            raise ValueError("carrier and bandwidth must be positive")
        if self.kind == MACRO:
            if self.antenna.directivity_linear != 1.0 or self.antenna.main_beam_deg != 360.0:
                raise ValueError("macro antennas are omnidirectional (gain 1, beam 360)")
        else:
            if not (0.0 < self.antenna.main_beam_deg < 360.0):
                raise ValueError("pico main beam must lie in (0, 360) degrees")

    @property
    def tx_power_w(self) -> float:
        return dbm_to_watts(self.tx_power_dbm_per_subchannel)

    @property
    def band(self) -> str:
        return self.kind

    @property
    def position_arr(self) -> np.ndarray:
        return np.array(self.position, dtype=float)


@dataclass(frozen=True)
class NetworkConfig:
    area: Rect
    mbs_list: tuple[BaseStation, ...]
    pbs_list: tuple[BaseStation, ...]
    n_subslots: int
    slot_duration_us: float
    pilot_time_us: float
    obstacle_density_per_m2: float
    obstacle_mean_length_m: float
    noise_psd_dbm_hz: float
    ple: PathLossExponents
    levy: LevyParams
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_subslots < 2:
            raise ValueError("n_subslots must be >= 2")
        if self.slot_duration_us <= 0.0 or self.pilot_time_us < 0.0:
            raise ValueError("slot and pilot durations must be positive")
        if not self.mbs_list and not self.pbs_list:
            raise ValueError("at least one base station required")
        seen: set[int] = set()
        for bs in self.mbs_list + self.pbs_list:
            if bs.id in seen:
                raise ValueError(f"duplicate base station id {bs.id}")
            seen.add(bs.id)
        for bs in self.mbs_list:
            if bs.kind != MACRO:
                raise ValueError("mbs_list must contain macro stations only")
        for bs in self.pbs_list:
            if bs.kind != PICO:
                raise ValueError("pbs_list must contain pico stations only")
        # one carrier/bandwidth/channel-plan triple per station class: the band
        # subchannel set is shared, so co-channel indexing must line up
        for group in (self.mbs_list, self.pbs_list):
            plans = {(bs.carrier_hz, bs.subchannel_bandwidth_hz, bs.subchannel_count)
                     for bs in group}
            if len(plans) > 1:
                raise ValueError(
                    "all stations of one class must share carrier, bandwidth and "
                    "subchannel count"
                )
        if self.mbs_list and self.pbs_list:
            if self.mbs_list[0].carrier_hz == self.pbs_list[0].carrier_hz:
                raise ValueError("macro and pico classes must use distinct carriers")

    @cached_property
    def stations(self) -> dict[int, BaseStation]:
        return {bs.id: bs for bs in self.mbs_list + self.pbs_list}

    def bs(self, bs_id: int) -> BaseStation:
        try:
            return self.stations[bs_id]
        except KeyError:
            raise KeyError(f"unknown base station id {bs_id}") from None

    @property
    def noise_psd_w_hz(self) -> float:
        return dbm_to_watts(self.noise_psd_dbm_hz)

    @property
    def slot_duration_s(self) -> float:
        return self.slot_duration_us * 1e-6

    @property
    def switch_point_choices(self) -> range:
        return range(1, self.n_subslots)


@dataclass(frozen=True)
class Demand:
    ul_bps: float
    dl_bps: float

    def __post_init__(self) -> None:
        if self.ul_bps <= 0.0 or self.dl_bps <= 0.0:
            raise ValueError("demand components must be positive")


@dataclass
class Flight:
    remaining_s: float
    heading: np.ndarray  # unit vector
    speed_m_s: float


@dataclass
class Pause:
    remaining_s: float


MobilityPhase = Union[Flight, Pause]


@dataclass(frozen=True)
class Association:
    bs_id: int
    subchannel: int
    since_slot: int


@dataclass
class UserState:
    id: int
    position: np.ndarray
    velocity: np.ndarray
    phase: MobilityPhase
    demand: Demand
    antenna: Antenna  # directional antenna used on the mmWave band
    tx_power_dbm: float
    assoc: Optional[Association] = None
    satisfied_last_slot: bool = False

    @property
    def tx_power_w(self) -> float:
        return dbm_to_watts(self.tx_power_dbm)

    @property
    def needs_association(self) -> bool:
        return self.assoc is None or not self.satisfied_last_slot


@dataclass(frozen=True)
class Decision:
    """One slot's scheduling output: who talks to whom, where, and when to flip."""

    association: Mapping[int, tuple[int, int]]  # user id -> (bs id, subchannel)
    switch_points: Mapping[int, int]  # bs id -> subslot after which it turns downlink
    slot_index: int


@dataclass(frozen=True)
class Violation:
    rule: str
    subjects: tuple
    detail: str

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return f"{self.rule}{self.subjects}: {self.detail}"


RULE_DUPLICATE_SUBCHANNEL = "duplicate-subchannel"
RULE_CONTINUITY = "continuity"
RULE_SWITCH_RANGE = "switch-point-range"
RULE_MACRO_SYNC = "macro-sync"


def validate_decision(
    decision: Decision,
    config: NetworkConfig,
    prev_decision: Optional[Decision],
    reassoc_set: Sequence[int],
) -> list[Violation]:
    """Check the structural scheduling constraints of a decision.

    Returns an empty list iff per-station subchannel uniqueness, per-user
    single association, continuity outside the reassociation set, switch-point
    range membership and macro switch synchronization all hold. Demand
    satisfaction is deliberately not checked here; the engine evaluates it
    after channel realization and marks shortfalls for reassociation.

    Unknown station/user ids or out-of-range subchannel indices violate the
    precondition and raise instead of producing violation entries.
    """
    violations: list[Violation] = []
    reassoc = set(reassoc_set)

    occupied: dict[tuple[int, int], int] = {}
    for user_id in sorted(decision.association):
        bs_id, chan = decision.association[user_id]
        bs = config.bs(bs_id)  # raises on unknown id
        if not (0 <= chan < bs.subchannel_count):
            raise ValueError(
                f"subchannel {chan} out of range for station {bs_id} "
                f"(has {bs.subchannel_count})"
            )
        seat = (bs_id, chan)
        if seat in occupied:
            violations.append(
                Violation(
                    RULE_DUPLICATE_SUBCHANNEL,
                    (occupied[seat], user_id, bs_id, chan),
                    f"users {occupied[seat]} and {user_id} share station {bs_id} "
                    f"subchannel {chan}",
                )
            )
        else:
            occupied[seat] = user_id

    if prev_decision is not None:
        for user_id in sorted(prev_decision.association):
            if user_id in reassoc:
                continue
            prev_link = prev_decision.association[user_id]
            now = decision.association.get(user_id)
            if now != prev_link:
                violations.append(
                    Violation(
                        RULE_CONTINUITY,
                        (user_id, prev_link, now),
                        f"ongoing user {user_id} moved from {prev_link} to {now}",
                    )
                )

    macro_points: dict[int, int] = {}
    for bs_id in sorted(decision.switch_points):
        bs = config.bs(bs_id)
        point = decision.switch_points[bs_id]
        if not (1 <= point <= config.n_subslots - 1):
            violations.append(
                Violation(
                    RULE_SWITCH_RANGE,
                    (bs_id, point),
                    f"switch point {point} outside 1..{config.n_subslots - 1}",
                )
            )
        if bs.kind == MACRO:
            macro_points[bs_id] = point
    for bs in config.mbs_list:
        if bs.id not in decision.switch_points:
            raise ValueError(f"decision misses switch point for station {bs.id}")
    for bs in config.pbs_list:
        if bs.id not in decision.switch_points:
            raise ValueError(f"decision misses switch point for station {bs.id}")
    if len(set(macro_points.values())) > 1:
        violations.append(
            Violation(
                RULE_MACRO_SYNC,
                tuple(sorted(macro_points.items())),
                f"macro switch points differ: {macro_points}",
            )
        )

    return violations


@dataclass(frozen=True)
class UserSlotRecord:
    user_id: int
    ul_bps: float
    dl_bps: float
    satisfied: bool
    bs_id: Optional[int]
    subchannel: Optional[int]


@dataclass(frozen=True)
class SlotMetrics:
    slot_index: int
    overall_rate_bps: float
    effective_rate_bps: float
    satisfied_count: int
    decision_time_us: float
    per_user: tuple[UserSlotRecord, ...] = field(repr=False, default=())

    def __post_init__(self) -> None:
        if self.effective_rate_bps > self.overall_rate_bps + 1e-9:
            raise ValueError("effective rate cannot exceed overall rate")
