"""Optimal-matching user association.

Candidate link weights are pseudo supply-demand ratios: expected rates over
the LOS/NLOS mix, averaged between the current position and the next one
extrapolated from velocity, scaled by beam alignment overhead. The weight of
a candidate is the smaller square root of its uplink and downlink ratios;
matching requesting users to free subchannel seats maximizes the total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .matching import optimal_matching
from .model import (
    MACRO,
    OMNI_ANTENNA,
    BaseStation,
    Demand,
    NetworkConfig,
    Rect,
    UserState,
    dbm_to_watts,
)
from .radio import beam_alignment_time_us, los_probability, path_loss

SNR_VARIANT = "snr"
SINR_VARIANT = "sinr"


def predicted_position(user: UserState, slot_s: float, area: Rect) -> np.ndarray:
    """Next-slot position inferred from current velocity, clamped to the area."""
    return area.clamp(np.asarray(user.position) + np.asarray(user.velocity) * slot_s)


def _user_band_antenna(user: UserState, band: str):
    return user.antenna if band != MACRO else OMNI_ANTENNA


def pseudo_rates_for_bs(
    config: NetworkConfig,
    bs: BaseStation,
    users: Sequence[UserState],
    pos_now: np.ndarray,
    pos_next: np.ndarray,
    interference_ul_w: np.ndarray,
    interference_dl_w: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Expected uplink/downlink rates of candidate links user->bs, bps.

    Vectorized over users; positions are (n, 2) arrays, interference (n,)
    arrays of estimated watts (zero for the optimistic variant).
    """
    band = bs.band
    d_now = np.hypot(*(pos_now - bs.position_arr).T)
    d_next = np.hypot(*(pos_next - bs.position_arr).T)
    p_los = los_probability(d_now, config.obstacle_density_per_m2,
                            config.obstacle_mean_length_m)
    n_los = config.ple.exponent(band, True)
    n_nlos = config.ple.exponent(band, False)
    loss = {
        (True, 0): path_loss(d_now, bs.carrier_hz, n_los),
        (True, 1): path_loss(d_next, bs.carrier_hz, n_los),
        (False, 0): path_loss(d_now, bs.carrier_hz, n_nlos),
        (False, 1): path_loss(d_next, bs.carrier_hz, n_nlos),
    }

    gain_pair = np.array(
        [bs.antenna.directivity_linear * _user_band_antenna(u, band).directivity_linear
         for u in users]
    )
    p_user = np.array([dbm_to_watts(u.tx_power_dbm) for u in users])
    overhead = np.array(
        [1.0 - beam_alignment_time_us(bs, u.antenna, config.pilot_time_us)
         / config.slot_duration_us
         for u in users]
    )
    overhead = np.maximum(overhead, 0.0)
    noise_w = bs.subchannel_bandwidth_hz * config.noise_psd_w_hz
    w_half = bs.subchannel_bandwidth_hz / 2.0

    def direction(p_tx: np.ndarray, interference: np.ndarray) -> np.ndarray:
        amp = p_tx * gain_pair / (interference + noise_w)
        los_part = np.log2(1.0 + amp / loss[(True, 0)]) + np.log2(1.0 + amp / loss[(True, 1)])
        nlos_part = np.log2(1.0 + amp / loss[(False, 0)]) + np.log2(1.0 + amp / loss[(False, 1)])
        return overhead * w_half * (p_los * los_part + (1.0 - p_los) * nlos_part)

    r_ul = direction(p_user, np.asarray(interference_ul_w, dtype=float))
    r_dl = direction(np.full(len(users), bs.tx_power_w), np.asarray(interference_dl_w, dtype=float))
    return r_ul, r_dl


def pseudo_rate(
    config: NetworkConfig,
    bs: BaseStation,
    user: UserState,
    pos_now,
    pos_next,
    interference_ul_w: float = 0.0,
    interference_dl_w: float = 0.0,
) -> tuple[float, float]:
    """Single-pair form of pseudo_rates_for_bs."""
    r_ul, r_dl = pseudo_rates_for_bs(
        config,
        bs,
        [user],
        np.asarray(pos_now, dtype=float).reshape(1, 2),
        np.asarray(pos_next, dtype=float).reshape(1, 2),
        np.array([interference_ul_w]),
        np.array([interference_dl_w]),
    )
    return float(r_ul[0]), float(r_dl[0])


def connection_quality(r_ul_bps: float, r_dl_bps: float, demand: Demand) -> float:
    """Smaller square root of the two supply-demand ratios."""
    return min(
        math.sqrt(r_ul_bps / demand.ul_bps),
        math.sqrt(r_dl_bps / demand.dl_bps),
    )


@dataclass(frozen=True)
class ActiveLink:
    """A link that carried data in the previous slot (causal knowledge)."""

    bs_id: int
    user_id: int


def _angle_between_deg(v1: np.ndarray, v2: np.ndarray) -> float:
    n1 = math.hypot(v1[0], v1[1])
    n2 = math.hypot(v2[0], v2[1])
    if n1 < 1e-12 or n2 < 1e-12:
        return 0.0
    dot = (v1[0] * v2[0] + v1[1] * v2[1]) / (n1 * n2)
    return math.degrees(math.acos(min(1.0, max(-1.0, dot))))


def potential_interference(
    config: NetworkConfig,
    bs: BaseStation,
    user: UserState,
    prev_links: Sequence[ActiveLink],
    users: dict[int, UserState],
) -> tuple[float, float]:
    """Average-interference estimate for a candidate link, (uplink, downlink) watts.

    Potential interferers are the entities that were active on the candidate
    band in the previous slot and fall inside the receiver's main beam; the
    coefficient beam/(360 * channels) discounts each by the chance it lands on
    the same subchannel with its own beam covering the receiver. Macro uplink
    victims consider only user interferers and macro downlink victims only
    station interferers, because macro switching is synchronized.
    """
    band = bs.band
    user_pos = np.asarray(user.position, dtype=float)
    bs_pos = bs.position_arr

    active_users: set[int] = set()
    active_bs: set[int] = set()
    for link in prev_links:
        link_band = config.bs(link.bs_id).band
        if link_band != band:
            continue
        if link.user_id != user.id:
            active_users.add(link.user_id)
        if link.bs_id != bs.id:
            active_bs.add(link.bs_id)

    ue_antenna = _user_band_antenna(user, band)
    g_rx_bs = bs.antenna.directivity_linear
    g_rx_ue = ue_antenna.directivity_linear

    def in_beam(rx_pos, rx_boresight, rx_beam_deg, x_pos) -> bool:
        if rx_beam_deg >= 360.0:
            return True
        return _angle_between_deg(rx_boresight, x_pos - rx_pos) < rx_beam_deg / 2.0

    def loss_mix(d: float, carrier: float) -> float:
        p_los = los_probability(d, config.obstacle_density_per_m2,
                                config.obstacle_mean_length_m)
        l_los = path_loss(d, carrier, config.ple.exponent(band, True))
        l_nlos = path_loss(d, carrier, config.ple.exponent(band, False))
        return p_los / l_los + (1.0 - p_los) / l_nlos

    i_ul = 0.0  # received at the station
    i_dl = 0.0  # received at the user
    bs_boresight = user_pos - bs_pos
    ue_boresight = bs_pos - user_pos
    channels = bs.subchannel_count

    for uid in sorted(active_users):
        other = users[uid]
        x_pos = np.asarray(other.position, dtype=float)
        tx_antenna = _user_band_antenna(other, band)
        coeff = (tx_antenna.main_beam_deg * other.tx_power_w
                 * tx_antenna.directivity_linear / (360.0 * channels))
        if in_beam(bs_pos, bs_boresight, bs.antenna.main_beam_deg, x_pos):
            d = float(np.hypot(*(x_pos - bs_pos)))
            i_ul += coeff * g_rx_bs * loss_mix(d, bs.carrier_hz)
        if band != MACRO and in_beam(user_pos, ue_boresight, ue_antenna.main_beam_deg, x_pos):
            d = float(np.hypot(*(x_pos - user_pos)))
            i_dl += coeff * g_rx_ue * loss_mix(d, bs.carrier_hz)

    for bid in sorted(active_bs):
        other = config.bs(bid)
        x_pos = other.position_arr
        coeff = (other.antenna.main_beam_deg * other.tx_power_w
                 * other.antenna.directivity_linear / (360.0 * channels))
        if band != MACRO and in_beam(bs_pos, bs_boresight, bs.antenna.main_beam_deg, x_pos):
            d = float(np.hypot(*(x_pos - bs_pos)))
            i_ul += coeff * g_rx_bs * loss_mix(d, bs.carrier_hz)
        if in_beam(user_pos, ue_boresight, ue_antenna.main_beam_deg, x_pos):
            d = float(np.hypot(*(x_pos - user_pos)))
            i_dl += coeff * g_rx_ue * loss_mix(d, bs.carrier_hz)

    return i_ul, i_dl


class PseudoRateTable:
    """Per-slot memo of pseudo rates, shared across association, switching and
    baseline objective evaluations within one decision."""

    def __init__(
        self,
        config: NetworkConfig,
        users: dict[int, UserState],
        variant: str = SNR_VARIANT,
        prev_links: Sequence[ActiveLink] = (),
    ):
        if variant not in (SNR_VARIANT, SINR_VARIANT):
            raise ValueError(f"unknown pseudo-rate variant {variant!r}")
        self.config = config
        self.users = users
        self.variant = variant
        self.prev_links = tuple(prev_links)
        self._memo: dict[tuple[int, int], tuple[float, float]] = {}
        self._pos_next: dict[int, np.ndarray] = {}

    def _next_position(self, uid: int) -> np.ndarray:
        pos = self._pos_next.get(uid)
        if pos is None:
            pos = predicted_position(self.users[uid], self.config.slot_duration_s,
                                     self.config.area)
            self._pos_next[uid] = pos
        return pos

    def rates_for(self, bs: BaseStation, uids: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """(uplink, downlink) pseudo rates of the given users toward one station."""
        missing = [uid for uid in uids if (uid, bs.id) not in self._memo]
        if missing:
            miss_users = [self.users[uid] for uid in missing]
            pos_now = np.array([np.asarray(u.position, dtype=float) for u in miss_users])
            pos_next = np.array([self._next_position(uid) for uid in missing])
            if self.variant == SINR_VARIANT:
                est = [potential_interference(self.config, bs, u, self.prev_links,
                                              self.users)
                       for u in miss_users]
                i_ul = np.array([e[0] for e in est])
                i_dl = np.array([e[1] for e in est])
            else:
                i_ul = np.zeros(len(missing))
                i_dl = np.zeros(len(missing))
            r_ul, r_dl = pseudo_rates_for_bs(self.config, bs, miss_users, pos_now,
                                             pos_next, i_ul, i_dl)
            for i, uid in enumerate(missing):
                self._memo[(uid, bs.id)] = (float(r_ul[i]), float(r_dl[i]))
        pairs = [self._memo[(uid, bs.id)] for uid in uids]
        return (np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]))

    def rate(self, bs: BaseStation, uid: int) -> tuple[float, float]:
        r_ul, r_dl = self.rates_for(bs, [uid])
        return float(r_ul[0]), float(r_dl[0])

    def quality(self, bs: BaseStation, uid: int) -> float:
        r_ul, r_dl = self.rate(bs, uid)
        return connection_quality(r_ul, r_dl, self.users[uid].demand)


def associate(
    config: NetworkConfig,
    users: dict[int, UserState],
    reassoc_ids: Sequence[int],
    variant: str = SNR_VARIANT,
    prev_links: Sequence[ActiveLink] = (),
    table: Optional[PseudoRateTable] = None,
) -> dict[int, Optional[int]]:
    """Match requesting users to stations; ongoing users keep their seats.

    Returns the chosen station id per requesting user (None when the user
    lands on a padding seat and stays unassociated). Free seats per station
    are its subchannel count minus its ongoing users.
    """
    if table is None:
        table = PseudoRateTable(config, users, variant, prev_links)
    request_ids = sorted(reassoc_ids)
    if not request_ids:
        return {}
    reassoc = set(request_ids)

    ongoing_load: dict[int, int] = {}
    for uid, user in users.items():
        if user.assoc is not None and uid not in reassoc:
            ongoing_load[user.assoc.bs_id] = ongoing_load.get(user.assoc.bs_id, 0) + 1

    stations = sorted(config.stations.values(), key=lambda b: b.id)
    seats: list[int] = []  # station id per seat column
    for bs in stations:
        free = bs.subchannel_count - ongoing_load.get(bs.id, 0)
        seats.extend([bs.id] * max(0, free))
    if not seats:
        return {uid: None for uid in request_ids}

    quality: dict[int, np.ndarray] = {}
    for bs in stations:
        r_ul, r_dl = table.rates_for(bs, request_ids)
        quality[bs.id] = np.array(
            [connection_quality(r_ul[i], r_dl[i], users[uid].demand)
             for i, uid in enumerate(request_ids)]
        )

    weights = np.zeros((len(request_ids), len(seats)))
    for col, bs_id in enumerate(seats):
        weights[:, col] = quality[bs_id]

    assignment = optimal_matching(weights)
    return {
        uid: (seats[col] if col is not None else None)
        for uid, col in zip(request_ids, assignment)
    }
