"""Channel physics: path loss, LOS realization, antenna gains, per-subslot
interference, SINR and perceived rates, beam alignment overhead.

Conventions:
  * entity keys are ("bs", id) / ("ue", id) tuples;
  * one LOS draw per unordered entity pair per slot (channel reciprocity);
  * antenna gains take values in {0, 1, G}: main beam or nothing;
  * uplink subslots come first: subslot tau in 1..N is uplink, N+1..N_s downlink.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    MACRO,
    PICO,
    SPEED_OF_LIGHT,
    Antenna,
    BaseStation,
    Decision,
    NetworkConfig,
    UserState,
)

UPLINK = "ul"
DOWNLINK = "dl"


def path_loss(d_m, f_hz: float, exponent: float):
    """Free-space style path loss (4*pi*d*f/c)^n, linear.

    Accepts scalars or numpy arrays of distances; d = 0 is treated as 1 m to
    dodge the zero-loss singularity.
    """
    d = np.where(np.asarray(d_m) <= 0.0, 1.0, d_m)
    if np.ndim(d_m) == 0:
        d = float(d)
    return (4.0 * np.pi * d * f_hz / SPEED_OF_LIGHT) ** exponent


def los_probability(d_m, obstacle_density_per_m2: float,
                    obstacle_mean_length_m: float):
    """Probability that a link of length d is unobstructed."""
    if np.any(np.asarray(d_m) < 0.0):
        raise ValueError("distance must be nonnegative")
    return np.exp(-2.0 * obstacle_density_per_m2 * obstacle_mean_length_m * d_m / np.pi)


def statistical_loss_mix(d_m, carrier_hz: float, band: str,
                         config: NetworkConfig):
    """Expected inverse loss P_LOS/L_LOS + P_NLOS/L_NLOS at distance d."""
    p_los = los_probability(d_m, config.obstacle_density_per_m2, config.obstacle_mean_length_m)
    l_los = path_loss(d_m, carrier_hz, config.ple.exponent(band, True))
    l_nlos = path_loss(d_m, carrier_hz, config.ple.exponent(band, False))
    return p_los / l_los + (1.0 - p_los) / l_nlos


def beam_alignment_time_us(bs: BaseStation, user_antenna: Antenna,
                           pilot_time_us: float) -> float:
    """Microseconds spent sweeping pilot beams before a link can carry data."""
    if bs.kind == MACRO:
        return 0.0
    if bs.antenna.main_beam_deg <= 0.0 or user_antenna.main_beam_deg <= 0.0:
        raise ValueError("beam widths must be positive")
    sweeps_bs = math.ceil(bs.antenna.sector_deg / bs.antenna.main_beam_deg)
    sweeps_ue = math.ceil(user_antenna.sector_deg / user_antenna.main_beam_deg)
    return sweeps_bs * sweeps_ue * pilot_time_us


def sinr(p_tx_w: float, g_tx: float, g_rx: float, loss_linear: float,
         interference_w: float, bandwidth_hz: float, noise_psd_w_hz: float) -> float:
    """Signal to interference plus noise ratio of one link in one subslot."""
    if bandwidth_hz <= 0.0:
        raise ValueError("bandwidth must be positive")
    return (p_tx_w * g_tx * g_rx / loss_linear) / (
        interference_w + bandwidth_hz * noise_psd_w_hz
    )


def instantaneous_rate(sinr_value: float, bandwidth_hz: float) -> float:
    """Shannon rate of one subslot, bps."""
    return bandwidth_hz * math.log2(1.0 + sinr_value)


@dataclass(frozen=True)
class LinkSample:
    """Realized channel between two entities for one slot (reciprocal)."""

    a: tuple
    b: tuple
    los: bool
    distance_m: float
    path_loss_linear: float


class ChannelState:
    """Per-slot channel realization with one LOS draw per unordered pair.

    Schedulers never see this object: decisions are made on statistical
    channel knowledge only, the realization is sampled afterwards.
    """

    def __init__(self, config: NetworkConfig, positions: dict, rng: np.random.Generator):
        self._config = config
        self._positions = positions
        self._rng = rng
        self._los: dict[tuple, bool] = {}
        self._dist: dict[tuple, float] = {}
        self._loss: dict[tuple, float] = {}

    def _pair(self, a: tuple, b: tuple) -> tuple:
        return (a, b) if a <= b else (b, a)

    def distance(self, a: tuple, b: tuple) -> float:
        key = self._pair(a, b)
        d = self._dist.get(key)
        if d is None:
            pa, pb = self._positions[a], self._positions[b]
            d = float(math.hypot(pa[0] - pb[0], pa[1] - pb[1]))
            self._dist[key] = d
        return d

    def los(self, a: tuple, b: tuple) -> bool:
        key = self._pair(a, b)
        state = self._los.get(key)
        if state is None:
            p = los_probability(
                self.distance(a, b),
                self._config.obstacle_density_per_m2,
                self._config.obstacle_mean_length_m,
            )
            state = bool(self._rng.random() < p)
            self._los[key] = state
        return state

    def path_loss(self, a: tuple, b: tuple, band: str, carrier_hz: float) -> float:
        key = (*self._pair(a, b), band)
        loss = self._loss.get(key)
        if loss is None:
            exponent = self._config.ple.exponent(band, self.los(a, b))
            loss = path_loss(self.distance(a, b), carrier_hz, exponent)
            self._loss[key] = loss
        return loss

    def sample(self, a: tuple, b: tuple, band: str, carrier_hz: float) -> LinkSample:
        key = self._pair(a, b)
        return LinkSample(
            a=key[0],
            b=key[1],
            los=self.los(a, b),
            distance_m=self.distance(a, b),
            path_loss_linear=self.path_loss(a, b, band, carrier_hz),
        )


def _unit(vec: np.ndarray) -> Optional[np.ndarray]:
    norm = math.hypot(vec[0], vec[1])
    if norm < 1e-12:
        return None
    return vec / norm


def angle_deg(u: Optional[np.ndarray], v: Optional[np.ndarray]) -> float:
    """Angle between two directions in degrees; degenerate vectors count as aligned."""
    if u is None or v is None:
        return 0.0
    dot = float(np.clip(u[0] * v[0] + u[1] * v[1], -1.0, 1.0))
    return math.degrees(math.acos(dot))


class GainContext:
    """Per-slot beam geometry derived from a decision.

    Holds the active link map, each pico station's boresight per occupied
    subchannel (toward its served user) and each linked user's boresight
    (toward its serving station). Rebuilt every slot.
    """

    def __init__(self, config: NetworkConfig, users: dict[int, UserState],
                 decision: Decision):
        self.config = config
        self.users = users
        self.switch_points = dict(decision.switch_points)
        self.positions: dict[tuple, np.ndarray] = {}
        for bs in config.mbs_list + config.pbs_list:
            self.positions[("bs", bs.id)] = bs.position_arr
        for uid, user in users.items():
            self.positions[("ue", uid)] = np.asarray(user.position, dtype=float)

        self.user_link: dict[int, tuple[int, int]] = dict(decision.association)
        self.bs_serving: dict[tuple[int, int], int] = {}
        self.links_by_channel: dict[tuple[str, int], list[tuple[int, int]]] = {}
        self.user_boresight: dict[int, Optional[np.ndarray]] = {}
        self.bs_boresight: dict[tuple[int, int], Optional[np.ndarray]] = {}
        for uid, (bs_id, chan) in decision.association.items():
            bs = config.bs(bs_id)
            self.bs_serving[(bs_id, chan)] = uid
            self.links_by_channel.setdefault((bs.band, chan), []).append((bs_id, uid))
            to_user = self.positions[("ue", uid)] - self.positions[("bs", bs_id)]
            self.user_boresight[uid] = _unit(-to_user)
            self.bs_boresight[(bs_id, chan)] = _unit(to_user)
        for links in self.links_by_channel.values():
            links.sort()

    def direction_to(self, src: tuple, dst: tuple) -> Optional[np.ndarray]:
        return _unit(self.positions[dst] - self.positions[src])


def antenna_gain(ctx: GainContext, tx: tuple, rx: tuple, band: str, chan: int) -> float:
    """Antenna gain of entity ``tx`` in the direction of ``rx`` on one subchannel.

    Sub-6 GHz entities radiate and receive omnidirectionally (gain 1). A
    mmWave entity contributes its directivity only when it is active on the
    subchannel and the counterpart falls inside its main beam; side beams are
    ignored (gain 0). Entities without an antenna for the band contribute 0.
    """
    kind, ident = tx
    if kind == "bs":
        bs = ctx.config.bs(ident)
        if bs.band != band:
            return 0.0
        if bs.kind == MACRO:
            return 1.0 if 0 <= chan < bs.subchannel_count else 0.0
        served = ctx.bs_serving.get((ident, chan))
        if served is None:
            return 0.0
        boresight = ctx.bs_boresight[(ident, chan)]
        if angle_deg(boresight, ctx.direction_to(tx, rx)) < bs.antenna.main_beam_deg / 2.0:
            return bs.antenna.directivity_linear
        return 0.0

    link = ctx.user_link.get(ident)
    if link is None:
        return 0.0
    serving_band = ctx.config.bs(link[0]).band
    if serving_band != band:
        return 0.0
    if band == MACRO:
        return 1.0
    if link[1] != chan:
        return 0.0
    user = ctx.users[ident]
    boresight = ctx.user_boresight[ident]
    if angle_deg(boresight, ctx.direction_to(tx, rx)) < user.antenna.main_beam_deg / 2.0:
        return user.antenna.directivity_linear
    return 0.0


def _tx_power_w(ctx: GainContext, entity: tuple) -> float:
    kind, ident = entity
    if kind == "bs":
        return ctx.config.bs(ident).tx_power_w
    return ctx.users[ident].tx_power_w


def interference_term(ctx: GainContext, channel: ChannelState, tx: tuple, rx: tuple,
                      band: str, chan: int, carrier_hz: float,
                      cache: Optional[dict] = None) -> float:
    """Received interference power P_tx * g_tx * g_rx / L, watts."""
    if cache is not None:
        key = (tx, rx, band, chan)
        hit = cache.get(key)
        if hit is not None:
            return hit
    g_tx = antenna_gain(ctx, tx, rx, band, chan)
    if g_tx == 0.0:
        value = 0.0
    else:
        g_rx = antenna_gain(ctx, rx, tx, band, chan)
        if g_rx == 0.0:
            value = 0.0
        else:
            loss = channel.path_loss(tx, rx, band, carrier_hz)
            value = _tx_power_w(ctx, tx) * g_tx * g_rx / loss
    if cache is not None:
        cache[key] = value
    return value


def subslot_interference(ctx: GainContext, channel: ChannelState, victim_user: int,
                         tau: int, direction: str,
                         cache: Optional[dict] = None) -> float:
    """Interference hitting the victim link's receiver in subslot ``tau``.

    Every other active link on the same subchannel contributes: its user
    while that link is still uplink (tau <= its switch point), its station
    afterwards.
    """
    bs_id, chan = ctx.user_link[victim_user]
    bs = ctx.config.bs(bs_id)
    rx = ("bs", bs_id) if direction == UPLINK else ("ue", victim_user)
    total = 0.0
    for other_bs, other_user in ctx.links_by_channel.get((bs.band, chan), ()):
        if other_user == victim_user:
            continue
        if tau <= ctx.switch_points[other_bs]:
            tx = ("ue", other_user)
        else:
            tx = ("bs", other_bs)
        total += interference_term(ctx, channel, tx, rx, bs.band, chan,
                                   bs.carrier_hz, cache)
    return total


@dataclass(frozen=True)
class SubslotSchedule:
    """Uplink/downlink direction of each station's subslots within a slot."""

    switch_points: dict[int, int]
    n_subslots: int

    def direction(self, bs_id: int, tau: int) -> str:
        if not (1 <= tau <= self.n_subslots):
            raise ValueError(f"subslot {tau} outside 1..{self.n_subslots}")
        return UPLINK if tau <= self.switch_points[bs_id] else DOWNLINK


def perceived_rates(ctx: GainContext, channel: ChannelState, user_id: int,
                    cache: Optional[dict] = None) -> tuple[float, float]:
    """Beam-overhead-scaled subslot-average uplink and downlink rates, bps."""
    cfg = ctx.config
    bs_id, chan = ctx.user_link[user_id]
    bs = cfg.bs(bs_id)
    user = ctx.users[user_id]
    align_us = beam_alignment_time_us(bs, user.antenna, cfg.pilot_time_us)
    overhead = 1.0 - align_us / cfg.slot_duration_us
    if overhead <= 0.0:
        return (0.0, 0.0)

    ue, bskey = ("ue", user_id), ("bs", bs_id)
    g_up = antenna_gain(ctx, ue, bskey, bs.band, chan)
    g_down = antenna_gain(ctx, bskey, ue, bs.band, chan)
    loss = channel.path_loss(ue, bskey, bs.band, bs.carrier_hz)
    noise = cfg.noise_psd_w_hz
    n_switch = ctx.switch_points[bs_id]

    ul_sum = 0.0
    dl_sum = 0.0
    for tau in range(1, cfg.n_subslots + 1):
        if tau <= n_switch:
            interf = subslot_interference(ctx, channel, user_id, tau, UPLINK, cache)
            gamma = sinr(user.tx_power_w, g_up, g_down, loss, interf,
                         bs.subchannel_bandwidth_hz, noise)
            ul_sum += instantaneous_rate(gamma, bs.subchannel_bandwidth_hz)
        else:
            interf = subslot_interference(ctx, channel, user_id, tau, DOWNLINK, cache)
            gamma = sinr(bs.tx_power_w, g_down, g_up, loss, interf,
                         bs.subchannel_bandwidth_hz, noise)
            dl_sum += instantaneous_rate(gamma, bs.subchannel_bandwidth_hz)
    scale = overhead / cfg.n_subslots
    return (scale * ul_sum, scale * dl_sum)
