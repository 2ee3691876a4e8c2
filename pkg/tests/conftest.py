import numpy as np
import pytest

from hetsim.model import (
    Antenna,
    BaseStation,
    Demand,
    LevyParams,
    MACRO,
    NetworkConfig,
    PICO,
    PathLossExponents,
    Rect,
    UserState,
)

PICO_ANTENNA = Antenna(10.0 ** 1.5, 30.0, 90.0)  # 15 dBi, 30 deg
OMNI = Antenna(1.0, 360.0, 360.0)


def make_macro(bs_id: int, pos, channels: int = 18) -> BaseStation:
    return BaseStation(
        id=bs_id, kind=MACRO, position=tuple(pos), carrier_hz=1.9e9,
        subchannel_count=channels, subchannel_bandwidth_hz=1.8e6,
        tx_power_dbm_per_subchannel=43.0, antenna=OMNI,
    )


def make_pico(bs_id: int, pos, channels: int = 3,
              antenna: Antenna = PICO_ANTENNA) -> BaseStation:
    return BaseStation(
        id=bs_id, kind=PICO, position=tuple(pos), carrier_hz=28e9,
        subchannel_count=channels, subchannel_bandwidth_hz=14.4e6,
        tx_power_dbm_per_subchannel=33.0, antenna=antenna,
    )


def make_config(mbs=(), pbs=(), area=Rect(-1000.0, 1000.0, -500.0, 500.0),
                n_subslots=8, obstacle_density=4.4e-4, **kwargs) -> NetworkConfig:
    return NetworkConfig(
        area=area,
        mbs_list=tuple(mbs),
        pbs_list=tuple(pbs),
        n_subslots=n_subslots,
        slot_duration_us=kwargs.get("slot_duration_us", 65535.0),
        pilot_time_us=kwargs.get("pilot_time_us", 20.0),
        obstacle_density_per_m2=obstacle_density,
        obstacle_mean_length_m=kwargs.get("obstacle_mean_length_m", 55.0),
        noise_psd_dbm_hz=kwargs.get("noise_psd_dbm_hz", -174.0),
        ple=kwargs.get("ple", PathLossExponents(2.0, 3.37, 2.55, 5.76)),
        levy=kwargs.get("levy", LevyParams(beta_f=0.5, beta_r=0.5)),
        rng_seed=kwargs.get("rng_seed", 0),
    )


def make_user(uid: int, pos, demand=(1e6, 1e6), antenna: Antenna = PICO_ANTENNA,
              tx_power_dbm: float = 30.0, velocity=(0.0, 0.0)) -> UserState:
    from hetsim.model import Pause

    return UserState(
        id=uid,
        position=np.array(pos, dtype=float),
        velocity=np.array(velocity, dtype=float),
        phase=Pause(remaining_s=1e9),
        demand=Demand(*demand),
        antenna=antenna,
        tx_power_dbm=tx_power_dbm,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def saturated_guard_instance(seed: int):
    """Allocation-quality guard instance: stations at full occupancy.

    This is the regime where the subchannel choice is binding (every feasible
    layout is a set of per-station channel permutations) and where the
    clustering pipeline is expected to stay near the exhaustive optimum.
    Distance-squared decay keeps the weight dynamic range moderate.
    Returns (pairwise weights, conflict mask, channel count).
    """
    gen = np.random.default_rng(seed)
    stations, per = (3, 3) if seed % 2 == 0 else (4, 2)
    n, channels = stations * per, per
    centers = gen.uniform([0.0, 0.0], [600.0, 600.0], (stations, 2))
    pos = np.vstack([c + gen.uniform(-80.0, 80.0, (per, 2)) for c in centers])
    d = np.hypot(*(pos[:, None, :] - pos[None, :, :]).transpose(2, 0, 1))
    np.fill_diagonal(d, 1.0)
    weights = d ** -2.0
    weights = (weights + weights.T) / 2.0
    np.fill_diagonal(weights, 0.0)
    station_of = np.repeat(np.arange(stations), per)
    conflicts = station_of[:, None] == station_of[None, :]
    np.fill_diagonal(conflicts, False)
    weights = weights.copy()
    weights[conflicts] = 0.0
    return weights, conflicts, channels
