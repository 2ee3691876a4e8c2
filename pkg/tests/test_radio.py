import math

import numpy as np
import pytest

from conftest import OMNI, PICO_ANTENNA, make_config, make_macro, make_pico, make_user
from hetsim.model import Decision, SPEED_OF_LIGHT, dbm_to_watts
from hetsim.radio import (
    ChannelState,
    DOWNLINK,
    GainContext,
    SubslotSchedule,
    UPLINK,
    antenna_gain,
    beam_alignment_time_us,
    instantaneous_rate,
    los_probability,
    path_loss,
    perceived_rates,
    sinr,
    statistical_loss_mix,
    subslot_interference,
)

from oracle_formulas import (
    oracle_los_probability,
    oracle_noise_floor_w,
    oracle_path_loss,
)


class TestPathLoss:
    def test_unit_base(self):
        f = SPEED_OF_LIGHT / (8.0 * math.pi)  # base is 1 at d = 2 m
        for n in (1.0, 2.0, 3.37, 5.76):
            assert path_loss(2.0, f, n) == pytest.approx(1.0, rel=1e-12)

    def test_reference_value(self):
        assert path_loss(100.0, 1.9e9, 2.0) == pytest.approx(
            oracle_path_loss(100.0, 1.9e9, 2.0), rel=1e-12)

    def test_monotone_in_exponent(self):
        assert path_loss(100.0, 1.9e9, 3.37) > path_loss(100.0, 1.9e9, 2.0)

    def test_zero_distance_clamped_to_one_meter(self):
        assert path_loss(0.0, 1.9e9, 2.0) == pytest.approx(
            path_loss(1.0, 1.9e9, 2.0), rel=1e-12)

    def test_array_input(self):
        out = path_loss(np.array([10.0, 100.0]), 1.9e9, 2.0)
        assert out.shape == (2,)
        assert out[1] == pytest.approx(oracle_path_loss(100.0, 1.9e9, 2.0), rel=1e-12)


class TestLosProbability:
    def test_zero_distance(self):
        assert los_probability(0.0, 4.4e-4, 55.0) == 1.0

    def test_reference_value(self):
        assert los_probability(100.0, 4.4e-4, 55.0) == pytest.approx(
            oracle_los_probability(100.0, 4.4e-4, 55.0), rel=1e-12)

    def test_monotone_nonincreasing(self):
        ds = np.linspace(0.0, 500.0, 100)
        ps = los_probability(ds, 4.4e-4, 55.0)
        assert np.all(np.diff(ps) <= 0.0)

    def test_negative_distance_rejected(self):
        with pytest.raises(ValueError):
            los_probability(-1.0, 4.4e-4, 55.0)


class TestBeamAlignment:
    def test_macro_is_free(self):
        bs = make_macro(0, (0, 0))
        assert beam_alignment_time_us(bs, PICO_ANTENNA, 20.0) == 0.0

    def test_pico_sweep_counts(self):
        bs = make_pico(1, (0, 0))
        assert beam_alignment_time_us(bs, PICO_ANTENNA, 20.0) == pytest.approx(180.0)
        from hetsim.model import Antenna
        narrow = Antenna(10.0 ** 2.45, 10.0, 90.0)
        bs10 = make_pico(2, (0, 0), antenna=narrow)
        assert beam_alignment_time_us(bs10, narrow, 20.0) == pytest.approx(1620.0)


class TestSinrAndRate:
    def test_unit_sinr_gives_bandwidth(self):
        assert instantaneous_rate(1.0, 1.8e6) == pytest.approx(1.8e6)

    def test_zero_sinr_gives_zero(self):
        assert instantaneous_rate(0.0, 1.8e6) == 0.0

    def test_noise_floor_reference(self):
        floor = 1.8e6 * dbm_to_watts(-174.0)
        assert floor == pytest.approx(oracle_noise_floor_w(1.8e6, -174.0), rel=1e-12)
        gamma = sinr(1.0, 1.0, 1.0, 1e6, 0.0, 1.8e6, dbm_to_watts(-174.0))
        assert gamma == pytest.approx(1e-6 / floor, rel=1e-12)

    def test_bandwidth_must_be_positive(self):
        with pytest.raises(ValueError):
            sinr(1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1e-20)


def _pico_pair_context(theta_victim_deg: float, beam_deg: float = 30.0):
    """One pico serving a user at +x; a victim user placed at an angle off that
    boresight, served by a second pico far away on the victim's channel."""
    from hetsim.model import Antenna

    antenna = Antenna(10.0 ** 1.5, beam_deg, 90.0)
    bs_a = make_pico(0, (0.0, 0.0), antenna=antenna)
    bs_b = make_pico(1, (900.0, 450.0), antenna=antenna)
    config = make_config(pbs=[bs_a, bs_b])
    angle = math.radians(theta_victim_deg)
    served = make_user(0, (100.0, 0.0), antenna=antenna)
    victim = make_user(1, (200.0 * math.cos(angle), 200.0 * math.sin(angle)),
                       antenna=antenna)
    users = {0: served, 1: victim}
    decision = Decision(association={0: (0, 1), 1: (1, 1)},
                        switch_points={0: 4, 1: 4}, slot_index=0)
    return config, users, decision


class TestAntennaGain:
    def test_macro_to_user_is_unity(self):
        config = make_config(mbs=[make_macro(0, (0, 0))])
        users = {1: make_user(1, (50.0, 0.0))}
        decision = Decision(association={1: (0, 2)}, switch_points={0: 4},
                            slot_index=0)
        ctx = GainContext(config, users, decision)
        assert antenna_gain(ctx, ("bs", 0), ("ue", 1), "macro", 2) == 1.0
        assert antenna_gain(ctx, ("ue", 1), ("bs", 0), "macro", 2) == 1.0

    def test_pico_main_beam_hits_and_misses(self):
        config, users, decision = _pico_pair_context(10.0)
        ctx = GainContext(config, users, decision)
        assert antenna_gain(ctx, ("bs", 0), ("ue", 1), "pico", 1) == pytest.approx(
            10.0 ** 1.5)
        config, users, decision = _pico_pair_context(20.0)
        ctx = GainContext(config, users, decision)
        assert antenna_gain(ctx, ("bs", 0), ("ue", 1), "pico", 1) == 0.0

    def test_wrong_band_gives_zero(self):
        config, users, decision = _pico_pair_context(10.0)
        ctx = GainContext(config, users, decision)
        assert antenna_gain(ctx, ("bs", 0), ("ue", 1), "macro", 1) == 0.0

    def test_inactive_channel_gives_zero(self):
        config, users, decision = _pico_pair_context(10.0)
        ctx = GainContext(config, users, decision)
        assert antenna_gain(ctx, ("bs", 0), ("ue", 1), "pico", 0) == 0.0

    def test_gain_values_are_discrete(self, rng):
        config = make_config(mbs=[make_macro(0, (-100, 0))],
                             pbs=[make_pico(1, (50, 50)), make_pico(2, (120, -40))])
        users = {i: make_user(i, rng.uniform(-200, 200, 2)) for i in range(5)}
        decision = Decision(
            association={0: (0, 0), 1: (0, 1), 2: (1, 0), 3: (2, 0), 4: (2, 1)},
            switch_points={0: 4, 1: 3, 2: 5}, slot_index=0)
        ctx = GainContext(config, users, decision)
        allowed = {0.0, 1.0, 10.0 ** 1.5}
        for tx in [("bs", 0), ("bs", 1), ("bs", 2)] + [("ue", i) for i in range(5)]:
            for rx_id in range(5):
                for band, chan in (("macro", 0), ("macro", 1), ("pico", 0),
                                   ("pico", 1)):
                    g = antenna_gain(ctx, tx, ("ue", rx_id), band, chan)
                    assert g in allowed


class TestChannelState:
    def test_los_reciprocal_and_cached(self, rng):
        config = make_config(mbs=[make_macro(0, (0, 0))])
        positions = {("bs", 0): np.zeros(2), ("ue", 1): np.array([120.0, 0.0])}
        channel = ChannelState(config, positions, rng)
        first = channel.los(("bs", 0), ("ue", 1))
        assert channel.los(("ue", 1), ("bs", 0)) == first
        assert channel.path_loss(("bs", 0), ("ue", 1), "macro", 1.9e9) == \
            channel.path_loss(("ue", 1), ("bs", 0), "macro", 1.9e9)

    def test_sample_fields(self, rng):
        config = make_config(mbs=[make_macro(0, (0, 0))])
        positions = {("bs", 0): np.zeros(2), ("ue", 1): np.array([30.0, 40.0])}
        channel = ChannelState(config, positions, rng)
        sample = channel.sample(("bs", 0), ("ue", 1), "macro", 1.9e9)
        assert sample.distance_m == pytest.approx(50.0)
        exponent = 2.0 if sample.los else 3.37
        assert sample.path_loss_linear == pytest.approx(
            oracle_path_loss(50.0, 1.9e9, exponent), rel=1e-12)


class TestSubslotInterference:
    def test_single_link_sees_nothing(self, rng):
        config = make_config(mbs=[make_macro(0, (0, 0))])
        users = {1: make_user(1, (100.0, 0.0))}
        decision = Decision(association={1: (0, 0)}, switch_points={0: 4},
                            slot_index=0)
        ctx = GainContext(config, users, decision)
        channel = ChannelState(config, ctx.positions, rng)
        for tau in range(1, 9):
            direction = UPLINK if tau <= 4 else DOWNLINK
            assert subslot_interference(ctx, channel, 1, tau, direction) == 0.0

    def test_beams_apart_do_not_interfere(self, rng):
        # two pico links pointing away from each other on the same channel
        a = make_pico(0, (0.0, 0.0))
        b = make_pico(1, (1000.0, 0.0))
        config = make_config(pbs=[a, b])
        users = {0: make_user(0, (-100.0, 0.0)), 1: make_user(1, (1100.0, 0.0))}
        decision = Decision(association={0: (0, 0), 1: (1, 0)},
                            switch_points={0: 4, 1: 4}, slot_index=0)
        ctx = GainContext(config, users, decision)
        channel = ChannelState(config, ctx.positions, rng)
        assert subslot_interference(ctx, channel, 0, 5, DOWNLINK) == 0.0

    def test_macro_uplink_interferer_hand_value(self, rng):
        m0 = make_macro(0, (-500.0, 0.0))
        m1 = make_macro(1, (500.0, 0.0))
        config = make_config(mbs=[m0, m1])
        users = {0: make_user(0, (-400.0, 0.0)), 1: make_user(1, (300.0, 0.0))}
        decision = Decision(association={0: (0, 7), 1: (1, 7)},
                            switch_points={0: 2, 1: 6}, slot_index=0)
        ctx = GainContext(config, users, decision)
        channel = ChannelState(config, ctx.positions, rng)
        # victim 0 in downlink at tau=5 (its switch is 2); link 1 is uplink
        # (switch 6), so the interferer is user 1 at gain 1
        loss = channel.path_loss(("ue", 1), ("ue", 0), "macro", 1.9e9)
        expected = dbm_to_watts(30.0) / loss
        got = subslot_interference(ctx, channel, 0, 5, DOWNLINK)
        assert got == pytest.approx(expected, rel=1e-12)
        # after station 1 flips to downlink, the interferer is the station
        loss_b = channel.path_loss(("bs", 1), ("ue", 0), "macro", 1.9e9)
        expected_b = dbm_to_watts(43.0) / loss_b
        assert subslot_interference(ctx, channel, 0, 7, DOWNLINK) == pytest.approx(
            expected_b, rel=1e-12)

    def test_removing_interferer_never_helps_them(self, rng):
        # monotonicity: dropping a link cannot raise anyone's interference
        config = make_config(
            mbs=[make_macro(0, (-200, 0)), make_macro(1, (200, 0))])
        for trial in range(20):
            local = np.random.default_rng(trial)
            users = {i: make_user(i, local.uniform(-400, 400, 2)) for i in range(4)}
            decision_all = Decision(
                association={0: (0, 0), 1: (1, 0), 2: (0, 1), 3: (1, 1)},
                switch_points={0: 3, 1: 5}, slot_index=0)
            decision_less = Decision(
                association={0: (0, 0), 2: (0, 1), 3: (1, 1)},
                switch_points={0: 3, 1: 5}, slot_index=0)
            ctx_all = GainContext(config, users, decision_all)
            ctx_less = GainContext(config, users, decision_less)
            channel = ChannelState(config, ctx_all.positions, local)
            for tau, direction in ((1, UPLINK), (4, DOWNLINK), (8, DOWNLINK)):
                i_all = subslot_interference(ctx_all, channel, 0, tau, direction)
                i_less = subslot_interference(ctx_less, channel, 0, tau, direction)
                assert i_less <= i_all + 1e-30


class TestPerceivedRates:
    def test_symmetric_powers_split_evenly(self, rng):
        # equal transmit powers, no interferers: ul and dl split the slot
        m0 = make_macro(0, (0.0, 0.0))
        config = make_config(mbs=[m0])
        user = make_user(1, (150.0, 0.0), tx_power_dbm=43.0)
        users = {1: user}
        decision = Decision(association={1: (0, 0)}, switch_points={0: 4},
                            slot_index=0)
        ctx = GainContext(config, users, decision)
        channel = ChannelState(config, ctx.positions, rng)
        ul, dl = perceived_rates(ctx, channel, 1)
        assert ul == pytest.approx(dl, rel=1e-12)
        loss = channel.path_loss(("bs", 0), ("ue", 1), "macro", 1.9e9)
        gamma = sinr(dbm_to_watts(43.0), 1.0, 1.0, loss, 0.0, 1.8e6,
                     config.noise_psd_w_hz)
        expected = instantaneous_rate(gamma, 1.8e6) / 2.0
        assert ul == pytest.approx(expected, rel=1e-12)

    def test_macro_has_no_alignment_overhead(self, rng):
        config = make_config(mbs=[make_macro(0, (0.0, 0.0))])
        users = {1: make_user(1, (100.0, 0.0))}
        decision = Decision(association={1: (0, 0)}, switch_points={0: 4},
                            slot_index=0)
        ctx = GainContext(config, users, decision)
        channel = ChannelState(config, ctx.positions, rng)
        ul, dl = perceived_rates(ctx, channel, 1)
        loss = channel.path_loss(("bs", 0), ("ue", 1), "macro", 1.9e9)
        g_ul = sinr(dbm_to_watts(30.0), 1.0, 1.0, loss, 0.0, 1.8e6,
                    config.noise_psd_w_hz)
        assert ul == pytest.approx(instantaneous_rate(g_ul, 1.8e6) / 2.0, rel=1e-12)

    def test_pico_alignment_overhead_factor(self, rng):
        config = make_config(pbs=[make_pico(0, (0.0, 0.0))])
        users = {1: make_user(1, (50.0, 0.0))}
        decision = Decision(association={1: (0, 0)}, switch_points={0: 4},
                            slot_index=0)
        ctx = GainContext(config, users, decision)
        channel = ChannelState(config, ctx.positions, rng)
        ul, dl = perceived_rates(ctx, channel, 1)
        factor = 1.0 - 180.0 / 65535.0
        loss = channel.path_loss(("bs", 0), ("ue", 1), "pico", 28e9)
        g_dl = sinr(dbm_to_watts(33.0), 10.0 ** 1.5, 10.0 ** 1.5, loss, 0.0, 14.4e6,
                    config.noise_psd_w_hz)
        expected_dl = factor * instantaneous_rate(g_dl, 14.4e6) / 2.0
        assert dl == pytest.approx(expected_dl, rel=1e-12)
        assert factor == pytest.approx(1.0 - 180.0 / 65535.0)

    def test_rates_nonnegative_and_bounded(self, rng):
        config = make_config(mbs=[make_macro(0, (0, 0))],
                             pbs=[make_pico(1, (100, 100))])
        for trial in range(10):
            local = np.random.default_rng(trial + 50)
            users = {i: make_user(i, local.uniform(-300, 300, 2)) for i in range(3)}
            decision = Decision(association={0: (0, 0), 1: (0, 1), 2: (1, 0)},
                                switch_points={0: 4, 1: 6}, slot_index=0)
            ctx = GainContext(config, users, decision)
            channel = ChannelState(config, ctx.positions, local)
            cache = {}
            for uid in (0, 1, 2):
                ul, dl = perceived_rates(ctx, channel, uid, cache)
                assert ul >= 0.0 and dl >= 0.0


class TestSubslotSchedule:
    def test_direction_split(self):
        sched = SubslotSchedule(switch_points={0: 3}, n_subslots=8)
        assert [sched.direction(0, t) for t in range(1, 9)] == [
            UPLINK, UPLINK, UPLINK, DOWNLINK, DOWNLINK, DOWNLINK, DOWNLINK, DOWNLINK]
        with pytest.raises(ValueError):
            sched.direction(0, 0)


def test_statistical_loss_mix_matches_pieces():
    config = make_config(mbs=[make_macro(0, (0, 0))])
    d = 140.0
    p = los_probability(d, 4.4e-4, 55.0)
    expected = (p / path_loss(d, 1.9e9, 2.0)
                + (1.0 - p) / path_loss(d, 1.9e9, 3.37))
    assert statistical_loss_mix(d, 1.9e9, "macro", config) == pytest.approx(
        expected, rel=1e-12)
