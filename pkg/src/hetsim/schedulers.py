"""Per-slot schedulers: the matching+clustering pipeline and the baselines.

Every scheduler consumes a SchedulerView (statistical knowledge only — the
slot's channel realization does not exist yet) and emits a Decision. The
engine calls ``observe`` afterwards so learning schemes can digest realized
rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .association import ActiveLink, PseudoRateTable, SINR_VARIANT, SNR_VARIANT, associate
from .baselines import (
    BanditState,
    baseline_switch,
    first_idle_subchannel,
    lcuas_associate,
    sdmab_associate,
)
from .model import Decision, NetworkConfig, UserState
from .subchannel import allocate, build_interference_graph, pairwise_interference_matrix
from .switching import ROUND_HALF_UP, select_switch_points

ALGORITHMS = ("omsc", "omsc-sinr", "lcuas", "lcuas-sc", "sdmab", "sdmab-sc")


@dataclass(frozen=True)
class SchedulerView:
    """What a scheduler may see when deciding one slot."""

    config: NetworkConfig
    users: dict[int, UserState]
    reassoc_ids: tuple[int, ...]
    prev_links: tuple[ActiveLink, ...]
    slot_index: int


def _merge_association(view: SchedulerView,
                       new_assoc: dict[int, Optional[int]]) -> dict[int, int]:
    """Ongoing links plus this slot's fresh assignments, user id -> station id."""
    reassoc = set(view.reassoc_ids)
    merged: dict[int, int] = {}
    for uid, user in view.users.items():
        if uid in reassoc:
            bs_id = new_assoc.get(uid)
            if bs_id is not None:
                merged[uid] = bs_id
        elif user.assoc is not None:
            merged[uid] = user.assoc.bs_id
    return merged


def _ongoing_channels(view: SchedulerView) -> dict[int, int]:
    reassoc = set(view.reassoc_ids)
    return {
        uid: user.assoc.subchannel
        for uid, user in view.users.items()
        if user.assoc is not None and uid not in reassoc
    }


def _first_idle_channels(view: SchedulerView,
                         bs_assoc: dict[int, int]) -> dict[int, tuple[int, int]]:
    """Ongoing users keep their subchannel, new ones take the lowest idle index."""
    locks = _ongoing_channels(view)
    occupied: dict[int, set[int]] = {}
    assoc: dict[int, tuple[int, int]] = {}
    for uid in sorted(bs_assoc):
        if uid in locks:
            bs_id = bs_assoc[uid]
            assoc[uid] = (bs_id, locks[uid])
            occupied.setdefault(bs_id, set()).add(locks[uid])
    for uid in sorted(bs_assoc):
        if uid in locks:
            continue
        bs_id = bs_assoc[uid]
        chan = first_idle_subchannel(bs_id, view.config, occupied.setdefault(bs_id, set()))
        occupied[bs_id].add(chan)
        assoc[uid] = (bs_id, chan)
    return assoc


def _scsa_channels(
    view: SchedulerView,
    bs_assoc: dict[int, int],
    switch_points: dict[int, int],
    rng: np.random.Generator,
    diagnostics: Optional[list] = None,
) -> dict[int, tuple[int, int]]:
    """Cluster each band's interference graph into subchannels."""
    config = view.config
    locks = _ongoing_channels(view)
    assoc: dict[int, tuple[int, int]] = {}
    for band_stations in (config.mbs_list, config.pbs_list):
        if not band_stations:
            continue
        band = band_stations[0].band
        user_ids = sorted(uid for uid, bs_id in bs_assoc.items()
                          if config.bs(bs_id).band == band)
        if not user_ids:
            continue
        serving = {uid: bs_assoc[uid] for uid in user_ids}
        band_locks = {uid: locks[uid] for uid in user_ids if uid in locks}
        weights, conflict = pairwise_interference_matrix(
            config, band, user_ids, view.users, serving, switch_points, band_locks
        )
        graph = build_interference_graph(
            band, band_stations[0].subchannel_count, user_ids, weights, conflict,
            band_locks,
        )
        channels = allocate(graph, rng, diagnostics)
        for uid in user_ids:
            assoc[uid] = (serving[uid], channels[uid])
    return assoc


class OmscScheduler:
    """Matching-based association, balanced switching points, clustered channels."""

    def __init__(self, rng: np.random.Generator, variant: str = SNR_VARIANT,
                 rounding: str = ROUND_HALF_UP, collect_diagnostics: bool = False):
        if variant not in (SNR_VARIANT, SINR_VARIANT):
            raise ValueError(f"unknown variant {variant!r}")
        self.variant = variant
        self.rounding = rounding
        self._rng = rng
        self.diagnostics: Optional[list] = [] if collect_diagnostics else None

    def decide(self, view: SchedulerView) -> Decision:
        config = view.config
        table = PseudoRateTable(config, view.users, self.variant, view.prev_links)
        fresh = associate(config, view.users, view.reassoc_ids, self.variant,
                          view.prev_links, table=table)
        bs_assoc = _merge_association(view, fresh)

        pseudo: dict[int, tuple[float, float]] = {}
        by_bs: dict[int, list[int]] = {}
        for uid, bs_id in bs_assoc.items():
            by_bs.setdefault(bs_id, []).append(uid)
        for bs_id in sorted(by_bs):
            uids = sorted(by_bs[bs_id])
            r_ul, r_dl = table.rates_for(config.bs(bs_id), uids)
            for i, uid in enumerate(uids):
                pseudo[uid] = (float(r_ul[i]), float(r_dl[i]))
        demands = {uid: view.users[uid].demand for uid in bs_assoc}
        switch_points = select_switch_points(bs_assoc, pseudo, demands, config,
                                             self.rounding)
        association = _scsa_channels(view, bs_assoc, switch_points, self._rng,
                                     self.diagnostics)
        return Decision(association=association, switch_points=switch_points,
                        slot_index=view.slot_index)

    def observe(self, view: SchedulerView, decision: Decision,
                realized: dict[int, tuple[float, float]]) -> None:
        pass


class LcuasScheduler:
    """Least-connected-first baseline; midpoint switching, first-idle channels
    (or clustered channels for the -sc variant)."""

    def __init__(self, rng: np.random.Generator, use_clustering: bool = False):
        self.use_clustering = use_clustering
        self._rng = rng

    def decide(self, view: SchedulerView) -> Decision:
        config = view.config
        table = PseudoRateTable(config, view.users, SNR_VARIANT, view.prev_links)
        fresh = lcuas_associate(config, view.users, view.reassoc_ids, table)
        bs_assoc = _merge_association(view, fresh)
        switch_points = baseline_switch(config)
        if self.use_clustering:
            association = _scsa_channels(view, bs_assoc, switch_points, self._rng)
        else:
            association = _first_idle_channels(view, bs_assoc)
        return Decision(association=association, switch_points=switch_points,
                        slot_index=view.slot_index)

    def observe(self, view: SchedulerView, decision: Decision,
                realized: dict[int, tuple[float, float]]) -> None:
        pass


class SdmabScheduler:
    """Bandit baseline: UCB proposals vs. the historically best scheme."""

    def __init__(self, rng: np.random.Generator, use_clustering: bool = False,
                 exploration: float = math.sqrt(2.0)):
        self.use_clustering = use_clustering
        self.exploration = exploration
        self._rng = rng
        self.bandits: dict[int, BanditState] = {}
        self.stored_best: dict[int, int] = {}
        self.stored_objective: float = -math.inf

    def decide(self, view: SchedulerView) -> Decision:
        config = view.config
        table = PseudoRateTable(config, view.users, SNR_VARIANT, view.prev_links)
        for uid in view.users:
            self.bandits.setdefault(uid, BanditState())

        mid = baseline_switch(config)
        ul_share = next(iter(mid.values())) / config.n_subslots if mid else 0.5

        def objective(scheme: dict[int, Optional[int]]) -> float:
            by_bs: dict[int, list[int]] = {}
            for uid, bs_id in scheme.items():
                if bs_id is not None:
                    by_bs.setdefault(bs_id, []).append(uid)
            total = 0.0
            for bs_id in sorted(by_bs):
                uids = sorted(by_bs[bs_id])
                r_ul, r_dl = table.rates_for(config.bs(bs_id), uids)
                total += float(ul_share * r_ul.sum() + (1.0 - ul_share) * r_dl.sum())
            return total

        scheme, obj = sdmab_associate(config, view.users, view.reassoc_ids,
                                      self.bandits, self.stored_best, objective,
                                      self.exploration, rng=self._rng)
        self.stored_best = {uid: bs_id for uid, bs_id in scheme.items()
                            if bs_id is not None}
        self.stored_objective = obj

        bs_assoc = {uid: bs_id for uid, bs_id in scheme.items() if bs_id is not None}
        if self.use_clustering:
            association = _scsa_channels(view, bs_assoc, mid, self._rng)
        else:
            association = _first_idle_channels(view, bs_assoc)
        return Decision(association=association, switch_points=mid,
                        slot_index=view.slot_index)

    def observe(self, view: SchedulerView, decision: Decision,
                realized: dict[int, tuple[float, float]]) -> None:
        for uid, (bs_id, _chan) in decision.association.items():
            ul, dl = realized.get(uid, (0.0, 0.0))
            demand = view.users[uid].demand
            reward = min(1.0, (ul + dl) / (demand.ul_bps + demand.dl_bps))
            self.bandits[uid].update(bs_id, reward)


def make_scheduler(algo: str, rng: np.random.Generator,
                   collect_diagnostics: bool = False):
    """Instantiate a scheduler by its command-line name."""
    if algo == "omsc":
        return OmscScheduler(rng, SNR_VARIANT, collect_diagnostics=collect_diagnostics)
    if algo == "omsc-sinr":
        return OmscScheduler(rng, SINR_VARIANT, collect_diagnostics=collect_diagnostics)
    if algo == "lcuas":
        return LcuasScheduler(rng, use_clustering=False)
    if algo == "lcuas-sc":
        return LcuasScheduler(rng, use_clustering=True)
    if algo == "sdmab":
        return SdmabScheduler(rng, use_clustering=False)
    if algo == "sdmab-sc":
        return SdmabScheduler(rng, use_clustering=True)
    raise ValueError(f"unknown algorithm {algo!r}; choose from {ALGORITHMS}")
