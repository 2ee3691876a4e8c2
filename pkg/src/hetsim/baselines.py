"""Comparison association schemes and the fixed switching/channel rules.

LCUAS: users with the fewest serviceable stations associate first, each to
the least-loaded serviceable station. SDMAB: every user keeps a per-station
bandit and proposes the arm with the best upper confidence bound; a central
controller executes whichever of the proposal and the historically best
scheme scores higher on the current snapshot. Both run with the midpoint
switching rule; channels come from first-idle assignment unless the
clustering allocator is wired in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

from .association import PseudoRateTable
from .model import NetworkConfig, UserState


def baseline_switch(config: NetworkConfig) -> dict[int, int]:
    """Every station switches at the slot midpoint."""
    mid = min(config.n_subslots - 1, max(1, config.n_subslots // 2))
    return {bs_id: mid for bs_id in config.stations}


def first_idle_subchannel(bs_id: int, config: NetworkConfig, occupied: set[int]) -> int:
    """Lowest-index free subchannel of one station."""
    for chan in range(config.bs(bs_id).subchannel_count):
        if chan not in occupied:
            return chan
    raise RuntimeError(f"station {bs_id} has no idle subchannel")


def _free_seats(config: NetworkConfig, users: Mapping[int, UserState],
                reassoc: set[int]) -> dict[int, int]:
    free = {bs_id: bs.subchannel_count for bs_id, bs in config.stations.items()}
    for uid, user in users.items():
        if user.assoc is not None and uid not in reassoc:
            free[user.assoc.bs_id] -= 1
    return free


def lcuas_associate(
    config: NetworkConfig,
    users: Mapping[int, UserState],
    reassoc_ids: Sequence[int],
    table: PseudoRateTable,
) -> dict[int, Optional[int]]:
    """Least-connected-first, lightest-load association.

    A station is available to a user when it still has a free seat and the
    optimistic connection quality covers the demand in both directions
    (quality >= 1). Users with no available station stay unassociated.
    """
    request_ids = sorted(reassoc_ids)
    reassoc = set(request_ids)
    free = _free_seats(config, users, reassoc)
    load: dict[int, int] = {bs_id: 0 for bs_id in config.stations}
    for uid, user in users.items():
        if user.assoc is not None and uid not in reassoc:
            load[user.assoc.bs_id] += 1

    stations = sorted(config.stations)
    serviceable: dict[int, list[int]] = {uid: [] for uid in request_ids}
    for bs_id in stations:
        bs = config.bs(bs_id)
        r_ul, r_dl = table.rates_for(bs, request_ids)
        for i, uid in enumerate(request_ids):
            demand = users[uid].demand
            if r_ul[i] >= demand.ul_bps and r_dl[i] >= demand.dl_bps:
                serviceable[uid].append(bs_id)

    order = sorted(request_ids, key=lambda uid: (len(serviceable[uid]), uid))
    result: dict[int, Optional[int]] = {}
    for uid in order:
        options = [bs_id for bs_id in serviceable[uid] if free[bs_id] > 0]
        if not options:
            result[uid] = None
            continue
        pick = min(options, key=lambda bs_id: (load[bs_id], bs_id))
        result[uid] = pick
        free[pick] -= 1
        load[pick] += 1
    return result


@dataclass
class Arm:
    pulls: int = 0
    mean_reward: float = 0.0


@dataclass
class BanditState:
    """One user's per-station bandit."""

    arms: dict[int, Arm] = field(default_factory=dict)
    total_pulls: int = 0

    def ucb(self, bs_id: int, exploration: float) -> float:
        arm = self.arms.get(bs_id)
        if arm is None or arm.pulls == 0:
            return math.inf
        bonus = exploration * math.sqrt(math.log(max(self.total_pulls, 1)) / arm.pulls)
        return arm.mean_reward + bonus

    def update(self, bs_id: int, reward: float) -> None:
        arm = self.arms.setdefault(bs_id, Arm())
        arm.pulls += 1
        self.total_pulls += 1
        arm.mean_reward += (reward - arm.mean_reward) / arm.pulls


def sdmab_associate(
    config: NetworkConfig,
    users: Mapping[int, UserState],
    reassoc_ids: Sequence[int],
    bandits: Mapping[int, BanditState],
    stored_best: Mapping[int, int],
    objective_fn: Callable[[dict[int, Optional[int]]], float],
    exploration: float = math.sqrt(2.0),
    rng: Optional[np.random.Generator] = None,
) -> tuple[dict[int, Optional[int]], float]:
    """UCB proposals arbitrated against the historically best scheme.

    Builds the proposal scheme (per-user best UCB arm; unpulled arms first,
    drawn uniformly from the seeded stream so cold starts spread over the
    stations instead of herding; seats capped in ascending user order),
    rebuilds the stored scheme against current seats, evaluates both with
    ``objective_fn`` on the full association map and returns the winner plus
    its objective.
    """
    request_ids = sorted(reassoc_ids)
    reassoc = set(request_ids)
    ongoing = {uid: user.assoc.bs_id for uid, user in users.items()
               if user.assoc is not None and uid not in reassoc}
    stations = sorted(config.stations)

    def capped_scheme(wish: Mapping[int, Optional[int]]) -> dict[int, Optional[int]]:
        scheme: dict[int, Optional[int]] = dict(ongoing)
        free = _free_seats(config, users, reassoc)
        for uid in request_ids:
            bs_id = wish.get(uid)
            if bs_id is not None and free[bs_id] > 0:
                scheme[uid] = bs_id
                free[bs_id] -= 1
            else:
                scheme[uid] = None
        return scheme

    seats_now = _free_seats(config, users, reassoc)
    feasible = [b for b in stations if seats_now[b] > 0]
    proposal_wish: dict[int, Optional[int]] = {}
    for uid in request_ids:
        bandit = bandits[uid]
        if not feasible:
            proposal_wish[uid] = None
            continue
        unpulled = [b for b in feasible
                    if b not in bandit.arms or bandit.arms[b].pulls == 0]
        if unpulled:
            if rng is None:
                proposal_wish[uid] = unpulled[0]
            else:
                proposal_wish[uid] = unpulled[int(rng.integers(len(unpulled)))]
        else:
            proposal_wish[uid] = max(feasible,
                                     key=lambda b: (bandit.ucb(b, exploration), -b))

    proposal = capped_scheme(proposal_wish)
    historical = capped_scheme({uid: stored_best.get(uid) for uid in request_ids})
    obj_proposal = objective_fn(proposal)
    obj_historical = objective_fn(historical)
    if obj_proposal >= obj_historical:
        return proposal, obj_proposal
    return historical, obj_historical
