"""TDD switching-point selection.

Each user's ideal switch point equalizes its uplink and downlink pseudo
supply-demand ratios; a station adopts the mean over its users, macros
average over the union of all macro users so they stay synchronized. The
fractional mean is rounded (half-up by default, ceiling optional) and
clipped into the feasible switch-point set.
"""

from __future__ import annotations

import math
from typing import Mapping, Optional

from .model import MACRO, Demand, NetworkConfig

ROUND_HALF_UP = "half-up"
ROUND_CEIL = "ceil"


def user_ideal_switch(r_ul_bps: float, r_dl_bps: float, demand: Demand,
                      n_subslots: int) -> float:
    """Fractional subslot index where uplink and downlink ratios balance."""
    denom = demand.ul_bps * r_dl_bps + demand.dl_bps * r_ul_bps
    if denom <= 0.0:
        return n_subslots / 2.0
    return demand.ul_bps * r_dl_bps / denom * n_subslots


def _round(value: float, mode: str) -> int:
    if mode == ROUND_HALF_UP:
        return math.floor(value + 0.5)
    if mode == ROUND_CEIL:
        return math.ceil(value)
    raise ValueError(f"unknown rounding mode {mode!r}")


def select_switch_points(
    association: Mapping[int, Optional[int]],
    pseudo_rates: Mapping[int, tuple[float, float]],
    demands: Mapping[int, Demand],
    config: NetworkConfig,
    rounding: str = ROUND_HALF_UP,
) -> dict[int, int]:
    """Choose one switch point per station from its users' ideal points.

    ``association`` maps user id to serving station id (None entries are
    skipped); ``pseudo_rates`` holds (uplink, downlink) estimates for every
    associated user. Stations without users default to the slot midpoint.
    """
    per_bs: dict[int, list[float]] = {}
    macro_pool: list[float] = []
    for uid in sorted(association):
        bs_id = association[uid]
        if bs_id is None:
            continue
        r_ul, r_dl = pseudo_rates[uid]
        ideal = user_ideal_switch(r_ul, r_dl, demands[uid], config.n_subslots)
        if config.bs(bs_id).kind == MACRO:
            macro_pool.append(ideal)
        else:
            per_bs.setdefault(bs_id, []).append(ideal)

    lo, hi = 1, config.n_subslots - 1
    fallback = config.n_subslots / 2.0

    def finalize(values: list[float]) -> int:
        mean = sum(values) / len(values) if values else fallback
        return min(hi, max(lo, _round(mean, rounding)))

    plan: dict[int, int] = {}
    macro_point = finalize(macro_pool)
    for bs in config.mbs_list:
        plan[bs.id] = macro_point
    for bs in config.pbs_list:
        plan[bs.id] = finalize(per_bs.get(bs.id, []))
    return plan
