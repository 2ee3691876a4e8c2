"""Scenario files: YAML schema, defaults, strict validation, hashing.

Key names mirror the scenario fields with units in suffixes (_m, _hz, _dbm,
_us). Every key is optional; omitted keys fall back to the reference
parameter set. Unknown keys are rejected with a line-anchored message.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import asdict
from typing import Any, Optional

import yaml

from .engine import DemandProfile, MacroParams, PicoParams, Scenario, UserParams
from .model import Antenna, Demand, LevyParams, PathLossExponents, Rect


class ScenarioError(ValueError):
    """Scenario file problem, formatted as file:line: message when locatable."""


def _line_of(key: str, source: str) -> Optional[int]:
    for lineno, line in enumerate(source.splitlines(), start=1):
        stripped = line.split("#", 1)[0]
        if f"{key}:" in stripped:
            return lineno
    return None


def _fail(name: str, source: str, key: str, message: str) -> None:
    line = _line_of(key, source)
    location = f"{name}:{line}" if line is not None else name
    raise ScenarioError(f"{location}: {message}")


def _require_keys(name: str, source: str, data: dict, allowed: set[str],
                  context: str) -> None:
    for key in data:
        if key not in allowed:
            _fail(name, source, str(key), f"unknown key {key!r} in {context}")


def _number(name: str, source: str, data: dict, key: str, default: float,
            cast=float) -> float:
    value = data.get(key, default)
    try:
        return cast(value)
    except (TypeError, ValueError):
        _fail(name, source, key, f"{key} must be a number, got {value!r}")


_TOP_KEYS = {
    "users", "rng_seed", "n_subslots", "slot_duration_us", "pilot_time_us",
    "obstacle_density_per_m2", "obstacle_mean_length_m", "noise_psd_dbm_hz",
    "area_bounds_m", "ple", "levy", "mbs_list", "pbs_list", "pbs_count",
    "macro", "pico", "user_equipment", "demand_mix",
}
_PLE_KEYS = {"lte_los", "lte_nlos", "mmw_los", "mmw_nlos"}
_LEVY_KEYS = {"beta_f", "beta_r", "k_short", "rho_short", "k_long", "rho_long",
              "flight_cutoff_m", "max_pause_s"}
_MACRO_KEYS = {"carrier_hz", "subchannel_count", "subchannel_bandwidth_hz",
               "tx_power_dbm_per_subchannel"}
_PICO_KEYS = _MACRO_KEYS | {"directivity_dbi", "main_beam_deg", "sector_deg"}
_UE_KEYS = {"tx_power_dbm", "sector_deg", "directivity_dbi", "main_beam_deg"}
_DEMAND_KEYS = {"ul_mbps", "dl_mbps", "weight"}


def load_raw(path: str) -> tuple[dict, str]:
    """Parse the YAML document; returns (mapping, source text)."""
    with open(path, "r", encoding="utf-8") as handle:
        source = handle.read()
    try:
        data = yaml.safe_load(source)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            raise ScenarioError(f"{path}:{mark.line + 1}: invalid YAML: "
                                f"{getattr(exc, 'problem', exc)}") from exc
        raise ScenarioError(f"{path}: invalid YAML: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}:1: scenario file must be a mapping")
    return data, source


def scenario_from_dict(data: dict, source: str = "", name: str = "<scenario>") -> Scenario:
    """Validate a raw mapping and build the scenario, defaults applied."""
    base = Scenario()
    _require_keys(name, source, data, _TOP_KEYS, "scenario")

    area = base.area
    if "area_bounds_m" in data:
        bounds = data["area_bounds_m"]
        if not (isinstance(bounds, (list, tuple)) and len(bounds) == 4):
            _fail(name, source, "area_bounds_m",
                  "area_bounds_m must be [x_min, x_max, y_min, y_max]")
        try:
            area = Rect(*[float(b) for b in bounds])
        except (TypeError, ValueError) as exc:
            _fail(name, source, "area_bounds_m", f"bad area bounds: {exc}")

    ple = base.ple
    if "ple" in data:
        sub = data["ple"] or {}
        _require_keys(name, source, sub, _PLE_KEYS, "ple")
        try:
            ple = PathLossExponents(
                lte_los=_number(name, source, sub, "lte_los", base.ple.lte_los),
                lte_nlos=_number(name, source, sub, "lte_nlos", base.ple.lte_nlos),
                mmw_los=_number(name, source, sub, "mmw_los", base.ple.mmw_los),
                mmw_nlos=_number(name, source, sub, "mmw_nlos", base.ple.mmw_nlos),
            )
        except ValueError as exc:
            _fail(name, source, "ple", str(exc))

    levy = base.levy
    if "levy" in data:
        sub = data["levy"] or {}
        _require_keys(name, source, sub, _LEVY_KEYS, "levy")
        try:
            levy = LevyParams(
                beta_f=_number(name, source, sub, "beta_f", base.levy.beta_f),
                beta_r=_number(name, source, sub, "beta_r", base.levy.beta_r),
                k_short=_number(name, source, sub, "k_short", base.levy.k_short),
                rho_short=_number(name, source, sub, "rho_short", base.levy.rho_short),
                k_long=_number(name, source, sub, "k_long", base.levy.k_long),
                rho_long=_number(name, source, sub, "rho_long", base.levy.rho_long),
                flight_cutoff_m=_number(name, source, sub, "flight_cutoff_m",
                                        base.levy.flight_cutoff_m),
                max_pause_s=_number(name, source, sub, "max_pause_s",
                                    base.levy.max_pause_s),
            )
        except ValueError as exc:
            _fail(name, source, "levy", str(exc))

    def positions(key: str) -> Optional[tuple[tuple[float, float], ...]]:
        if key not in data:
            return None
        entries = data[key]
        if not isinstance(entries, list):
            _fail(name, source, key, f"{key} must be a list of stations")
        out = []
        for entry in entries:
            if not isinstance(entry, dict) or set(entry) != {"position_m"}:
                _fail(name, source, key,
                      f"every {key} entry must be a mapping with position_m")
            pos = entry["position_m"]
            if not (isinstance(pos, (list, tuple)) and len(pos) == 2):
                _fail(name, source, key, "position_m must be [x, y]")
            out.append((float(pos[0]), float(pos[1])))
        return tuple(out)

    mbs_positions = positions("mbs_list") or base.mbs_positions
    pbs_positions = positions("pbs_list")

    macro = base.macro
    if "macro" in data:
        sub = data["macro"] or {}
        _require_keys(name, source, sub, _MACRO_KEYS, "macro")
        macro = MacroParams(
            carrier_hz=_number(name, source, sub, "carrier_hz", base.macro.carrier_hz),
            subchannel_count=_number(name, source, sub, "subchannel_count",
                                     base.macro.subchannel_count, int),
            subchannel_bandwidth_hz=_number(name, source, sub, "subchannel_bandwidth_hz",
                                            base.macro.subchannel_bandwidth_hz),
            tx_power_dbm=_number(name, source, sub, "tx_power_dbm_per_subchannel",
                                 base.macro.tx_power_dbm),
        )

    pico = base.pico
    if "pico" in data:
        sub = data["pico"] or {}
        _require_keys(name, source, sub, _PICO_KEYS, "pico")
        default_dbi = 10.0 * math.log10(base.pico.antenna.directivity_linear)
        dbi = _number(name, source, sub, "directivity_dbi", default_dbi)
        antenna = Antenna(
            directivity_linear=10.0 ** (dbi / 10.0),
            main_beam_deg=_number(name, source, sub, "main_beam_deg",
                                  base.pico.antenna.main_beam_deg),
            sector_deg=_number(name, source, sub, "sector_deg",
                               base.pico.antenna.sector_deg),
        )
        pico = PicoParams(
            carrier_hz=_number(name, source, sub, "carrier_hz", base.pico.carrier_hz),
            subchannel_count=_number(name, source, sub, "subchannel_count",
                                     base.pico.subchannel_count, int),
            subchannel_bandwidth_hz=_number(name, source, sub, "subchannel_bandwidth_hz",
                                            base.pico.subchannel_bandwidth_hz),
            tx_power_dbm=_number(name, source, sub, "tx_power_dbm_per_subchannel",
                                 base.pico.tx_power_dbm),
            antenna=antenna,
        )

    user_params = base.user_params
    if "user_equipment" in data:
        sub = data["user_equipment"] or {}
        _require_keys(name, source, sub, _UE_KEYS, "user_equipment")
        antenna = None
        if "directivity_dbi" in sub or "main_beam_deg" in sub or "sector_deg" in sub:
            dbi = _number(name, source, sub, "directivity_dbi",
                          10.0 * math.log10(pico.antenna.directivity_linear))
            antenna = Antenna(
                directivity_linear=10.0 ** (dbi / 10.0),
                main_beam_deg=_number(name, source, sub, "main_beam_deg",
                                      pico.antenna.main_beam_deg),
                sector_deg=_number(name, source, sub, "sector_deg",
                                   pico.antenna.sector_deg),
            )
        user_params = UserParams(
            tx_power_dbm=_number(name, source, sub, "tx_power_dbm",
                                 base.user_params.tx_power_dbm),
            antenna=antenna,
        )

    demand_mix = base.demand_mix
    if "demand_mix" in data:
        entries = data["demand_mix"]
        if not isinstance(entries, list) or not entries:
            _fail(name, source, "demand_mix", "demand_mix must be a non-empty list")
        mix = []
        for entry in entries:
            if not isinstance(entry, dict):
                _fail(name, source, "demand_mix", "demand_mix entries must be mappings")
            _require_keys(name, source, entry, _DEMAND_KEYS, "demand_mix")
            try:
                mix.append(DemandProfile(
                    demand=Demand(float(entry["ul_mbps"]) * 1e6,
                                  float(entry["dl_mbps"]) * 1e6),
                    weight=float(entry["weight"]),
                ))
            except (KeyError, TypeError, ValueError) as exc:
                _fail(name, source, "demand_mix", f"bad demand_mix entry: {exc}")
        demand_mix = tuple(mix)

    try:
        return Scenario(
            area=area,
            n_subslots=_number(name, source, data, "n_subslots", base.n_subslots, int),
            slot_duration_us=_number(name, source, data, "slot_duration_us",
                                     base.slot_duration_us),
            pilot_time_us=_number(name, source, data, "pilot_time_us",
                                  base.pilot_time_us),
            obstacle_density_per_m2=_number(name, source, data,
                                            "obstacle_density_per_m2",
                                            base.obstacle_density_per_m2),
            obstacle_mean_length_m=_number(name, source, data, "obstacle_mean_length_m",
                                           base.obstacle_mean_length_m),
            noise_psd_dbm_hz=_number(name, source, data, "noise_psd_dbm_hz",
                                     base.noise_psd_dbm_hz),
            ple=ple,
            levy=levy,
            rng_seed=_number(name, source, data, "rng_seed", base.rng_seed, int),
            mbs_positions=mbs_positions,
            macro=macro,
            pbs_positions=pbs_positions,
            pbs_count=_number(name, source, data, "pbs_count", base.pbs_count, int),
            pico=pico,
            users=_number(name, source, data, "users", base.users, int),
            user_params=user_params,
            demand_mix=demand_mix,
        )
    except ValueError as exc:
        raise ScenarioError(f"{name}: {exc}") from exc


def load_scenario(path: str) -> Scenario:
    data, source = load_raw(path)
    return scenario_from_dict(data, source, path)


def scenario_hash(scenario: Scenario) -> str:
    """Stable digest of the effective scenario, for aggregation safety."""
    payload = json.dumps(asdict(scenario), sort_keys=True, default=list)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


_SWEEP_ALIASES = {
    "users": ("users",),
    "beta_f": ("levy", "beta_f"),
    "beta_r": ("levy", "beta_r"),
}


def apply_sweep(raw: dict, key: str, value_text: str) -> dict:
    """Return a copy of the raw mapping with one (possibly dotted) key set."""
    path = _SWEEP_ALIASES.get(key, tuple(key.split(".")))
    value = yaml.safe_load(value_text)
    out = copy.deepcopy(raw)
    node: Any = out
    for part in path[:-1]:
        nxt = node.get(part)
        if not isinstance(nxt, dict):
            nxt = {}
            node[part] = nxt
        node = nxt
    node[path[-1]] = value
    return out
