"""Truncated Levy walk mobility.

Flight lengths and pause times come from the same heavy-tailed sampler
(ratio of a centered normal to a fractional power of another); flight
duration follows the empirical piecewise power law of walk measurements.
Users alternate flights and pauses and reflect specularly off the area
boundary.
"""

from __future__ import annotations

import math

import numpy as np

from .model import Flight, LevyParams, Pause, Rect, UserState


def sigma_y(beta: float) -> float:
    """Scale of the normal numerator that yields tail exponent ``beta``."""
    if not (0.0 < beta < 2.0):
        raise ValueError(f"beta={beta} outside (0, 2)")
    num = math.gamma(1.0 + beta) * math.sin(math.pi * beta / 2.0)
    den = math.gamma((1.0 + beta) / 2.0) * beta * 2.0 ** ((beta - 1.0) / 2.0)
    return (num / den) ** (1.0 / beta)


def sample_lengths(rng: np.random.Generator, beta: float, n: int, max_value: float) -> np.ndarray:
    """Draw ``n`` heavy-tailed positive values, truncated to (0, max_value]."""
    if max_value <= 0.0:
        raise ValueError("max_value must be positive")
    sig = sigma_y(beta)
    out = np.empty(n)
    filled = 0
    while filled < n:
        todo = n - filled
        y = rng.standard_normal(todo) * sig
        z = rng.standard_normal(todo)
        ok = (z != 0.0) & (y != 0.0)  # degenerate draws are resampled
        vals = np.abs(y[ok]) / np.abs(z[ok]) ** (1.0 / beta)
        vals = np.minimum(vals, max_value)
        out[filled : filled + vals.size] = vals
        filled += vals.size
    return out


def sample_length(rng: np.random.Generator, beta: float, max_value: float) -> float:
    """Single truncated heavy-tailed draw (meters for flights, seconds for pauses)."""
    return float(sample_lengths(rng, beta, 1, max_value)[0])


def flight_duration(length_m: float, params: LevyParams) -> float:
    """Seconds needed to cover a flight of the given length."""
    if length_m <= 0.0:
        raise ValueError("flight length must be positive")
    if length_m < params.flight_cutoff_m:
        k, rho = params.k_short, params.rho_short
    else:
        k, rho = params.k_long, params.rho_long
    return k * length_m ** (1.0 - rho)


def _begin_flight(rng: np.random.Generator, params: LevyParams, area: Rect) -> Flight:
    length = sample_length(rng, params.beta_f, area.diagonal)
    angle = rng.uniform(0.0, 2.0 * math.pi)
    heading = np.array([math.cos(angle), math.sin(angle)])
    duration = flight_duration(length, params)
    return Flight(remaining_s=duration, heading=heading, speed_m_s=length / duration)


def _begin_pause(rng: np.random.Generator, params: LevyParams) -> Pause:
    return Pause(remaining_s=sample_length(rng, params.beta_r, params.max_pause_s))


def initial_phase(rng: np.random.Generator, params: LevyParams) -> Pause:
    """Users enter the walk pausing, so flight starts are staggered."""
    return _begin_pause(rng, params)


def _reflect(position: np.ndarray, heading: np.ndarray, area: Rect) -> None:
    """Fold a straight move back into the area, flipping heading per bounce."""
    for axis, (lo, hi) in enumerate(((area.x_min, area.x_max), (area.y_min, area.y_max))):
        for _ in range(64):
            if position[axis] < lo:
                position[axis] = 2.0 * lo - position[axis]
                heading[axis] = -heading[axis]
            elif position[axis] > hi:
                position[axis] = 2.0 * hi - position[axis]
                heading[axis] = -heading[axis]
            else:
                break
        else:  # pathological speeds; pin to the boundary
            position[axis] = min(max(position[axis], lo), hi)


_PHASE_EPS_S = 1e-12


def advance(user: UserState, dt_s: float, rng: np.random.Generator,
            params: LevyParams, area: Rect) -> None:
    """Advance one user by ``dt_s`` seconds, chaining phases as they expire."""
    if dt_s <= 0.0:
        raise ValueError("dt must be positive")
    remaining = dt_s
    while remaining > 0.0:
        phase = user.phase
        if phase.remaining_s <= _PHASE_EPS_S:
            if isinstance(phase, Flight):
                user.phase = _begin_pause(rng, params)
            else:
                user.phase = _begin_flight(rng, params, area)
            continue
        step = min(remaining, phase.remaining_s)
        if isinstance(phase, Flight):
            user.position = user.position + phase.heading * (phase.speed_m_s * step)
            _reflect(user.position, phase.heading, area)
        phase.remaining_s -= step
        remaining -= step
    phase = user.phase
    if isinstance(phase, Flight):
        user.velocity = phase.heading * phase.speed_m_s
    else:
        user.velocity = np.zeros(2)
