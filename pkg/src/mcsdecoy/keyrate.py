"""GLLP-style key rate lower bound and secure-distance search."""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import bounds
from .channel import ChannelParams, IntensityObservation, observe, yield_n
from .errors import NeverSecureError, PremiseViolationError, UndefinedBoundError
from .photon_stats import Source, cached_distribution

log = logging.getLogger(__name__)

SCAN_CEILING_KM = 300.0
SCAN_STEP_KM = 1.0
BISECT_TOL_KM = 0.01


class Protocol(str, enum.Enum):
    TWO_INTENSITY = "two_intensity"
    THREE_INTENSITY = "three_intensity"


@dataclass(frozen=True)
class ProtocolConfig:
    protocol: Protocol = Protocol.TWO_INTENSITY
    q: float = 0.5
    f_ec: float = 1.2

    def __post_init__(self):
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        if not 0 < self.q <= 1:
            raise ValueError(f"q must lie in (0, 1], got {self.q}")
        if not self.f_ec >= 1:
            raise ValueError(f"f_ec must be >= 1, got {self.f_ec}")


@dataclass(frozen=True)
class KeyRatePoint:
    length_km: float
    rate: float
    signal_obs: IntensityObservation
    estimate: Optional[bounds.DecoyEstimate]

    @property
    def rate_clamped(self) -> float:
        return max(self.rate, 0.0)


def binary_entropy(x):
    """``-x log2 x - (1-x) log2(1-x)``; accepts scalars or arrays."""
    arr = np.asarray(x, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
        raise ValueError(f"binary entropy needs x in [0, 1], got {x}")
    inner = (arr > 0) & (arr < 1)
    safe = np.where(inner, arr, 0.5)
    h = np.where(inner, -safe * np.log2(safe) - (1 - safe) * np.log2(1 - safe), 0.0)
    return float(h) if h.ndim == 0 else h


def rate_terms(q, f_ec, gain_s, qber_s, p1_s, s1_lower, e1_upper):
    """Array-friendly key rate; callers supply already-clamped bounds."""
    return q * (-gain_s * f_ec * binary_entropy(qber_s) + p1_s * s1_lower * (1 - binary_entropy(e1_upper)))


def key_rate(
    config: ProtocolConfig,
    signal_obs: IntensityObservation,
    p1_signal: float,
    estimate: Optional[bounds.DecoyEstimate],
) -> float:
    """Raw (possibly negative) secret bits per signal pulse."""
    s1 = estimate.s1_lower if estimate is not None else 0.0
    e1 = estimate.e1_upper if estimate is not None and estimate.e1_upper is not None else 0.5
    return float(rate_terms(config.q, config.f_ec, signal_obs.gain, signal_obs.qber, p1_signal, s1, e1))


def evaluate_point(
    source_pair: tuple[Source, Source],
    channel: ChannelParams,
    config: ProtocolConfig,
    length_km: float,
) -> KeyRatePoint:
    """Photon statistics -> channel -> decoy bounds -> key rate at one length."""
    decoy, signal = source_pair
    d_dist, s_dist = cached_distribution(decoy), cached_distribution(signal)
    assert decoy.mean < signal.mean, "decoy must be weaker than signal"
    d_obs = observe(d_dist, channel, length_km)
    s_obs = observe(s_dist, channel, length_km)
    try:
        if config.protocol is Protocol.THREE_INTENSITY:
            s0 = yield_n(channel, length_km, 0)
            est = bounds.estimate_3int(d_obs, s_obs, s0, d_dist, s_dist)
        else:
            est = bounds.estimate_2int(d_obs, s_obs, d_dist, s_dist)
    except (PremiseViolationError, UndefinedBoundError) as exc:
        log.debug("insecure point at L=%s: %s", length_km, exc)
        est = None
    return KeyRatePoint(length_km, key_rate(config, s_obs, s_dist[1], est), s_obs, est)


def bisect_last_positive(positive, lo: float, hi: float, tol: float = BISECT_TOL_KM) -> float:
    """Shrink ``[lo, hi]`` with ``positive(lo)`` true and ``positive(hi)`` false."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if positive(mid):
            lo = mid
        else:
            hi = mid
    return lo


def scan_for_distance(positive, ceiling: float = SCAN_CEILING_KM, step: float = SCAN_STEP_KM) -> float:
    """Coarse scan then bisection for the last length where ``positive`` holds."""
    grid = np.arange(0.0, ceiling + step / 2, step)
    flags = [positive(float(L)) for L in grid]
    if not flags[0]:
        raise NeverSecureError("key rate is not positive at L = 0")
    changes = sum(a != b for a, b in zip(flags, flags[1:]))
    if changes > 1:
        log.warning("key rate changes sign %d times on the coarse grid; using the last positive point", changes)
    last = max(i for i, f in enumerate(flags) if f)
    if last == len(grid) - 1:
        return float(grid[-1])
    return bisect_last_positive(positive, float(grid[last]), float(grid[last + 1]))


def secure_distance(source_pair: tuple[Source, Source], channel: ChannelParams, config: ProtocolConfig) -> float:
    """Largest fiber length with a positive key rate for a fixed source pair."""
    return scan_for_distance(lambda L: evaluate_point(source_pair, channel, config, L).rate > 0)
