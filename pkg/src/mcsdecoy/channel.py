"""No-eavesdropper fiber channel: per-Fock yields/errors and mixture observables."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ZeroGainError
from .photon_stats import PhotonDistribution


@dataclass(frozen=True)
class ChannelParams:
    """Fiber and detector constants.  Defaults follow the GYS experiment values."""

    k_db_per_km: float = 0.2
    eta_bob: float = 1.0
    s0: float = 8e-7
    e_det: float = 0.0135

    def __post_init__(self):
        if not (self.k_db_per_km >= 0 and math.isfinite(self.k_db_per_km)):
            raise ValueError(f"k_db_per_km must be >= 0, got {self.k_db_per_km}")
        if not 0 < self.eta_bob <= 1:
            raise ValueError(f"eta_bob must lie in (0, 1], got {self.eta_bob}")
        if not 0 <= self.s0 < 1:
            raise ValueError(f"s0 must lie in [0, 1), got {self.s0}")
        if not 0 <= self.e_det <= 0.5:
            raise ValueError(f"e_det must lie in [0, 0.5], got {self.e_det}")


@dataclass(frozen=True)
class IntensityObservation:
    """Gain and error gain (``E * S``) for one intensity; QBER is their ratio."""

    gain: float
    error_gain: float

    def __post_init__(self):
        if not 0 <= self.error_gain <= self.gain <= 1 + 1e-12:
            raise ValueError(f"need 0 <= error_gain <= gain <= 1, got {self.error_gain}, {self.gain}")

    @property
    def qber(self) -> float:
        return self.error_gain / self.gain if self.gain > 0 else 0.5


def transmittance(params: ChannelParams, length_km: float) -> float:
    if length_km < 0:
        raise ValueError(f"length must be >= 0, got {length_km}")
    return 10.0 ** (-params.k_db_per_km * length_km / 10.0) * params.eta_bob


def yields(params: ChannelParams, length_km: float, max_n: int) -> np.ndarray:
    """``S_n = S_0 + 1 - (1 - eta)^n`` for n = 0..max_n, capped at 1."""
    eta = transmittance(params, length_km)
    n = np.arange(max_n + 1)
    # -expm1(n log1p(-eta)) keeps eta_n accurate when eta is tiny
    eta_n = -np.expm1(n * math.log1p(-eta)) if eta < 1 else (n > 0) * 1.0
    return np.minimum(params.s0 + eta_n, 1.0)


def errors(params: ChannelParams, length_km: float, max_n: int) -> np.ndarray:
    eta = transmittance(params, length_km)
    n = np.arange(max_n + 1)
    eta_n = -np.expm1(n * math.log1p(-eta)) if eta < 1 else (n > 0) * 1.0
    s_n = np.minimum(params.s0 + eta_n, 1.0)
    num = params.s0 / 2 + params.e_det * eta_n
    with np.errstate(invalid="ignore", divide="ignore"):
        e_n = np.where(s_n > 0, num / s_n, 0.5)
    return np.clip(e_n, 0.0, 0.5)


def yield_n(params: ChannelParams, length_km: float, n: int) -> float:
    return float(yields(params, length_km, n)[n])


def error_n(params: ChannelParams, length_km: float, n: int) -> float:
    return float(errors(params, length_km, n)[n])


def true_fock_stats(params: ChannelParams, length_km: float, max_n: int) -> list[tuple[float, float]]:
    s = yields(params, length_km, max_n)
    e = errors(params, length_km, max_n)
    return [(float(a), float(b)) for a, b in zip(s, e)]


def observe(dist: PhotonDistribution, params: ChannelParams, length_km: float) -> IntensityObservation:
    """Gain ``sum P_n S_n`` and QBER ``sum e_n P_n S_n / gain``."""
    n = dist.truncation
    s = yields(params, length_km, n)
    e = errors(params, length_km, n)
    gain = float(dist.probs @ s)
    if gain <= 0:
        raise ZeroGainError(f"zero gain at L={length_km} km")
    error_gain = float(dist.probs @ (e * s))
    return IntensityObservation(gain, error_gain)
