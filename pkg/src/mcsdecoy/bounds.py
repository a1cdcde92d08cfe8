"""Decoy-state bounds on the single-photon yield and error rate.

Both protocols compare a weak decoy intensity (unprimed) against a stronger
signal (primed).  The lowest multi-photon index ``r`` whose signal
probability survives plays the role that ``n = 2`` plays for coherent light:
if ``P_r(s)/P_r(d) * P_n(d) <= P_n(s)`` for every ``n > r`` then

    S1_L = [(P_r(d) P_0(s) - P_r(s) P_0(d)) S_0 + P_r(s) S(d) - P_r(d) S(s)]
           / (P_r(s) P_1(d) - P_r(d) P_1(s))

The two-intensity protocol has no vacuum slot and feeds in the upper bound
``S0_U = 2 E(s) S(s) / P_0(s)`` instead of the measured ``S_0``.

The raw ``*_terms`` helpers broadcast over numpy arrays so the optimizer can
evaluate whole grids with the same arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import IntensityObservation
from .errors import (
    InvalidOrderingError,
    NoMultiphotonError,
    PremiseViolationError,
    SignViolationError,
    UndefinedBoundError,
    VacuumFreeSourceError,
)
from .photon_stats import PhotonDistribution

CANCEL_THRESHOLD = 1e-12
RATIO_RTOL = 1e-10


@dataclass(frozen=True)
class DecoyEstimate:
    s1_lower: float
    s0_used: float
    n_ref: int
    e1_upper: Optional[float] = None

    def __post_init__(self):
        if not 0 <= self.s1_lower <= 1:
            raise ValueError(f"s1_lower out of [0, 1]: {self.s1_lower}")
        if self.e1_upper is not None and not 0 <= self.e1_upper <= 0.5:
            raise ValueError(f"e1_upper out of [0, 0.5]: {self.e1_upper}")
        if self.n_ref < 2:
            raise ValueError("n_ref must be >= 2")


def reference_index(signal_dist: PhotonDistribution) -> int:
    """Smallest ``n >= 2`` with a non-cancelled signal probability."""
    p = signal_dist.probs
    idx = np.nonzero(p[2:] > CANCEL_THRESHOLD)[0]
    if idx.size == 0:
        raise NoMultiphotonError("signal distribution has no multi-photon component above 1e-12")
    return int(idx[0]) + 2


def ratio_monotone_mask(p_decoy: np.ndarray, p_signal: np.ndarray, n_ref) -> np.ndarray:
    """Vectorised premise check over the last axis of padded probability arrays.

    Entries where both probabilities are numerically cancelled are skipped, so
    rounding noise on an exactly vanishing Hermite factor cannot trip it.
    """
    n_ref = np.asarray(n_ref)
    size = p_decoy.shape[-1]
    n = np.arange(size)
    pr_d = np.take_along_axis(p_decoy, n_ref[..., None] * np.ones_like(p_decoy[..., :1], dtype=int), -1)
    pr_s = np.take_along_axis(p_signal, n_ref[..., None] * np.ones_like(p_signal[..., :1], dtype=int), -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs = pr_s / pr_d * p_decoy
    rhs = p_signal * (1 + RATIO_RTOL)
    cancelled = (p_decoy <= CANCEL_THRESHOLD) & (p_signal <= CANCEL_THRESHOLD)
    ok = (n > n_ref[..., None]) <= ((lhs <= rhs) | cancelled)
    return np.all(ok, axis=-1) & (pr_d[..., 0] > 0)


def check_ratio_monotonicity(decoy_dist: PhotonDistribution, signal_dist: PhotonDistribution, n_ref: int) -> bool:
    """True iff ``P_r(s)/P_r(d) * P_n(d) <= P_n(s)`` for all ``r < n <= N``."""
    size = min(len(decoy_dist), len(signal_dist))
    if n_ref >= size or decoy_dist[n_ref] <= 0:
        raise ValueError(f"P_{n_ref}(decoy) must be positive")
    return bool(ratio_monotone_mask(decoy_dist.probs[:size], signal_dist.probs[:size], n_ref))


def s1_lower_terms(pd0, pd1, pdr, ps0, ps1, psr, gain_d, gain_s, s0):
    """Numerator and denominator of the unclamped single-photon yield bound."""
    num = (pdr * ps0 - psr * pd0) * s0 + psr * gain_d - pdr * gain_s
    den = psr * pd1 - pdr * ps1
    return num, den


def e1_upper_terms(error_gain_s, s0, ps0, ps1, s1_lower):
    """Numerator and denominator of the unclamped single-photon QBER bound."""
    return error_gain_s - 0.5 * s0 * ps0, ps1 * s1_lower


def _s1_lower(decoy_obs, signal_obs, s0, decoy_dist, signal_dist) -> DecoyEstimate:
    r = reference_index(signal_dist)
    if r >= len(decoy_dist) or decoy_dist[r] <= 0 or not check_ratio_monotonicity(decoy_dist, signal_dist, r):
        raise PremiseViolationError(f"ratio monotonicity fails for n_ref={r}")
    num, den = s1_lower_terms(
        decoy_dist[0], decoy_dist[1], decoy_dist[r],
        signal_dist[0], signal_dist[1], signal_dist[r],
        decoy_obs.gain, signal_obs.gain, s0,
    )
    if not den > 0:
        raise InvalidOrderingError(f"bound denominator {den:.3g} <= 0; decoy must be weaker than signal")
    return DecoyEstimate(s1_lower=min(max(num / den, 0.0), 1.0), s0_used=s0, n_ref=r)


def s1_lower_3int(
    decoy_obs: IntensityObservation,
    signal_obs: IntensityObservation,
    s0_measured: float,
    decoy_dist: PhotonDistribution,
    signal_dist: PhotonDistribution,
) -> DecoyEstimate:
    """Vacuum + decoy + signal: the vacuum slot measures ``S_0`` directly."""
    return _s1_lower(decoy_obs, signal_obs, s0_measured, decoy_dist, signal_dist)


def _clamp_e1(num: float, den: float) -> float:
    if not den > 0:
        raise UndefinedBoundError("e1 bound undefined when S1_L = 0")
    return min(max(num / den, 0.0), 0.5)


def e1_upper_3int(
    signal_obs: IntensityObservation,
    s0_measured: float,
    signal_dist: PhotonDistribution,
    s1_lower: float,
) -> float:
    num, den = e1_upper_terms(signal_obs.error_gain, s0_measured, signal_dist[0], signal_dist[1], s1_lower)
    return _clamp_e1(num, den)


def s0_upper_2int(signal_obs: IntensityObservation, signal_dist: PhotonDistribution) -> float:
    """Dark-count rate bound from ``E S >= P_0 S_0 / 2``."""
    p0 = signal_dist[0]
    if p0 <= 1e-15:
        raise VacuumFreeSourceError("signal source has no vacuum component")
    return min(2.0 * signal_obs.error_gain / p0, 1.0)


def s1_lower_2int(
    decoy_obs: IntensityObservation,
    signal_obs: IntensityObservation,
    decoy_dist: PhotonDistribution,
    signal_dist: PhotonDistribution,
) -> DecoyEstimate:
    r = reference_index(signal_dist)
    coeff = decoy_dist[r] * signal_dist[0] - signal_dist[r] * decoy_dist[0]
    if coeff > 0:
        raise SignViolationError(f"S0 coefficient {coeff:.3g} > 0; an upper bound on S0 cannot be used")
    s0_up = s0_upper_2int(signal_obs, signal_dist)
    return _s1_lower(decoy_obs, signal_obs, s0_up, decoy_dist, signal_dist)


def e1_upper_2int(signal_obs: IntensityObservation, signal_dist: PhotonDistribution, s1_lower: float) -> float:
    """Two-intensity QBER bound, taking the dark-count lower bound as zero."""
    num, den = e1_upper_terms(signal_obs.error_gain, 0.0, signal_dist[0], signal_dist[1], s1_lower)
    return _clamp_e1(num, den)


def estimate_3int(decoy_obs, signal_obs, s0_measured, decoy_dist, signal_dist) -> DecoyEstimate:
    est = s1_lower_3int(decoy_obs, signal_obs, s0_measured, decoy_dist, signal_dist)
    e1 = e1_upper_3int(signal_obs, s0_measured, signal_dist, est.s1_lower) if est.s1_lower > 0 else 0.5
    return DecoyEstimate(est.s1_lower, est.s0_used, est.n_ref, e1)


def estimate_2int(decoy_obs, signal_obs, decoy_dist, signal_dist) -> DecoyEstimate:
    est = s1_lower_2int(decoy_obs, signal_obs, decoy_dist, signal_dist)
    e1 = e1_upper_2int(signal_obs, signal_dist, est.s1_lower) if est.s1_lower > 0 else 0.5
    return DecoyEstimate(est.s1_lower, est.s0_used, est.n_ref, e1)
