"""Photon-number statistics of coherent and modified coherent states.

A modified coherent state (MCS) is a real coherent state ``|alpha>`` acted on
by the squeeze-type unitary ``exp(zeta/2 (a^2 - a_dag^2))``.  With
``alpha^2 = c * mu * nu`` (``mu = cosh zeta``, ``nu = sinh zeta``) the
amplitudes are

    C_n = (n! mu)^(-1/2) (nu / 2 mu)^(n/2) exp(nu alpha^2 / 2 mu - alpha^2 / 2)
          * H_n(sqrt(c / 2))

so ``c = 1`` removes the two-photon term and ``c = 3`` the three-photon term.

``fock_oracle`` recomputes the same distribution by exponentiating the
generator in a truncated number basis.  It is independent of the closed form
and is meant for tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammainc, gammaln

from .errors import (
    DegenerateSourceError,
    DimensionTooSmallError,
    NoBracketError,
    TruncationError,
)

AUTO_TAIL = 1e-12
MAX_TAIL = 1e-9
TRUNC_STEP = 10
TRUNC_CAP = 200
NU_MAX = 5.0
MEAN_MAX = 5.0


@dataclass(frozen=True)
class SqueezeParams:
    zeta: float

    def __post_init__(self):
        if not (self.zeta >= 0 and math.isfinite(self.zeta)):
            raise ValueError(f"zeta must be finite and >= 0, got {self.zeta}")

    @classmethod
    def from_nu(cls, nu: float) -> "SqueezeParams":
        return cls(math.asinh(nu))

    @property
    def mu(self) -> float:
        return math.cosh(self.zeta)

    @property
    def nu(self) -> float:
        return math.sinh(self.zeta)


@dataclass(frozen=True)
class CoherentSource:
    """Phase-randomised weak laser pulse with Poisson statistics."""

    mean: float

    def __post_init__(self):
        if not self.mean >= 0:
            raise ValueError(f"mean photon number must be >= 0, got {self.mean}")

    def distribution(self, trunc: int = 0) -> "PhotonDistribution":
        return poisson_distribution(self.mean, trunc)


@dataclass(frozen=True)
class McsSource:
    """Modified coherent state: input amplitude ``alpha`` plus squeezing."""

    alpha: float
    squeeze: SqueezeParams

    def __post_init__(self):
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")

    @property
    def mu(self) -> float:
        return self.squeeze.mu

    @property
    def nu(self) -> float:
        return self.squeeze.nu

    @property
    def c(self) -> float:
        if self.nu == 0:
            raise DegenerateSourceError("c = alpha^2/(mu nu) is undefined for nu = 0")
        return self.alpha**2 / (self.mu * self.nu)

    @property
    def mean(self) -> float:
        # <n> of S(zeta)|alpha> for real parameters
        return self.alpha**2 * (self.mu - self.nu) ** 2 + self.nu**2

    def distribution(self, trunc: int = 0) -> "PhotonDistribution":
        return mcs_distribution(self, trunc)


Source = Union[CoherentSource, McsSource]


@dataclass(frozen=True, eq=False)
class PhotonDistribution:
    """Truncated photon-number distribution ``P_0 .. P_N``."""

    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty 1-D sequence")
        if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
            raise ValueError("every P_n must lie in [0, 1]")
        total = math.fsum(p)
        if not (1 - MAX_TAIL <= total <= 1 + 1e-12):
            raise ValueError(f"probabilities sum to {total!r}, outside [1-1e-9, 1+1e-12]")

    @property
    def truncation(self) -> int:
        return self.probs.size - 1

    @property
    def tail_mass(self) -> float:
        return 1.0 - math.fsum(self.probs)

    def __getitem__(self, n: int) -> float:
        """``P_n``; zero beyond the truncation."""
        if n < 0:
            raise IndexError(n)
        return float(self.probs[n]) if n <= self.truncation else 0.0

    def __len__(self) -> int:
        return self.probs.size

    def padded(self, size: int) -> np.ndarray:
        out = np.zeros(size)
        k = min(size, self.probs.size)
        out[:k] = self.probs[:k]
        return out

    @classmethod
    def point_mass(cls, n: int) -> "PhotonDistribution":
        p = np.zeros(n + 1)
        p[n] = 1.0
        return cls(p)

    @classmethod
    def vacuum(cls) -> "PhotonDistribution":
        return cls.point_mass(0)

    @classmethod
    def mixture(cls, dists, weights) -> "PhotonDistribution":
        size = max(len(d) for d in dists)
        p = sum(w * d.padded(size) for d, w in zip(dists, weights))
        return cls(p)


def poisson_distribution(mean: float, trunc: int = 0) -> PhotonDistribution:
    """Poisson photon statistics of a phase-randomised coherent state.

    ``trunc = 0`` picks the smallest N whose tail mass is at most 1e-12.
    """
    if not (mean >= 0 and math.isfinite(mean)):
        raise ValueError(f"mean must be finite and >= 0, got {mean}")
    if trunc < 0:
        raise ValueError("trunc must be >= 0")
    if mean == 0:
        p = np.zeros(max(trunc, 0) + 1)
        p[0] = 1.0
        return PhotonDistribution(p)
    if trunc == 0:
        trunc = 1
        # P(X > N) is the regularised lower incomplete gamma P(N+1, mean)
        while gammainc(trunc + 1, mean) > AUTO_TAIL:
            trunc += 1
    n = np.arange(trunc + 1)
    p = np.exp(n * math.log(mean) - mean - gammaln(n + 1))
    if 1.0 - math.fsum(p) > MAX_TAIL:
        raise TruncationError(
            f"truncation N={trunc} leaves tail mass {1 - math.fsum(p):.3g} > 1e-9 for mean {mean}"
        )
    return PhotonDistribution(p)


def hermite(n: int, x: float) -> float:
    """Physicists' Hermite polynomial by the three-term recurrence."""
    if n < 0:
        raise ValueError("n must be >= 0")
    h_prev, h = 1.0, 2.0 * x
    if n == 0:
        return h_prev
    for k in range(1, n):
        h_prev, h = h, 2.0 * x * h - 2.0 * k * h_prev
    return h


def _log_normalized_hermite(nmax: int, x: float) -> tuple[np.ndarray, np.ndarray]:
    """``(ln|h_n|, sign h_n)`` for ``h_n = H_n(x) / sqrt(2^n n!)``, n = 0..nmax.

    The recurrence is rescaled on the fly so large ``x`` (small squeezing)
    cannot overflow.
    """
    log_abs = np.empty(nmax + 1)
    sign = np.empty(nmax + 1)
    prev, cur, offset = 0.0, 1.0, 0.0
    for n in range(nmax + 1):
        sign[n] = math.copysign(1.0, cur) if cur != 0 else 0.0
        log_abs[n] = math.log(abs(cur)) + offset if cur != 0 else -math.inf
        prev, cur = cur, math.sqrt(2.0 / (n + 1)) * x * cur - math.sqrt(n / (n + 1)) * prev
        scale = max(abs(prev), abs(cur))
        if scale > 1e100:
            prev, cur, offset = prev / scale, cur / scale, offset + math.log(scale)
    return log_abs, sign


def _log_amplitudes(source: McsSource, nmax: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(ln|C_n|, sign C_n)`` for n = 0..nmax."""
    mu, nu, alpha = source.mu, source.nu, source.alpha
    if nu <= 0:
        raise DegenerateSourceError("MCS amplitudes need nu > 0")
    x = alpha / math.sqrt(2.0 * mu * nu)
    log_h, sign = _log_normalized_hermite(nmax, x)
    n = np.arange(nmax + 1)
    # ln n! and the 2^(n/2) of the Hermite normalisation cancel against
    # (nu / 2mu)^(n/2) / sqrt(n!), leaving (nu/mu)^(n/2)
    log_mag = (
        -0.5 * math.log(mu)
        + 0.5 * n * math.log(nu / mu)
        + 0.5 * alpha**2 * (nu / mu - 1.0)
        + log_h
    )
    return log_mag, sign


def mcs_amplitude(source: McsSource, n: int) -> float:
    if n < 0:
        raise ValueError("n must be >= 0")
    log_mag, sign = _log_amplitudes(source, n)
    return float(sign[n] * math.exp(log_mag[n])) if sign[n] != 0 else 0.0


def _mcs_probs(source: McsSource, trunc: int) -> np.ndarray:
    log_mag, sign = _log_amplitudes(source, trunc)
    p = np.where(sign != 0, np.exp(2.0 * log_mag), 0.0)
    return np.minimum(p, 1.0)


def mcs_distribution(source: McsSource, trunc: int = 0) -> PhotonDistribution:
    """``P_n = C_n^2``.  A source with ``nu = 0`` is plain coherent light."""
    if trunc < 0:
        raise ValueError("trunc must be >= 0")
    if source.nu == 0:
        return poisson_distribution(source.alpha**2, trunc)
    if trunc:
        p = _mcs_probs(source, trunc)
        if 1.0 - math.fsum(p) > MAX_TAIL:
            raise TruncationError(f"N={trunc} leaves tail mass {1 - math.fsum(p):.3g} > 1e-9")
        return PhotonDistribution(p)
    full = _mcs_probs(source, TRUNC_CAP)
    for n in range(TRUNC_STEP, TRUNC_CAP + 1, TRUNC_STEP):
        if 1.0 - math.fsum(full[: n + 1]) <= AUTO_TAIL:
            return PhotonDistribution(full[: n + 1])
    if 1.0 - math.fsum(full) > MAX_TAIL:
        raise TruncationError(
            f"tail mass {1 - math.fsum(full):.3g} > 1e-9 even at N={TRUNC_CAP} "
            f"(alpha={source.alpha}, zeta={source.squeeze.zeta})"
        )
    return PhotonDistribution(full)


def mcs_from_c_nu(c: float, nu: float) -> McsSource:
    if not (c > 0 and nu > 0):
        raise ValueError(f"c and nu must be positive, got c={c}, nu={nu}")
    mu = math.sqrt(1.0 + nu * nu)
    return McsSource(math.sqrt(c * mu * nu), SqueezeParams.from_nu(nu))


def mean_photon_number(dist: PhotonDistribution) -> float:
    return float(math.fsum(np.arange(dist.probs.size) * dist.probs))


def poisson_table(means: np.ndarray, nmax: int) -> np.ndarray:
    """Rows of Poisson probabilities ``P_0..P_nmax``, one per mean."""
    m = np.asarray(means, dtype=float)[:, None]
    n = np.arange(nmax + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = n * np.log(m) - m - gammaln(n + 1)
    logp = np.where((m == 0) & (n == 0), 0.0, logp)
    return np.exp(logp)


def mcs_table(c: float, nus: np.ndarray, nmax: int) -> np.ndarray:
    """Rows of MCS probabilities for a fixed ``c`` and several squeeze values.

    The Hermite argument ``sqrt(c/2)`` is shared by the whole family, so one
    recurrence serves every row.
    """
    nu = np.asarray(nus, dtype=float)[:, None]
    if np.any(nu <= 0):
        raise DegenerateSourceError("MCS amplitudes need nu > 0")
    mu = np.sqrt(1.0 + nu * nu)
    log_h, sign = _log_normalized_hermite(nmax, math.sqrt(c / 2.0))
    n = np.arange(nmax + 1)
    logp = -np.log(mu) + n * np.log(nu / mu) + c * mu * nu * (nu / mu - 1.0) + 2.0 * log_h
    return np.where(sign != 0, np.minimum(np.exp(logp), 1.0), 0.0)


def _mcs_mean(c: float, zeta: float) -> float:
    # alpha^2 (mu - nu)^2 + nu^2 with alpha^2 = c mu nu
    return c * (1.0 - math.exp(-4.0 * zeta)) / 4.0 + math.sinh(zeta) ** 2


@lru_cache(maxsize=65536)
def nu_for_mean(c: float, target_mean: float) -> float:
    """Squeeze ``nu`` at which an MCS with fixed ``c`` has the requested mean."""
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    if not (0 < target_mean <= MEAN_MAX):
        raise ValueError(f"target mean must lie in (0, 5], got {target_mean}")
    zmax = math.asinh(NU_MAX)
    grid = np.linspace(0.0, zmax, 33)
    means = [_mcs_mean(c, z) for z in grid]
    assert all(b > a for a, b in zip(means, means[1:])), "mean not monotone in nu"
    if target_mean > means[-1]:
        raise NoBracketError(f"mean {target_mean} unreachable for c={c} with nu <= {NU_MAX}")
    k = int(np.searchsorted(means, target_mean))
    lo, hi = grid[k - 1], grid[k]
    zeta = brentq(lambda z: _mcs_mean(c, z) - target_mean, lo, hi, xtol=1e-15, rtol=1e-15)
    return math.sinh(zeta)


def _expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring a Taylor series."""
    norm = np.linalg.norm(a, 1)
    s = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0 else 0
    b = a / 2**s
    out = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, 40):
        term = term @ b / k
        out = out + term
        if np.abs(term).max() < 1e-18:
            break
    for _ in range(s):
        out = out @ out
    return out


def fock_oracle(alpha: float, zeta: float, dim: int) -> PhotonDistribution:
    """MCS distribution from the squeeze generator in a ``dim``-level basis."""
    if dim < 4 * (alpha**2 + zeta) + 20:
        raise DimensionTooSmallError(f"dim={dim} below 4*(alpha^2+zeta)+20")
    a = np.diag(np.sqrt(np.arange(1, dim)), 1)
    ad = a.T
    u = _expm(0.5 * zeta * (a @ a - ad @ ad))
    n = np.arange(dim)
    coh = np.exp(-0.5 * alpha**2 + n * math.log(alpha) - 0.5 * gammaln(n + 1)) if alpha > 0 else (n == 0) * 1.0
    p = (u @ coh) ** 2
    tail = 1.0 - math.fsum(p)
    edge = math.fsum(p[-max(1, dim // 4):])
    if tail > MAX_TAIL or edge > MAX_TAIL:
        raise DimensionTooSmallError(f"dim={dim}: tail mass {tail:.3g}, edge mass {edge:.3g}")
    return PhotonDistribution(np.minimum(p, 1.0))


@lru_cache(maxsize=4096)
def cached_distribution(source: Source) -> PhotonDistribution:
    """Auto-truncated distribution of a (hashable, immutable) source."""
    return source.distribution()
