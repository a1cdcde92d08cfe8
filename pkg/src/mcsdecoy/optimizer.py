"""Intensity optimisation, secure-distance comparison and the c sweep.

Sources are parameterised by mean photon number for both families so that a
coherent and an MCS configuration searched over the same ranges compare on
equal terms.  For MCS the mean is mapped to ``nu`` at fixed ``c``.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .bounds import CANCEL_THRESHOLD, e1_upper_terms, ratio_monotone_mask, s1_lower_terms
from .channel import ChannelParams, errors, yields
from .errors import EmptyFeasibleSetError, McsDecoyError
from .keyrate import Protocol, ProtocolConfig, rate_terms, scan_for_distance
from .photon_stats import (
    AUTO_TAIL,
    TRUNC_CAP,
    CoherentSource,
    Source,
    mcs_from_c_nu,
    mcs_table,
    nu_for_mean,
    poisson_table,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SourceFamily:
    """Coherent light (``c is None``) or the MCS family with a fixed ``c``."""

    c: Optional[float] = None

    def __post_init__(self):
        if self.c is not None and not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")

    @property
    def is_coherent(self) -> bool:
        return self.c is None

    @property
    def label(self) -> str:
        return "coherent" if self.c is None else f"mcs(c={self.c:g})"

    def source(self, mean: float) -> Source:
        if self.c is None:
            return CoherentSource(mean)
        return mcs_from_c_nu(self.c, nu_for_mean(self.c, mean))

    def table(self, means: np.ndarray) -> np.ndarray:
        """Probability rows for ``means``, truncated where every tail is below 1e-12."""
        means = np.asarray(means, dtype=float)
        nmax = 20
        while True:
            if self.c is None:
                p = poisson_table(means, nmax)
            else:
                p = mcs_table(self.c, [nu_for_mean(self.c, float(m)) for m in means], nmax)
            if nmax >= TRUNC_CAP or np.all(1.0 - p.sum(axis=1) <= AUTO_TAIL):
                return p
            nmax = min(2 * nmax, TRUNC_CAP)


COHERENT = SourceFamily()


@dataclass(frozen=True)
class OptimizationSpec:
    protocol: Protocol = Protocol.TWO_INTENSITY
    family: SourceFamily = COHERENT
    decoy_mean_fixed: Optional[float] = None
    decoy_range: tuple[float, float] = (0.01, 0.3)
    signal_range: tuple[float, float] = (0.05, 1.0)
    grid_points: int = 30
    refinement_rounds: int = 2
    q: float = 0.5
    f_ec: float = 1.2

    def __post_init__(self):
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        if self.protocol is Protocol.THREE_INTENSITY and self.decoy_mean_fixed is None:
            object.__setattr__(self, "decoy_mean_fixed", 0.1)
        (dlo, dhi), (slo, shi) = self.decoy_range, self.signal_range
        if not (0 <= dlo < dhi and 0 <= slo < shi and dhi < shi):
            raise ValueError("search ranges must be positive with decoy upper bound below signal upper bound")
        if self.decoy_mean_fixed is not None and not 0 < self.decoy_mean_fixed < shi:
            raise ValueError("fixed decoy mean must be positive and below the signal range")
        if self.grid_points < 2 or self.refinement_rounds < 0:
            raise ValueError("need grid_points >= 2 and refinement_rounds >= 0")

    @property
    def config(self) -> ProtocolConfig:
        return ProtocolConfig(self.protocol, self.q, self.f_ec)


@dataclass(frozen=True)
class Optimum:
    decoy_mean: float
    signal_mean: float
    rate: float


def rate_grid(
    family: SourceFamily,
    config: ProtocolConfig,
    channel: ChannelParams,
    length_km: float,
    decoy_means: Sequence[float],
    signal_means: Sequence[float],
) -> np.ndarray:
    """Key rate for every (decoy, signal) pair; NaN where no bound exists.

    Matches ``keyrate.evaluate_point`` cell by cell: a failed ratio premise
    counts as an insecure point, a bad ordering or vacuum-coefficient sign
    makes the cell infeasible.
    """
    dm = np.asarray(decoy_means, dtype=float)
    sm = np.asarray(signal_means, dtype=float)
    table = family.table(np.concatenate([dm, sm]))
    pd, ps = table[: dm.size], table[dm.size:]
    nmax = table.shape[1] - 1
    s_n = yields(channel, length_km, nmax)
    e_n = errors(channel, length_km, nmax)
    gain_d, gain_s = pd @ s_n, ps @ s_n
    egain_s = ps @ (e_n * s_n)
    qber_s = egain_s / gain_s

    alive = ps[:, 2:] > CANCEL_THRESHOLD
    has_multi = alive.any(axis=1)
    r = np.where(has_multi, alive.argmax(axis=1) + 2, 2)

    # axes: (decoy, signal)
    rr = np.broadcast_to(r, (dm.size, sm.size))
    pd_r = pd[:, r]
    ps_r = ps[np.arange(sm.size), r][None, :]
    pd0, pd1 = pd[:, :1], pd[:, 1:2]
    ps0, ps1 = ps[None, :, 0], ps[None, :, 1]

    premise = ratio_monotone_mask(pd[:, None, :], ps[None, :, :], rr) & (pd_r > 0)
    feasible = (dm[:, None] < sm[None, :]) & has_multi[None, :]

    if config.protocol is Protocol.THREE_INTENSITY:
        s0 = np.full((1, sm.size), float(s_n[0]))
    else:
        coeff = pd_r * ps0 - ps_r * pd0
        feasible &= coeff <= 0
        with np.errstate(divide="ignore", invalid="ignore"):
            s0 = np.minimum(2.0 * egain_s / ps[:, 0], 1.0)[None, :]
        feasible &= ps0 > 1e-15

    num, den = s1_lower_terms(pd0, pd1, pd_r, ps0, ps1, ps_r, gain_d[:, None], gain_s[None, :], s0)
    feasible &= ~premise | (den > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        s1 = np.clip(num / den, 0.0, 1.0)
    s1 = np.where(premise & feasible, s1, 0.0)

    s0_e1 = s0 if config.protocol is Protocol.THREE_INTENSITY else 0.0
    enum_, eden = e1_upper_terms(egain_s[None, :], s0_e1, ps0, ps1, s1)
    with np.errstate(divide="ignore", invalid="ignore"):
        e1 = np.where(eden > 0, np.clip(enum_ / eden, 0.0, 0.5), 0.5)

    rate = rate_terms(config.q, config.f_ec, gain_s[None, :], qber_s[None, :], ps1, s1, e1)
    return np.where(feasible, rate, np.nan)


def _open_grid(lo: float, hi: float, points: int) -> np.ndarray:
    """``points`` equally spaced values in ``(lo, hi]``."""
    return lo + (hi - lo) * np.arange(1, points + 1) / points


def _best_cell(rates: np.ndarray) -> Optional[tuple[int, int]]:
    if np.all(np.isnan(rates)):
        return None
    # row-major first maximum: lowest decoy mean, then lowest signal mean
    flat = int(np.nanargmax(rates))
    return divmod(flat, rates.shape[1])


def optimize_point(spec: OptimizationSpec, channel: ChannelParams, length_km: float) -> Optimum:
    """Grid search over mean photon numbers with zoomed refinement rounds."""
    config = spec.config
    dlo, dhi = spec.decoy_range
    slo, shi = spec.signal_range
    fixed = spec.decoy_mean_fixed
    decoys = np.array([fixed]) if fixed is not None else _open_grid(dlo, dhi, spec.grid_points)
    signals = _open_grid(slo, shi, spec.grid_points)

    best: Optional[Optimum] = None
    for round_ in range(spec.refinement_rounds + 1):
        rates = rate_grid(spec.family, config, channel, length_km, decoys, signals)
        cell = _best_cell(rates)
        if cell is not None:
            cand = Optimum(float(decoys[cell[0]]), float(signals[cell[1]]), float(rates[cell]))
            if best is None or cand.rate > best.rate:
                best = cand
        if best is None or round_ == spec.refinement_rounds:
            break
        zoom = 10.0 ** (round_ + 1)
        if fixed is None:
            half = (dhi - dlo) / zoom / 2
            decoys = _zoom_grid(best.decoy_mean, half, dlo, dhi, spec.grid_points)
        half = (shi - slo) / zoom / 2
        signals = _zoom_grid(best.signal_mean, half, slo, shi, spec.grid_points)

    if best is None or not best.rate > 0:
        raise EmptyFeasibleSetError(f"no positive key rate for {spec.family.label} at L={length_km} km")
    return best


def _zoom_grid(center: float, half: float, lo: float, hi: float, points: int) -> np.ndarray:
    a, b = max(lo, center - half), min(hi, center + half)
    grid = np.linspace(a, b, points)
    grid = grid[grid > lo]
    return np.unique(np.append(grid, center))


def _positive(spec: OptimizationSpec, channel: ChannelParams, length_km: float) -> bool:
    try:
        optimize_point(spec, channel, length_km)
    except EmptyFeasibleSetError:
        return False
    return True


def optimized_secure_distance(spec: OptimizationSpec, channel: ChannelParams) -> float:
    """Largest length with a positive optimised key rate, re-optimising at every probe."""
    return scan_for_distance(lambda L: _positive(spec, channel, L))


@dataclass
class SweepRow:
    c: float
    delta_l_2int: Optional[float] = None
    delta_l_3int: Optional[float] = None
    distance_2int: Optional[float] = None
    distance_3int: Optional[float] = None
    best_params: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)


@dataclass
class SweepResult:
    rows: list[SweepRow]
    baseline_2int: float
    baseline_3int: float

    def argmax_c(self, protocol: Protocol) -> float:
        key = "delta_l_2int" if Protocol(protocol) is Protocol.TWO_INTENSITY else "delta_l_3int"
        rows = [r for r in self.rows if getattr(r, key) is not None]
        return max(rows, key=lambda r: getattr(r, key)).c


def _spec_for(base: OptimizationSpec, protocol: Protocol, family: SourceFamily) -> OptimizationSpec:
    fixed = base.decoy_mean_fixed if base.decoy_mean_fixed is not None else 0.1
    return replace(
        base,
        protocol=protocol,
        family=family,
        decoy_mean_fixed=fixed if protocol is Protocol.THREE_INTENSITY else None,
    )


def _distance_cell(args):
    spec, channel = args
    try:
        d = optimized_secure_distance(spec, channel)
        opt = optimize_point(spec, channel, d)
        return d, (opt.decoy_mean, opt.signal_mean), None
    except McsDecoyError as exc:
        return None, None, f"{type(exc).__name__}: {exc}"


def sweep_c(
    c_values: Sequence[float],
    channel: ChannelParams,
    base_spec: OptimizationSpec = OptimizationSpec(),
    workers: int = 1,
) -> SweepResult:
    """Secure-distance gain of MCS(c) over coherent light for both protocols."""
    c_values = [float(c) for c in c_values]
    if any(c <= 0 for c in c_values) or c_values != sorted(c_values):
        raise ValueError("c values must be positive and sorted")
    protocols = (Protocol.TWO_INTENSITY, Protocol.THREE_INTENSITY)
    jobs = [(_spec_for(base_spec, p, COHERENT), channel) for p in protocols]
    jobs += [(_spec_for(base_spec, p, SourceFamily(c)), channel) for c in c_values for p in protocols]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_distance_cell, jobs))
    else:
        results = [_distance_cell(j) for j in jobs]

    base = {p: results[i][0] for i, p in enumerate(protocols)}
    for p in protocols:
        if base[p] is None:
            raise EmptyFeasibleSetError(f"coherent baseline failed for {p.value}: {results[protocols.index(p)][2]}")

    rows = []
    for k, c in enumerate(c_values):
        row = SweepRow(c)
        for j, p in enumerate(protocols):
            dist, params, err = results[2 + 2 * k + j]
            tag = "2int" if p is Protocol.TWO_INTENSITY else "3int"
            if err is not None:
                row.errors[tag] = err
                continue
            setattr(row, f"distance_{tag}", dist)
            setattr(row, f"delta_l_{tag}", dist - base[p])
            row.best_params[tag] = params
        rows.append(row)
    return SweepResult(rows, base[Protocol.TWO_INTENSITY], base[Protocol.THREE_INTENSITY])
