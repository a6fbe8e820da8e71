"""First-order stochastic dominance checks and violation functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import penalty as pen
from .measures import DomainError, EmpiricalMeasure, quantile_curve
from .ot1d import ot_sorted, quantile_gap
from .penalty import PenaltyFn

DEFAULT_GRID = np.round(np.arange(1, 100) / 100.0, 2)


@dataclass(frozen=True)
class DominanceReport:
    fsd_holds: bool
    zero_one_area: float
    w1_violation: float
    w2_violation: float
    margin_curve: list[tuple[float, float]] = field(repr=False)

    @property
    def min_margin(self) -> float:
        return min(m for _, m in self.margin_curve)

    @property
    def median_margin(self) -> float:
        return float(np.median([m for _, m in self.margin_curve]))

    def to_dict(self) -> dict:
        return {
            "fsd_holds": self.fsd_holds,
            "zero_one_area": self.zero_one_area,
            "w1_violation": self.w1_violation,
            "w2_violation": self.w2_violation,
            "min_margin": self.min_margin,
            "median_margin": self.median_margin,
            "margin_curve": [[p, m] for p, m in self.margin_curve],
        }


def margin_curve(
    mu: EmpiricalMeasure, nu: EmpiricalMeasure, grid: Sequence[float] = DEFAULT_GRID
) -> list[tuple[float, float]]:
    qu = quantile_curve(mu, grid)
    qv = quantile_curve(nu, grid)
    return [(float(p), float(a - b)) for p, a, b in zip(grid, qu, qv)]


def check_fsd(
    mu: EmpiricalMeasure, nu: EmpiricalMeasure, grid: Sequence[float] = DEFAULT_GRID
) -> DominanceReport:
    """Does ``mu`` dominate ``nu`` in the first order (non-strict)?

    The violation functionals are exact integrals over the merged
    breakpoints of the two quantile functions, not grid approximations;
    only ``margin_curve`` is sampled on ``grid``.
    """
    gap = quantile_gap(mu, nu)
    return DominanceReport(
        fsd_holds=bool(np.all(gap.gaps >= 0)),
        zero_one_area=gap.integrate(pen.zero_one()),
        w1_violation=gap.integrate(pen.hinge()),
        w2_violation=gap.integrate(pen.squared_hinge(0.0)),
        margin_curve=margin_curve(mu, nu, grid),
    )


@dataclass(frozen=True)
class RateResult:
    slope: float
    points: list[tuple[int, float]]
    population: float


def _cell_rng(seed: int, i: int, rep: int) -> np.random.Generator:
    # counter-based stream per (grid index, repetition), independent of schedule
    ss = np.random.SeedSequence(seed, spawn_key=(i, rep))
    return np.random.Generator(np.random.Philox(ss))


def rate_experiment(
    shift: float,
    width: float,
    n_grid: Sequence[int],
    reps: int,
    h: PenaltyFn,
    seed: int,
) -> RateResult:
    """Monte-Carlo estimate of how fast empirical ``OT_h`` approaches its population value.

    ``U ~ Uniform[shift, shift + width]`` and ``V ~ Uniform[0, width]`` have a
    constant quantile gap, so the population cost is exactly ``h(shift)``.
    Returns the least-squares slope of ``log(mean |error|)`` against ``log n``.
    """
    if not width > 0:
        raise DomainError("width must be positive")
    ns = [int(n) for n in n_grid]
    if len(ns) < 2:
        raise DomainError("rate experiment needs at least two sample sizes")
    if any(n < 4 for n in ns) or any(b <= a for a, b in zip(ns, ns[1:])):
        raise DomainError("sample sizes must be ascending and at least 4")
    if reps < 1:
        raise DomainError("reps must be at least 1")
    population = float(h(shift))
    points = []
    for i, n in enumerate(ns):
        errs = []
        for rep in range(reps):
            rng = _cell_rng(seed, i, rep)
            u = rng.uniform(shift, shift + width, size=n)
            v = rng.uniform(0.0, width, size=n)
            errs.append(abs(ot_sorted(u, v, h)[0] - population))
        points.append((n, math.fsum(errs) / reps))
    logn = np.log([n for n, _ in points])
    loge = np.log([max(e, np.finfo(float).tiny) for _, e in points])
    slope = float(np.polyfit(logn, loge, 1)[0])
    return RateResult(slope, points, population)
