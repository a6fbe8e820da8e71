"""One-dimensional optimal transport with a convex cost ``h(u - v)``.

For convex ``h`` the comonotone coupling (i-th smallest to i-th smallest) is
optimal, so the transport cost is an integral of ``h`` applied to the gap
between the two quantile functions. ``ot_sorted`` handles equal-size uniform
samples; ``ot_weighted`` integrates the piecewise-constant quantile gap of
arbitrary weighted measures exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .measures import DomainError, EmpiricalMeasure
from .penalty import PenaltyFn

BRUTEFORCE_MAX_N = 8
# merged breakpoints closer than this are treated as one
_BREAKPOINT_TOL = 1e-13


@dataclass(frozen=True)
class Coupling:
    """Sparse transport plan; indices refer to the sorted atoms of each measure."""

    index_u: np.ndarray
    index_v: np.ndarray
    mass: np.ndarray

    def entries(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(m)) for i, j, m in zip(self.index_u, self.index_v, self.mass)]

    def dense(self, n_u: int, n_v: int) -> np.ndarray:
        P = np.zeros((n_u, n_v))
        np.add.at(P, (self.index_u, self.index_v), self.mass)
        return P


@dataclass(frozen=True)
class QuantileGap:
    """Piecewise-constant ``Q_mu(t) - Q_nu(t)`` on the intervals ``(t_{k-1}, t_k]``."""

    lengths: np.ndarray
    gaps: np.ndarray
    index_u: np.ndarray
    index_v: np.ndarray

    def integrate(self, h: PenaltyFn) -> float:
        return math.fsum(self.lengths * np.asarray(h(self.gaps)))


def _as_array(x: Sequence[float], name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise DomainError(f"{name} must be a nonempty 1-D sequence")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} must be finite")
    return a


def ot_sorted(u: Sequence[float], v: Sequence[float], h: PenaltyFn) -> tuple[float, np.ndarray]:
    """Exact ``OT_h`` between two equal-size uniform samples by sorting both.

    Returns the cost ``mean(h(u_(i) - v_(i)))`` and the sorted differences.
    """
    u = _as_array(u, "u")
    v = _as_array(v, "v")
    if u.size != v.size:
        raise DomainError(
            f"ot_sorted needs equal sample counts ({u.size} != {v.size}); use ot_weighted"
        )
    diffs = np.sort(u, kind="stable") - np.sort(v, kind="stable")
    return float(np.mean(h(diffs))), diffs


def quantile_gap(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> QuantileGap:
    """Merge the cumulative-weight breakpoints of two measures."""
    t = np.union1d(mu.cumweights, nu.cumweights)
    keep = np.concatenate(([True], np.diff(t) > _BREAKPOINT_TOL))
    # the last breakpoint must stay exactly 1
    t = t[keep]
    t[-1] = 1.0
    lo = np.concatenate(([0.0], t[:-1]))
    mid = 0.5 * (lo + t)
    iu = np.minimum(np.searchsorted(mu.cumweights, mid, side="left"), len(mu) - 1)
    iv = np.minimum(np.searchsorted(nu.cumweights, mid, side="left"), len(nu) - 1)
    return QuantileGap(t - lo, mu.atoms[iu] - nu.atoms[iv], iu, iv)


def ot_weighted(mu: EmpiricalMeasure, nu: EmpiricalMeasure, h: PenaltyFn) -> tuple[float, Coupling]:
    """Exact ``OT_h`` between weighted measures via the north-west corner plan."""
    gap = quantile_gap(mu, nu)
    plan = Coupling(gap.index_u, gap.index_v, gap.lengths)
    return gap.integrate(h), plan


def ot_bruteforce(u: Sequence[float], v: Sequence[float], h: PenaltyFn) -> float:
    """Minimum of ``mean(h(u_i - v_sigma(i)))`` over every permutation. Test oracle."""
    u = _as_array(u, "u")
    v = _as_array(v, "v")
    n = u.size
    if v.size != n:
        raise DomainError("ot_bruteforce needs equal sample counts")
    if n > BRUTEFORCE_MAX_N:
        raise DomainError(f"brute force refused for n={n} > {BRUTEFORCE_MAX_N}")
    perms = np.array(list(itertools.permutations(range(n))))
    costs = np.asarray(h(u[None, :] - v[perms])).mean(axis=1)
    return float(costs.min())
