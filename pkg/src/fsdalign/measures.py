"""Weighted empirical measures on the real line.

An :class:`EmpiricalMeasure` keeps its atoms sorted, so the step CDF and the
left-continuous quantile function are both a single ``searchsorted`` away.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

WEIGHT_SUM_TOL = 1e-12


class DomainError(ValueError):
    """Raised when an argument lies outside an operation's domain."""


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Finite weighted point mass sum, atoms in nondecreasing order.

    Duplicate atoms are kept as separate entries. Use :meth:`from_samples`
    or :meth:`from_pairs` rather than the raw constructor unless the inputs
    are already sorted and validated.
    """

    atoms: np.ndarray
    weights: np.ndarray
    cumweights: np.ndarray

    @classmethod
    def from_samples(
        cls, values: Iterable[float], weights: Sequence[float] | None = None
    ) -> "EmpiricalMeasure":
        if not isinstance(values, np.ndarray):
            values = list(values)
        atoms = np.asarray(values, dtype=float)
        if atoms.ndim != 1 or atoms.size == 0:
            raise DomainError("a measure needs at least one atom")
        if not np.all(np.isfinite(atoms)):
            raise DomainError("atoms must be finite")
        n = atoms.size
        # stable, so ties keep their original order
        order = np.argsort(atoms, kind="stable")
        atoms = atoms[order]
        if weights is None:
            w = np.full(n, 1.0 / n)
            cw = np.arange(1, n + 1, dtype=float) / n
        else:
            w = np.asarray(weights, dtype=float)
            if w.shape != (n,):
                raise DomainError("weights and atoms differ in length")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise DomainError("weights must be finite and strictly positive")
            if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
                raise DomainError(f"weights sum to {w.sum()!r}, not 1")
            w = w[order]
            if np.all(w == 1.0 / n):
                cw = np.arange(1, n + 1, dtype=float) / n
            else:
                cw = np.cumsum(w)
                cw[-1] = 1.0
        atoms.flags.writeable = False
        w.flags.writeable = False
        cw.flags.writeable = False
        return cls(atoms, w, cw)

    @classmethod
    def from_pairs(
        cls, pairs: Iterable[tuple[float, float]], normalize: bool = False
    ) -> "EmpiricalMeasure":
        """Build from ``(value, weight)`` pairs.

        With ``normalize`` the weights are rescaled to sum to 1, but only when
        they are off by more than the construction tolerance, so already
        normalized weights keep their exact bits.
        """
        pairs = list(pairs)
        if not pairs:
            raise DomainError("a measure needs at least one atom")
        values = [float(v) for v, _ in pairs]
        weights = np.array([float(w) for _, w in pairs])
        if normalize:
            if np.any(weights <= 0):
                raise DomainError("weights must be strictly positive")
            if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
                weights = weights / weights.sum()
        return cls.from_samples(values, weights)

    def __len__(self) -> int:
        return self.atoms.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmpiricalMeasure):
            return NotImplemented
        return np.array_equal(self.atoms, other.atoms) and np.array_equal(
            self.weights, other.weights
        )

    def shifted(self, c: float) -> "EmpiricalMeasure":
        return EmpiricalMeasure.from_samples(self.atoms + c, self._weights_or_none())

    def scaled(self, a: float) -> "EmpiricalMeasure":
        if a <= 0:
            raise DomainError("scale must be positive")
        return EmpiricalMeasure.from_samples(self.atoms * a, self._weights_or_none())

    def merged(self) -> "EmpiricalMeasure":
        """Collapse equal atoms into one atom carrying their total weight."""
        values, inverse = np.unique(self.atoms, return_inverse=True)
        w = np.zeros(values.size)
        np.add.at(w, inverse, self.weights)
        return EmpiricalMeasure.from_samples(values, w / w.sum())

    def _weights_or_none(self):
        n = self.atoms.size
        if np.all(self.weights == 1.0 / n):
            return None
        return self.weights

    def quantile(self, p: float) -> float:
        return quantile(self, p)

    def cdf(self, x: float) -> float:
        return cdf(self, x)


def quantile(m: EmpiricalMeasure, p: float) -> float:
    """Left-continuous inverse of the CDF, ``inf{x : F(x) >= p}`` for p in (0, 1]."""
    if not (0.0 < p <= 1.0):
        raise DomainError(f"quantile level must lie in (0, 1], got {p!r}")
    idx = int(np.searchsorted(m.cumweights, p, side="left"))
    return float(m.atoms[min(idx, m.atoms.size - 1)])


def cdf(m: EmpiricalMeasure, x: float) -> float:
    if np.isnan(x):
        raise DomainError("cdf of NaN")
    idx = int(np.searchsorted(m.atoms, x, side="right"))
    if idx == 0:
        return 0.0
    return float(m.cumweights[idx - 1])


def quantile_curve(m: EmpiricalMeasure, grid: Sequence[float]) -> np.ndarray:
    """Quantiles at every level of a nondecreasing grid in (0, 1]."""
    g = np.asarray(grid, dtype=float)
    if g.size == 0:
        raise DomainError("empty percentile grid")
    if np.any(g <= 0) or np.any(g > 1) or np.any(np.isnan(g)):
        raise DomainError("grid values must lie in (0, 1]")
    if np.any(np.diff(g) < 0):
        raise DomainError("grid must be nondecreasing")
    idx = np.minimum(np.searchsorted(m.cumweights, g, side="left"), m.atoms.size - 1)
    return m.atoms[idx].copy()


def read_csv(path: str | Path) -> EmpiricalMeasure:
    """Read a ``value,weight`` CSV. A header row is optional; weights are renormalized."""
    pairs = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if lineno == 1 and row[0].strip().lower() == "value":
                continue
            if len(row) == 1:
                raise DomainError(f"{path}:{lineno}: expected value,weight")
            if len(row) != 2:
                raise DomainError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                pairs.append((float(row[0]), float(row[1])))
            except ValueError as exc:
                raise DomainError(f"{path}:{lineno}: {exc}") from None
    return EmpiricalMeasure.from_pairs(pairs, normalize=True)


def write_csv(m: EmpiricalMeasure, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("value,weight\n")
        for a, w in zip(m.atoms, m.weights):
            fh.write(f"{float(a)!r},{float(w)!r}\n")
