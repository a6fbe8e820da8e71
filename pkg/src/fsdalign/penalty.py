"""Convex surrogates of the 0/1 dominance-violation indicator.

Every penalty acts on a quantile margin ``x = Q_U(t) - Q_V(t)``; negative
margins are violations. All functions here accept scalars or numpy arrays.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .measures import DomainError

DEFAULT_BETA = 0.01


class UnsupportedOperation(RuntimeError):
    """Raised when a penalty cannot provide the requested quantity."""


class Kind(enum.Enum):
    ZERO_ONE = "zero-one"
    HINGE = "hinge"
    SQUARED_HINGE = "hinge2"
    LOGISTIC = "logistic"
    LEAST_SQUARES = "ls"


@dataclass(frozen=True)
class PenaltyFn:
    kind: Kind
    beta: float = DEFAULT_BETA
    label_smoothing: float = 0.0

    def __post_init__(self):
        if self.kind in (Kind.SQUARED_HINGE, Kind.LEAST_SQUARES, Kind.LOGISTIC):
            if not (self.beta >= 0 and np.isfinite(self.beta)):
                raise DomainError(f"beta must be a finite nonnegative number, got {self.beta!r}")
        if self.kind is Kind.LOGISTIC and self.beta <= 0:
            raise DomainError("logistic penalty needs beta > 0")
        if not (0.0 <= self.label_smoothing < 0.5):
            raise DomainError("label_smoothing must lie in [0, 0.5)")
        if self.label_smoothing and self.kind is not Kind.LOGISTIC:
            raise DomainError("label_smoothing only applies to the logistic penalty")

    @property
    def differentiable(self) -> bool:
        return self.kind is not Kind.ZERO_ONE

    def __call__(self, x):
        return evaluate(self, x)

    def deriv(self, x):
        return derivative(self, x)

    def __str__(self) -> str:
        if self.kind in (Kind.ZERO_ONE, Kind.HINGE):
            return self.kind.value
        s = f"{self.kind.value}:{self.beta!r}"
        if self.label_smoothing:
            s += f":{self.label_smoothing!r}"
        return s


def zero_one() -> PenaltyFn:
    return PenaltyFn(Kind.ZERO_ONE, beta=0.0)


def hinge() -> PenaltyFn:
    return PenaltyFn(Kind.HINGE, beta=0.0)


def squared_hinge(beta: float = DEFAULT_BETA) -> PenaltyFn:
    return PenaltyFn(Kind.SQUARED_HINGE, beta)


def logistic(beta: float = DEFAULT_BETA, label_smoothing: float = 0.0) -> PenaltyFn:
    return PenaltyFn(Kind.LOGISTIC, beta, label_smoothing)


def least_squares(beta: float = DEFAULT_BETA) -> PenaltyFn:
    return PenaltyFn(Kind.LEAST_SQUARES, beta)


def _check(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)):
        raise DomainError("penalty evaluated at NaN")
    return x


def _out(x, r):
    return float(r) if np.ndim(x) == 0 else r


def evaluate(h: PenaltyFn, x):
    x = _check(x)
    b = h.beta
    if h.kind is Kind.ZERO_ONE:
        r = (x < 0).astype(float)
    elif h.kind is Kind.HINGE:
        r = np.maximum(-x, 0.0)
    elif h.kind is Kind.SQUARED_HINGE:
        r = np.maximum(b - x, 0.0) ** 2
    elif h.kind is Kind.LOGISTIC:
        lam = h.label_smoothing
        # log(1 + e^{-bx}) == -log sigmoid(bx)
        r = np.logaddexp(0.0, -b * x)
        if lam:
            r = (1.0 - lam) * r + lam * np.logaddexp(0.0, b * x)
    else:
        r = (b - x) ** 2
    return _out(x, r)


def derivative(h: PenaltyFn, x):
    if h.kind is Kind.ZERO_ONE:
        raise UnsupportedOperation("the 0/1 penalty has no useful derivative")
    x = _check(x)
    b = h.beta
    if h.kind is Kind.HINGE:
        # subgradient -1 on the violated side, 0 at and above the kink
        r = np.where(x < 0, -1.0, 0.0)
    elif h.kind is Kind.SQUARED_HINGE:
        r = -2.0 * np.maximum(b - x, 0.0)
    elif h.kind is Kind.LOGISTIC:
        lam = h.label_smoothing
        r = -b * expit(-b * x)
        if lam:
            r = (1.0 - lam) * r + lam * b * expit(b * x)
    else:
        r = -2.0 * (b - x)
    return _out(x, r)


def parse(text: str) -> PenaltyFn:
    """Parse ``zero-one``, ``hinge``, ``hinge2:b``, ``logistic:b[:lam]`` or ``ls:b``."""
    parts = text.strip().split(":")
    name, args = parts[0].lower(), parts[1:]
    try:
        nums = [float(a) for a in args]
    except ValueError:
        raise DomainError(f"bad penalty string {text!r}") from None
    if name in ("zero-one", "hinge"):
        if nums:
            raise DomainError(f"{name} takes no parameters")
        return zero_one() if name == "zero-one" else hinge()
    if name in ("hinge2", "ls"):
        if len(nums) > 1:
            raise DomainError(f"{name} takes one parameter")
        beta = nums[0] if nums else DEFAULT_BETA
        return squared_hinge(beta) if name == "hinge2" else least_squares(beta)
    if name == "logistic":
        if len(nums) > 2:
            raise DomainError("logistic takes at most two parameters")
        beta = nums[0] if nums else DEFAULT_BETA
        lam = nums[1] if len(nums) > 1 else 0.0
        return logistic(beta, lam)
    raise DomainError(f"unknown penalty {name!r}")
