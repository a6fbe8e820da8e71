"""Batch losses and exact logits gradients for AOT, DPO and IPO."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .measures import DomainError
from .penalty import PenaltyFn, UnsupportedOperation
from .policy import (
    TabularPolicy,
    paired_batch,
    paired_grad,
    unpaired_batch,
    unpaired_grad,
)
from .softsort import SoftSortConfig, soft_sort, soft_sort_with_vjp


class Mode(enum.Enum):
    PAIRED = "paired"
    UNPAIRED = "unpaired"


class Sort(enum.Enum):
    HARD = "hard"
    SOFT = "soft"


@dataclass(frozen=True)
class PreferenceBatch:
    """Index arrays for one minibatch.

    ``paired`` has rows ``(x, y_plus, y_minus)``; ``pos`` and ``neg`` have
    rows ``(x, y)``.
    """

    mode: Mode
    paired: np.ndarray = field(default_factory=lambda: np.empty((0, 3), dtype=np.intp))
    pos: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.intp))
    neg: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.intp))

    def __post_init__(self):
        for name, width in (("paired", 3), ("pos", 2), ("neg", 2)):
            arr = np.asarray(getattr(self, name), dtype=np.intp).reshape(-1, width)
            object.__setattr__(self, name, arr)
        if self.mode is Mode.PAIRED:
            if len(self.paired) == 0:
                raise DomainError("empty paired batch")
            if len(self.pos) or len(self.neg):
                raise DomainError("paired batch carries unpaired records")
        else:
            if len(self.pos) == 0 or len(self.neg) == 0:
                raise DomainError("empty unpaired batch")
            if len(self.pos) != len(self.neg):
                raise DomainError("unpaired batch needs as many positives as negatives")
            if len(self.paired):
                raise DomainError("unpaired batch carries paired records")

    @classmethod
    def of_paired(cls, triples) -> "PreferenceBatch":
        return cls(Mode.PAIRED, paired=triples)

    @classmethod
    def of_unpaired(cls, pos, neg) -> "PreferenceBatch":
        return cls(Mode.UNPAIRED, pos=pos, neg=neg)

    def __len__(self) -> int:
        return len(self.paired) if self.mode is Mode.PAIRED else len(self.pos)


@dataclass(frozen=True)
class LossOutput:
    value: float
    grad: np.ndarray
    per_item: np.ndarray


def _sort_with_vjp(values: np.ndarray, sort: Sort, soft_cfg: SoftSortConfig):
    if sort is Sort.HARD:
        # gradient taken with the current permutation frozen
        perm = np.argsort(values, kind="stable")

        def vjp(w):
            out = np.zeros_like(values)
            out[perm] = w
            return out

        return values[perm], vjp
    res, vjp = soft_sort_with_vjp(values, soft_cfg)
    return res.values, vjp


def _aot_rewards(theta, ref, batch):
    if batch.mode is Mode.UNPAIRED:
        u = unpaired_batch(theta, ref, batch.pos[:, 0], batch.pos[:, 1])
        v = unpaired_batch(theta, ref, batch.neg[:, 0], batch.neg[:, 1])
        return u, v
    if theta.shape != ref.shape:
        raise DomainError("policy shapes differ")
    xs, yp, ym = batch.paired.T
    return paired_batch(theta, xs, yp, ym), paired_batch(ref, xs, yp, ym)


def aot_value(
    theta: TabularPolicy,
    ref: TabularPolicy,
    batch: PreferenceBatch,
    h: PenaltyFn,
    sort: Sort = Sort.HARD,
    soft_cfg: SoftSortConfig = SoftSortConfig(),
) -> float:
    """The value of :func:`aot_loss` alone, skipping the backward pass."""
    u, v = _aot_rewards(theta, ref, batch)
    if sort is Sort.HARD:
        su, sv = np.sort(u, kind="stable"), np.sort(v, kind="stable")
    else:
        su, sv = soft_sort(u, soft_cfg).values, soft_sort(v, soft_cfg).values
    return float(np.mean(h(su - sv)))


def aot_loss(
    theta: TabularPolicy,
    ref: TabularPolicy,
    batch: PreferenceBatch,
    h: PenaltyFn,
    sort: Sort = Sort.HARD,
    soft_cfg: SoftSortConfig = SoftSortConfig(),
) -> LossOutput:
    """``mean h(u_(i) - v_(i))`` over the sorted rewards of a batch.

    Unpaired: ``u`` and ``v`` are the log-ratio rewards of positives and
    negatives, both functions of ``theta``. Paired: ``u`` is the chosen minus
    rejected logit margin under ``theta`` and ``v`` the same under ``ref``.
    """
    if not h.differentiable:
        raise UnsupportedOperation("AOT training needs a differentiable penalty")
    u, v = _aot_rewards(theta, ref, batch)
    if batch.mode is Mode.PAIRED:
        xs, yp, ym = batch.paired.T
    n = u.size
    su, u_vjp = _sort_with_vjp(u, sort, soft_cfg)
    sv, v_vjp = _sort_with_vjp(v, sort, soft_cfg)
    diffs = su - sv
    value = float(np.mean(h(diffs)))
    dd = np.asarray(h.deriv(diffs)) / n
    du = u_vjp(dd)
    if batch.mode is Mode.UNPAIRED:
        dv = v_vjp(-dd)
        grad = unpaired_grad(theta, batch.pos[:, 0], batch.pos[:, 1], du)
        grad += unpaired_grad(theta, batch.neg[:, 0], batch.neg[:, 1], dv)
    else:
        grad = paired_grad(theta, xs, yp, ym, du)
    return LossOutput(value, grad, diffs)


def _paired_margins(theta, ref, batch):
    if batch.mode is not Mode.PAIRED:
        raise DomainError("DPO and IPO need a paired batch")
    if theta.shape != ref.shape:
        raise DomainError("policy shapes differ")
    xs, yp, ym = batch.paired.T
    z = paired_batch(theta, xs, yp, ym) - paired_batch(ref, xs, yp, ym)
    return z, (xs, yp, ym)


def dpo_loss(theta: TabularPolicy, ref: TabularPolicy, batch: PreferenceBatch, beta: float) -> LossOutput:
    if not beta > 0:
        raise DomainError("beta must be positive")
    z, idx = _paired_margins(theta, ref, batch)
    losses = np.logaddexp(0.0, -beta * z)
    coef = -beta * expit(-beta * z) / z.size
    return LossOutput(float(np.mean(losses)), paired_grad(theta, *idx, coef), z)


def ipo_loss(theta: TabularPolicy, ref: TabularPolicy, batch: PreferenceBatch, beta: float) -> LossOutput:
    if not beta > 0:
        raise DomainError("beta must be positive")
    z, idx = _paired_margins(theta, ref, batch)
    losses = (beta - z) ** 2
    coef = -2.0 * (beta - z) / z.size
    return LossOutput(float(np.mean(losses)), paired_grad(theta, *idx, coef), z)


def minibatch_gradient_bias(
    theta: TabularPolicy,
    ref: TabularPolicy,
    batch: PreferenceBatch,
    h: PenaltyFn,
    b: int,
    seed: int,
) -> float:
    """Frobenius distance between the mean minibatch AOT gradient and the full-batch one.

    The full batch is shuffled (positives and negatives independently) and
    cut into disjoint minibatches of size ``b``; a short remainder is
    dropped. Sorting inside small batches matches quantiles coarsely, so
    the averaged gradient is biased; the bias shrinks as ``b`` grows.
    """
    n = len(batch)
    if not 1 <= b <= n:
        raise DomainError(f"minibatch size must lie in [1, {n}]")
    full = aot_loss(theta, ref, batch, h).grad
    rng = np.random.default_rng(seed)
    chunks = n // b
    total = np.zeros_like(full)
    if batch.mode is Mode.PAIRED:
        order = rng.permutation(n)
        for c in range(chunks):
            rows = batch.paired[order[c * b : (c + 1) * b]]
            total += aot_loss(theta, ref, PreferenceBatch.of_paired(rows), h).grad
    else:
        op, on = rng.permutation(n), rng.permutation(n)
        for c in range(chunks):
            sl = slice(c * b, (c + 1) * b)
            mb = PreferenceBatch.of_unpaired(batch.pos[op[sl]], batch.neg[on[sl]])
            total += aot_loss(theta, ref, mb, h).grad
    return float(np.linalg.norm(total / chunks - full))
