"""Entropic soft sorting via log-domain Sinkhorn.

The inputs ``x`` are transported onto ascending anchors (the hard-sorted
inputs) with cost ``(x_i - a_j)**2`` and uniform marginals. The soft-sorted
value at rank ``j`` is the barycenter of the mass arriving at anchor ``j``,
recentered so the values keep the input's sum exactly.
As ``epsilon -> 0`` the plan becomes the sorting permutation; as
``epsilon -> inf`` every value tends to the mean of ``x``.

Because the anchors are the inputs themselves, this is entropic transport
of the empirical measure onto itself. Its dual has a symmetric solution, so
a single potential is iterated with the averaged Sinkhorn update
``f <- (f + T(f)) / 2``, which needs a handful of iterations where plain
alternating updates can need thousands on near-tied inputs. A final row
update makes the row marginals exact; the column violation is what ``tol``
bounds. Each column-normalized barycenter is the mean of an exponential
family indexed by its anchor, hence nondecreasing in the anchor whatever the
residual marginal error; subtracting their average restores the sum.

Gradients are obtained by reverse-mode differentiation through exactly the
iterations the forward pass ran, including the dependence of the anchors
on ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .measures import DomainError


class SoftSortConvergenceError(RuntimeError):
    def __init__(self, violation: float, iterations: int):
        super().__init__(
            f"Sinkhorn did not converge: marginal violation {violation:.3e} after {iterations} iterations"
        )
        self.violation = violation
        self.iterations = iterations


@dataclass(frozen=True)
class SoftSortConfig:
    epsilon: float = 0.1
    max_iters: int = 500
    tol: float = 1e-6

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.max_iters < 1:
            raise DomainError("max_iters must be at least 1")


class SoftSortResult(NamedTuple):
    values: np.ndarray
    plan: np.ndarray
    iterations: int
    violation: float


def _lse(z: np.ndarray, axis: int) -> np.ndarray:
    m = z.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(z - m).sum(axis=axis, keepdims=True))).squeeze(axis)


@dataclass
class _Trace:
    x: np.ndarray
    perm: np.ndarray
    cost: np.ndarray
    fs: list  # symmetric iterates f^0 .. f^T
    ts: list  # T(f^0) .. T(f^T); the last one is the final row potential
    plan: np.ndarray  # indexed (input, input)


def _forward(x: np.ndarray, cfg: SoftSortConfig) -> tuple[SoftSortResult, _Trace]:
    n = x.size
    eps = cfg.epsilon
    log_m = -np.log(n)
    perm = np.argsort(x, kind="stable")
    D = (x[:, None] - x[None, :]) ** 2
    Dn = -D / eps
    f = np.zeros(n)
    fs, ts = [f], []
    it = 0
    while True:
        tf = eps * log_m - eps * _lse(f[None, :] / eps + Dn, axis=1)
        ts.append(tf)
        # row sums of the symmetric plan exp((f_i + f_k - D_ik) / eps)
        violation = float(np.abs(np.expm1((f - tf) / eps)).max()) / n
        if violation <= cfg.tol:
            P = np.exp((tf[:, None] + f[None, :]) / eps + Dn)
            violation = float(np.abs(P.sum(axis=0) - 1.0 / n).max())
            if violation <= cfg.tol:
                break
        if it == cfg.max_iters:
            raise SoftSortConvergenceError(violation, it)
        f = 0.5 * (f + tf)
        fs.append(f)
        it += 1
    xbar = x.mean()
    colsum = P.sum(axis=0)
    bary = (P.T @ (x - xbar)) / colsum
    values = (xbar + bary - bary.mean())[perm]
    trace = _Trace(x, perm, D, fs, ts, P)
    return SoftSortResult(values, P[:, perm], it, violation), trace


def _backward(trace: _Trace, upstream: np.ndarray, eps: float) -> np.ndarray:
    x, P, D = trace.x, trace.plan, trace.cost
    n = x.size
    xc = x - x.mean()
    w = np.empty(n)
    w[trace.perm] = upstream
    wc = w - w.mean()
    colsum = P.sum(axis=0)
    bary = (P.T @ xc) / colsum
    # direct dependence of the barycenters on x, plan held fixed
    q = P @ (wc / colsum)
    grad = w.sum() / n + q - q.mean()
    Zbar = (xc[:, None] - bary[None, :]) * (wc / colsum)[None, :] * P
    Dbar = -Zbar / eps
    # final row update F = T(f^T), with the plan's columns on f^T
    Fbar = Zbar.sum(axis=1) / eps
    S = n * P
    Dbar += Fbar[:, None] * S
    fbar = Zbar.sum(axis=0) / eps - S.T @ Fbar
    # f^t = (f^{t-1} + T(f^{t-1})) / 2, back to the constant f^0
    for t in range(len(trace.fs) - 1, 0, -1):
        f_prev, t_prev = trace.fs[t - 1], trace.ts[t - 1]
        S = n * np.exp((t_prev[:, None] + f_prev[None, :] - D) / eps)
        tbar = 0.5 * fbar
        Dbar += tbar[:, None] * S
        fbar = 0.5 * fbar - S.T @ tbar
    G = 2.0 * (x[:, None] - x[None, :]) * Dbar
    return grad + G.sum(axis=1) - G.sum(axis=0)


def _check_input(x: Sequence[float]) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DomainError("soft_sort needs a nonempty 1-D input")
    if not np.all(np.isfinite(x)):
        raise DomainError("soft_sort input must be finite")
    return x


def soft_sort(x: Sequence[float], cfg: SoftSortConfig = SoftSortConfig()) -> SoftSortResult:
    x = _check_input(x)
    if x.size == 1:
        return SoftSortResult(x.copy(), np.ones((1, 1)), 0, 0.0)
    return _forward(x, cfg)[0]


def soft_sort_with_vjp(
    x: Sequence[float], cfg: SoftSortConfig = SoftSortConfig()
) -> tuple[SoftSortResult, Callable[[np.ndarray], np.ndarray]]:
    """Forward pass plus a closure mapping an upstream cotangent to ``d<w, values>/dx``."""
    x = _check_input(x)
    if x.size == 1:
        res = SoftSortResult(x.copy(), np.ones((1, 1)), 0, 0.0)
        return res, lambda w: np.asarray(w, dtype=float).copy()
    res, trace = _forward(x, cfg)

    def vjp(upstream):
        w = np.asarray(upstream, dtype=float)
        if w.shape != x.shape:
            raise DomainError("upstream cotangent must match the input shape")
        return _backward(trace, w, cfg.epsilon)

    return res, vjp


def soft_sort_vjp(
    x: Sequence[float], cfg: SoftSortConfig, upstream: Sequence[float]
) -> np.ndarray:
    return soft_sort_with_vjp(x, cfg)[1](np.asarray(upstream, dtype=float))
