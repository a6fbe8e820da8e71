"""Self-contained correctness suites run by ``fsdalign oracle-check``.

Two suites, each reporting the largest discrepancy it saw:

* sorted OT against exhaustive search over permutations;
* analytic derivatives (penalties and every training loss) against central
  finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import penalty as pen
from .alignment import PreferenceBatch, Sort, aot_loss, aot_value, dpo_loss, ipo_loss
from .measures import DomainError
from .ot1d import ot_bruteforce, ot_sorted
from .policy import TabularPolicy
from .softsort import SoftSortConfig

OT_TOL = 1e-12
GRAD_REL_TOL = 1e-4
FD_STEP = 1e-6

# tight stopping so the iteration count is locally constant and the
# unrolled gradient is the derivative of the function being differenced
FD_SOFT = SoftSortConfig(epsilon=0.1, max_iters=20000, tol=1e-12)


@dataclass
class SuiteResult:
    name: str
    cases: int
    max_error: float
    tol: float
    worst: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.max_error <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        s = f"{status} {self.name}: {self.cases} cases, max error {self.max_error!r} (tol {self.tol!r})"
        if not self.passed and self.worst:
            s += f"; worst case {self.worst}"
        return s


def _random_convex(rng: np.random.Generator) -> list[pen.PenaltyFn]:
    return [
        pen.hinge(),
        pen.squared_hinge(float(rng.uniform(0, 1))),
        pen.logistic(float(rng.uniform(0.01, 2)), float(rng.uniform(0, 0.4))),
        pen.least_squares(float(rng.uniform(0, 1))),
    ]


def ot_oracle_suite(trials: int, seed: int) -> SuiteResult:
    """``|ot_sorted - ot_bruteforce|`` over random instances, n in 2..7."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 101]))
    worst, where, cases = 0.0, "", 0
    for _ in range(trials):
        n = int(rng.integers(2, 8))
        u = rng.normal(size=n)
        v = rng.normal(size=n)
        for h in _random_convex(rng):
            err = abs(ot_sorted(u, v, h)[0] - ot_bruteforce(u, v, h))
            cases += 1
            if err > worst:
                worst, where = err, f"n={n} h={h}"
    return SuiteResult("ot_sorted vs brute force", cases, worst, OT_TOL, where)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.abs(numeric).max()), 1.0)
    return float(np.abs(np.asarray(analytic) - np.asarray(numeric)).max()) / scale


def fd_gradient(fn, theta: TabularPolicy, step: float = FD_STEP) -> np.ndarray:
    """Central differences of ``fn(policy) -> float`` in every logit."""
    g = np.zeros(theta.shape)
    for idx in np.ndindex(*theta.shape):
        hi = theta.copy()
        lo = theta.copy()
        hi.logits[idx] += step
        lo.logits[idx] -= step
        g[idx] = (fn(hi) - fn(lo)) / (2 * step)
    return g


LOSS_CASES = [
    ("aot", mode, sort, h)
    for mode in ("paired", "unpaired")
    for sort in (Sort.HARD, Sort.SOFT)
    for h in ("logistic", "hinge2", "ls")
] + [("dpo", "paired", None, None), ("ipo", "paired", None, None)]


def _penalty(name: str, rng: np.random.Generator) -> pen.PenaltyFn:
    if name == "logistic":
        return pen.logistic(float(rng.uniform(0.5, 2)), float(rng.uniform(0, 0.3)))
    if name == "hinge2":
        return pen.squared_hinge(float(rng.uniform(0, 1)))
    return pen.least_squares(float(rng.uniform(0, 1)))


def random_loss_point(rng: np.random.Generator, case, k: int = 3, m: int = 4, b: int = 6):
    """A random ``(loss_fn, value_fn, theta)`` for one entry of :data:`LOSS_CASES`.

    ``loss_fn`` returns the full :class:`LossOutput`; ``value_fn`` only the
    scalar, which is all finite differencing needs.
    """
    loss, mode, sort, hname = case
    theta = TabularPolicy(rng.normal(size=(k, m)))
    ref = TabularPolicy(rng.normal(size=(k, m)))
    if mode == "paired":
        xs = rng.integers(0, k, size=b)
        yp = rng.integers(0, m, size=b)
        ym = (yp + rng.integers(1, m, size=b)) % m
        batch = PreferenceBatch.of_paired(np.stack([xs, yp, ym], axis=1))
    else:
        pos = np.stack([rng.integers(0, k, size=b), rng.integers(0, m, size=b)], axis=1)
        neg = np.stack([rng.integers(0, k, size=b), rng.integers(0, m, size=b)], axis=1)
        batch = PreferenceBatch.of_unpaired(pos, neg)
    if loss == "aot":
        h = _penalty(hname, rng)
        fn = lambda p: aot_loss(p, ref, batch, h, sort, FD_SOFT)
        value = lambda p: aot_value(p, ref, batch, h, sort, FD_SOFT)
    else:
        beta = float(rng.uniform(0.1, 2))
        fn = lambda p: (dpo_loss if loss == "dpo" else ipo_loss)(p, ref, batch, beta)
        value = lambda p: fn(p).value
    return fn, value, theta


def _case_name(case) -> str:
    loss, mode, sort, h = case
    if loss != "aot":
        return loss
    return f"aot/{mode}/{sort.value}/{h}"


def gradient_suite(trials: int, seed: int) -> SuiteResult:
    """Penalty derivatives and loss gradients against central differences."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 202]))
    worst, where, cases = 0.0, "", 0
    for t in range(trials):
        for h in _random_convex(rng)[1:]:
            x = rng.normal(size=8) * 2
            # keep clear of the squared hinge's second-order kink
            x = x[np.abs(x - h.beta) > 1e-3] if h.kind is pen.Kind.SQUARED_HINGE else x
            fd = (h(x + FD_STEP) - h(x - FD_STEP)) / (2 * FD_STEP)
            err = relative_error(h.deriv(x), fd)
            cases += 1
            if err > worst:
                worst, where = err, f"derivative of {h}"
        case = LOSS_CASES[t % len(LOSS_CASES)]
        fn, value, theta = random_loss_point(rng, case)
        err = relative_error(fn(theta).grad, fd_gradient(value, theta))
        cases += 1
        if err > worst:
            worst, where = err, _case_name(case)
    return SuiteResult("gradients vs finite differences", cases, worst, GRAD_REL_TOL, where)


def oracle_check(trials: int = 200, seed: int = 0) -> list[SuiteResult]:
    if trials < 1:
        raise DomainError("trials must be at least 1")
    return [ot_oracle_suite(trials, seed), gradient_suite(trials, seed)]
