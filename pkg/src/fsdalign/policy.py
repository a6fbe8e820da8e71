"""Tabular softmax policies over K prompts and M single-token responses.

Rewards come in the two flavours AOT needs:

* unpaired, ``log pi_theta(y|x) - log pi_ref(y|x)``;
* paired, ``log pi(y+|x) - log pi(y-|x)``, where the normalizer cancels and
  only two logits remain.

The ``*_batch`` functions are vectorized forms used by the losses; the scalar
``reward_*`` functions return the full logits-shaped gradient of one sample.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .measures import DomainError

DEFAULT_CLAMP = 30.0


@dataclass
class TabularPolicy:
    logits: np.ndarray
    clamp: float = DEFAULT_CLAMP

    def __post_init__(self):
        self.logits = np.array(self.logits, dtype=float)
        if self.logits.ndim != 2 or min(self.logits.shape) < 1:
            raise DomainError("logits must be a nonempty K x M matrix")
        if not np.all(np.isfinite(self.logits)):
            raise DomainError("logits must be finite")
        if not self.clamp > 0:
            raise DomainError("clamp must be positive")
        if np.abs(self.logits).max() > self.clamp:
            raise DomainError("logits exceed the clamp bound")

    @classmethod
    def uniform(cls, k: int, m: int, clamp: float = DEFAULT_CLAMP) -> "TabularPolicy":
        return cls(np.zeros((k, m)), clamp)

    @property
    def k(self) -> int:
        return self.logits.shape[0]

    @property
    def m(self) -> int:
        return self.logits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.logits.shape

    def copy(self) -> "TabularPolicy":
        return TabularPolicy(self.logits.copy(), self.clamp)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TabularPolicy):
            return NotImplemented
        return self.clamp == other.clamp and np.array_equal(self.logits, other.logits)

    def log_probs(self) -> np.ndarray:
        z = self.logits - self.logits.max(axis=1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs())

    def project(self) -> None:
        """Clip logits in place onto ``[-clamp, clamp]``."""
        np.clip(self.logits, -self.clamp, self.clamp, out=self.logits)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "m": self.m,
            "clamp": self.clamp,
            "logits": [float(v) for v in self.logits.ravel()],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TabularPolicy":
        expected = {"k", "m", "clamp", "logits"}
        if set(obj) != expected:
            raise DomainError(f"checkpoint keys must be {sorted(expected)}, got {sorted(obj)}")
        k, m = int(obj["k"]), int(obj["m"])
        flat = np.asarray(obj["logits"], dtype=float)
        if flat.size != k * m:
            raise DomainError(f"checkpoint holds {flat.size} logits, expected {k}*{m}")
        return cls(flat.reshape(k, m), float(obj["clamp"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TabularPolicy":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class RewardSample:
    value: float
    grad: np.ndarray


def _check_index(p: TabularPolicy, x, y) -> None:
    x = np.asarray(x)
    y = np.asarray(y)
    if np.any(x < 0) or np.any(x >= p.k) or np.any(y < 0) or np.any(y >= p.m):
        raise DomainError(f"index out of range for a {p.k}x{p.m} policy")


def _check_pair(theta: TabularPolicy, ref: TabularPolicy) -> None:
    if theta.shape != ref.shape:
        raise DomainError(f"policy shapes differ: {theta.shape} vs {ref.shape}")


def logprob(p: TabularPolicy, x: int, y: int) -> float:
    _check_index(p, x, y)
    row = p.logits[x]
    top = row.max()
    return float(row[y] - top - np.log(np.exp(row - top).sum()))


def reward_unpaired(theta: TabularPolicy, ref: TabularPolicy, x: int, y: int) -> RewardSample:
    _check_pair(theta, ref)
    value = logprob(theta, x, y) - logprob(ref, x, y)
    grad = np.zeros(theta.shape)
    row = theta.logits[x]
    pi = np.exp(row - row.max())
    grad[x] = -pi / pi.sum()
    grad[x, y] += 1.0
    return RewardSample(value, grad)


def reward_paired(p: TabularPolicy, x: int, y_plus: int, y_minus: int) -> RewardSample:
    _check_index(p, x, y_plus)
    _check_index(p, x, y_minus)
    grad = np.zeros(p.shape)
    grad[x, y_plus] += 1.0
    grad[x, y_minus] -= 1.0
    return RewardSample(float(p.logits[x, y_plus] - p.logits[x, y_minus]), grad)


def unpaired_batch(theta: TabularPolicy, ref: TabularPolicy, xs, ys) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.intp)
    ys = np.asarray(ys, dtype=np.intp)
    _check_pair(theta, ref)
    _check_index(theta, xs, ys)
    return theta.log_probs()[xs, ys] - ref.log_probs()[xs, ys]


def unpaired_grad(theta: TabularPolicy, xs, ys, coef) -> np.ndarray:
    """``sum_i coef_i * d r_u(x_i, y_i) / d logits`` as a K x M matrix."""
    xs = np.asarray(xs, dtype=np.intp)
    ys = np.asarray(ys, dtype=np.intp)
    coef = np.asarray(coef, dtype=float)
    G = np.zeros(theta.shape)
    np.add.at(G, (xs, ys), coef)
    per_prompt = np.zeros(theta.k)
    np.add.at(per_prompt, xs, coef)
    G -= per_prompt[:, None] * theta.probs()
    return G


def paired_batch(p: TabularPolicy, xs, yp, ym) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.intp)
    yp = np.asarray(yp, dtype=np.intp)
    ym = np.asarray(ym, dtype=np.intp)
    _check_index(p, xs, yp)
    _check_index(p, xs, ym)
    return p.logits[xs, yp] - p.logits[xs, ym]


def paired_grad(p: TabularPolicy, xs, yp, ym, coef) -> np.ndarray:
    G = np.zeros(p.shape)
    coef = np.asarray(coef, dtype=float)
    np.add.at(G, (np.asarray(xs, dtype=np.intp), np.asarray(yp, dtype=np.intp)), coef)
    np.add.at(G, (np.asarray(xs, dtype=np.intp), np.asarray(ym, dtype=np.intp)), -coef)
    return G
