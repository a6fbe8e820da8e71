"""Seeded minibatch training of tabular policies with Adam."""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .alignment import LossOutput, Mode, Sort, aot_loss, dpo_loss, ipo_loss
from .data import PreferenceDataset
from .dominance import DominanceReport, check_fsd
from .measures import DomainError, EmpiricalMeasure
from .penalty import PenaltyFn, logistic
from .policy import TabularPolicy, unpaired_batch
from .softsort import SoftSortConfig

log = logging.getLogger(__name__)

DIVERGENCE_BOUND = 1e6
METRICS_COLUMNS = ("step", "loss", "w2_violation", "min_margin", "median_margin", "ms")


class LossKind(enum.Enum):
    AOT = "aot"
    DPO = "dpo"
    IPO = "ipo"


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, loss: float, last_good: TabularPolicy, metrics: "RunMetrics"):
        super().__init__(f"training diverged at step {step} (loss {loss!r})")
        self.step = step
        self.loss = loss
        self.last_good = last_good
        self.metrics = metrics


@dataclass(frozen=True)
class TrainConfig:
    loss: LossKind = LossKind.AOT
    h: PenaltyFn = field(default_factory=logistic)
    sort: Sort = Sort.HARD
    soft: SoftSortConfig = field(default_factory=SoftSortConfig)
    batch_size: int = 64
    steps: int = 2000
    lr: float = 1e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    eval_every: int = 100

    def __post_init__(self):
        if self.batch_size < 1:
            raise DomainError("batch_size must be at least 1")
        if self.steps < 1:
            raise DomainError("steps must be at least 1")
        if self.eval_every < 1:
            raise DomainError("eval_every must be at least 1")
        if not self.lr >= 0:
            raise DomainError("lr must be nonnegative")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise DomainError("Adam betas must lie in (0, 1)")
        if not self.adam_eps > 0:
            raise DomainError("adam_eps must be positive")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class AdamState:
    params: np.ndarray
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, params: np.ndarray) -> "AdamState":
        params = np.array(params, dtype=float)
        return cls(params, np.zeros_like(params), np.zeros_like(params), 0)


def adam_step(state: AdamState, grad: np.ndarray, cfg: TrainConfig) -> AdamState:
    """One bias-corrected Adam update (no weight decay)."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.params.shape:
        raise DomainError(f"gradient shape {grad.shape} != parameter shape {state.params.shape}")
    if not np.all(np.isfinite(grad)):
        raise DomainError("non-finite gradient")
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    t = state.t + 1
    m = b1 * state.m + (1 - b1) * grad
    v = b2 * state.v + (1 - b2) * grad * grad
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    params = state.params - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return AdamState(params, m, v, t)


@dataclass(frozen=True)
class MetricRecord:
    step: int
    loss: float
    w2_violation: float
    min_margin: float
    median_margin: float
    ms: float
    fsd_holds: bool


@dataclass
class RunMetrics:
    records: list[MetricRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> MetricRecord:
        return self.records[-1]

    def to_csv(self, path: str | Path, timing: bool = False) -> None:
        """Write the metrics table; the ``ms`` column stays empty unless ``timing``.

        Wall-clock time is the only nondeterministic quantity, so leaving it
        out by default keeps repeated runs byte-identical.
        """
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(METRICS_COLUMNS) + "\n")
            for r in self.records:
                ms = repr(float(r.ms)) if timing else ""
                fh.write(
                    f"{r.step},{float(r.loss)!r},{float(r.w2_violation)!r},"
                    f"{float(r.min_margin)!r},{float(r.median_margin)!r},{ms}\n"
                )


class _Stream:
    """Epoch-wise shuffled index stream; a short tail at the epoch end is dropped."""

    def __init__(self, n: int, seed: int, stream_id: int):
        self.n = n
        self.seed = seed
        self.stream_id = stream_id
        self.epoch = -1
        self.order = np.empty(0, dtype=np.intp)
        self.pos = 0

    def take(self, b: int) -> np.ndarray:
        if self.pos + b > self.order.size:
            self.epoch += 1
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, self.stream_id, self.epoch]))
            self.order = rng.permutation(self.n)
            self.pos = 0
        idx = self.order[self.pos : self.pos + b]
        self.pos += b
        return idx


def reward_measures(
    theta: TabularPolicy, ref: TabularPolicy, data: PreferenceDataset
) -> tuple[EmpiricalMeasure, EmpiricalMeasure]:
    """Empirical log-ratio reward measures of chosen and rejected responses."""
    chosen, rejected = data.chosen_rejected()
    u = unpaired_batch(theta, ref, chosen[:, 0], chosen[:, 1])
    v = unpaired_batch(theta, ref, rejected[:, 0], rejected[:, 1])
    return EmpiricalMeasure.from_samples(u), EmpiricalMeasure.from_samples(v)


def evaluate_policy(theta: TabularPolicy, ref: TabularPolicy, data: PreferenceDataset) -> DominanceReport:
    return check_fsd(*reward_measures(theta, ref, data))


def _loss(theta, ref, batch, cfg: TrainConfig) -> LossOutput:
    if cfg.loss is LossKind.AOT:
        return aot_loss(theta, ref, batch, cfg.h, cfg.sort, cfg.soft)
    if cfg.loss is LossKind.DPO:
        return dpo_loss(theta, ref, batch, cfg.h.beta)
    return ipo_loss(theta, ref, batch, cfg.h.beta)


def train(
    theta0: TabularPolicy,
    ref: TabularPolicy,
    data: PreferenceDataset,
    cfg: TrainConfig,
    eval_data: PreferenceDataset | None = None,
) -> tuple[TabularPolicy, RunMetrics]:
    """Run ``cfg.steps`` Adam updates on seeded minibatches.

    Metrics are logged at step 0, every ``eval_every`` steps and at the last
    step. The logged loss is the mean minibatch loss since the previous
    record (at step 0, the first minibatch's loss before any update). The
    dominance columns are computed on ``eval_data`` (default ``data``).
    """
    if theta0.shape != ref.shape:
        raise DomainError("theta0 and ref shapes differ")
    if (data.k, data.m) != theta0.shape:
        raise DomainError(f"dataset is {data.k}x{data.m} but policy is {theta0.shape}")
    if cfg.loss in (LossKind.DPO, LossKind.IPO) and data.mode is not Mode.PAIRED:
        raise DomainError(f"{cfg.loss.value} needs paired data")
    eval_data = data if eval_data is None else eval_data

    if data.mode is Mode.PAIRED:
        sizes = [len(data.paired)]
    else:
        sizes = [len(data.pos), len(data.neg)]
    if cfg.batch_size > min(sizes):
        raise DomainError(f"batch size {cfg.batch_size} exceeds the dataset ({min(sizes)} records)")
    streams = [_Stream(n, cfg.seed, i) for i, n in enumerate(sizes)]

    def next_batch():
        idx = [s.take(cfg.batch_size) for s in streams]
        return data.batch(*idx)

    theta = theta0.copy()
    state = AdamState.fresh(theta.logits)
    metrics = RunMetrics(
        meta={
            "steps": cfg.steps,
            "batch_size": cfg.batch_size,
            "seed": cfg.seed,
            "shuffle": "independent per stream, reshuffled each epoch",
        }
    )
    t0 = time.perf_counter()

    def record(step: int, loss: float):
        rep = evaluate_policy(theta, ref, eval_data)
        metrics.records.append(
            MetricRecord(
                step,
                loss,
                rep.w2_violation,
                rep.min_margin,
                rep.median_margin,
                (time.perf_counter() - t0) * 1e3,
                rep.fsd_holds,
            )
        )
        log.debug("step %d loss %.6g w2 %.3g", step, loss, rep.w2_violation)

    window: list[float] = []
    for step in range(1, cfg.steps + 1):
        out = _loss(theta, ref, next_batch(), cfg)
        if not np.isfinite(out.value) or abs(out.value) > DIVERGENCE_BOUND:
            raise TrainingDiverged(step, out.value, theta.copy(), metrics)
        if step == 1:
            record(0, out.value)
        window.append(out.value)
        state = adam_step(state, out.grad, cfg)
        np.clip(state.params, -theta.clamp, theta.clamp, out=state.params)
        theta.logits = state.params.copy()
        if step % cfg.eval_every == 0 or step == cfg.steps:
            record(step, float(np.mean(window)))
            window = []
    return theta, metrics
