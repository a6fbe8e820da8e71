"""Synthetic planted-reward preference data and its JSONL format.

Record schemas, one JSON object per line:

* paired: ``{"x": int, "yp": int, "ym": int}``
* unpaired: ``{"x": int, "y": int, "label": "pos" | "neg"}``

Generator metadata (shape, seeds, the planted reward table) lives in an
optional JSON sidecar, conventionally ``<file>.meta.json``, so the record
file itself stays header-free.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .alignment import Mode, PreferenceBatch
from .measures import DomainError


class DatasetParseError(ValueError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno


@dataclass
class PreferenceDataset:
    mode: Mode
    k: int
    m: int
    paired: np.ndarray = field(default_factory=lambda: np.empty((0, 3), dtype=np.intp))
    pos: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.intp))
    neg: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.intp))
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.paired = np.asarray(self.paired, dtype=np.intp).reshape(-1, 3)
        self.pos = np.asarray(self.pos, dtype=np.intp).reshape(-1, 2)
        self.neg = np.asarray(self.neg, dtype=np.intp).reshape(-1, 2)
        if self.mode is Mode.PAIRED and np.any(self.paired[:, 1] == self.paired[:, 2]):
            raise DomainError("paired records need distinct chosen and rejected responses")

    def __len__(self) -> int:
        return len(self.paired) if self.mode is Mode.PAIRED else len(self.pos) + len(self.neg)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PreferenceDataset):
            return NotImplemented
        return (
            self.mode is other.mode
            and (self.k, self.m) == (other.k, other.m)
            and np.array_equal(self.paired, other.paired)
            and np.array_equal(self.pos, other.pos)
            and np.array_equal(self.neg, other.neg)
            and self.meta == other.meta
        )

    def chosen_rejected(self) -> tuple[np.ndarray, np.ndarray]:
        """``(x, y)`` rows of chosen and rejected responses, for reward metrics."""
        if self.mode is Mode.PAIRED:
            return self.paired[:, [0, 1]], self.paired[:, [0, 2]]
        return self.pos, self.neg

    def to_unpaired(self) -> "PreferenceDataset":
        """Break the pairing: chosen halves become positives, rejected negatives."""
        if self.mode is Mode.UNPAIRED:
            return self
        pos, neg = self.chosen_rejected()
        meta = dict(self.meta, unpaired_from="paired")
        return PreferenceDataset(Mode.UNPAIRED, self.k, self.m, pos=pos, neg=neg, meta=meta)

    def batch(self, rows_a, rows_b=None) -> PreferenceBatch:
        if self.mode is Mode.PAIRED:
            return PreferenceBatch.of_paired(self.paired[rows_a])
        return PreferenceBatch.of_unpaired(self.pos[rows_a], self.neg[rows_b])

    def planted_rewards(self) -> np.ndarray | None:
        r = self.meta.get("rewards")
        return None if r is None else np.asarray(r, dtype=float).reshape(self.k, self.m)


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def planted_reward_table(k: int, m: int, reward_seed: int) -> np.ndarray:
    return np.random.default_rng(reward_seed).standard_normal((k, m))


def _sample_rows(rng: np.random.Generator, probs: np.ndarray, xs: np.ndarray) -> np.ndarray:
    # inverse-CDF draw per row; deterministic given rng state
    cdf = np.cumsum(probs[xs], axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(xs.size)
    return (u[:, None] > cdf).sum(axis=1).astype(np.intp)


def generate(
    k: int,
    m: int,
    n: int,
    mode: Mode | str,
    temp: float,
    seed: int,
    reward_seed: int | None = None,
) -> PreferenceDataset:
    """Sample a preference dataset from a planted reward table ``R ~ N(0, 1)``.

    Chosen/positive responses follow ``softmax(R[x] / temp)``, rejected or
    negative ones ``softmax(-R[x] / temp)``. Paired mode draws ``n`` triples
    and resamples the rejected response until it differs from the chosen one;
    unpaired mode draws ``n`` positives and ``n`` negatives with independent
    prompts. ``reward_seed`` (default ``seed``) fixes ``R`` alone, so held-out
    sets can share the table while drawing fresh records.
    """
    mode = Mode(mode)
    if k < 2 or m < 2:
        raise DomainError("generate needs K >= 2 and M >= 2")
    if n < 1:
        raise DomainError("generate needs n >= 1")
    if not temp > 0:
        raise DomainError("temperature must be positive")
    reward_seed = seed if reward_seed is None else reward_seed
    R = planted_reward_table(k, m, reward_seed)
    p_plus = _softmax(R / temp)
    p_minus = _softmax(-R / temp)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    meta = {
        "generator": "planted",
        "k": k,
        "m": m,
        "n": n,
        "mode": mode.value,
        "temp": temp,
        "seed": seed,
        "reward_seed": reward_seed,
        "rewards": [float(v) for v in R.ravel()],
    }
    if mode is Mode.PAIRED:
        xs = rng.integers(0, k, size=n)
        yp = _sample_rows(rng, p_plus, xs)
        ym = _sample_rows(rng, p_minus, xs)
        clash = np.flatnonzero(yp == ym)
        while clash.size:
            ym[clash] = _sample_rows(rng, p_minus, xs[clash])
            clash = clash[yp[clash] == ym[clash]]
        return PreferenceDataset(mode, k, m, paired=np.stack([xs, yp, ym], axis=1), meta=meta)
    xp = rng.integers(0, k, size=n)
    yp = _sample_rows(rng, p_plus, xp)
    xn = rng.integers(0, k, size=n)
    yn = _sample_rows(rng, p_minus, xn)
    return PreferenceDataset(
        mode, k, m, pos=np.stack([xp, yp], axis=1), neg=np.stack([xn, yn], axis=1), meta=meta
    )


def meta_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_dataset(ds: PreferenceDataset, path: str | Path, meta_file: str | Path | None = None) -> None:
    """Write the JSONL records, plus the metadata sidecar when ``meta_file`` is given."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if ds.mode is Mode.PAIRED:
            for x, yp, ym in ds.paired.tolist():
                fh.write(json.dumps({"x": x, "yp": yp, "ym": ym}) + "\n")
        else:
            for label, rows in (("pos", ds.pos), ("neg", ds.neg)):
                for x, y in rows.tolist():
                    fh.write(json.dumps({"x": x, "y": y, "label": label}) + "\n")
    if meta_file is None:
        return
    sidecar = {"k": ds.k, "m": ds.m, "mode": ds.mode.value, "meta": ds.meta}
    Path(meta_file).write_text(json.dumps(sidecar, sort_keys=True) + "\n", encoding="utf-8")


_PAIRED_KEYS = {"x", "yp", "ym"}
_UNPAIRED_KEYS = {"x", "y", "label"}


def _int_field(obj, key, path, lineno) -> int:
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise DatasetParseError(path, lineno, f"field {key!r} must be an integer")
    return v


def read_dataset(
    path: str | Path,
    k: int | None = None,
    m: int | None = None,
    meta_file: str | Path | None = None,
) -> PreferenceDataset:
    """Parse a JSONL dataset, validating indices against ``K x M``.

    Explicit ``k``/``m`` win; otherwise the shape comes from the sidecar
    (``meta_file``, or ``<path>.meta.json`` if that exists), otherwise it is
    inferred from the largest indices seen. The mode is inferred from the
    first record.
    """
    path = Path(path)
    meta: dict = {}
    mp = meta_path(path) if meta_file is None else Path(meta_file)
    if meta_file is not None or mp.exists():
        sidecar = json.loads(mp.read_text(encoding="utf-8"))
        meta = sidecar.get("meta", {})
        k = sidecar.get("k") if k is None else k
        m = sidecar.get("m") if m is None else m
    mode = None
    paired, pos, neg = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(path, lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise DatasetParseError(path, lineno, "record must be a JSON object")
            keys = set(obj)
            line_mode = Mode.PAIRED if keys == _PAIRED_KEYS else Mode.UNPAIRED if keys == _UNPAIRED_KEYS else None
            if line_mode is None:
                raise DatasetParseError(path, lineno, f"unexpected keys {sorted(keys)}")
            if mode is None:
                mode = line_mode
            elif line_mode is not mode:
                raise DatasetParseError(path, lineno, "paired and unpaired records mixed")
            x = _int_field(obj, "x", path, lineno)
            if k is not None and not (0 <= x < k):
                raise DatasetParseError(path, lineno, f"prompt {x} out of range [0, {k})")
            if x < 0:
                raise DatasetParseError(path, lineno, f"negative prompt index {x}")
            if mode is Mode.PAIRED:
                ys = [_int_field(obj, "yp", path, lineno), _int_field(obj, "ym", path, lineno)]
                if ys[0] == ys[1]:
                    raise DatasetParseError(path, lineno, "chosen and rejected responses coincide")
            else:
                ys = [_int_field(obj, "y", path, lineno)]
                if obj["label"] not in ("pos", "neg"):
                    raise DatasetParseError(path, lineno, f"label must be 'pos' or 'neg', got {obj['label']!r}")
            for y in ys:
                if y < 0 or (m is not None and y >= m):
                    bound = f"[0, {m})" if m is not None else ">= 0"
                    raise DatasetParseError(path, lineno, f"response {y} out of range {bound}")
            if mode is Mode.PAIRED:
                paired.append((x, ys[0], ys[1]))
            elif obj["label"] == "pos":
                pos.append((x, ys[0]))
            else:
                neg.append((x, ys[0]))
    if mode is None:
        raise DatasetParseError(path, 0, "dataset is empty")
    rows = np.array(paired or pos + neg, dtype=np.intp)
    if k is None:
        k = int(rows[:, 0].max()) + 1
    if m is None:
        m = int(rows[:, 1:].max()) + 1
    if mode is Mode.PAIRED:
        return PreferenceDataset(mode, k, m, paired=paired, meta=meta)
    if not pos or not neg:
        raise DatasetParseError(path, 0, "unpaired dataset needs both pos and neg records")
    return PreferenceDataset(mode, k, m, pos=pos, neg=neg, meta=meta)
