"""Multi-objective primitives: dominance, Pareto front, hypervolume.

All objectives follow the minimization convention; metrics that are naturally
maximized (accuracy) are stored negated at ingestion. Exact hypervolume is
implemented for two objectives only, which covers every scenario this
artifact simulates; higher dimensions raise a dedicated error.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DimensionError(ValueError):
    """Objective dimensionality is unsupported or inconsistent."""


@dataclass(frozen=True)
class SampleSet:
    """Identified objective vectors sharing a fixed objective count.

    ``objectives`` has shape (n, M), one row per entry, aligned with ``ids``.
    """

    ids: tuple
    objectives: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.objectives, dtype=float)
        if arr.ndim != 2:
            arr = arr.reshape(len(self.ids), -1)
        if arr.shape[0] != len(self.ids):
            raise DimensionError(
                f"{len(self.ids)} ids but {arr.shape[0]} objective rows"
            )
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValueError("objective values must be finite")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("sample ids must be unique")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "objectives", arr)

    @property
    def objective_count(self) -> int:
        return int(self.objectives.shape[1])

    def __len__(self) -> int:
        return len(self.ids)

    @staticmethod
    def empty(objective_count: int) -> "SampleSet":
        return SampleSet(ids=(), objectives=np.empty((0, objective_count)))


@dataclass(frozen=True)
class HvConfig:
    """Reference point bounding the hypervolume computation from above.

    ``hv_max`` is the attainable maximum hypervolume, when known, used by
    :func:`log_hv_diff`.
    """

    reference: np.ndarray
    hv_max: float | None = None

    def __post_init__(self):
        ref = np.asarray(self.reference, dtype=float).ravel()
        ref = ref.copy()
        ref.flags.writeable = False
        object.__setattr__(self, "reference", ref)


def dominates(x, y) -> bool:
    """True iff x <= y componentwise with at least one strict inequality."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DimensionError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return bool(np.all(x <= y) and np.any(x < y))


def dominance_numbers(sample_set: SampleSet) -> np.ndarray:
    """Count, per entry, how many other entries dominate it.

    Zero exactly for the Pareto-optimal entries.
    """
    obj = sample_set.objectives
    n = obj.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int)
    # (i, j): does row i dominate row j
    le = np.all(obj[:, None, :] <= obj[None, :, :], axis=2)
    lt = np.any(obj[:, None, :] < obj[None, :, :], axis=2)
    dom = le & lt
    return dom.sum(axis=0).astype(int)


def pareto_front(sample_set: SampleSet) -> SampleSet:
    """Entries with dominance number zero, in original order."""
    counts = dominance_numbers(sample_set)
    keep = counts == 0
    ids = tuple(i for i, k in zip(sample_set.ids, keep) if k)
    return SampleSet(ids=ids, objectives=sample_set.objectives[keep])


def hypervolume(sample_set: SampleSet, cfg: HvConfig) -> float:
    """Exact 2-D hypervolume: area dominated by the set, bounded by reference.

    Points not weakly dominating the reference are discarded (they contribute
    nothing), not errors. Duplicate and dominated points do not change the
    result.
    """
    if cfg.reference.size != 2:
        raise DimensionError(
            f"exact hypervolume supports 2 objectives, reference has {cfg.reference.size}"
        )
    if len(sample_set) == 0:
        return 0.0
    obj = sample_set.objectives
    if obj.shape[1] != 2:
        raise DimensionError(f"exact hypervolume supports 2 objectives, got {obj.shape[1]}")
    ref = cfg.reference
    pts = obj[np.all(obj <= ref, axis=1)]
    if pts.size == 0:
        return 0.0
    # Sweep left to right; only points that lower the running best second
    # objective add area.
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    f1 = pts[order, 0]
    f2 = pts[order, 1]
    prev_best = np.minimum.accumulate(np.concatenate([[ref[1]], f2]))[:-1]
    mask = f2 < prev_best
    return float(np.sum((ref[0] - f1[mask]) * (prev_best[mask] - f2[mask])))


def log_hv_diff(cfg: HvConfig, hv_cur: float) -> float:
    """Natural log of the gap to the attainable maximum hypervolume.

    Returns ``-inf`` when the gap is exactly zero (search complete); a
    current hypervolume above the maximum is an error.
    """
    if cfg.hv_max is None:
        raise ValueError("log_hv_diff requires hv_max in the HvConfig")
    if hv_cur > cfg.hv_max:
        raise ValueError(f"hv_cur {hv_cur} exceeds hv_max {cfg.hv_max}")
    gap = cfg.hv_max - hv_cur
    return math.log(gap) if gap > 0 else float("-inf")


def sample_set_to_json(sample_set: SampleSet) -> list[dict]:
    return [
        {"id": i, "objectives": [float(v) for v in row]}
        for i, row in zip(sample_set.ids, sample_set.objectives)
    ]


def sample_set_from_json(records: list[dict]) -> SampleSet:
    ids = tuple(r["id"] for r in records)
    obj = np.array([r["objectives"] for r in records], dtype=float)
    if not records:
        raise ValueError("cannot infer objective count from empty record list")
    return SampleSet(ids=ids, objectives=obj)


def save_sample_set(sample_set: SampleSet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(sample_set_to_json(sample_set), sort_keys=True))


def load_sample_set(path: str | Path) -> SampleSet:
    return sample_set_from_json(json.loads(Path(path).read_text()))
