"""Tabular architecture benchmark and rank-degraded proxy evaluator.

The benchmark table is the simulator's ground truth: every encoding in the
space maps to a true accuracy, a second deployment objective (e.g. inference
energy in mJ), and training/evaluation GPU-hour costs. The proxy evaluator
perturbs true accuracy with seeded noise calibrated so its full-space rank
correlation against the truth hits a configurable Spearman target, standing
in for supernet-based estimates.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats


class BenchmarkError(ValueError):
    """Malformed, incomplete, or inconsistent benchmark data."""


@dataclass(frozen=True)
class ArchSpace:
    """Fixed-length integer encodings: ``genes`` positions, each in [0, arity)."""

    genes: int = 6
    arity: int = 5

    @property
    def size(self) -> int:
        return self.arity**self.genes

    def index_of(self, encoding) -> int:
        enc = np.asarray(encoding, dtype=int)
        if enc.shape != (self.genes,):
            raise BenchmarkError(f"encoding shape {enc.shape} != ({self.genes},)")
        if np.any(enc < 0) or np.any(enc >= self.arity):
            raise BenchmarkError(f"gene out of range [0, {self.arity}): {enc.tolist()}")
        idx = 0
        for g in enc:
            idx = idx * self.arity + int(g)
        return idx

    def encoding_of(self, index: int) -> np.ndarray:
        if not 0 <= index < self.size:
            raise BenchmarkError(f"index {index} out of range for space of {self.size}")
        genes = np.empty(self.genes, dtype=int)
        for pos in range(self.genes - 1, -1, -1):
            genes[pos] = index % self.arity
            index //= self.arity
        return genes

    def all_encodings(self) -> np.ndarray:
        """(size, genes) matrix of every encoding, in index order."""
        grids = np.meshgrid(*[np.arange(self.arity)] * self.genes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def random_encoding(self, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, self.arity, size=self.genes)


def encoding_to_str(encoding) -> str:
    return "".join(str(int(g)) for g in np.asarray(encoding, dtype=int))


@dataclass(frozen=True)
class BenchmarkTable:
    """Ground-truth metrics for the complete encoding space, index-aligned."""

    space: ArchSpace
    accuracy: np.ndarray = field(repr=False)      # percent, [0, 100]
    objective2: np.ndarray = field(repr=False)    # problem units, minimized
    train_cost: np.ndarray = field(repr=False)    # GPU-hours for true eval
    eval_cost: np.ndarray = field(repr=False)     # GPU-hours for proxy eval

    def __post_init__(self):
        n = self.space.size
        for name in ("accuracy", "objective2", "train_cost", "eval_cost"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise BenchmarkError(f"{name} has shape {arr.shape}, expected ({n},)")
            if not np.all(np.isfinite(arr)):
                raise BenchmarkError(f"{name} contains non-finite values")
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if np.any(self.accuracy < 0) or np.any(self.accuracy > 100):
            raise BenchmarkError("accuracies must lie in [0, 100]")
        if np.any(self.train_cost <= 0) or np.any(self.eval_cost <= 0):
            raise BenchmarkError("costs must be positive")


@dataclass(frozen=True)
class ProxyModel:
    """Seeded rank-degrading noise over the benchmark's accuracy column.

    ``noise_scale`` is calibrated at construction so the full-table Spearman
    correlation between proxy and true accuracy lands at ``target_spearman``.
    The per-encoding noise draw is a pure function of (seed, encoding index),
    so an architecture always receives the same proxy score within a run.
    """

    target_spearman: float
    noise_scale: float
    seed: int
    proxy_accuracy: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.proxy_accuracy, dtype=float).copy()
        arr.flags.writeable = False
        object.__setattr__(self, "proxy_accuracy", arr)


def _proxy_noise(seed: int, n: int) -> np.ndarray:
    # one fixed stream per seed; entry i belongs to encoding index i
    return np.random.default_rng([int(seed), 0x9E3779B9]).standard_normal(n)


def calibrate_proxy(table: BenchmarkTable, target_spearman: float, seed: int) -> ProxyModel:
    """Bisection on the noise scale until the measured Spearman hits target."""
    if not 0.0 < target_spearman <= 1.0:
        raise BenchmarkError(f"target_spearman must be in (0, 1], got {target_spearman}")
    acc = table.accuracy
    sd = float(acc.std())
    if sd == 0:
        raise BenchmarkError("benchmark accuracy is constant; proxy calibration impossible")
    z = (acc - acc.mean()) / sd
    noise = _proxy_noise(seed, table.space.size)

    def proxy_acc(scale: float) -> np.ndarray:
        latent = z + scale * noise
        return np.clip(acc.mean() + sd * latent, 0.0, 100.0)

    if target_spearman >= 1.0:
        return ProxyModel(target_spearman, 0.0, seed, proxy_acc(0.0))

    lo, hi = 0.0, 1.0
    while stats.spearmanr(acc, proxy_acc(hi)).statistic > target_spearman and hi < 1e3:
        hi *= 2.0
    scale = hi
    for _ in range(60):
        scale = 0.5 * (lo + hi)
        rho = stats.spearmanr(acc, proxy_acc(scale)).statistic
        if abs(rho - target_spearman) < 5e-3:
            break
        if rho > target_spearman:
            lo = scale
        else:
            hi = scale
    return ProxyModel(target_spearman, float(scale), seed, proxy_acc(scale))


def true_eval(table: BenchmarkTable, encoding) -> tuple[np.ndarray, float]:
    """Fully-trained metrics: ([-accuracy, objective2], train GPU-hours)."""
    idx = table.space.index_of(encoding)
    obj = np.array([-table.accuracy[idx], table.objective2[idx]])
    return obj, float(table.train_cost[idx])


def proxy_eval(proxy: ProxyModel, table: BenchmarkTable, encoding) -> tuple[np.ndarray, float]:
    """Proxy metrics: noisy accuracy, exact second objective, cheap cost.

    The second objective is returned exactly: deployment metrics are quick to
    measure without training. Cost is the table's eval cost (default 1/100 of
    the training cost).
    """
    idx = table.space.index_of(encoding)
    obj = np.array([-proxy.proxy_accuracy[idx], table.objective2[idx]])
    return obj, float(table.eval_cost[idx])


def gen_synthetic_benchmark(
    seed: int,
    shape: tuple[int, int] = (6, 5),
    target_spearman: float = 0.7,
    acc_range: tuple[float, float] = (55.0, 95.0),
    obj2_range: tuple[float, float] = (5.0, 50.0),
    cost_mean: float = 2.5,
    proxy_cost_factor: float = 0.01,
) -> tuple[BenchmarkTable, ProxyModel]:
    """Deterministically synthesize a complete benchmark plus its proxy.

    Accuracy is a smooth random function of the genes: per-position effects,
    low-order pairwise interactions, and mild noise, rescaled into
    ``acc_range``. The second objective is positively but imperfectly
    correlated with accuracy so the Pareto front is non-trivial. Training
    costs follow a narrow lognormal around ``cost_mean`` GPU-hours.
    """
    genes, arity = shape
    space = ArchSpace(genes=genes, arity=arity)
    if space.size > 10**6:
        raise BenchmarkError(f"space of {space.size} encodings exceeds the 1e6 cap")
    rng = np.random.default_rng([int(seed), 0])
    enc = space.all_encodings()  # (N, genes)
    n = space.size

    effects = rng.normal(0.0, 1.0, size=(genes, arity))
    latent = effects[np.arange(genes)[None, :], enc].sum(axis=1)
    n_pairs = min(genes * (genes - 1) // 2, genes)
    pairs = [(int(a), int(b)) for a, b in
             rng.choice([(i, j) for i in range(genes) for j in range(i + 1, genes)],
                        size=n_pairs, replace=False)]
    for a, b in pairs:
        inter = rng.normal(0.0, 0.5, size=(arity, arity))
        latent = latent + inter[enc[:, a], enc[:, b]]
    latent = latent + rng.normal(0.0, 0.2, size=n)

    def rescale(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
        span = x.max() - x.min()
        if span == 0:
            return np.full_like(x, 0.5 * (lo + hi))
        return lo + (hi - lo) * (x - x.min()) / span

    accuracy = rescale(latent, *acc_range)

    z_acc = (latent - latent.mean()) / latent.std()
    indep = rng.normal(0.0, 1.0, size=n)
    objective2 = rescale(0.7 * z_acc + 0.7 * indep, *obj2_range)

    train_cost = np.exp(rng.normal(np.log(cost_mean), 0.25, size=n))
    eval_cost = train_cost * proxy_cost_factor

    table = BenchmarkTable(
        space=space,
        accuracy=accuracy,
        objective2=objective2,
        train_cost=train_cost,
        eval_cost=eval_cost,
    )
    proxy = calibrate_proxy(table, target_spearman, seed)
    return table, proxy


_COLUMNS = ["encoding", "accuracy", "objective2", "train_cost", "eval_cost"]


def write_benchmark(table: BenchmarkTable, path: str | Path, manifest: dict | None = None) -> None:
    """Write the CSV table; optionally a JSON manifest alongside it."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_COLUMNS)
        for idx in range(table.space.size):
            enc = encoding_to_str(table.space.encoding_of(idx))
            writer.writerow([
                enc,
                repr(float(table.accuracy[idx])),
                repr(float(table.objective2[idx])),
                repr(float(table.train_cost[idx])),
                repr(float(table.eval_cost[idx])),
            ])
    if manifest is not None:
        path.with_suffix(".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_benchmark(path: str | Path, space: ArchSpace | None = None) -> BenchmarkTable:
    """Load a CSV benchmark, requiring completeness over the encoding space.

    The space defaults to 6 genes of arity 5; every valid encoding must be
    present exactly once.
    """
    path = Path(path)
    if not path.exists():
        raise BenchmarkError(f"benchmark file not found: {path}")
    if space is None:
        space = ArchSpace()
    n = space.size
    cols = {name: np.full(n, np.nan) for name in _COLUMNS[1:]}
    seen = np.zeros(n, dtype=bool)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != _COLUMNS:
            raise BenchmarkError(f"expected header {','.join(_COLUMNS)}, got {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise BenchmarkError(f"line {line_no}: expected 5 columns, got {len(row)}")
            enc_str = row[0].strip()
            if len(enc_str) != space.genes or not enc_str.isdigit():
                raise BenchmarkError(f"line {line_no}: bad encoding {enc_str!r}")
            genes = np.array([int(c) for c in enc_str])
            try:
                idx = space.index_of(genes)
            except BenchmarkError as exc:
                raise BenchmarkError(f"line {line_no}: {exc}") from exc
            if seen[idx]:
                raise BenchmarkError(f"line {line_no}: duplicate encoding {enc_str}")
            seen[idx] = True
            try:
                for name, raw in zip(_COLUMNS[1:], row[1:]):
                    cols[name][idx] = float(raw)
            except ValueError as exc:
                raise BenchmarkError(f"line {line_no}: bad numeric value: {exc}") from exc
    if not seen.all():
        missing = int(np.argmin(seen))
        raise BenchmarkError(
            f"benchmark incomplete: {int((~seen).sum())} encodings missing, "
            f"first is {encoding_to_str(space.encoding_of(missing))}"
        )
    return BenchmarkTable(space=space, **cols)
