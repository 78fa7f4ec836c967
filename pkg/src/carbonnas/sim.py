"""Hour-stepped simulator of a GPU pool split between architecture sampling
and architecture evaluation under a time-varying carbon-intensity signal.

Each simulated hour an allocation strategy (fixed, heuristic, or RL) divides
the pool between the energy-cheap sampling pipeline, which proposes and
proxy-scores candidates into a capacity-bounded ready-to-train queue, and the
energy-expensive evaluation pipeline, which trains queue candidates to
convergence and adds their true metrics to the observed set. Carbon is
accounted from the actual trace; allocation decisions may run off forecasts.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import agent as rl
from .forecast import persistence_forecast
from .moo import HvConfig, SampleSet, dominance_numbers, hypervolume, log_hv_diff
from .partition import PartitionTree, RegionNode, TreeConfig, build_tree, sample_in_region, select_region
from .surrogate import ArchSpace, BenchmarkTable, ProxyModel, proxy_eval, true_eval
from .trace import CarbonTrace, TraceWindow, intensity_at, window_extremes

STRATEGIES = ("vanilla", "one_shot", "heuristic", "rl")


@dataclass(frozen=True)
class SimConfig:
    num_gpus: int = 8
    gpu_power_kw: float = 0.25            # per busy GPU
    budget: float = 50_000.0              # grams CO2, or wall-hours in time mode
    budget_mode: str = "carbon"           # "carbon" or "time"
    cap_r: int | None = None              # ready-queue capacity; default 4 * num_gpus
    init_samples: int = 20
    tree_rebuild_every: int = 5           # new true evaluations per rebuild
    sampler_batch: int = 4                # candidates per sampling GPU-hour
    supernet_rebuild_gpu_hours: float = 0.5
    max_hours: int | None = None          # horizon cap; trace end always applies
    hv_max: float | None = None           # attainable maximum HV, when known
    n_cap: int = 500                      # normalizer for the searched-count state input
    forecast_horizon: int = 24
    tree: TreeConfig = field(default_factory=TreeConfig)
    reward_alpha: float = 1.0
    reward_beta: float = 0.1
    reward_gamma_n: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.num_gpus < 1:
            raise ValueError("num_gpus must be >= 1")
        if self.budget <= 0:
            raise ValueError("budget must be > 0")
        if self.budget_mode not in ("carbon", "time"):
            raise ValueError(f"unknown budget mode {self.budget_mode!r}")
        if self.capacity < 1:
            raise ValueError("cap_r must be >= 1")

    @property
    def capacity(self) -> int:
        return self.cap_r if self.cap_r is not None else 4 * self.num_gpus


def config_hash(cfg: SimConfig, strategy: str, seed: int) -> str:
    payload = json.dumps({"config": asdict(cfg), "strategy": strategy, "seed": seed},
                         sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Allocation strategies


def lambda_sample(c_cur: float, window: TraceWindow) -> float:
    """Sampling share of the pool: high carbon pushes work toward sampling.

    A degenerate window (constant intensity) yields 0: nothing is gained by
    deferring evaluation when every hour is equally clean.
    """
    if window.c_max == window.c_min:
        return 0.0
    return (c_cur - window.c_min) / (window.c_max - window.c_min)


def heuristic_allocate(c_cur: float, window: TraceWindow, num_gpus: int) -> tuple[int, int]:
    """(g_sample, g_eval) from the linear intensity-position rule."""
    g_sample = int(round(num_gpus * lambda_sample(c_cur, window)))
    return g_sample, num_gpus - g_sample


def fixed_allocate(mode: str, num_gpus: int) -> tuple[int, int]:
    """Static splits: vanilla trains everything, one_shot only samples."""
    if mode == "vanilla":
        return 0, num_gpus
    if mode == "one_shot":
        return num_gpus, 0
    raise ValueError(f"unknown fixed mode {mode!r}")


def rl_allocate(policy: rl.Policy, state: np.ndarray,
                num_gpus: int) -> tuple[int, int]:
    """Deploy the policy greedily (mode action) and round to whole GPUs.

    Exploration noise belongs to training; simulated deployments act on the
    most likely action so repeated runs of a checkpoint agree.
    """
    dist = rl.policy_forward(policy, state)
    ratio = rl.allocation_ratio(rl.greedy_action(dist), policy.cfg)
    g_eval = int(round(num_gpus * ratio))
    return num_gpus - g_eval, g_eval


def ratio_to_allocation(ratio: float, num_gpus: int) -> tuple[int, int]:
    g_eval = int(round(num_gpus * float(np.clip(ratio, 0.0, 1.0))))
    return num_gpus - g_eval, g_eval


# ---------------------------------------------------------------------------
# Simulation state


@dataclass
class Candidate:
    index: int                    # encoding index; doubles as the sample id
    genes: np.ndarray
    objectives: np.ndarray        # proxy objectives
    order: int                    # insertion order, breaks dominance ties


@dataclass
class RunningEval:
    index: int
    genes: np.ndarray
    remaining: float              # GPU-hours left


@dataclass
class SimState:
    clock: int = 0
    observed_ids: list = field(default_factory=list)
    observed_obj: list = field(default_factory=list)
    observed_enc: list = field(default_factory=list)
    ready: list = field(default_factory=list)           # Candidate
    running: list = field(default_factory=list)         # RunningEval
    cumulative_carbon: float = 0.0
    cumulative_relative_carbon: float = 0.0
    hv: float = 0.0
    hv_cfg: HvConfig | None = None
    tree: PartitionTree | None = None
    selected_leaf: RegionNode | None = None
    evals_since_rebuild: int = 0
    insert_counter: int = 0
    rr_offset: int = 0
    trajectory: list = field(default_factory=list)

    def observed_set(self) -> SampleSet:
        return SampleSet(ids=tuple(self.observed_ids),
                         objectives=np.array(self.observed_obj).reshape(len(self.observed_ids), -1)
                         if self.observed_ids else np.empty((0, 2)))

    def known_indices(self) -> set:
        known = set(self.observed_ids)
        known.update(c.index for c in self.ready)
        known.update(r.index for r in self.running)
        return known


def _recompute_hv(state: SimState) -> float:
    state.hv = hypervolume(state.observed_set(), state.hv_cfg)
    return state.hv


def _ready_dominance(state: SimState) -> np.ndarray:
    """Dominance numbers of ready candidates against observed + ready points."""
    n_obs = len(state.observed_ids)
    rows = [np.asarray(o) for o in state.observed_obj] + [c.objectives for c in state.ready]
    combined = SampleSet(ids=tuple(range(len(rows))), objectives=np.array(rows))
    return dominance_numbers(combined)[n_obs:]


def _pop_best_candidate(state: SimState) -> Candidate:
    counts = _ready_dominance(state)
    best = min(range(len(state.ready)), key=lambda i: (counts[i], state.ready[i].order))
    return state.ready.pop(best)


def _trim_ready(state: SimState, capacity: int):
    while len(state.ready) > capacity:
        counts = _ready_dominance(state)
        worst = max(range(len(state.ready)), key=lambda i: (counts[i], state.ready[i].order))
        state.ready.pop(worst)


def _rebuild_tree(state: SimState, space: ArchSpace, cfg: SimConfig) -> bool:
    """Refit the partition tree from the observed set; False if too small."""
    if len(state.observed_ids) < 2 * cfg.tree.min_leaf_samples:
        state.tree = None
        state.selected_leaf = None
        return False
    samples = state.observed_set()
    encodings = np.array(state.observed_enc)
    state.tree = build_tree(samples, encodings, space, state.hv_cfg, cfg.tree)
    state.selected_leaf = select_region(state.tree)
    return True


def _draw_candidates(state: SimState, space: ArchSpace, count: int,
                     rng: np.random.Generator) -> np.ndarray:
    if state.tree is not None and state.selected_leaf is not None:
        return sample_in_region(state.tree, state.selected_leaf, count, rng)
    return np.stack([space.random_encoding(rng) for _ in range(count)])


def greedy_hvi_select(candidates: SampleSet, observed: SampleSet, cfg: HvConfig,
                      count: int) -> list:
    """Iteratively pick candidates maximizing hypervolume improvement.

    Returns candidate ids in pick order; ties (including zero-improvement
    candidates) break by ascending id, so dominated candidates come last.
    """
    if len(candidates) == 0:
        raise ValueError("candidate set must be non-empty")
    count = min(count, len(candidates))
    chosen: list = []
    chosen_rows: list = []
    remaining = {cid: row for cid, row in zip(candidates.ids, candidates.objectives)}
    base_rows = [row for row in observed.objectives]
    while len(chosen) < count:
        cur_rows = base_rows + chosen_rows
        cur = SampleSet(ids=tuple(range(len(cur_rows))),
                        objectives=np.array(cur_rows) if cur_rows else np.empty((0, 2)))
        cur_hv = hypervolume(cur, cfg)
        best_id, best_gain = None, -1.0
        for cid in sorted(remaining):
            trial_rows = cur_rows + [remaining[cid]]
            trial = SampleSet(ids=tuple(range(len(trial_rows))), objectives=np.array(trial_rows))
            gain = hypervolume(trial, cfg) - cur_hv
            if gain > best_gain + 1e-12:
                best_id, best_gain = cid, gain
        chosen.append(best_id)
        chosen_rows.append(remaining.pop(best_id))
    return chosen


@dataclass
class StepInfo:
    carbon_g: float
    relative_carbon: float
    hv_increase: float
    new_samples: int
    g_sample_busy: int
    g_eval_busy: int


def step_hour(
    state: SimState,
    allocation: tuple[int, int],
    trace: CarbonTrace,
    table: BenchmarkTable,
    proxy: ProxyModel,
    cfg: SimConfig,
    rng: np.random.Generator,
) -> StepInfo:
    """Advance the simulation by one hour under the given (sample, eval) split."""
    g_sample, g_eval = allocation
    space = table.space
    intensity = intensity_at(trace, state.clock)
    hv_before = state.hv
    new_samples = 0
    rebuild_charge = 0.0

    # (a) sampling side: propose, proxy-score, and enqueue candidates.
    # A full queue blocks the whole sampling side for the hour (GPUs idle).
    sample_busy = 0
    if g_sample > 0 and len(state.ready) < cfg.capacity:
        sample_busy = g_sample
        n_new = cfg.sampler_batch * g_sample
        encs = _draw_candidates(state, space, n_new, rng)
        known = state.known_indices()
        fresh: dict[int, np.ndarray] = {}
        for genes in encs:
            idx = space.index_of(genes)
            if idx not in known and idx not in fresh:
                fresh[idx] = np.asarray(genes)
        if fresh:
            scored = {idx: proxy_eval(proxy, table, genes)[0] for idx, genes in fresh.items()}
            cand_set = SampleSet(ids=tuple(scored), objectives=np.array(list(scored.values())))
            order = greedy_hvi_select(cand_set, state.observed_set(), state.hv_cfg,
                                      len(scored))
            for idx in order:
                state.ready.append(Candidate(index=idx, genes=fresh[idx],
                                             objectives=scored[idx],
                                             order=state.insert_counter))
                state.insert_counter += 1
            _trim_ready(state, cfg.capacity)

    # (b) evaluation side: idle GPUs pull the most promising ready candidate;
    # with an empty queue they draw an unscored candidate straight from the
    # selected region so an all-evaluation allocation stays productive.
    while len(state.running) < g_eval:
        if state.ready:
            cand = _pop_best_candidate(state)
            genes, idx = cand.genes, cand.index
        else:
            genes = None
            known = state.known_indices()
            for _ in range(200):
                trial = _draw_candidates(state, space, 1, rng)[0]
                t_idx = space.index_of(trial)
                if t_idx not in known:
                    genes, idx = trial, t_idx
                    break
            if genes is None:
                break  # space exhausted around the region
        cost = float(table.train_cost[idx])
        state.running.append(RunningEval(index=idx, genes=np.asarray(genes), remaining=cost))

    eval_busy = min(g_eval, len(state.running))
    if eval_busy > 0:
        n_run = len(state.running)
        start = state.rr_offset % n_run
        chosen = [(start + i) % n_run for i in range(eval_busy)]
        state.rr_offset = (start + eval_busy) % n_run
        finished = []
        for j in chosen:
            job = state.running[j]
            job.remaining -= 1.0
            if job.remaining <= 1e-9:
                finished.append(job)
        for job in finished:
            state.running.remove(job)
            obj, _ = true_eval(table, job.genes)
            state.observed_ids.append(job.index)
            state.observed_obj.append(obj)
            state.observed_enc.append(np.asarray(job.genes))
            state.evals_since_rebuild += 1
            new_samples += 1
        if finished:
            _recompute_hv(state)

    # (e) periodic partition refit, paid as a supernet-rebuild GPU-hour charge
    if state.evals_since_rebuild >= cfg.tree_rebuild_every:
        if _rebuild_tree(state, space, cfg):
            rebuild_charge = cfg.supernet_rebuild_gpu_hours
        state.evals_since_rebuild = 0

    # (c) carbon accounting from the actual trace
    busy_gpu_hours = sample_busy + eval_busy + rebuild_charge
    carbon_g = busy_gpu_hours * cfg.gpu_power_kw * intensity
    relative = busy_gpu_hours * intensity
    state.cumulative_carbon += carbon_g
    state.cumulative_relative_carbon += relative

    # (d) advance the clock
    state.clock += 1

    return StepInfo(
        carbon_g=carbon_g,
        relative_carbon=relative,
        hv_increase=state.hv - hv_before,
        new_samples=new_samples,
        g_sample_busy=sample_busy,
        g_eval_busy=eval_busy,
    )


# ---------------------------------------------------------------------------
# Full runs


@dataclass
class SimResult:
    strategy: str
    seed: int
    config_digest: str
    final_hv: float
    final_log_hv_diff: float | None
    cumulative_carbon: float
    cumulative_relative_carbon: float
    hours: int
    truncated: bool
    num_evaluated: int
    trajectory: list  # dict rows: hour, intensity, g_sample, g_eval, hv, carbon_g, relative_carbon

    def to_json(self) -> dict:
        out = asdict(self)
        if out["final_log_hv_diff"] is not None and math.isinf(out["final_log_hv_diff"]):
            out["final_log_hv_diff"] = "-inf"
        return out


def _initialize(cfg: SimConfig, trace: CarbonTrace, table: BenchmarkTable,
                rng: np.random.Generator) -> SimState:
    """True-evaluate the initial random sample and freeze the HV reference.

    Initialization is the warm-start the search assumes; it is not charged
    against the carbon budget.
    """
    state = SimState()
    space = table.space
    n_init = min(cfg.init_samples, space.size)
    indices = rng.choice(space.size, size=n_init, replace=False)
    for idx in sorted(int(i) for i in indices):
        genes = space.encoding_of(idx)
        obj, _ = true_eval(table, genes)
        state.observed_ids.append(idx)
        state.observed_obj.append(obj)
        state.observed_enc.append(genes)
    ref = np.max(np.array(state.observed_obj), axis=0)
    state.hv_cfg = HvConfig(reference=ref, hv_max=cfg.hv_max)
    _recompute_hv(state)
    _rebuild_tree(state, space, cfg)
    return state


def attainable_hv(table: BenchmarkTable, hv_cfg: HvConfig) -> float:
    """Hypervolume of the full table's Pareto front under this reference."""
    obj = np.column_stack([-table.accuracy, table.objective2])
    order = np.argsort(obj[:, 0], kind="stable")
    front = []
    best_f2 = math.inf
    for i in order:
        if obj[i, 1] < best_f2:
            front.append(obj[i])
            best_f2 = obj[i, 1]
    front_set = SampleSet(ids=tuple(range(len(front))), objectives=np.array(front))
    return hypervolume(front_set, hv_cfg)


def _budget_exhausted(state: SimState, cfg: SimConfig) -> bool:
    if cfg.budget_mode == "carbon":
        return state.cumulative_carbon >= cfg.budget
    return state.clock >= cfg.budget


def _forecast_values(forecaster, trace: CarbonTrace, t: int, horizon: int) -> np.ndarray:
    """Next-`horizon` intensities after hour t.

    Past the trace edge the daily pattern is assumed to repeat: padding wraps
    around to the most recent observations one period (24 h, or the whole
    trace when shorter) earlier. Padding with a constant instead would
    flatten the window to a single value near the end of the trace and drive
    the heuristic allocator into its degenerate all-evaluation branch at
    whatever intensity the trace happens to end on.
    """
    avail = min(horizon, len(trace) - t - 1)
    history = trace.intensities[: t + 1]
    if forecaster is None or avail <= 0:
        values = trace.intensities[t + 1 : t + 1 + max(avail, 0)]
    elif history.size < getattr(forecaster, "min_history", 1):
        # not enough history for this forecaster yet: persist the last value
        values = persistence_forecast(history, avail).values
    else:
        values = forecaster.forecast(history, avail).values
    if values.size < horizon:
        period = min(24, len(trace))
        missing = horizon - values.size
        pad = [trace.intensities[len(trace) - period + ((t + 1 + values.size + i - len(trace)) % period)]
               for i in range(missing)]
        values = np.concatenate([values, np.asarray(pad, dtype=float)])
    return values


def build_rl_state(state: SimState, cfg: SimConfig, forecast: np.ndarray,
                   hv_norm: float, intensity_norm: float) -> np.ndarray:
    if cfg.budget_mode == "carbon":
        b = 1.0 - state.cumulative_carbon / cfg.budget
    else:
        b = 1.0 - state.clock / cfg.budget
    n = len(state.observed_ids) / cfg.n_cap
    h = state.hv / hv_norm if hv_norm > 0 else 0.0
    c = forecast / intensity_norm if intensity_norm > 0 else forecast
    vec = np.concatenate([[b, n, h], c])
    return np.clip(vec, 0.0, 1.0)


def run_simulation(
    cfg: SimConfig,
    trace: CarbonTrace,
    table: BenchmarkTable,
    proxy: ProxyModel,
    strategy: str,
    policy: rl.Policy | None = None,
    forecaster=None,
) -> SimResult:
    """Simulate one full search under the given allocation strategy.

    Forecasts (when a forecaster is supplied) feed allocation decisions; the
    actual trace always feeds carbon accounting. The run ends when the budget
    is exhausted or, reported as truncation, when the trace runs out.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if strategy == "rl" and policy is None:
        raise ValueError("rl strategy requires a trained policy")
    rng = np.random.default_rng([int(cfg.seed), 3])
    state = _initialize(cfg, trace, table, rng)
    hv_norm = cfg.hv_max if cfg.hv_max is not None else attainable_hv(table, state.hv_cfg)
    intensity_norm = float(trace.intensities.max())
    horizon = cfg.max_hours if cfg.max_hours is not None else len(trace)

    truncated = False
    while True:
        t = state.clock
        if _budget_exhausted(state, cfg) or t >= horizon:
            break
        if t >= len(trace):
            truncated = True
            break
        c_cur = intensity_at(trace, t)
        forecast = _forecast_values(forecaster, trace, t, cfg.forecast_horizon)
        if strategy in ("vanilla", "one_shot"):
            allocation = fixed_allocate(strategy, cfg.num_gpus)
        elif strategy == "heuristic":
            window_vals = np.concatenate([[c_cur], forecast])
            window = TraceWindow(t0=t, t1=t + forecast.size,
                                 c_min=float(window_vals.min()), c_max=float(window_vals.max()))
            allocation = heuristic_allocate(c_cur, window, cfg.num_gpus)
        else:
            rl_state = build_rl_state(state, cfg, forecast, hv_norm, intensity_norm)
            allocation = rl_allocate(policy, rl_state, cfg.num_gpus)
        info = step_hour(state, allocation, trace, table, proxy, cfg, rng)
        state.trajectory.append({
            "hour": t,
            "intensity": c_cur,
            "g_sample": allocation[0],
            "g_eval": allocation[1],
            "hv": state.hv,
            "carbon_g": state.cumulative_carbon,
            "relative_carbon": state.cumulative_relative_carbon,
        })

    final_log = None
    if cfg.hv_max is not None:
        final_log = log_hv_diff(state.hv_cfg, min(state.hv, cfg.hv_max))
    return SimResult(
        strategy=strategy,
        seed=cfg.seed,
        config_digest=config_hash(cfg, strategy, cfg.seed),
        final_hv=state.hv,
        final_log_hv_diff=final_log,
        cumulative_carbon=state.cumulative_carbon,
        cumulative_relative_carbon=state.cumulative_relative_carbon,
        hours=state.clock,
        truncated=truncated,
        num_evaluated=len(state.observed_ids),
        trajectory=state.trajectory,
    )


class AllocationEnv:
    """RL environment view of the simulator: one decision per simulated hour.

    ``reset(seed)`` rebuilds the simulation with that seed; ``step(ratio)``
    applies the evaluation-share ratio for an hour and returns
    (next_state, scalarized_reward, done).
    """

    def __init__(self, cfg: SimConfig, trace: CarbonTrace, table: BenchmarkTable,
                 proxy: ProxyModel, forecaster=None):
        self.cfg = cfg
        self.trace = trace
        self.table = table
        self.proxy = proxy
        self.forecaster = forecaster
        self._state: SimState | None = None

    @property
    def state_dim(self) -> int:
        return 3 + self.cfg.forecast_horizon

    def reset(self, seed: int) -> np.ndarray:
        cfg = self.cfg
        self._rng = np.random.default_rng([int(seed), 3])
        self._state = _initialize(cfg, self.trace, self.table, self._rng)
        self._hv_norm = cfg.hv_max if cfg.hv_max is not None else attainable_hv(
            self.table, self._state.hv_cfg)
        self._intensity_norm = float(self.trace.intensities.max())
        self._horizon = cfg.max_hours if cfg.max_hours is not None else len(self.trace)
        hv_span = max(self._hv_norm - self._state.hv, 1e-9)
        if cfg.budget_mode == "carbon":
            carbon_scale = cfg.budget
        else:
            carbon_scale = max(
                cfg.budget * cfg.num_gpus * cfg.gpu_power_kw * float(self.trace.intensities.mean()),
                1e-9,
            )
        self._weights = rl.RewardWeights(
            alpha=cfg.reward_alpha, beta=cfg.reward_beta, gamma_n=cfg.reward_gamma_n,
            hv_scale=hv_span, carbon_budget=carbon_scale, nn_scale=10.0,
        )
        return self._observe()

    def _observe(self) -> np.ndarray:
        t = self._state.clock
        forecast = _forecast_values(self.forecaster, self.trace,
                                    min(t, len(self.trace) - 1), self.cfg.forecast_horizon)
        return build_rl_state(self._state, self.cfg, forecast, self._hv_norm,
                              self._intensity_norm)

    def step(self, eval_ratio: float):
        if self._state is None:
            raise RuntimeError("call reset() before step()")
        state = self._state
        allocation = ratio_to_allocation(eval_ratio, self.cfg.num_gpus)
        info = step_hour(state, allocation, self.trace, self.table, self.proxy,
                         self.cfg, self._rng)
        reward = rl.scalarize_reward(info.carbon_g, max(info.hv_increase, 0.0),
                                     info.new_samples, self._weights)
        done = (
            _budget_exhausted(state, self.cfg)
            or state.clock >= self._horizon
            or state.clock >= len(self.trace)
        )
        return self._observe(), reward, done

    def final_hv(self) -> float:
        return self._state.hv if self._state is not None else 0.0


# ---------------------------------------------------------------------------
# Result files


_TRAJECTORY_COLUMNS = ["hour", "intensity", "g_sample", "g_eval", "hv", "carbon_g",
                       "relative_carbon"]


def write_result(result: SimResult, out_dir: str | Path) -> tuple[Path, Path]:
    """Write <strategy>_seed<seed>.json and the flat trajectory CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{result.strategy}_seed{result.seed}"
    json_path = out_dir / f"{stem}.json"
    csv_path = out_dir / f"{stem}_trajectory.csv"
    json_path.write_text(json.dumps(result.to_json(), sort_keys=True, indent=2))
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_TRAJECTORY_COLUMNS)
        for row in result.trajectory:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c]
                             for c in _TRAJECTORY_COLUMNS])
    return json_path, csv_path
