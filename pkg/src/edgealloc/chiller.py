"""Chiller-plant decision domain: COP math, sequencing optimization, ideal
performance, importance from history, and the synthetic dataset generator.

An operation is one candidate run configuration of a chiller; predicting its
COP is one learning task. At each slot a chiller runs its best available
operation (highest ground-truth COP there), so restricting the completed
prediction tasks degrades the chiller to worse operations or removes it. The
sequencing optimizer picks per-slot partial load ratios on a discrete grid to
serve demand at minimum electricity; slots are independent.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Task, TaskSet, _readonly, fmt_num
from .localsvm import TaskFeatureRow, TrainingRow, prediction_accuracy

CHILLER_RECORD_HEADER = ["chiller_id", "timestamp", "c_kj_kg_c", "m_kg_s", "dt_c", "e_kw"]
CHILLER_SPEC_HEADER = ["chiller_id", "max_capacity_kw"]
DEMAND_HEADER = ["day_id", "slot", "q_d_kw"]
COP_TRUTH_HEADER = ["day_id", "op_id", "slot", "cop"]
DAY_TASK_HEADER = ["day_id", "id", "exec_time_s", "resource_demand", "importance",
                   "data_bits", "learning_loss"]

WATER_THERMAL_CAPACITY = 4.19  # kJ/(kg C)


@dataclass(frozen=True)
class ChillerRecord:
    """One timestamped chiller operating point."""

    chiller_id: int
    timestamp: int
    thermal_capacity_kj_per_kg_c: float
    mass_flow_kg_s: float
    temp_diff_c: float
    electrical_power_kw: float

    def __post_init__(self):
        if self.electrical_power_kw <= 0:
            raise ValueError("electrical_power_kw must be > 0")
        if self.mass_flow_kg_s < 0 or self.temp_diff_c < 0:
            raise ValueError("flow and temperature difference must be >= 0")
        if self.thermal_capacity_kj_per_kg_c <= 0:
            raise ValueError("thermal capacity must be > 0")


@dataclass(frozen=True)
class ChillerSpec:
    chiller_id: int
    max_capacity_kw: float

    def __post_init__(self):
        if self.max_capacity_kw <= 0:
            raise ValueError("max_capacity_kw must be > 0")


@dataclass(frozen=True, eq=False)
class SequencingDecision:
    """Partial load ratios per chiller and slot, with any infeasible slots flagged."""

    ratios: np.ndarray          # (n_chillers, horizon) in [0, 1]
    horizon: int
    infeasible_slots: tuple[int, ...] = ()

    def __post_init__(self):
        r = np.asarray(self.ratios, dtype=float)
        if r.ndim != 2 or r.shape[1] != self.horizon:
            raise ValueError("ratios must be (n_chillers, horizon)")
        if ((r < 0) | (r > 1)).any():
            raise ValueError("ratios must lie in [0, 1]")
        object.__setattr__(self, "ratios", _readonly(r.copy()))


def cop(cooling_load_kw: float, electrical_power_kw: float) -> float:
    """Coefficient of performance: cooling output over electrical input."""
    if electrical_power_kw <= 0:
        raise ValueError("electrical power must be > 0")
    if cooling_load_kw < 0:
        raise ValueError("cooling load must be >= 0")
    return cooling_load_kw / electrical_power_kw


def cooling_load(record: ChillerRecord) -> float:
    """Delivered cooling in kW: c * m * dT (kJ/s)."""
    return (record.thermal_capacity_kj_per_kg_c * record.mass_flow_kg_s
            * record.temp_diff_c)


def deadline(t_p: float, t_m: float) -> float:
    """Decision deadline: the tighter of the periodic interval and switching time."""
    if t_p <= 0 or t_m <= 0:
        raise ValueError("deadline components must be > 0")
    return min(t_p, t_m)


def annual_cost(daily_consumption_kwh: Sequence[float], daily_price: Sequence[float]) -> float:
    """Total electricity bill: dot product of daily consumption and price."""
    e = np.asarray(daily_consumption_kwh, dtype=float)
    c = np.asarray(daily_price, dtype=float)
    if e.shape != c.shape:
        raise ValueError("consumption/price length mismatch")
    return float(np.dot(e, c))


_COMBO_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _ratio_grid(grid_step: float) -> np.ndarray:
    k = round(1.0 / grid_step)
    if abs(k * grid_step - 1.0) > 1e-9 or k < 1:
        raise ValueError("grid_step must divide 1 evenly")
    return np.linspace(0.0, 1.0, k + 1)


def _combos(n_chillers: int, grid_step: float) -> np.ndarray:
    """All per-slot ratio combinations, rows in ascending lexicographic order."""
    grid = _ratio_grid(grid_step)
    if grid.size ** n_chillers > 5_000_000:
        raise ValueError(
            f"grid enumeration too large: {grid.size}^{n_chillers} combinations")
    key = (n_chillers, grid.size)
    if key not in _COMBO_CACHE:
        mesh = np.meshgrid(*([grid] * n_chillers), indexing="ij")
        _COMBO_CACHE[key] = np.stack(mesh).reshape(n_chillers, -1).T.copy()
    return _COMBO_CACHE[key]


def _strictly_above(delivered: np.ndarray, demand_kw: float) -> np.ndarray:
    # strict inequality with a float-dust margin: an exactly-tight combination
    # must not pass just because one summation order rounds upward
    return delivered > demand_kw * (1.0 + 1e-12) + 1e-12


def _solve_slot(combos: np.ndarray, caps: np.ndarray, cop_slot: np.ndarray,
                demand_kw: float) -> tuple[np.ndarray, float] | None:
    """Minimum-cost ratio row for one slot, or None when no row serves demand.

    Unavailable chillers (non-finite COP) are pinned to ratio 0. Ties resolve
    to the lexicographically smallest combination.
    """
    n = caps.size
    if demand_kw <= 0:
        return np.zeros(n), 0.0
    available = np.isfinite(cop_slot)
    ok = ~((combos[:, ~available] > 0).any(axis=1)) if (~available).any() \
        else np.ones(combos.shape[0], dtype=bool)
    delivered = combos @ caps
    feasible = ok & _strictly_above(delivered, demand_kw)
    if not feasible.any():
        return None
    unit_cost = np.where(available, caps / np.where(available, cop_slot, 1.0), 0.0)
    costs = combos @ unit_cost
    costs = np.where(feasible, costs, np.inf)
    best = int(np.argmin(costs))
    return combos[best].copy(), float(costs[best])


def _worst_slot_cost(combos: np.ndarray, caps: np.ndarray, cop_slot: np.ndarray,
                     demand_kw: float) -> float:
    """Maximum feasible cost at a slot; the reference for the backup penalty."""
    if demand_kw <= 0:
        return 0.0
    available = np.isfinite(cop_slot)
    ok = ~((combos[:, ~available] > 0).any(axis=1)) if (~available).any() \
        else np.ones(combos.shape[0], dtype=bool)
    feasible = ok & _strictly_above(combos @ caps, demand_kw)
    if not feasible.any():
        return 0.0
    unit_cost = np.where(available, caps / np.where(available, cop_slot, 1.0), 0.0)
    costs = combos @ unit_cost
    return float(costs[feasible].max())


def sequencing_optimize(cop_predictions: np.ndarray, specs: Sequence[ChillerSpec],
                        demand_kw: Sequence[float], grid_step: float = 0.1,
                        slot_hours: float = 1.0,
                        fallback_cost_per_slot: float | Sequence[float] | None = None,
                        ) -> tuple[SequencingDecision, float]:
    """Grid-exact chiller sequencing: minimize electricity while the delivered
    cooling strictly exceeds demand at every slot.

    ``cop_predictions`` is (n_chillers, n_slots); NaN marks a chiller with no
    completed prediction at that slot, which pins its ratio to 0. A slot with
    no feasible combination charges the configured backup fallback cost (and
    is reported in the decision); without a configured fallback it raises.
    Zero-demand slots cost nothing. Total is in kWh given ``slot_hours``.
    """
    cop_m = np.asarray(cop_predictions, dtype=float)
    if cop_m.ndim != 2 or cop_m.shape[0] != len(specs):
        raise ValueError("cop_predictions must be (n_chillers, n_slots)")
    finite = np.isfinite(cop_m)
    if (cop_m[finite] <= 0).any():
        raise ValueError("COP predictions must be > 0")
    demand = np.asarray(demand_kw, dtype=float)
    n, horizon = cop_m.shape
    if demand.shape != (horizon,):
        raise ValueError("demand length does not match the horizon")
    caps = np.array([s.max_capacity_kw for s in specs], dtype=float)
    fallback = None
    if fallback_cost_per_slot is not None:
        fallback = np.broadcast_to(np.asarray(fallback_cost_per_slot, dtype=float),
                                   (horizon,))

    combos = _combos(n, grid_step)
    ratios = np.zeros((n, horizon))
    bad_slots: list[int] = []
    total = 0.0
    for t in range(horizon):
        solved = _solve_slot(combos, caps, cop_m[:, t], float(demand[t]))
        if solved is None:
            if fallback is None:
                raise ValueError(f"slot {t}: no feasible combination and no fallback cost")
            bad_slots.append(t)
            total += float(fallback[t]) * slot_hours
            continue
        ratios[:, t], cost = solved
        total += cost * slot_hours
    return SequencingDecision(ratios, horizon, tuple(bad_slots)), total


@dataclass(frozen=True, eq=False)
class OperationHistory:
    """Ground-truth COP surfaces for every operation across a run of days."""

    specs: tuple[ChillerSpec, ...]
    op_chiller: np.ndarray      # (n_ops,) owning chiller index per operation
    cop_truth: np.ndarray       # (n_days, n_ops, n_slots), positive
    demand_kw: np.ndarray       # (n_days, n_slots)
    grid_step: float = 0.1
    slot_hours: float = 1.0
    fallback_scale: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        oc = np.asarray(self.op_chiller, dtype=int)
        ct = np.asarray(self.cop_truth, dtype=float)
        dm = np.asarray(self.demand_kw, dtype=float)
        if ct.ndim != 3 or dm.ndim != 2:
            raise ValueError("cop_truth must be 3-D and demand 2-D")
        if ct.shape[0] != dm.shape[0] or ct.shape[2] != dm.shape[1]:
            raise ValueError("day/slot dimensions disagree")
        if ct.shape[1] != oc.size:
            raise ValueError("op_chiller length does not match cop_truth")
        if oc.size and (oc.min() < 0 or oc.max() >= len(self.specs)):
            raise ValueError("op_chiller references an unknown chiller")
        if not (np.isfinite(ct).all() and (ct > 0).all()):
            raise ValueError("ground-truth COP must be finite and positive")
        object.__setattr__(self, "op_chiller", _readonly(oc))
        object.__setattr__(self, "cop_truth", _readonly(ct.copy()))
        object.__setattr__(self, "demand_kw", _readonly(dm.copy()))

    @property
    def n_days(self) -> int:
        return self.cop_truth.shape[0]

    @property
    def n_ops(self) -> int:
        return self.cop_truth.shape[1]

    @property
    def n_slots(self) -> int:
        return self.cop_truth.shape[2]

    @property
    def n_chillers(self) -> int:
        return len(self.specs)


def slot_best_operations(history: OperationHistory, day: int,
                         available: np.ndarray | None = None) -> np.ndarray:
    """Best available operation per (chiller, slot), -1 where none remain.

    Best means the highest ground-truth COP at that slot; ties go to the
    lowest operation id. The pointwise maximum keeps restriction monotone:
    removing operations can only lower a chiller's effective COP.
    """
    if available is None:
        available = np.ones(history.n_ops, dtype=bool)
    best = np.full((history.n_chillers, history.n_slots), -1, dtype=int)
    for i in range(history.n_chillers):
        ops = np.nonzero((history.op_chiller == i) & available)[0]
        if ops.size:
            best[i] = ops[np.argmax(history.cop_truth[day, ops, :], axis=0)]
    return best


def effective_cop(history: OperationHistory, day: int,
                  available: np.ndarray | None = None) -> np.ndarray:
    """Per-chiller COP series under the best available operation at each slot
    (NaN where a chiller has no available operation)."""
    best = slot_best_operations(history, day, available)
    eff = np.full((history.n_chillers, history.n_slots), np.nan)
    for i in range(history.n_chillers):
        for t in range(history.n_slots):
            if best[i, t] >= 0:
                eff[i, t] = history.cop_truth[day, best[i, t], t]
    return eff


def day_fallback_costs(history: OperationHistory, day: int) -> np.ndarray:
    """Backup-plant penalty per slot: fallback_scale times the worst feasible
    full-information cost."""
    combos = _combos(history.n_chillers, history.grid_step)
    caps = np.array([s.max_capacity_kw for s in history.specs])
    eff = effective_cop(history, day)
    worst = np.array([
        _worst_slot_cost(combos, caps, eff[:, t], float(history.demand_kw[day, t]))
        for t in range(history.n_slots)
    ])
    return history.fallback_scale * worst


def day_cost(history: OperationHistory, day: int,
             available: np.ndarray | None = None,
             fallback_per_slot: np.ndarray | None = None) -> float:
    """Optimized electricity for a day given the completed prediction tasks."""
    if fallback_per_slot is None:
        fallback_per_slot = day_fallback_costs(history, day)
    eff = effective_cop(history, day, available)
    _, cost = sequencing_optimize(eff, history.specs, history.demand_kw[day],
                                  history.grid_step, history.slot_hours,
                                  fallback_cost_per_slot=fallback_per_slot)
    return cost


def ideal_performance(history: OperationHistory) -> np.ndarray:
    """Per-day electricity of full-information optimal sequencing (the merit
    baseline D); raises if any day is infeasible even with every operation."""
    out = np.empty(history.n_days)
    for day in range(history.n_days):
        eff = effective_cop(history, day)
        _, cost = sequencing_optimize(eff, history.specs, history.demand_kw[day],
                                      history.grid_step, history.slot_hours,
                                      fallback_cost_per_slot=None)
        out[day] = cost
    return out


def selected_operations(history: OperationHistory, day: int) -> np.ndarray:
    """Operations used by the day's full-information optimum: the slot-best
    operation of every (chiller, slot) the decision actually runs."""
    best = slot_best_operations(history, day)
    eff = effective_cop(history, day)
    decision, _ = sequencing_optimize(eff, history.specs, history.demand_kw[day],
                                      history.grid_step, history.slot_hours,
                                      fallback_cost_per_slot=None)
    ops = {int(best[i, t])
           for i in range(history.n_chillers)
           for t in range(history.n_slots)
           if decision.ratios[i, t] > 0 and best[i, t] >= 0}
    return np.array(sorted(ops), dtype=int)


def day_best_operation(history: OperationHistory, day: int) -> int | None:
    """The single best operation of the day: highest day-max ground-truth COP
    among the operations the optimum uses (ties: lowest id)."""
    ops = selected_operations(history, day)
    if ops.size == 0:
        return None
    day_max = history.cop_truth[day].max(axis=1)
    order = sorted(ops, key=lambda o: (-day_max[o], o))
    return int(order[0])


@dataclass(frozen=True)
class ImportanceEstimate:
    probability_to_become_optimal: float
    leave_one_out_importance: float


def importance_by_day(history: OperationHistory) -> np.ndarray:
    """Per-day leave-one-out importance of every operation.

    Importance of operation o on day d is merit(all) - merit(all minus o)
    with the day's full-information cost as the ideal; operations that are
    never the best of their chiller at any slot have exactly zero importance.
    """
    out = np.zeros((history.n_days, history.n_ops))
    for day in range(history.n_days):
        fallback = day_fallback_costs(history, day)
        full_cost = day_cost(history, day, fallback_per_slot=fallback)
        if full_cost <= 0:
            continue
        # only slot-best operations can change the effective COP when removed
        candidates = np.unique(slot_best_operations(history, day))
        for op in candidates[candidates >= 0]:
            available = np.ones(history.n_ops, dtype=bool)
            available[op] = False
            restricted = day_cost(history, day, available, fallback_per_slot=fallback)
            out[day, op] = (restricted - full_cost) / full_cost
    return out


def importance_from_history(history: OperationHistory, task_id: int) -> ImportanceEstimate:
    """Selection probability and mean leave-one-out importance of one task."""
    if history.n_days == 0:
        raise ValueError("history must contain at least one day")
    if not 0 <= task_id < history.n_ops:
        raise ValueError(f"unknown task id {task_id}")
    selected_days = sum(
        1 for day in range(history.n_days) if day_best_operation(history, day) == task_id
    )
    probability = selected_days / history.n_days
    importances = []
    available = np.ones(history.n_ops, dtype=bool)
    available[task_id] = False
    for day in range(history.n_days):
        fallback = day_fallback_costs(history, day)
        full_cost = day_cost(history, day, fallback_per_slot=fallback)
        if full_cost <= 0:
            importances.append(0.0)
            continue
        restricted = day_cost(history, day, available, fallback_per_slot=fallback)
        importances.append((restricted - full_cost) / full_cost)
    return ImportanceEstimate(probability, float(np.mean(importances)))


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic chiller dataset (stand-in for a private trace)."""

    n_days: int = 60
    n_chillers: int = 3
    n_operations: int = 18
    n_slots: int = 8
    longtail_alpha: float = 1.1
    cop_noise: float = 0.05
    base_cop: float = 3.0
    cop_min: float = 1.2
    cop_max: float = 12.0
    grid_step: float = 0.1
    slot_hours: float = 1.0
    seed: int = 0
    # edge-side instance
    n_devices: int = 3
    bandwidth_bits_per_s: float = 2e6
    data_bits_min: int = 700_000
    data_bits_max: int = 1_400_000
    deadline_fraction: float = 0.42   # deadline = fraction * total exec time / devices
    deadline_s: float | None = None   # explicit override of the derived deadline

    def __post_init__(self):
        if min(self.n_days, self.n_chillers, self.n_operations, self.n_slots,
               self.n_devices) <= 0:
            raise ValueError("dataset dimensions must be positive")
        if self.n_operations < self.n_chillers:
            raise ValueError("need at least one operation per chiller")
        if self.longtail_alpha <= 0:
            raise ValueError("longtail_alpha must be > 0")
        if self.cop_noise < 0:
            raise ValueError("cop_noise must be >= 0")
        if not 0 < self.cop_min < self.cop_max:
            raise ValueError("need 0 < cop_min < cop_max")


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    """Everything one generated run of days produces."""

    config: GeneratorConfig
    history: OperationHistory
    records: tuple[ChillerRecord, ...]
    tasks_by_day: tuple[TaskSet, ...]
    contexts: np.ndarray            # (n_days, 4) sensing features
    importances: np.ndarray         # (n_days, n_ops)
    svm_rows: tuple[TrainingRow, ...]
    ideal_kwh: np.ndarray           # (n_days,)
    device_rows: tuple[tuple, ...]  # rows for the device CSV
    deadline_s: float

    @property
    def n_days(self) -> int:
        return self.history.n_days


def _weather_bucket(temp_c: float) -> str:
    if temp_c < 12:
        return "cold"
    if temp_c < 20:
        return "mild"
    if temp_c < 28:
        return "warm"
    return "hot"


def gen_synthetic_dataset(config: GeneratorConfig, seed: int | None = None) -> SyntheticDataset:
    """Generate a seed-deterministic multi-day chiller dataset.

    Operation quality follows a Pareto tail controlled by ``longtail_alpha``,
    calibrated so that at defaults a small head of tasks (target around 13%)
    carries at least 80% of the total leave-one-out importance. Demand follows
    a seasonal plus diurnal curve and COP surfaces get multiplicative noise.
    """
    cfg = config if seed is None else replace(config, seed=int(seed))
    rng = np.random.default_rng(cfg.seed)
    n_ch, n_ops, n_days, n_slots = cfg.n_chillers, cfg.n_operations, cfg.n_days, cfg.n_slots

    specs = tuple(
        ChillerSpec(i, float(rng.uniform(450.0, 490.0))) for i in range(n_ch)
    )
    caps = np.array([s.max_capacity_kw for s in specs])
    op_chiller = np.arange(n_ops) % n_ch

    # Operation quality: per chiller one leader operation sits a heavy-tailed
    # dominance gap above the bulk, so most leave-one-out importance lands on
    # a small head of tasks while noise occasionally promotes a runner-up.
    quality = rng.uniform(0.5, 0.72, size=n_ops)
    dominance = np.clip(0.25 + 0.3 * rng.pareto(cfg.longtail_alpha, size=n_ch), 0.25, 0.5)
    for i in range(n_ch):
        ops_i = np.nonzero(op_chiller == i)[0]
        leader = int(rng.choice(ops_i))
        quality[leader] = 1.0 + dominance[i]
        if ops_i.size > 1:
            # one close contender per chiller keeps day-to-day flips alive
            others = ops_i[ops_i != leader]
            contender = int(rng.choice(others))
            quality[contender] = quality[leader] * float(rng.uniform(0.78, 0.88))
    load_peak = rng.uniform(0.45, 0.9, size=n_ops)   # load ratio of best efficiency

    day_idx = np.arange(n_days)
    season = 1.0 + 0.25 * np.sin(2 * np.pi * day_idx / 365.0 + rng.uniform(0, 2 * np.pi))
    temp = 18.0 + 10.0 * (season - 1.0) / 0.25 * 0.8 + rng.normal(0, 1.5, size=n_days)
    humidity = np.clip(55.0 + rng.normal(0, 8.0, size=n_days), 20.0, 95.0)

    slot_shape = 0.7 + 0.25 * np.sin(np.pi * (np.arange(n_slots) + 0.5) / n_slots)
    total_cap = caps.sum()
    demand = np.empty((n_days, n_slots))
    for d in range(n_days):
        level = np.clip(0.6 * season[d] + rng.normal(0, 0.03), 0.38, 0.6)
        demand[d] = np.clip(level * total_cap * slot_shape, 0.0, 0.58 * total_cap)

    # COP surface: quality tail, mild load preference, seasonal drift, noise
    load_pref = 1.0 - 0.15 * np.abs(slot_shape[None, :] - load_peak[:, None])
    noise = rng.normal(0.0, cfg.cop_noise, size=(n_days, n_ops, n_slots))
    cop_truth = (cfg.base_cop * quality[None, :, None]
                 * load_pref[None, :, :]
                 * (0.9 + 0.2 * (season[:, None, None] - 0.75) / 0.5)
                 * (1.0 + noise))
    cop_truth = np.clip(cop_truth, cfg.cop_min, cfg.cop_max)

    history = OperationHistory(specs, op_chiller, cop_truth, demand,
                               cfg.grid_step, cfg.slot_hours)
    importances = importance_by_day(history)
    ideal_kwh = ideal_performance(history)

    contexts = np.column_stack([temp, humidity, demand.mean(axis=1), day_idx % 7])

    # static edge-task attributes; importance varies by day
    data_bits = rng.integers(cfg.data_bits_min, cfg.data_bits_max, size=n_ops)
    exec_time = data_bits * 4.75e-7 * rng.uniform(0.9, 1.1, size=n_ops)
    resource = rng.uniform(0.5, 2.0, size=n_ops)
    losses = rng.uniform(0.05, 1.0, size=n_ops)
    tasks_by_day = tuple(
        TaskSet(tuple(
            Task(j, float(exec_time[j]), float(resource[j]),
                 float(importances[d, j]), int(data_bits[j]), float(losses[j]))
            for j in range(n_ops)
        ))
        for d in range(n_days)
    )

    # binding collectively, but any single task must fit when prioritized
    deadline_s = cfg.deadline_s if cfg.deadline_s is not None else float(
        max(cfg.deadline_fraction * exec_time.sum() / cfg.n_devices,
            1.1 * exec_time.max()))
    device_rows = tuple(
        (p, float(rng.uniform(0.45, 0.7)) * resource.sum() / cfg.n_devices * 2.0,
         4.75e-7, 3.25e-7, 1.42e-7, 1.42e-7, cfg.bandwidth_bits_per_s)
        for p in range(cfg.n_devices)
    )

    # operating records along each day's optimal decision
    slot_seconds = int(round(cfg.slot_hours * 3600))
    records: list[ChillerRecord] = []
    selected_sets: list[set[int]] = []
    for d in range(n_days):
        eff = effective_cop(history, d)
        decision, _ = sequencing_optimize(eff, specs, demand[d], cfg.grid_step,
                                          cfg.slot_hours, fallback_cost_per_slot=None)
        selected_sets.append({int(o) for o in selected_operations(history, d)})
        for t in range(n_slots):
            for i in range(n_ch):
                ratio = decision.ratios[i, t]
                if ratio <= 0:
                    continue
                q_kw = caps[i] * ratio
                e_kw = q_kw / eff[i, t]
                dt_c = float(rng.uniform(4.5, 5.5))
                m_flow = q_kw / (WATER_THERMAL_CAPACITY * dt_c)
                records.append(ChillerRecord(
                    chiller_id=i,
                    timestamp=d * 86400 + t * slot_seconds,
                    thermal_capacity_kj_per_kg_c=WATER_THERMAL_CAPACITY,
                    mass_flow_kg_s=float(m_flow),
                    temp_diff_c=dt_c,
                    electrical_power_kw=float(e_kw),
                ))

    # SVM rows: one per (day, operation) with general features from prior days
    pred_sigma = rng.uniform(0.02, 0.25, size=n_ops)
    day_mean_cop = cop_truth.mean(axis=2)                       # (n_days, n_ops)
    predicted = day_mean_cop * (1.0 + rng.normal(0, 1, size=(n_days, n_ops)) * pred_sigma)
    svm_rows: list[TrainingRow] = []
    for d in range(n_days):
        for j in range(n_ops):
            ch = int(op_chiller[j])
            past = sum(1 for dd in range(d) if j in selected_sets[dd])
            acc = prediction_accuracy(predicted[:d, j], day_mean_cop[:d, j])
            power_kw = caps[ch] * 0.6 / day_mean_cop[d, j]
            dt_c = 5.0
            flow = demand[d].mean() / max(n_ch, 1) / (WATER_THERMAL_CAPACITY * dt_c)
            svm_rows.append(TrainingRow(
                day_id=d,
                task_id=j,
                row=TaskFeatureRow(
                    past_success=past,
                    prediction_accuracy=float(acc),
                    building=f"B{ch % 2}",
                    model_type=f"MT{ch}",
                    operating_power_kw=float(power_kw),
                    weather_condition=_weather_bucket(float(temp[d])),
                    outdoor_temp_c=float(temp[d]),
                    latest_cooling_load_kw=float(demand[d - 1].mean() if d else demand[d].mean()),
                    water_mass_flow_kg_s=float(flow),
                    water_temp_diff_c=dt_c,
                ),
                label=1 if j in selected_sets[d] else -1,
            ))

    return SyntheticDataset(
        config=cfg,
        history=history,
        records=tuple(records),
        tasks_by_day=tasks_by_day,
        contexts=contexts,
        importances=importances,
        svm_rows=tuple(svm_rows),
        ideal_kwh=ideal_kwh,
        device_rows=device_rows,
        deadline_s=deadline_s,
    )


def longtail_fraction(importances: np.ndarray, mass: float = 0.8) -> float:
    """Fraction of tasks needed to cover ``mass`` of total importance."""
    totals = np.sort(np.asarray(importances).sum(axis=0))[::-1]
    grand = totals.sum()
    if grand <= 0:
        return 1.0
    covered = np.cumsum(totals) / grand
    need = int(np.searchsorted(covered, mass) + 1)
    return need / totals.size


def save_chiller_records_csv(path: str | Path, records: Sequence[ChillerRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CHILLER_RECORD_HEADER)
        for r in records:
            writer.writerow([r.chiller_id, r.timestamp,
                             fmt_num(r.thermal_capacity_kj_per_kg_c),
                             fmt_num(r.mass_flow_kg_s), fmt_num(r.temp_diff_c),
                             fmt_num(r.electrical_power_kw)])


def load_chiller_records_csv(path: str | Path) -> list[ChillerRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CHILLER_RECORD_HEADER:
            raise ValueError(f"bad chiller record header in {path}")
        return [ChillerRecord(int(r["chiller_id"]), int(r["timestamp"]),
                              float(r["c_kj_kg_c"]), float(r["m_kg_s"]),
                              float(r["dt_c"]), float(r["e_kw"])) for r in reader]


def save_chiller_specs_csv(path: str | Path, specs: Sequence[ChillerSpec]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CHILLER_SPEC_HEADER)
        for s in specs:
            writer.writerow([s.chiller_id, fmt_num(s.max_capacity_kw)])


def load_chiller_specs_csv(path: str | Path) -> list[ChillerSpec]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CHILLER_SPEC_HEADER:
            raise ValueError(f"bad chiller spec header in {path}")
        return [ChillerSpec(int(r["chiller_id"]), float(r["max_capacity_kw"]))
                for r in reader]
