"""Cooperative allocator: weighted blend of the RL and SVM scores, projected
to a feasible assignment, plus the random-mapping and load-balancing baselines.

Score matrices carry one allocation-propensity value per (task, device) cell;
-inf marks cells the projection must never pick. The blend weights form a
convex combination, so projection (which is invariant to positive rescaling)
sees comparably scaled inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import AllocationMatrix, DeviceSet, TaskSet, _readonly
from .crl import EnvironmentMatrix, MdpState, QPolicy
from .localsvm import SvmModel, predict_scores


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Per (task, device) allocation propensity; -inf cells are excluded."""

    scores: np.ndarray
    source: str = "combined"

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float)
        if s.ndim != 2:
            raise ValueError("scores must be a 2-D matrix")
        if np.isnan(s).any() or np.isposinf(s).any():
            raise ValueError("scores must be finite or -inf")
        object.__setattr__(self, "scores", _readonly(s.copy()))


@dataclass(frozen=True)
class EnsembleWeights:
    """Convex combination weights for the two predictors."""

    w1: float
    w2: float

    def __post_init__(self):
        if not (0.0 <= self.w1 <= 1.0 and 0.0 <= self.w2 <= 1.0):
            raise ValueError("weights must lie in [0, 1]")
        if abs(self.w1 + self.w2 - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")


def _z_normalize(values: np.ndarray, finite: np.ndarray) -> np.ndarray:
    out = np.full(values.shape, -np.inf)
    if finite.any():
        vals = values[finite]
        std = vals.std()
        out[finite] = (vals - vals.mean()) / std if std > 0 else 0.0
    return out


def crl_scores(policy: QPolicy, env: EnvironmentMatrix, tasks: TaskSet,
               devices: DeviceSet, deadline_s: float) -> ScoreMatrix:
    """Q-value of placing each task when the cursor sits at each device.

    Evaluated at the per-device initial states (nothing placed, full budgets),
    then z-normalized per device column. Cells where the task can never fit
    the device, or where the task's importance is not positive, score -inf.
    """
    n, m = len(tasks), len(devices)
    t, v = tasks.exec_times, tasks.demands
    caps = devices.capacities
    raw = np.zeros((n, m))
    reachable = np.zeros((n, m), dtype=bool)
    selected = np.zeros((n, m), dtype=np.int8)
    positive = tasks.importances > 0
    for p in range(m):
        state = MdpState(selected, p, np.full(m, float(deadline_s)), caps.astype(float))
        q = policy.q_values(state, env)
        raw[:, p] = q[:n]
        reachable[:, p] = positive & (t <= deadline_s) & (v <= caps[p])
    scores = np.full((n, m), -np.inf)
    for p in range(m):
        scores[:, p] = _z_normalize(raw[:, p], reachable[:, p])
    return ScoreMatrix(scores, "crl")


def svm_scores(model: SvmModel, features: np.ndarray, devices: DeviceSet) -> ScoreMatrix:
    """Device-agnostic per-task scores broadcast across device columns."""
    per_task = predict_scores(model, np.asarray(features, dtype=float))
    finite = np.ones(per_task.shape, dtype=bool)
    normalized = _z_normalize(per_task, finite)
    return ScoreMatrix(np.tile(normalized[:, None], (1, len(devices))), "svm")


def combine(s1: ScoreMatrix, s2: ScoreMatrix, w: EnsembleWeights) -> ScoreMatrix:
    """Elementwise w1*s1 + w2*s2; -inf in either operand wins the cell."""
    if s1.scores.shape != s2.scores.shape:
        raise ValueError("score matrices must share a shape")
    blocked = np.isneginf(s1.scores) | np.isneginf(s2.scores)
    a = np.where(np.isneginf(s1.scores), 0.0, s1.scores)
    b = np.where(np.isneginf(s2.scores), 0.0, s2.scores)
    merged = np.where(blocked, -np.inf, w.w1 * a + w.w2 * b)
    return ScoreMatrix(merged, "combined")


def project_feasible(scores: ScoreMatrix, tasks: TaskSet, devices: DeviceSet,
                     deadline_s: float) -> AllocationMatrix:
    """Greedy projection of real scores to a feasible binary assignment.

    Repeatedly picks the highest finite-scoring cell whose task is unassigned
    and fits the device's remaining budgets (ties: lowest task then lowest
    device index), until no cell qualifies.
    """
    n, m = len(tasks), len(devices)
    if scores.scores.shape != (n, m):
        raise ValueError("score matrix shape does not match tasks/devices")
    t, v = tasks.exec_times, tasks.demands
    rem_time = np.full(m, float(deadline_s))
    rem_cap = devices.capacities.astype(float).copy()
    entries = np.zeros((n, m), dtype=np.int8)
    unassigned = np.ones(n, dtype=bool)
    s = scores.scores
    while True:
        feas = (unassigned[:, None] & np.isfinite(s)
                & (t[:, None] <= rem_time[None, :]) & (v[:, None] <= rem_cap[None, :]))
        if not feas.any():
            break
        masked = np.where(feas, s, -np.inf)
        j, p = np.unravel_index(int(np.argmax(masked)), masked.shape)
        entries[j, p] = 1
        unassigned[j] = False
        rem_time[p] -= t[j]
        rem_cap[p] -= v[j]
    return AllocationMatrix(entries)


def allocate_dcta(policy: QPolicy, svm_model: SvmModel, env: EnvironmentMatrix,
                  features: np.ndarray, tasks: TaskSet, devices: DeviceSet,
                  deadline_s: float, w: EnsembleWeights) -> AllocationMatrix:
    """Cooperative allocation: blend both predictors' scores, then project."""
    s1 = crl_scores(policy, env, tasks, devices, deadline_s)
    s2 = svm_scores(svm_model, features, devices)
    return project_feasible(combine(s1, s2, w), tasks, devices, deadline_s)


@dataclass(frozen=True)
class TuneInstance:
    """One validation day for weight tuning; merit_fn scores an allocation."""

    policy: QPolicy
    svm_model: SvmModel
    env: EnvironmentMatrix
    features: np.ndarray
    tasks: TaskSet
    devices: DeviceSet
    deadline_s: float
    merit_fn: Callable[[AllocationMatrix], float]


def tune_weights(instances: Sequence[TuneInstance], grid_step: float = 0.1) -> EnsembleWeights:
    """Grid search w1 in {0, grid_step, ..., 1} maximizing mean merit; ties
    resolve to the larger w1."""
    if not instances:
        raise ValueError("need at least one validation instance")
    steps = round(1.0 / grid_step)
    best: EnsembleWeights | None = None
    best_merit = -np.inf
    cached = [
        (inst, crl_scores(inst.policy, inst.env, inst.tasks, inst.devices, inst.deadline_s),
         svm_scores(inst.svm_model, inst.features, inst.devices))
        for inst in instances
    ]
    for i in range(steps + 1):
        w = EnsembleWeights(i / steps, 1.0 - i / steps)
        merits = [
            inst.merit_fn(project_feasible(combine(s1, s2, w), inst.tasks,
                                           inst.devices, inst.deadline_s))
            for inst, s1, s2 in cached
        ]
        mean_merit = float(np.mean(merits))
        if mean_merit >= best_merit:
            best_merit = mean_merit
            best = w
    return best


def allocate_rm(tasks: TaskSet, devices: DeviceSet, deadline_s: float,
                seed: int = 0) -> AllocationMatrix:
    """Random mapping: shuffled tasks each draw one uniform device; infeasible
    draws are dropped. Importance-blind."""
    n, m = len(tasks), len(devices)
    if m == 0:
        return AllocationMatrix.empty(n, 0)
    rng = np.random.default_rng(seed)
    t, v = tasks.exec_times, tasks.demands
    rem_time = np.full(m, float(deadline_s))
    rem_cap = devices.capacities.astype(float).copy()
    entries = np.zeros((n, m), dtype=np.int8)
    for j in rng.permutation(n):
        p = int(rng.integers(0, m))
        if t[j] <= rem_time[p] and v[j] <= rem_cap[p]:
            entries[j, p] = 1
            rem_time[p] -= t[j]
            rem_cap[p] -= v[j]
    return AllocationMatrix(entries)


def allocate_dml(tasks: TaskSet, devices: DeviceSet, deadline_s: float) -> AllocationMatrix:
    """Load balancing: tasks in input order onto the feasible device with the
    most remaining time slack. Importance-blind, deterministic."""
    n, m = len(tasks), len(devices)
    t, v = tasks.exec_times, tasks.demands
    rem_time = np.full(m, float(deadline_s))
    rem_cap = devices.capacities.astype(float).copy()
    entries = np.zeros((n, m), dtype=np.int8)
    for j in range(n):
        fits = np.nonzero((t[j] <= rem_time) & (v[j] <= rem_cap))[0]
        if fits.size == 0:
            continue
        p = int(fits[np.argmax(rem_time[fits])])
        entries[j, p] = 1
        rem_time[p] -= t[j]
        rem_cap[p] -= v[j]
    return AllocationMatrix(entries)
