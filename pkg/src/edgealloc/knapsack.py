"""Exact and heuristic solvers for the importance-maximizing allocation knapsack.

The problem: place each task on at most one device so that per-device busy
time stays within the shared deadline and per-device resource load stays
within capacity, maximizing the total importance of the placed tasks. Both
exact solvers break ties by the lexicographically smallest flattened
assignment matrix, so their results are bit-comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import AllocationMatrix, DeviceSet, TaskSet, allocation_objective

BRUTE_MAX_TASKS = 14
BRUTE_MAX_DEVICES = 3
_CHUNK = 1 << 17


class InstanceTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class SolveResult:
    allocation: AllocationMatrix
    objective: float
    optimal: bool
    nodes_explored: int


def _kept_indices(tasks: TaskSet) -> np.ndarray:
    # Importance <= 0 never improves the objective; drop before solving.
    return np.nonzero(tasks.importances > 0)[0]


def _result(tasks: TaskSet, n_devices: int, kept: np.ndarray,
            assign: np.ndarray, optimal: bool, nodes: int) -> SolveResult:
    """Build a SolveResult from a per-kept-task device assignment (-1 = dropped)."""
    entries = np.zeros((len(tasks), n_devices), dtype=np.int8)
    for local, j in enumerate(kept):
        p = assign[local]
        if p >= 0:
            entries[j, p] = 1
    alloc = AllocationMatrix(entries)
    return SolveResult(alloc, allocation_objective(tasks, alloc), optimal, nodes)


def solve_bruteforce(tasks: TaskSet, devices: DeviceSet, deadline_s: float) -> SolveResult:
    """Exhaustive enumeration of all (M+1)^N assignments; the reference oracle.

    Deterministic tie-break: among maximum-objective feasible assignments,
    return the one whose flattened binary matrix is lexicographically smallest.
    """
    n, m = len(tasks), len(devices)
    if n > BRUTE_MAX_TASKS or m > BRUTE_MAX_DEVICES:
        raise InstanceTooLargeError(
            f"brute force limited to {BRUTE_MAX_TASKS} tasks / {BRUTE_MAX_DEVICES} devices")
    kept = _kept_indices(tasks)
    nk = len(kept)
    t = tasks.exec_times[kept]
    v = tasks.demands[kept]
    imp = tasks.importances[kept]
    caps = devices.capacities

    base = m + 1
    total = base ** nk
    # digit j of a code is the placement of kept task j: 0 = dropped, p+1 = device p
    weights = base ** np.arange(nk, dtype=np.int64)

    best_val = -1.0
    best_key: bytes | None = None
    best_assign = np.full(nk, -1, dtype=np.int64)

    for start in range(0, total, _CHUNK):
        codes = (np.arange(start, min(start + _CHUNK, total), dtype=np.int64)[:, None]
                 // weights[None, :]) % base
        feasible = np.ones(codes.shape[0], dtype=bool)
        for p in range(m):
            on_p = codes == p + 1
            feasible &= (on_p @ t) <= deadline_s
            feasible &= (on_p @ v) <= caps[p]
        if not feasible.any():
            continue
        values = (codes > 0).astype(float) @ imp
        values[~feasible] = -np.inf
        chunk_max = values.max()
        if chunk_max < best_val:
            continue
        cand = codes[values == chunk_max]
        # flattened u rows: 1 byte per (task, device) cell, compared as bytes
        flat = (cand[:, :, None] == np.arange(1, m + 1)[None, None, :]).astype(np.uint8)
        flat = flat.reshape(cand.shape[0], nk * m)
        first = 0 if flat.shape[1] == 0 else int(np.lexsort(flat.T[::-1])[0])
        key = flat[first].tobytes()
        if chunk_max > best_val or (best_key is not None and key < best_key):
            best_val = chunk_max
            best_key = key
            best_assign = cand[first] - 1
    if best_key is None:
        best_assign = np.full(nk, -1, dtype=np.int64)
    return _result(tasks, m, kept, best_assign, True, total)


def _fractional_bound(order: np.ndarray, weight: np.ndarray, values: np.ndarray,
                      free: np.ndarray, budget: float) -> float:
    """Fractional-knapsack value of the free tasks within an aggregate budget."""
    bound = 0.0
    for j in order:
        if not free[j]:
            continue
        w = weight[j]
        if w <= budget:
            bound += values[j]
            budget -= w
        else:
            if budget > 0 and w > 0:
                bound += values[j] * (budget / w)
            break
    return bound


def solve_branch_bound(tasks: TaskSet, devices: DeviceSet, deadline_s: float) -> SolveResult:
    """Depth-first branch and bound; same optimum and tie-break as brute force.

    DFS explores task rows in input order with options ordered so that complete
    solutions are emitted in lexicographic order of the flattened matrix
    (unassigned first, then devices from last to first). The incumbent starts
    at the empty allocation, the global lexicographic minimum, so pruning on
    bound <= incumbent can never lose the lexicographically smallest optimum.
    The bound is the smaller of two fractional relaxations: importance packed
    into the aggregate remaining time, and into the aggregate remaining
    capacity; both are admissible.
    """
    n, m = len(tasks), len(devices)
    kept = _kept_indices(tasks)
    nk = len(kept)
    t = tasks.exec_times[kept]
    v = tasks.demands[kept]
    imp = tasks.importances[kept]
    caps = devices.capacities

    with np.errstate(divide="ignore", invalid="ignore"):
        order_t = np.argsort(np.where(t > 0, -imp / np.where(t > 0, t, 1.0), -np.inf),
                             kind="stable")
        order_v = np.argsort(np.where(v > 0, -imp / np.where(v > 0, v, 1.0), -np.inf),
                             kind="stable")

    free = np.ones(nk, dtype=bool)
    rem_time = np.full(m, float(deadline_s))
    rem_cap = caps.astype(float).copy()
    assign = np.full(nk, -1, dtype=np.int64)

    best_assign = assign.copy()
    best_val = 0.0
    nodes = 0

    def upper_bound(value: float) -> float:
        bt = _fractional_bound(order_t, t, imp, free, float(rem_time.sum()))
        bv = _fractional_bound(order_v, v, imp, free, float(rem_cap.sum()))
        ub = value + min(bt, bv)
        return ub * (1.0 + 1e-12) + 1e-12  # guard against downward float rounding

    def dfs(depth: int, value: float) -> None:
        nonlocal best_val, nodes
        nodes += 1
        if depth == nk:
            if value > best_val:
                best_val = value
                best_assign[:] = assign
            return
        if upper_bound(value) <= best_val:
            return
        free[depth] = False
        # option order gives flattened-matrix lexicographic order
        dfs(depth + 1, value)
        for p in range(m - 1, -1, -1):
            if t[depth] <= rem_time[p] and v[depth] <= rem_cap[p]:
                rem_time[p] -= t[depth]
                rem_cap[p] -= v[depth]
                assign[depth] = p
                dfs(depth + 1, value + imp[depth])
                assign[depth] = -1
                rem_time[p] += t[depth]
                rem_cap[p] += v[depth]
        free[depth] = True

    dfs(0, 0.0)
    return _result(tasks, m, kept, best_assign, True, nodes)


def solve_greedy_density(tasks: TaskSet, devices: DeviceSet, deadline_s: float) -> SolveResult:
    """Density-ordered heuristic: importance over the tighter normalized cost.

    Tasks are sorted by I / max(t/T, v/Vbar) descending (Vbar = mean device
    capacity) and each is placed on the feasible device with the most
    remaining time slack. Also serves as a fast lower bound for the exact
    solvers.
    """
    n, m = len(tasks), len(devices)
    kept = _kept_indices(tasks)
    t = tasks.exec_times
    v = tasks.demands
    imp = tasks.importances
    vbar = float(devices.capacities.mean()) if m else 0.0

    def density(j: int) -> float:
        nt = (t[j] / deadline_s) if deadline_s > 0 else (0.0 if t[j] == 0 else math.inf)
        nv = (v[j] / vbar) if vbar > 0 else (0.0 if v[j] == 0 else math.inf)
        den = max(nt, nv)
        return math.inf if den == 0 else imp[j] / den

    order = sorted(kept, key=lambda j: (-density(j), j))
    rem_time = np.full(m, float(deadline_s))
    rem_cap = devices.capacities.astype(float).copy()
    entries = np.zeros((n, m), dtype=np.int8)
    for j in order:
        fits = np.nonzero((t[j] <= rem_time) & (v[j] <= rem_cap))[0]
        if fits.size == 0:
            continue
        p = int(fits[np.argmax(rem_time[fits])])
        entries[j, p] = 1
        rem_time[p] -= t[j]
        rem_cap[p] -= v[j]
    alloc = AllocationMatrix(entries)
    return SolveResult(alloc, allocation_objective(tasks, alloc), False, 0)
