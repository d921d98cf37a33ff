"""Shared domain types plus the merit, importance and feasibility math."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

TASK_CSV_HEADER = [
    "id", "exec_time_s", "resource_demand", "importance", "data_bits", "learning_loss",
]
DEVICE_CSV_HEADER = [
    "id", "capacity", "proc_speed_s_per_bit", "proc_energy_j_per_bit",
    "tx_energy_j_per_bit", "rx_energy_j_per_bit", "bandwidth_bits_per_s",
]


def fmt_num(x) -> str:
    """Stable text form for CSV cells (ints stay ints, floats round-trip)."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


@dataclass(frozen=True)
class Task:
    """One data-driven learning task.

    ``importance`` may be negative (a harmful task); allocators clamp or drop
    at their own boundary, never here.
    """

    id: int
    exec_time_s: float
    resource_demand: float
    importance: float
    data_bits: int = 0
    learning_loss: float = 0.0

    def __post_init__(self):
        if self.exec_time_s < 0:
            raise ValueError(f"task {self.id}: exec_time_s must be >= 0")
        if self.resource_demand < 0:
            raise ValueError(f"task {self.id}: resource_demand must be >= 0")
        if self.data_bits < 0:
            raise ValueError(f"task {self.id}: data_bits must be >= 0")
        if self.learning_loss < 0:
            raise ValueError(f"task {self.id}: learning_loss must be >= 0")


@dataclass(frozen=True)
class EdgeDevice:
    """One edge device with its capacity and per-bit cost constants."""

    id: int
    capacity: float
    proc_speed_s_per_bit: float
    proc_energy_j_per_bit: float
    tx_energy_j_per_bit: float
    rx_energy_j_per_bit: float
    bandwidth_bits_per_s: float

    def __post_init__(self):
        if self.capacity < 0:
            raise ValueError(f"device {self.id}: capacity must be >= 0")
        if self.proc_speed_s_per_bit <= 0:
            raise ValueError(f"device {self.id}: proc_speed_s_per_bit must be > 0")
        if self.bandwidth_bits_per_s <= 0:
            raise ValueError(f"device {self.id}: bandwidth_bits_per_s must be > 0")
        for name in ("proc_energy_j_per_bit", "tx_energy_j_per_bit", "rx_energy_j_per_bit"):
            if getattr(self, name) < 0:
                raise ValueError(f"device {self.id}: {name} must be >= 0")


class _FrozenCollection:
    """Frozen tuple wrapper with cached numpy column views."""

    def __len__(self) -> int:
        return len(self._items())

    def __iter__(self) -> Iterator:
        return iter(self._items())

    def __getitem__(self, i):
        return self._items()[i]

    def _items(self) -> tuple:
        raise NotImplementedError


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TaskSet(_FrozenCollection):
    """Immutable ordered collection of tasks with unique ids."""

    tasks: tuple[Task, ...]
    _exec: np.ndarray = field(init=False, repr=False)
    _demand: np.ndarray = field(init=False, repr=False)
    _importance: np.ndarray = field(init=False, repr=False)
    _bits: np.ndarray = field(init=False, repr=False)
    _loss: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate task ids in TaskSet")
        cols = {
            "_exec": [t.exec_time_s for t in self.tasks],
            "_demand": [t.resource_demand for t in self.tasks],
            "_importance": [t.importance for t in self.tasks],
            "_bits": [t.data_bits for t in self.tasks],
            "_loss": [t.learning_loss for t in self.tasks],
        }
        for name, vals in cols.items():
            object.__setattr__(self, name, _readonly(np.asarray(vals, dtype=float)))

    def _items(self) -> tuple[Task, ...]:
        return self.tasks

    @property
    def exec_times(self) -> np.ndarray:
        return self._exec

    @property
    def demands(self) -> np.ndarray:
        return self._demand

    @property
    def importances(self) -> np.ndarray:
        return self._importance

    @property
    def data_bits(self) -> np.ndarray:
        return self._bits

    @property
    def learning_losses(self) -> np.ndarray:
        return self._loss

    def with_importances(self, importances: Sequence[float]) -> "TaskSet":
        """Copy of this task set with the importance column replaced."""
        if len(importances) != len(self.tasks):
            raise ValueError("importance vector length mismatch")
        return TaskSet(tuple(
            Task(t.id, t.exec_time_s, t.resource_demand, float(v), t.data_bits, t.learning_loss)
            for t, v in zip(self.tasks, importances)
        ))


@dataclass(frozen=True, eq=False)
class DeviceSet(_FrozenCollection):
    """Immutable ordered collection of edge devices with unique ids."""

    devices: tuple[EdgeDevice, ...]
    _capacity: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(self.devices))
        ids = [d.id for d in self.devices]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate device ids in DeviceSet")
        caps = np.asarray([d.capacity for d in self.devices], dtype=float)
        object.__setattr__(self, "_capacity", _readonly(caps))

    def _items(self) -> tuple[EdgeDevice, ...]:
        return self.devices

    @property
    def capacities(self) -> np.ndarray:
        return self._capacity

    def index_of(self, device_id: int) -> int:
        for i, d in enumerate(self.devices):
            if d.id == device_id:
                return i
        raise KeyError(f"unknown device id {device_id}")


@dataclass(frozen=True, eq=False)
class AllocationMatrix:
    """Binary task-to-device assignment u[j, p]; each task on at most one device."""

    entries: np.ndarray  # (n_tasks, n_devices) int8 in {0, 1}

    def __post_init__(self):
        e = np.asarray(self.entries)
        if e.ndim != 2:
            raise ValueError("allocation entries must be a 2-D matrix")
        if not np.isin(e, (0, 1)).all():
            raise ValueError("allocation entries must be binary")
        e = e.astype(np.int8, copy=True)
        if e.size and (e.sum(axis=1) > 1).any():
            raise ValueError("a task is assigned to more than one device")
        object.__setattr__(self, "entries", _readonly(e))

    @classmethod
    def empty(cls, n_tasks: int, n_devices: int) -> "AllocationMatrix":
        return cls(np.zeros((n_tasks, n_devices), dtype=np.int8))

    @classmethod
    def from_pairs(cls, n_tasks: int, n_devices: int,
                   pairs: Sequence[tuple[int, int]]) -> "AllocationMatrix":
        e = np.zeros((n_tasks, n_devices), dtype=np.int8)
        for j, p in pairs:
            e[j, p] = 1
        return cls(e)

    @property
    def n_tasks(self) -> int:
        return self.entries.shape[0]

    @property
    def n_devices(self) -> int:
        return self.entries.shape[1]

    @property
    def n_assigned(self) -> int:
        return int(self.entries.sum())

    def assignment_pairs(self) -> list[tuple[int, int]]:
        js, ps = np.nonzero(self.entries)
        return [(int(j), int(p)) for j, p in zip(js, ps)]

    def assigned_mask(self) -> np.ndarray:
        return self.entries.any(axis=1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AllocationMatrix):
            return NotImplemented
        return (self.entries.shape == other.entries.shape
                and bool(np.array_equal(self.entries, other.entries)))

    def __hash__(self):
        return hash((self.entries.shape, self.entries.tobytes()))


@dataclass(frozen=True)
class MeritReport:
    """Outcome triple of one allocation run: merit, makespan, energy."""

    overall_merit: float
    processing_time_s: float
    energy_j: float
    n_tasks_executed: int

    def __post_init__(self):
        if self.overall_merit > 1.0 + 1e-12:
            raise ValueError("overall_merit cannot exceed 1")
        if self.processing_time_s < 0 or self.energy_j < 0:
            raise ValueError("negative time or energy in MeritReport")


@dataclass(frozen=True, eq=False)
class Feasibility:
    """Constraint verdict with per-device slack for the time and capacity budgets."""

    feasible: bool
    assignment_ok: bool
    time_slack_s: np.ndarray      # deadline minus per-device busy time
    capacity_slack: np.ndarray    # capacity minus per-device resource load

    def __bool__(self) -> bool:
        return self.feasible


def overall_merit(achieved: float, ideal: float) -> float:
    """Similarity of an achieved cost to the ideal cost: 1 - |ideal - achieved| / ideal.

    May be negative; callers must not clamp. Cost-type convention: lower
    achieved is better and ``ideal`` is the minimum cost.
    """
    if ideal <= 0:
        raise ValueError("ideal performance must be > 0")
    if achieved < 0:
        raise ValueError("achieved performance must be >= 0")
    return 1.0 - abs(ideal - achieved) / ideal


def task_importance(merit_full: float, merit_without_j: float) -> float:
    """Leave-one-out importance: merit of the full set minus merit without the task."""
    return merit_full - merit_without_j


def weighted_mtl_objective(tasks: TaskSet, alloc: AllocationMatrix) -> float:
    """Importance-weighted learning loss of the assigned tasks (evaluation only)."""
    if alloc.n_tasks != len(tasks):
        raise ValueError("allocation does not match task set size")
    assigned = alloc.entries.sum(axis=1).astype(float)
    return float(np.dot(tasks.importances * tasks.learning_losses, assigned))


def check_feasible(tasks: TaskSet, devices: DeviceSet, alloc: AllocationMatrix,
                   deadline_s: float, require_all_assigned: bool = False) -> Feasibility:
    """Check the assignment, per-device time and per-device capacity constraints.

    ``require_all_assigned`` switches the assignment constraint from the
    relaxed at-most-one form to the strict exactly-one form.
    """
    if alloc.n_tasks != len(tasks) or alloc.n_devices != len(devices):
        raise ValueError("allocation shape does not match tasks/devices")
    u = alloc.entries.astype(float)
    row_sums = u.sum(axis=1)
    assignment_ok = bool((row_sums == 1).all()) if require_all_assigned \
        else bool((row_sums <= 1).all())
    busy = tasks.exec_times @ u
    load = tasks.demands @ u
    time_slack = deadline_s - busy
    cap_slack = devices.capacities - load
    feasible = assignment_ok and bool((time_slack >= 0).all()) and bool((cap_slack >= 0).all())
    return Feasibility(feasible, assignment_ok, _readonly(time_slack), _readonly(cap_slack))


def allocation_objective(tasks: TaskSet, alloc: AllocationMatrix) -> float:
    """Total importance collected by an allocation: sum_j sum_p I_j u_jp."""
    if alloc.n_tasks != len(tasks):
        raise ValueError("allocation does not match task set size")
    return float(np.dot(tasks.importances, alloc.entries.sum(axis=1).astype(float)))


def load_tasks_csv(path: str | Path) -> TaskSet:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TASK_CSV_HEADER:
            raise ValueError(f"bad task CSV header in {path}: {reader.fieldnames}")
        tasks = [
            Task(
                id=int(row["id"]),
                exec_time_s=float(row["exec_time_s"]),
                resource_demand=float(row["resource_demand"]),
                importance=float(row["importance"]),
                data_bits=int(row["data_bits"]),
                learning_loss=float(row["learning_loss"] or 0.0),
            )
            for row in reader
        ]
    return TaskSet(tuple(tasks))


def save_tasks_csv(path: str | Path, tasks: TaskSet) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TASK_CSV_HEADER)
        for t in tasks:
            writer.writerow([t.id, fmt_num(t.exec_time_s), fmt_num(t.resource_demand),
                             fmt_num(t.importance), t.data_bits, fmt_num(t.learning_loss)])


def load_devices_csv(path: str | Path) -> DeviceSet:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != DEVICE_CSV_HEADER:
            raise ValueError(f"bad device CSV header in {path}: {reader.fieldnames}")
        devices = [
            EdgeDevice(
                id=int(row["id"]),
                capacity=float(row["capacity"]),
                proc_speed_s_per_bit=float(row["proc_speed_s_per_bit"]),
                proc_energy_j_per_bit=float(row["proc_energy_j_per_bit"]),
                tx_energy_j_per_bit=float(row["tx_energy_j_per_bit"]),
                rx_energy_j_per_bit=float(row["rx_energy_j_per_bit"]),
                bandwidth_bits_per_s=float(row["bandwidth_bits_per_s"]),
            )
            for row in reader
        ]
    return DeviceSet(tuple(devices))


def save_devices_csv(path: str | Path, devices: DeviceSet) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(DEVICE_CSV_HEADER)
        for d in devices:
            writer.writerow([d.id, fmt_num(d.capacity), fmt_num(d.proc_speed_s_per_bit),
                             fmt_num(d.proc_energy_j_per_bit), fmt_num(d.tx_energy_j_per_bit),
                             fmt_num(d.rx_energy_j_per_bit), fmt_num(d.bandwidth_bits_per_s)])
