"""Deterministic star-topology cost model for allocations.

All task input data originates at the hub; running a task on a leaf pays one
transmit (hub) plus one receive (leaf) per bit over the shared link rate.
Devices execute their tasks serially, so the makespan is the largest
per-device completion time. Result payloads are ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .core import (AllocationMatrix, DeviceSet, MeritReport, TaskSet, _readonly,
                   check_feasible, overall_merit)


@dataclass(frozen=True)
class Topology:
    """Star network: one hub dispatching data to leaf devices over equal links."""

    hub_device_id: int
    leaf_device_ids: tuple[int, ...]
    bandwidth_bits_per_s: float

    def __post_init__(self):
        object.__setattr__(self, "leaf_device_ids", tuple(self.leaf_device_ids))
        if self.hub_device_id in self.leaf_device_ids:
            raise ValueError("hub cannot also be a leaf")
        if len(set(self.leaf_device_ids)) != len(self.leaf_device_ids):
            raise ValueError("duplicate leaf ids")
        if self.bandwidth_bits_per_s <= 0:
            raise ValueError("bandwidth must be > 0")


@dataclass(frozen=True, eq=False)
class SimOutcome:
    """Cost breakdown of one simulated allocation."""

    per_device_busy_s: np.ndarray
    per_device_energy_j: np.ndarray
    transmission_energy_j: float
    pt_s: float
    ec_j: float

    def __post_init__(self):
        object.__setattr__(self, "per_device_busy_s",
                           _readonly(np.asarray(self.per_device_busy_s, dtype=float)))
        object.__setattr__(self, "per_device_energy_j",
                           _readonly(np.asarray(self.per_device_energy_j, dtype=float)))


def simulate(alloc: AllocationMatrix, tasks: TaskSet, devices: DeviceSet,
             topology: Topology, deadline_s: float | None = None) -> SimOutcome:
    """Price an allocation in processing time and energy.

    A task's compute time is its measured exec_time_s when positive, otherwise
    bits times the device's per-bit speed; compute energy always derives from
    bits. Off-hub tasks add a transfer leg (time on the link, energy at the
    hub's transmit and the leaf's receive rates).
    """
    n, m = len(tasks), len(devices)
    if alloc.n_tasks != n or alloc.n_devices != m:
        raise ValueError("allocation shape does not match tasks/devices")
    ids = {d.id for d in devices}
    if topology.hub_device_id not in ids or not set(topology.leaf_device_ids) <= ids:
        raise ValueError("topology references unknown device ids")
    if deadline_s is not None:
        verdict = check_feasible(tasks, devices, alloc, deadline_s)
        if not verdict:
            raise ValueError("allocation is infeasible")

    hub_idx = devices.index_of(topology.hub_device_id)
    hub = devices[hub_idx]
    busy = np.zeros(m)
    energy = np.zeros(m)
    tx_energy = 0.0
    for j, p in alloc.assignment_pairs():
        task, dev = tasks[j], devices[p]
        bits = float(task.data_bits)
        off_hub = p != hub_idx
        transfer = bits / topology.bandwidth_bits_per_s if off_hub else 0.0
        compute = task.exec_time_s if task.exec_time_s > 0 else bits * dev.proc_speed_s_per_bit
        busy[p] += transfer + compute
        energy[p] += bits * dev.proc_energy_j_per_bit
        if off_hub:
            tx_energy += bits * (hub.tx_energy_j_per_bit + dev.rx_energy_j_per_bit)
    pt = float(busy.max()) if m else 0.0
    ec = float(energy.sum() + tx_energy)
    return SimOutcome(busy, energy, tx_energy, pt, ec)


@dataclass(frozen=True)
class ExperimentInstance:
    """One evaluation day: the task/device instance plus its decision-cost map."""

    tasks: TaskSet
    devices: DeviceSet
    deadline_s: float
    decision_cost: Callable[[AllocationMatrix], float]


def run_experiment(instance: ExperimentInstance,
                   allocator: Callable[[TaskSet, DeviceSet, float], AllocationMatrix],
                   topology: Topology, ideal_performance: float) -> MeritReport:
    """Allocate, simulate and score one instance against its ideal cost."""
    if ideal_performance <= 0:
        raise ValueError("ideal performance must be > 0")
    alloc = allocator(instance.tasks, instance.devices, instance.deadline_s)
    outcome = simulate(alloc, instance.tasks, instance.devices, topology,
                       deadline_s=instance.deadline_s)
    achieved = instance.decision_cost(alloc)
    return MeritReport(
        overall_merit=overall_merit(achieved, ideal_performance),
        processing_time_s=outcome.pt_s,
        energy_j=outcome.ec_j,
        n_tasks_executed=alloc.n_assigned,
    )


def save_topology_json(path: str | Path, topology: Topology) -> None:
    doc = {"hub": topology.hub_device_id, "leaves": list(topology.leaf_device_ids),
           "bandwidth_bits_per_s": topology.bandwidth_bits_per_s}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_topology_json(path: str | Path) -> Topology:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return Topology(int(doc["hub"]), tuple(int(x) for x in doc["leaves"]),
                    float(doc["bandwidth_bits_per_s"]))
