"""Disk layout of a generated dataset directory and its loader.

A dataset directory holds the day-stacked task table, device table, sensing
library, SVM training table, chiller ground truth (records, specs, demand,
COP surfaces), the topology, and a manifest with the generator parameters and
derived deadline. Loading reconstructs the same in-memory bundle the
generator produced.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import chiller, crl, edgesim, localsvm
from .core import DeviceSet, EdgeDevice, Task, TaskSet, fmt_num, save_devices_csv, load_devices_csv

FILES = {
    "tasks": "tasks.csv",
    "devices": "devices.csv",
    "library": "library.csv",
    "svm": "svm_train.csv",
    "records": "records.csv",
    "specs": "specs.csv",
    "demand": "demand.csv",
    "cop_truth": "cop_truth.csv",
    "topology": "topology.json",
    "manifest": "manifest.json",
}


@dataclass(frozen=True, eq=False)
class Dataset:
    """In-memory view of one generated dataset directory."""

    history: chiller.OperationHistory
    tasks_by_day: tuple[TaskSet, ...]
    contexts: np.ndarray
    importances: np.ndarray
    svm_rows: tuple[localsvm.TrainingRow, ...]
    devices: DeviceSet
    topology: edgesim.Topology
    deadline_s: float
    ideal_kwh: np.ndarray

    @property
    def n_days(self) -> int:
        return self.history.n_days


def write_dataset(ds: chiller.SyntheticDataset, out_dir: str | Path) -> dict[str, str]:
    """Write every artifact of a generated dataset; byte-stable per seed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {key: out / name for key, name in FILES.items()}

    with open(paths["tasks"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(chiller.DAY_TASK_HEADER)
        for d, tasks in enumerate(ds.tasks_by_day):
            for t in tasks:
                writer.writerow([d, t.id, fmt_num(t.exec_time_s), fmt_num(t.resource_demand),
                                 fmt_num(t.importance), t.data_bits, fmt_num(t.learning_loss)])

    devices = DeviceSet(tuple(EdgeDevice(*row) for row in ds.device_rows))
    save_devices_csv(paths["devices"], devices)

    crl.save_environment_library_csv(paths["library"], list(range(ds.n_days)),
                                     ds.contexts, ds.importances)
    localsvm.save_svm_training_csv(paths["svm"], ds.svm_rows)
    chiller.save_chiller_records_csv(paths["records"], ds.records)
    chiller.save_chiller_specs_csv(paths["specs"], ds.history.specs)

    with open(paths["demand"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(chiller.DEMAND_HEADER)
        for d in range(ds.n_days):
            for t in range(ds.history.n_slots):
                writer.writerow([d, t, fmt_num(ds.history.demand_kw[d, t])])

    with open(paths["cop_truth"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(chiller.COP_TRUTH_HEADER)
        for d in range(ds.n_days):
            for o in range(ds.history.n_ops):
                for t in range(ds.history.n_slots):
                    writer.writerow([d, o, t, fmt_num(ds.history.cop_truth[d, o, t])])

    ids = [row[0] for row in ds.device_rows]
    edgesim.save_topology_json(paths["topology"], edgesim.Topology(
        ids[0], tuple(ids[1:]), ds.config.bandwidth_bits_per_s))

    manifest = {
        "generator": asdict(ds.config),
        "deadline_s": ds.deadline_s,
        "n_days": ds.n_days,
        "n_operations": ds.history.n_ops,
        "n_slots": ds.history.n_slots,
        "op_chiller": [int(x) for x in ds.history.op_chiller],
    }
    with open(paths["manifest"], "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return {key: str(p) for key, p in paths.items()}


def load_dataset(data_dir: str | Path) -> Dataset:
    data = Path(data_dir)
    for name in FILES.values():
        if not (data / name).exists():
            raise FileNotFoundError(f"dataset file missing: {data / name}")

    with open(data / FILES["manifest"], encoding="utf-8") as fh:
        manifest = json.load(fh)
    n_days = int(manifest["n_days"])
    n_ops = int(manifest["n_operations"])
    n_slots = int(manifest["n_slots"])
    op_chiller = np.asarray(manifest["op_chiller"], dtype=int)
    gen = manifest["generator"]

    devices = load_devices_csv(data / FILES["devices"])
    specs = chiller.load_chiller_specs_csv(data / FILES["specs"])

    demand = np.zeros((n_days, n_slots))
    with open(data / FILES["demand"], newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != chiller.DEMAND_HEADER:
            raise ValueError("bad demand CSV header")
        for row in reader:
            demand[int(row["day_id"]), int(row["slot"])] = float(row["q_d_kw"])

    cop_truth = np.zeros((n_days, n_ops, n_slots))
    with open(data / FILES["cop_truth"], newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != chiller.COP_TRUTH_HEADER:
            raise ValueError("bad cop truth CSV header")
        for row in reader:
            cop_truth[int(row["day_id"]), int(row["op_id"]), int(row["slot"])] = float(row["cop"])

    history = chiller.OperationHistory(tuple(specs), op_chiller, cop_truth, demand,
                                       float(gen["grid_step"]), float(gen["slot_hours"]))

    tasks_rows: dict[int, list[Task]] = {d: [] for d in range(n_days)}
    with open(data / FILES["tasks"], newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != chiller.DAY_TASK_HEADER:
            raise ValueError("bad task table header")
        for row in reader:
            tasks_rows[int(row["day_id"])].append(Task(
                id=int(row["id"]), exec_time_s=float(row["exec_time_s"]),
                resource_demand=float(row["resource_demand"]),
                importance=float(row["importance"]), data_bits=int(row["data_bits"]),
                learning_loss=float(row["learning_loss"])))
    tasks_by_day = tuple(TaskSet(tuple(tasks_rows[d])) for d in range(n_days))

    _, contexts, importances, _ = crl.load_environment_library_csv(
        data / FILES["library"], devices.capacities)
    svm_rows = tuple(localsvm.load_svm_training_csv(data / FILES["svm"]))
    topology = edgesim.load_topology_json(data / FILES["topology"])

    return Dataset(
        history=history,
        tasks_by_day=tasks_by_day,
        contexts=contexts,
        importances=importances,
        svm_rows=svm_rows,
        devices=devices,
        topology=topology,
        deadline_s=float(manifest["deadline_s"]),
        ideal_kwh=chiller.ideal_performance(history),
    )
