"""Seeded end-to-end benchmark harness over the synthetic chiller workload.

One benchmark seed generates a run of days, trains the learned allocators on
the historical split, and prices every policy on the evaluation days: overall
merit against the full-information ideal, simulated processing time and
energy, and collected true importance. Everything downstream of the seed is
deterministic, so paired-seed policy comparisons are exactly reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import chiller, coop, crl, edgesim, knapsack, localsvm
from .core import (AllocationMatrix, DeviceSet, EdgeDevice,
                   allocation_objective, overall_merit)

POLICIES = ("rm", "dml", "crl", "dcta", "oracle")


@dataclass(frozen=True)
class BenchmarkConfig:
    """Desk-scale defaults: small enough to train CRL per retrieved day."""

    generator: chiller.GeneratorConfig = field(default_factory=lambda: chiller.GeneratorConfig(
        n_days=18, n_chillers=3, n_operations=12, n_slots=6))
    train_days: int = 12
    val_days: int = 3          # weight-tuning split, right after the train split
    episodes: int = 3000
    eval_every: int = 25
    patience: int = 20
    crl_lr: float = 0.2
    svm_epochs: int = 150
    svm_lr: float = 0.01
    knn_k: int = 3
    weights: coop.EnsembleWeights | None = None   # None means tune on the val split

    def splits(self, n_days: int) -> tuple[range, range, range]:
        t = min(self.train_days, n_days - 2)
        v = min(self.val_days, n_days - t - 1)
        return range(t), range(t, t + v), range(t + v, n_days)


@dataclass
class PolicyStats:
    om: list[float] = field(default_factory=list)
    pt_s: list[float] = field(default_factory=list)
    ec_j: list[float] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)

    def mean(self, name: str) -> float:
        return float(np.mean(getattr(self, name)))


@dataclass
class BenchmarkRun:
    seed: int
    stats: dict[str, PolicyStats]
    weights: coop.EnsembleWeights
    dataset: chiller.SyntheticDataset
    matched_objective: float | None = None
    mismatched_objective: float | None = None


def build_devices(dataset: chiller.SyntheticDataset) -> DeviceSet:
    return DeviceSet(tuple(EdgeDevice(*row) for row in dataset.device_rows))


def build_topology(dataset: chiller.SyntheticDataset) -> edgesim.Topology:
    ids = [row[0] for row in dataset.device_rows]
    return edgesim.Topology(ids[0], tuple(ids[1:]),
                            dataset.config.bandwidth_bits_per_s)


def day_merit(dataset: chiller.SyntheticDataset, day: int,
              alloc: AllocationMatrix) -> float:
    """Overall merit of the chiller decision enabled by the completed tasks."""
    achieved = chiller.day_cost(dataset.history, day, alloc.assigned_mask())
    return overall_merit(achieved, float(dataset.ideal_kwh[day]))


class _Trainer:
    """Caches one trained tabular policy per historical day."""

    def __init__(self, dataset: chiller.SyntheticDataset, devices: DeviceSet,
                 cfg: BenchmarkConfig, seed: int):
        self.dataset = dataset
        self.devices = devices
        self.cfg = cfg
        self.seed = seed
        self.hp = crl.CrlHyperparams(episodes=cfg.episodes, lr=cfg.crl_lr,
                                     eval_every=cfg.eval_every, patience=cfg.patience)
        self._cache: dict[tuple[int, bytes], crl.QPolicy] = {}

    def policy_for(self, day_id: int, importances: np.ndarray) -> crl.QPolicy:
        key = (day_id, np.asarray(importances).tobytes())
        if key not in self._cache:
            tasks = self.dataset.tasks_by_day[day_id].with_importances(importances)
            env = crl.build_environment(importances, self.devices.capacities,
                                        crl.SensingContext(self.dataset.contexts[day_id]),
                                        day_id)
            self._cache[key] = crl.train_crl(env, tasks, self.devices,
                                             self.dataset.deadline_s, self.hp,
                                             seed=self.seed * 977 + day_id)
        return self._cache[key]


def _svm_features_for_day(dataset: chiller.SyntheticDataset, day: int,
                          schema: localsvm.FeatureSchema) -> np.ndarray:
    rows = [tr.row for tr in dataset.svm_rows if tr.day_id == day]
    return np.stack([localsvm.build_features(schema, r) for r in rows])


def run_benchmark(seed: int, cfg: BenchmarkConfig | None = None,
                  policies: Sequence[str] = POLICIES,
                  with_mismatch: bool = False) -> BenchmarkRun:
    """Generate, train and evaluate one benchmark seed."""
    cfg = cfg or BenchmarkConfig()
    dataset = chiller.gen_synthetic_dataset(replace(cfg.generator, seed=seed))
    devices = build_devices(dataset)
    topology = build_topology(dataset)
    deadline_s = dataset.deadline_s
    train_r, val_r, eval_r = cfg.splits(dataset.n_days)

    library = crl.EnvironmentLibrary(tuple(
        crl.build_environment(dataset.importances[d], devices.capacities,
                              crl.SensingContext(dataset.contexts[d]), d)
        for d in train_r
    ))
    trainer = _Trainer(dataset, devices, cfg, seed)

    train_rows = [tr for tr in dataset.svm_rows if tr.day_id in train_r]
    schema = localsvm.FeatureSchema.from_rows([tr.row for tr in train_rows])
    samples = [localsvm.SvmSample(localsvm.build_features(schema, tr.row), tr.label)
               for tr in train_rows]
    svm_model = localsvm.train_svm(samples, lr=cfg.svm_lr, epochs=cfg.svm_epochs,
                                   seed=seed)

    weights = cfg.weights
    if weights is None and ("dcta" in policies):
        instances = []
        for d in val_r:
            imp = dataset.importances[d]
            env = crl.build_environment(imp, devices.capacities,
                                        crl.SensingContext(dataset.contexts[d]), d)
            instances.append(coop.TuneInstance(
                policy=trainer.policy_for(d, imp),
                svm_model=svm_model,
                env=env,
                features=_svm_features_for_day(dataset, d, schema),
                tasks=dataset.tasks_by_day[d].with_importances(imp),
                devices=devices,
                deadline_s=deadline_s,
                merit_fn=lambda alloc, _d=d: day_merit(dataset, _d, alloc),
            ))
        weights = coop.tune_weights(instances) if instances else coop.EnsembleWeights(1.0, 0.0)
    elif weights is None:
        weights = coop.EnsembleWeights(1.0, 0.0)

    stats = {p: PolicyStats() for p in policies}
    mismatch_matched: list[float] = []
    mismatch_permuted: list[float] = []
    mismatch_rng = np.random.default_rng(seed * 31 + 7)

    for d in eval_r:
        true_tasks = dataset.tasks_by_day[d]
        query = crl.SensingContext(dataset.contexts[d])
        retrieved = crl.knn_environment(library, query, cfg.knn_k)
        retrieved_imp = crl.implied_importances(retrieved, devices.capacities)
        run_tasks = true_tasks.with_importances(retrieved_imp)
        policy = trainer.policy_for(retrieved.day_id, retrieved_imp) \
            if retrieved.day_id >= 0 else trainer.policy_for(d, retrieved_imp)
        features = _svm_features_for_day(dataset, d, schema)

        allocs: dict[str, AllocationMatrix] = {}
        for name in policies:
            if name == "rm":
                allocs[name] = coop.allocate_rm(true_tasks, devices, deadline_s,
                                                seed=seed * 131 + d)
            elif name == "dml":
                allocs[name] = coop.allocate_dml(true_tasks, devices, deadline_s)
            elif name == "crl":
                allocs[name] = crl.allocate_crl(policy, retrieved, run_tasks,
                                                devices, deadline_s)
            elif name == "dcta":
                allocs[name] = coop.allocate_dcta(policy, svm_model, retrieved,
                                                  features, run_tasks, devices,
                                                  deadline_s, weights)
            elif name == "oracle":
                allocs[name] = knapsack.solve_branch_bound(true_tasks, devices,
                                                           deadline_s).allocation
            else:
                raise ValueError(f"unknown policy {name!r}")

        for name, alloc in allocs.items():
            outcome = edgesim.simulate(alloc, true_tasks, devices, topology,
                                       deadline_s=deadline_s)
            stats[name].om.append(day_merit(dataset, d, alloc))
            stats[name].pt_s.append(outcome.pt_s)
            stats[name].ec_j.append(outcome.ec_j)
            stats[name].objective.append(allocation_objective(true_tasks, alloc))

        if with_mismatch:
            perm = mismatch_rng.permutation(len(retrieved_imp))
            while (perm == np.arange(len(perm))).all():
                perm = mismatch_rng.permutation(len(perm))
            wrong_imp = retrieved_imp[perm]
            wrong_env = crl.build_environment(wrong_imp, devices.capacities, query)
            wrong_tasks = true_tasks.with_importances(wrong_imp)
            wrong_policy = trainer.policy_for(d, wrong_imp)
            matched_alloc = crl.allocate_crl(policy, retrieved, run_tasks,
                                             devices, deadline_s)
            wrong_alloc = crl.allocate_crl(wrong_policy, wrong_env, wrong_tasks,
                                           devices, deadline_s)
            mismatch_matched.append(allocation_objective(true_tasks, matched_alloc))
            mismatch_permuted.append(allocation_objective(true_tasks, wrong_alloc))

    run = BenchmarkRun(seed=seed, stats=stats, weights=weights, dataset=dataset)
    if with_mismatch:
        run.matched_objective = float(np.mean(mismatch_matched))
        run.mismatched_objective = float(np.mean(mismatch_permuted))
    return run
