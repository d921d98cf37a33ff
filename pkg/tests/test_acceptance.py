"""Acceptance criteria, one test per criterion at its stated tolerance.

Run with `pytest tests/test_acceptance.py -s` to see one pass line per
criterion. The directional criteria (8, 9, 10) share a single 50-seed
benchmark sweep.
"""

import hashlib
import math
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from conftest import make_devices, random_instance
from edgealloc import bench
from edgealloc.chiller import (ChillerSpec, GeneratorConfig, OperationHistory,
                               gen_synthetic_dataset, importance_from_history,
                               longtail_fraction, sequencing_optimize)
from edgealloc.cli import main
from edgealloc.coop import (EnsembleWeights, allocate_dcta, allocate_dml,
                            allocate_rm)
from edgealloc.core import (AllocationMatrix, Task, TaskSet, allocation_objective,
                            check_feasible)
from edgealloc.crl import (CrlHyperparams, QPolicy, SensingContext, allocate_crl,
                           build_environment, initial_state, mdp_step, train_crl)
from edgealloc.edgesim import Topology, simulate
from edgealloc.knapsack import solve_branch_bound, solve_bruteforce, solve_greedy_density
from edgealloc.localsvm import (SvmModel, SvmSample, predict_scores, svm_grad,
                                svm_loss, train_svm)


def report(criterion: int, text: str) -> None:
    print(f"PASS  [criterion {criterion:2d}] {text}")


@pytest.fixture(scope="module")
def benchmark_sweep():
    """One 50-paired-seed sweep shared by criteria 8, 9 and 10."""
    runs = [bench.run_benchmark(seed, with_mismatch=True) for seed in range(50)]
    return runs


def test_criterion_01_oracle_equivalence():
    rng = np.random.default_rng(101)
    t0 = time.time()
    for _ in range(200):
        n = int(rng.integers(1, 11))
        m = int(rng.integers(1, 4))
        tasks, devices, deadline = random_instance(rng, n, m)
        rb = solve_bruteforce(tasks, devices, deadline)
        bb = solve_branch_bound(tasks, devices, deadline)
        assert bb.objective == rb.objective
        assert bb.allocation == rb.allocation
    elapsed = time.time() - t0
    assert elapsed < 30.0
    report(1, f"branch-and-bound equals brute force on 200 instances "
              f"(exact, {elapsed:.1f}s < 30s)")


def test_criterion_02_feasibility_suite():
    rng = np.random.default_rng(102)
    violations = 0
    checked = 0
    for trial in range(1000):
        n = int(rng.integers(1, 8))
        m = int(rng.integers(1, 4))
        tasks, devices, deadline = random_instance(rng, n, m, importance_low=-0.5)
        env = build_environment(tasks.importances, devices.capacities,
                                SensingContext([float(trial)]))
        policy = QPolicy(n_actions=n + 1)
        svm = SvmModel(rng.normal(0, 1, 3))
        features = rng.normal(0, 1, (n, 3))
        allocations = [
            allocate_rm(tasks, devices, deadline, seed=trial),
            allocate_dml(tasks, devices, deadline),
            allocate_crl(policy, env, tasks, devices, deadline),
            allocate_dcta(policy, svm, env, features, tasks, devices, deadline,
                          EnsembleWeights(0.5, 0.5)),
            solve_greedy_density(tasks, devices, deadline).allocation,
            solve_bruteforce(tasks, devices, deadline).allocation,
            solve_branch_bound(tasks, devices, deadline).allocation,
        ]
        for alloc in allocations:
            checked += 1
            if not check_feasible(tasks, devices, alloc, deadline):
                violations += 1
    assert violations == 0
    report(2, f"{checked} allocations from 7 allocators on 1000 instances, "
              f"0 violations")


def test_criterion_03_crl_convergence():
    hp = CrlHyperparams(episodes=20000, eval_every=50, patience=40)
    t0 = time.time()
    hits = 0
    for seed in range(40):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(2, 7))
        tasks, devices, deadline = random_instance(rng, n, 1)
        optimum = solve_bruteforce(tasks, devices, deadline).objective
        env = build_environment(tasks.importances, devices.capacities,
                                SensingContext([1.0]))
        policy = train_crl(env, tasks, devices, deadline, hp, seed=seed)
        alloc = allocate_crl(policy, env, tasks, devices, deadline)
        if abs(allocation_objective(tasks, alloc) - optimum) < 1e-9:
            hits += 1
    elapsed = time.time() - t0
    assert hits >= 0.95 * 40
    assert elapsed < 300.0
    report(3, f"tabular CRL reached the optimum on {hits}/40 instances "
              f"({elapsed:.0f}s < 300s)")


def test_criterion_04_reward_contract():
    rng = np.random.default_rng(104)
    transitions = 0
    while transitions < 10_000:
        n = int(rng.integers(1, 7))
        m = int(rng.integers(1, 4))
        tasks, devices, deadline = random_instance(rng, n, m)
        env = build_environment(tasks.importances, devices.capacities,
                                SensingContext([0.0]))
        state = initial_state(tasks, devices, deadline)
        done = False
        while not done:
            action = int(rng.integers(0, n + 1))
            state, reward, done = mdp_step(state, action, env, tasks, devices,
                                           deadline)
            transitions += 1
            if done:
                expected = float(tasks.importances[state.selected.any(axis=1)].sum())
                assert reward == expected
            else:
                assert reward == 0.0
    report(4, f"{transitions} sampled transitions: reward 0 off-terminal, "
              f"exact importance sum at terminal")


def test_criterion_05_svm_numerics():
    rng = np.random.default_rng(105)
    worst = 0.0
    for _ in range(1000):
        d = int(rng.integers(2, 9))
        w = rng.normal(0, 1.5, d)
        s = SvmSample(rng.normal(0, 1.5, d), int(rng.choice([-1, 1])))
        g = svm_grad(w, s)
        h = 1e-6
        fd = np.empty(d)
        for k in range(d):
            wp, wm = w.copy(), w.copy()
            wp[k] += h
            wm[k] -= h
            fd[k] = (svm_loss(wp, s) - svm_loss(wm, s)) / (2 * h)
        rel = np.linalg.norm(g - fd) / max(np.linalg.norm(g), np.linalg.norm(fd),
                                           1e-12)
        worst = max(worst, rel)
    assert worst < 1e-6

    for _ in range(500):
        d = int(rng.integers(1, 6))
        w1, w2 = rng.normal(0, 2, (2, d))
        s = SvmSample(rng.normal(0, 2, d), int(rng.choice([-1, 1])))
        t = float(rng.uniform(0, 1))
        assert svm_loss(t * w1 + (1 - t) * w2, s) <= \
            t * svm_loss(w1, s) + (1 - t) * svm_loss(w2, s) + 1e-12

    pts = np.array([(-3.0, 0.5), (-2.5, -1.0), (-2.0, 2.0), (-3.5, 1.5),
                    (-2.2, -0.4), (3.0, 0.3), (2.5, -1.2), (2.0, 1.8),
                    (3.5, -0.5), (2.1, 0.9)])
    X = np.hstack([pts, np.ones((10, 1))])
    y = np.array([-1] * 5 + [1] * 5)
    model = train_svm([SvmSample(x, int(l)) for x, l in zip(X, y)],
                      lr=0.05, epochs=500, seed=0)
    accuracy = float(((predict_scores(model, X) > 0) == (y > 0)).mean())
    assert accuracy == 1.0
    report(5, f"gradient FD error {worst:.2e} < 1e-6, convexity holds, "
              f"separable toy at 100% accuracy")


def test_criterion_06_simulator_arithmetic():
    tasks = TaskSet((Task(0, 0.0, 0.0, 1.0, data_bits=1_000_000),))
    devices = make_devices([5.0, 5.0], bandwidth=2e6)
    alloc = AllocationMatrix.from_pairs(1, 2, [(0, 1)])
    out = simulate(alloc, tasks, devices, Topology(0, (1,), 2e6))
    compute_time = 1_000_000 * 4.75e-7
    assert abs(out.transmission_energy_j - 0.284) < 1e-9
    assert abs(compute_time - 0.475) < 1e-9
    assert abs(out.per_device_energy_j[1] - 0.325) < 1e-9
    report(6, "1e6-bit leaf task reproduces 0.284 J transmission, 0.475 s "
              "compute, 0.325 J compute energy (1e-9 abs)")


def test_criterion_07_longtail_generator():
    fractions = [
        longtail_fraction(gen_synthetic_dataset(GeneratorConfig(), seed=s).importances)
        for s in range(20)
    ]
    estimate = float(np.mean(fractions))
    assert 0.08 <= estimate <= 0.20
    report(7, f"tasks covering 80% importance: {estimate:.1%} of tasks "
              f"(20-seed estimate, band [8%, 20%])")


def test_criterion_08_importance_ordered_benefit(benchmark_sweep):
    oracle_mean = float(np.mean([r.stats["oracle"].mean("om")
                                 for r in benchmark_sweep]))
    rm_mean = float(np.mean([r.stats["rm"].mean("om") for r in benchmark_sweep]))
    assert oracle_mean >= 1.25 * rm_mean
    report(8, f"oracle mean merit {oracle_mean:.3f} vs random {rm_mean:.3f} "
              f"({oracle_mean / rm_mean:.2f}x >= 1.25x over 50 paired seeds)")


def test_criterion_09_environment_mismatch(benchmark_sweep):
    wins = sum(r.mismatched_objective < r.matched_objective
               for r in benchmark_sweep)
    ties = sum(r.mismatched_objective == r.matched_objective
               for r in benchmark_sweep)
    n = len(benchmark_sweep) - ties
    # one-sided sign test: P(X >= wins) under Bin(n, 1/2)
    p_value = sum(math.comb(n, i) for i in range(wins, n + 1)) / 2 ** n
    mean_matched = float(np.mean([r.matched_objective for r in benchmark_sweep]))
    mean_mismatched = float(np.mean([r.mismatched_objective
                                     for r in benchmark_sweep]))
    assert mean_mismatched < mean_matched
    assert p_value < 0.05
    report(9, f"permuted environment lowers objective on {wins}/{n} seeds "
              f"(sign test p={p_value:.2e} < 0.05)")


def test_criterion_10_policy_ordering(benchmark_sweep):
    ordered = sum(
        (r.stats["dcta"].mean("om") >= r.stats["crl"].mean("om")
         >= r.stats["rm"].mean("om"))
        for r in benchmark_sweep
    )
    ordered_obj = sum(
        (r.stats["dcta"].mean("objective") >= r.stats["crl"].mean("objective")
         >= r.stats["rm"].mean("objective"))
        for r in benchmark_sweep
    )
    rm_pt = float(np.mean([r.stats["rm"].mean("pt_s") for r in benchmark_sweep]))
    dcta_pt = float(np.mean([r.stats["dcta"].mean("pt_s") for r in benchmark_sweep]))
    rm_ec = float(np.mean([r.stats["rm"].mean("ec_j") for r in benchmark_sweep]))
    dcta_ec = float(np.mean([r.stats["dcta"].mean("ec_j") for r in benchmark_sweep]))
    assert ordered >= 0.9 * len(benchmark_sweep)
    assert ordered_obj >= 0.9 * len(benchmark_sweep)
    assert dcta_pt < rm_pt
    assert dcta_ec < rm_ec
    report(10, f"merit order DCTA>=CRL>=RM on {ordered}/50 seeds "
               f"(objective order on {ordered_obj}/50); "
               f"PT {dcta_pt:.2f}<{rm_pt:.2f}s, EC {dcta_ec:.2f}<{rm_ec:.2f}J")


def test_criterion_11_chiller_oracle():
    import itertools
    rng = np.random.default_rng(111)
    grid = np.linspace(0, 1, 11)
    t0 = time.time()
    for _ in range(100):
        specs = [ChillerSpec(i, float(rng.uniform(50, 150))) for i in range(3)]
        caps = [s.max_capacity_kw for s in specs]
        cop_m = rng.uniform(2.0, 8.0, size=(3, 4))
        demand = rng.uniform(0.0, 0.8 * sum(caps), size=4)
        decision, total = sequencing_optimize(cop_m, specs, demand)
        expected = 0.0
        for t in range(4):
            best = None
            if demand[t] > 0:
                for combo in itertools.product(grid, repeat=3):
                    if sum(L * s for L, s in zip(caps, combo)) <= demand[t]:
                        continue
                    cost = sum(L * s / c for L, s, c in zip(caps, combo,
                                                            cop_m[:, t]))
                    if best is None or cost < best:
                        best = cost
                expected += best
        assert total == pytest.approx(expected, abs=1e-9)
    elapsed = time.time() - t0
    assert elapsed < 60.0
    report(11, f"sequencing matches joint brute force on 100 instances "
               f"({elapsed:.0f}s < 60s)")


def test_criterion_12_probability_arithmetic():
    n_days = 1460
    cop_truth = np.zeros((n_days, 2, 1))
    cop_truth[:, 0, 0] = 3.0
    cop_truth[:, 1, 0] = 4.0
    cop_truth[:120, 0, 0] = 5.0
    history = OperationHistory((ChillerSpec(0, 100.0),), np.array([0, 0]),
                               cop_truth, np.full((n_days, 1), 40.0))
    estimate = importance_from_history(history, 0)
    percent = round(estimate.probability_to_become_optimal * 100, 2)
    assert percent == 8.22
    report(12, f"selected on 120 of 1460 days -> {percent}% (2 d.p.)")


def test_criterion_13_cli_determinism(tmp_path):
    cfg = {
        "generator": {"n_days": 12, "n_chillers": 3, "n_operations": 8,
                      "n_slots": 4, "seed": 9},
        "dataset_dir": str(tmp_path / "data"),
        "artifacts_dir": str(tmp_path / "artifacts"),
        "train": {"episodes": 500, "patience": 8, "train_days": 8, "val_days": 2,
                  "svm_epochs": 40},
        "run": {"policies": ["rm", "dcta", "oracle"], "seeds": [0],
                "out_dir": str(tmp_path / "results")},
    }
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg))

    def digest(root: Path) -> dict:
        return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
                for p in sorted(root.rglob("*")) if p.is_file()}

    for command, out_key in (("gen", "dataset_dir"), ("train", "artifacts_dir")):
        assert main([command, "--config", str(cfg_path)]) == 0
    assert main(["run", "--config", str(cfg_path)]) == 0
    first = {key: digest(Path(cfg[key])) for key in ("dataset_dir", "artifacts_dir")}
    first["run"] = digest(tmp_path / "results")

    assert main(["gen", "--config", str(cfg_path),
                 "--out", str(tmp_path / "data2")]) == 0
    assert main(["train", "--config", str(cfg_path),
                 "--out", str(tmp_path / "artifacts2")]) == 0
    assert main(["run", "--config", str(cfg_path),
                 "--out", str(tmp_path / "results2")]) == 0
    assert digest(tmp_path / "data2") == first["dataset_dir"]
    assert digest(tmp_path / "artifacts2") == first["artifacts_dir"]
    assert digest(tmp_path / "results2") == first["run"]
    report(13, "gen/train/run byte-identical across two consecutive runs")
