"""Configuration-driven experiment runner.

Subcommands: gen (dataset synthesis), train (CRL policies + SVM model),
solve (one allocation), oracle (exact/heuristic knapsack), run (full
evaluation sweep to a report CSV + summary JSON), report (summary tables and
figures from a report CSV). All randomness flows from seeds in the config or
flags; repeated runs with the same inputs are byte-identical.

Exit codes: 0 success, 1 usage error, 2 data error, 3 infeasible experiment.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import chiller, coop, crl, datasets, edgesim, knapsack, localsvm, report
from .core import (allocation_objective, load_devices_csv, load_tasks_csv,
                   overall_merit)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INFEASIBLE = 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class InfeasibleError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep the exit-code contract
        raise UsageError(message)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise DataError(f"config file not found: {p}")
    with open(p, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise DataError("config root must be a mapping")
    return doc


def _generator_config(doc: dict, seed: int | None) -> chiller.GeneratorConfig:
    section = doc.get("generator", {}) or {}
    known = {f.name for f in fields(chiller.GeneratorConfig)}
    unknown = set(section) - known
    if unknown:
        raise DataError(f"unknown generator keys: {sorted(unknown)}")
    cfg = chiller.GeneratorConfig(**section)
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    return cfg


def _splits(doc: dict, n_days: int) -> tuple[range, range, range]:
    train = int(doc.get("train_days", max(1, int(n_days * 0.7))))
    val = int(doc.get("val_days", max(1, int(n_days * 0.15))))
    train = min(train, n_days)
    val = min(val, n_days - train)
    return range(train), range(train, train + val), range(train + val, n_days)


def cmd_gen(args) -> int:
    doc = _load_config(args.config)
    cfg = _generator_config(doc, args.seed)
    ds = chiller.gen_synthetic_dataset(cfg)
    out = args.out or doc.get("dataset_dir") or "dataset"
    paths = datasets.write_dataset(ds, out)
    print(json.dumps({"out": str(out), "n_days": ds.n_days,
                      "n_operations": ds.history.n_ops,
                      "deadline_s": ds.deadline_s,
                      "files": sorted(Path(p).name for p in paths.values())},
                     sort_keys=True))
    return EXIT_OK


def _train_section(doc: dict) -> dict:
    return doc.get("train", {}) or {}


def cmd_train(args) -> int:
    doc = _load_config(args.config)
    data_dir = args.data or doc.get("dataset_dir")
    if not data_dir:
        raise UsageError("no dataset directory (use --data or dataset_dir in config)")
    ds = datasets.load_dataset(data_dir)
    tr = _train_section(doc)
    train_r, val_r, _ = _splits(tr, ds.n_days)
    hp = crl.CrlHyperparams(
        episodes=int(tr.get("episodes", 3000)),
        lr=float(tr.get("lr", 0.2)),
        eval_every=int(tr.get("eval_every", 25)),
        patience=int(tr.get("patience", 20)),
        mode=str(tr.get("mode", "tabular")),
    )
    base_seed = int(tr.get("seed", doc.get("seed", 0)))
    out = Path(args.out or doc.get("artifacts_dir") or "artifacts")
    (out / "policies").mkdir(parents=True, exist_ok=True)

    final_returns = {}
    # validation days get policies too, so weight tuning can use them
    for d in list(train_r) + list(val_r):
        tasks = ds.tasks_by_day[d]
        env = crl.build_environment(tasks.importances, ds.devices.capacities,
                                    crl.SensingContext(ds.contexts[d]), d)
        policy = crl.train_crl(env, tasks, ds.devices, ds.deadline_s, hp,
                               seed=base_seed * 977 + d)
        crl.save_policy_json(out / "policies" / f"day_{d}.json", policy)
        _, ret = crl.greedy_rollout(policy, env, tasks, ds.devices, ds.deadline_s)
        final_returns[str(d)] = float(ret)

    train_rows = [t for t in ds.svm_rows if t.day_id in train_r]
    if not train_rows:
        raise DataError("no SVM training rows in the train split")
    schema = localsvm.FeatureSchema.from_rows([t.row for t in train_rows])
    samples = [localsvm.SvmSample(localsvm.build_features(schema, t.row), t.label)
               for t in train_rows]
    model = localsvm.train_svm(samples,
                               lr=float(tr.get("svm_lr", 0.01)),
                               epochs=int(tr.get("svm_epochs", 150)),
                               seed=base_seed)
    localsvm.save_svm_model(out / "svm_model.json", model, schema)
    svm_loss = localsvm.dataset_loss(model.w, samples)

    print(json.dumps({"policies": len(final_returns), "svm_loss": svm_loss,
                      "greedy_returns": final_returns, "out": str(out)},
                     sort_keys=True))
    return EXIT_OK


def _parse_context(text: str) -> crl.SensingContext:
    try:
        return crl.SensingContext([float(x) for x in text.split(",")])
    except ValueError as exc:
        raise UsageError(f"bad --context value: {exc}") from exc


def cmd_oracle(args) -> int:
    tasks = load_tasks_csv(args.tasks)
    devices = load_devices_csv(args.devices)
    solvers = {"brute": knapsack.solve_bruteforce,
               "bb": knapsack.solve_branch_bound,
               "greedy": knapsack.solve_greedy_density}
    result = solvers[args.method](tasks, devices, args.deadline)
    print(json.dumps({
        "objective": result.objective,
        "optimal": result.optimal,
        "assignment": result.allocation.assignment_pairs(),
    }, sort_keys=True))
    return EXIT_OK


def cmd_solve(args) -> int:
    tasks = load_tasks_csv(args.tasks)
    devices = load_devices_csv(args.devices)
    deadline_s = args.deadline
    weights = coop.EnsembleWeights(args.w1, 1.0 - args.w1)

    if args.policy == "rm":
        alloc = coop.allocate_rm(tasks, devices, deadline_s, seed=args.seed)
    elif args.policy == "dml":
        alloc = coop.allocate_dml(tasks, devices, deadline_s)
    else:
        if not args.policy_file:
            raise UsageError(f"policy {args.policy!r} needs --policy-file")
        policy = crl.load_policy_json(args.policy_file)
        if args.library and args.context:
            library, _, _, _ = crl.load_environment_library_csv(args.library,
                                                                devices.capacities)
            env = crl.knn_environment(library, _parse_context(args.context), args.k)
            run_tasks = tasks.with_importances(
                crl.implied_importances(env, devices.capacities))
        else:
            env = crl.build_environment(tasks.importances, devices.capacities,
                                        crl.SensingContext([0.0]))
            run_tasks = tasks
        if args.policy == "crl":
            alloc = crl.allocate_crl(policy, env, run_tasks, devices, deadline_s)
        else:
            if not args.svm_model:
                raise UsageError("policy 'dcta' needs --svm-model")
            model, schema = localsvm.load_svm_model(args.svm_model)
            if not args.features:
                raise UsageError("policy 'dcta' needs --features (SVM CSV for these tasks)")
            rows = [t for t in localsvm.load_svm_training_csv(args.features)]
            by_task = {t.task_id: t.row for t in rows}
            feats = np.stack([localsvm.build_features(schema, by_task[t.id])
                              for t in run_tasks])
            alloc = coop.allocate_dcta(policy, model, env, feats, run_tasks,
                                       devices, deadline_s, weights)

    print(json.dumps({
        "objective": allocation_objective(tasks, alloc),
        "optimal": False,
        "assignment": alloc.assignment_pairs(),
        "policy": args.policy,
        "weights": {"w1": weights.w1, "w2": weights.w2},
    }, sort_keys=True))
    return EXIT_OK


def _evaluate_cell(ds: datasets.Dataset, schema, svm_model, policies_dir: Path,
                   library: crl.EnvironmentLibrary, knn_k: int,
                   weights: coop.EnsembleWeights, day: int, seed: int,
                   policy: str) -> report.ReportRow:
    tasks = ds.tasks_by_day[day]
    devices, deadline_s = ds.devices, ds.deadline_s

    if policy in ("crl", "dcta"):
        query = crl.SensingContext(ds.contexts[day])
        env = crl.knn_environment(library, query, knn_k)
        imp = crl.implied_importances(env, devices.capacities)
        run_tasks = tasks.with_importances(imp)
        ref_day = env.day_id if env.day_id >= 0 else day
        policy_path = policies_dir / f"day_{ref_day}.json"
        if not policy_path.exists():
            # k>1 averaged retrieval has no single source day; use the nearest
            nearest = crl.knn_environment(library, query, 1)
            policy_path = policies_dir / f"day_{nearest.day_id}.json"
        if not policy_path.exists():
            raise DataError(f"missing trained policy {policy_path}")
        qpolicy = crl.load_policy_json(policy_path)

    if policy == "rm":
        alloc = coop.allocate_rm(tasks, devices, deadline_s, seed=seed * 131 + day)
    elif policy == "dml":
        alloc = coop.allocate_dml(tasks, devices, deadline_s)
    elif policy == "oracle":
        alloc = knapsack.solve_branch_bound(tasks, devices, deadline_s).allocation
    elif policy == "crl":
        alloc = crl.allocate_crl(qpolicy, env, run_tasks, devices, deadline_s)
    elif policy == "dcta":
        rows = [t.row for t in ds.svm_rows if t.day_id == day]
        feats = np.stack([localsvm.build_features(schema, r) for r in rows])
        alloc = coop.allocate_dcta(qpolicy, svm_model, env, feats, run_tasks,
                                   devices, deadline_s, weights)
    else:
        raise UsageError(f"unknown policy {policy!r}")

    outcome = edgesim.simulate(alloc, tasks, devices, ds.topology, deadline_s=deadline_s)
    achieved = chiller.day_cost(ds.history, day, alloc.assigned_mask())
    om = overall_merit(achieved, float(ds.ideal_kwh[day]))
    return report.ReportRow(
        run_id=f"d{day:03d}-s{seed:03d}-{policy}",
        policy=policy, seed=seed, n_tasks=alloc.n_assigned,
        om=om, pt_s=outcome.pt_s, ec_j=outcome.ec_j,
        objective=allocation_objective(tasks, alloc),
    )


def cmd_run(args) -> int:
    doc = _load_config(args.config)
    data_dir = args.data or doc.get("dataset_dir")
    if not data_dir:
        raise UsageError("no dataset directory (use --data or dataset_dir in config)")
    ds = datasets.load_dataset(data_dir)
    run_doc = doc.get("run", {}) or {}
    policies = args.policy or run_doc.get("policies") or ["rm", "dml", "crl", "dcta", "oracle"]
    seeds = run_doc.get("seeds", [0])
    if args.seeds:
        seeds = [int(s) for s in args.seeds.split(",")]
    if not seeds:
        raise DataError("seeds must be nonempty")
    knn_k = int(run_doc.get("knn_k", 3))
    artifacts = Path(args.artifacts or doc.get("artifacts_dir") or "artifacts")
    out = Path(args.out or run_doc.get("out_dir") or "results")
    out.mkdir(parents=True, exist_ok=True)

    train_r, val_r, eval_r = _splits(_train_section(doc), ds.n_days)
    eval_days = list(eval_r)
    if not eval_days:
        raise InfeasibleError("no evaluation days in the split")

    needs_model = any(p in ("crl", "dcta") for p in policies)
    schema = svm_model = None
    library = crl.EnvironmentLibrary(tuple(
        crl.build_environment(ds.importances[d], ds.devices.capacities,
                              crl.SensingContext(ds.contexts[d]), d)
        for d in train_r))
    if needs_model:
        model_path = artifacts / "svm_model.json"
        if not (artifacts / "policies").exists():
            raise DataError(f"missing trained policies under {artifacts}")
        if "dcta" in policies:
            if not model_path.exists():
                raise DataError(f"missing SVM model {model_path}")
            svm_model, schema = localsvm.load_svm_model(model_path)
        knn_k = min(knn_k, len(library)) or 1

    w1 = run_doc.get("weights", "tune")
    if args.w1 is not None:
        w1 = args.w1
    if w1 == "tune" and "dcta" in policies:
        weights = _tune_on_validation(ds, schema, svm_model, artifacts, list(val_r))
    elif w1 == "tune":
        weights = coop.EnsembleWeights(1.0, 0.0)
    else:
        w1 = float(w1)
        weights = coop.EnsembleWeights(w1, 1.0 - w1)

    cells = [(day, seed, policy) for day in eval_days for seed in seeds
             for policy in policies]
    threads = max(1, int(os.environ.get("EDGEALLOC_THREADS", "1")))

    def work(cell):
        day, seed, policy = cell
        return _evaluate_cell(ds, schema, svm_model, artifacts / "policies",
                              library, knn_k, weights, day, seed, policy)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(work, cells))
    else:
        rows = [work(c) for c in cells]
    rows.sort(key=lambda r: r.run_id)

    report_path = out / "report.csv"
    report.write_report_csv(report_path, rows)
    summary = report.summarize(rows, baseline="dcta")
    summary["weights"] = {"w1": weights.w1, "w2": weights.w2}
    summary["eval_days"] = eval_days
    summary["seeds"] = list(seeds)
    report.write_summary_json(out / "summary.json", summary)
    print(json.dumps({"report": str(report_path), "summary": str(out / "summary.json"),
                      "rows": len(rows)}, sort_keys=True))
    return EXIT_OK


def _tune_on_validation(ds: datasets.Dataset, schema, svm_model,
                        artifacts: Path, val_days: list[int]) -> coop.EnsembleWeights:
    if not val_days or svm_model is None:
        return coop.EnsembleWeights(1.0, 0.0)
    instances = []
    for d in val_days:
        policy_path = artifacts / "policies" / f"day_{d}.json"
        if not policy_path.exists():
            continue
        tasks = ds.tasks_by_day[d]
        env = crl.build_environment(tasks.importances, ds.devices.capacities,
                                    crl.SensingContext(ds.contexts[d]), d)
        rows = [t.row for t in ds.svm_rows if t.day_id == d]
        feats = np.stack([localsvm.build_features(schema, r) for r in rows])

        def merit_fn(alloc, _d=d):
            achieved = chiller.day_cost(ds.history, _d, alloc.assigned_mask())
            return overall_merit(achieved, float(ds.ideal_kwh[_d]))

        instances.append(coop.TuneInstance(
            policy=crl.load_policy_json(policy_path), svm_model=svm_model,
            env=env, features=feats, tasks=tasks, devices=ds.devices,
            deadline_s=ds.deadline_s, merit_fn=merit_fn))
    if not instances:
        return coop.EnsembleWeights(1.0, 0.0)
    return coop.tune_weights(instances)


def cmd_report(args) -> int:
    rows = report.load_report_csv(args.report)
    if not rows:
        raise DataError("report CSV has no rows")
    written = report.render_report(rows, args.out, baseline=args.baseline)
    print(json.dumps(written, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="edgealloc",
                     description="importance-weighted task allocation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--config", help="YAML config with a generator section")
    p.add_argument("--out", help="output dataset directory")
    p.add_argument("--seed", type=int, help="override the generator seed")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train CRL policies and the SVM model")
    p.add_argument("--config", help="YAML config")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--out", help="artifacts output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("oracle", help="exact or heuristic knapsack solve")
    p.add_argument("--tasks", required=True)
    p.add_argument("--devices", required=True)
    p.add_argument("--deadline", type=float, required=True)
    p.add_argument("--method", choices=["brute", "bb", "greedy"], default="bb")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("solve", help="allocate one instance with a policy")
    p.add_argument("--policy", choices=["rm", "dml", "crl", "dcta"], required=True)
    p.add_argument("--tasks", required=True)
    p.add_argument("--devices", required=True)
    p.add_argument("--deadline", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy-file")
    p.add_argument("--svm-model")
    p.add_argument("--features", help="SVM-format CSV with rows for these tasks")
    p.add_argument("--library", help="environment library CSV for kNN retrieval")
    p.add_argument("--context", help="comma-separated sensing vector")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--w1", type=float, default=0.5)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("run", help="evaluate policies over the eval split")
    p.add_argument("--config", help="YAML config")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--artifacts", help="trained artifacts directory")
    p.add_argument("--out", help="results output directory")
    p.add_argument("--policy", action="append",
                   choices=["rm", "dml", "crl", "dcta", "oracle"],
                   help="repeatable; overrides config run.policies")
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--w1", type=float, help="fixed ensemble weight instead of tuning")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="summary tables and figures from a report CSV")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", default="dcta")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"infeasible experiment: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DataError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
