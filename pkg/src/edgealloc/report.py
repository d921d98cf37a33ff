"""Report rendering: per-policy summary statistics, delimited output and figures.

Consumes the run report CSV (one row per day/seed/policy cell) and writes a
summary CSV plus JSON alongside PNG figures comparing the policies.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .core import fmt_num

REPORT_HEADER = ["run_id", "policy", "seed", "n_tasks", "om", "pt_s", "ec_j", "objective"]
METRICS = ("om", "pt_s", "ec_j", "objective")


@dataclass(frozen=True)
class ReportRow:
    run_id: str
    policy: str
    seed: int
    n_tasks: int
    om: float
    pt_s: float
    ec_j: float
    objective: float


def write_report_csv(path: str | Path, rows: list[ReportRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        for r in rows:
            writer.writerow([r.run_id, r.policy, r.seed, r.n_tasks, fmt_num(r.om),
                             fmt_num(r.pt_s), fmt_num(r.ec_j), fmt_num(r.objective)])


def load_report_csv(path: str | Path) -> list[ReportRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != REPORT_HEADER:
            raise ValueError(f"bad report CSV header in {path}")
        return [ReportRow(r["run_id"], r["policy"], int(r["seed"]), int(r["n_tasks"]),
                          float(r["om"]), float(r["pt_s"]), float(r["ec_j"]),
                          float(r["objective"])) for r in reader]


def summarize(rows: list[ReportRow], baseline: str = "dcta") -> dict:
    """Mean/std per policy and metric, plus pairwise ratios against a baseline."""
    policies = sorted({r.policy for r in rows})
    summary: dict = {"policies": {}, "ratios": {}, "n_rows": len(rows)}
    means: dict[str, dict[str, float]] = {}
    for p in policies:
        sub = [r for r in rows if r.policy == p]
        stats = {}
        for m in METRICS:
            vals = np.array([getattr(r, m) for r in sub])
            stats[f"{m}_mean"] = float(vals.mean())
            stats[f"{m}_std"] = float(vals.std())
        stats["n_runs"] = len(sub)
        summary["policies"][p] = stats
        means[p] = {m: stats[f"{m}_mean"] for m in METRICS}
    ref = baseline if baseline in means else (policies[-1] if policies else None)
    if ref is not None:
        for p in policies:
            if p == ref:
                continue
            for m in ("pt_s", "ec_j", "om"):
                denom = means[ref][m]
                key = f"{m}_{p}_over_{ref}"
                summary["ratios"][key] = float(means[p][m] / denom) if denom else None
        summary["ratios"]["baseline"] = ref
    return summary


def write_summary_json(path: str | Path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
        fh.write("\n")


def write_summary_csv(path: str | Path, summary: dict) -> None:
    metrics_cols = [f"{m}_{k}" for m in METRICS for k in ("mean", "std")]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "n_runs"] + metrics_cols)
        for p, stats in sorted(summary["policies"].items()):
            writer.writerow([p, stats["n_runs"]]
                            + [fmt_num(stats[c]) for c in metrics_cols])


def _bar_figure(rows: list[ReportRow], metric: str, label: str, path: Path) -> None:
    policies = sorted({r.policy for r in rows})
    means, stds = [], []
    for p in policies:
        vals = np.array([getattr(r, metric) for r in rows if r.policy == p])
        means.append(vals.mean())
        stds.append(vals.std())
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    ax.bar(policies, means, yerr=stds, capsize=4, color="#4878a8", edgecolor="black")
    ax.set_ylabel(label)
    ax.set_xlabel("policy")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _per_run_figure(rows: list[ReportRow], path: Path) -> None:
    policies = sorted({r.policy for r in rows})
    fig, ax = plt.subplots(figsize=(6.4, 3.4))
    for p in policies:
        sub = sorted((r for r in rows if r.policy == p), key=lambda r: r.run_id)
        ax.plot(range(len(sub)), [r.om for r in sub], marker="o", markersize=3,
                linewidth=1, label=p)
    ax.set_xlabel("run")
    ax.set_ylabel("overall merit")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_report(rows: list[ReportRow], out_dir: str | Path,
                  baseline: str = "dcta") -> dict[str, str]:
    """Write summary CSV/JSON and the comparison figures; returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(rows, baseline)
    written = {
        "summary_json": out / "summary.json",
        "summary_csv": out / "summary.csv",
        "fig_om": out / "om_by_policy.png",
        "fig_pt": out / "pt_by_policy.png",
        "fig_ec": out / "ec_by_policy.png",
        "fig_runs": out / "om_per_run.png",
    }
    write_summary_json(written["summary_json"], summary)
    write_summary_csv(written["summary_csv"], summary)
    _bar_figure(rows, "om", "overall merit", written["fig_om"])
    _bar_figure(rows, "pt_s", "processing time [s]", written["fig_pt"])
    _bar_figure(rows, "ec_j", "energy [J]", written["fig_ec"])
    _per_run_figure(rows, written["fig_runs"])
    return {k: str(v) for k, v in written.items()}
