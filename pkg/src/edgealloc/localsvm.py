"""Local squared-hinge SVM predictor and its domain-assisted feature engineering.

The predictor scores each task's allocation propensity from two general
features (past selection count, past prediction accuracy) and the chiller
domain features. The loss regularizes the full weight vector, bias slot
included, which enters as an appended constant-1 feature.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import _readonly, fmt_num

SVM_CSV_HEADER = [
    "day_id", "task_id", "past_success", "prediction_accuracy", "building",
    "model_type", "operating_power_kw", "weather_condition", "outdoor_temp_c",
    "latest_cooling_load_kw", "water_mass_flow_kg_s", "water_temp_diff_c", "label",
]

# order of the z-scored numeric slots in the engineered vector
_NUMERIC_FIELDS = (
    "past_success", "prediction_accuracy", "operating_power_kw", "outdoor_temp_c",
    "latest_cooling_load_kw", "water_mass_flow_kg_s", "water_temp_diff_c",
)


@dataclass(frozen=True, eq=False)
class SvmSample:
    """One training sample: feature vector and a +/-1 label."""

    x: np.ndarray
    y: int

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1 or not np.isfinite(x).all():
            raise ValueError("sample features must be a finite 1-D vector")
        if self.y not in (-1, 1):
            raise ValueError("label must be -1 or +1")
        object.__setattr__(self, "x", _readonly(x.copy()))


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Linear model; the last weight slot is the bias (constant-1 feature)."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1:
            raise ValueError("weights must be a 1-D vector")
        object.__setattr__(self, "w", _readonly(w.copy()))


@dataclass(frozen=True)
class TaskFeatureRow:
    """Raw per-task feature record before engineering."""

    past_success: int
    prediction_accuracy: float
    building: str
    model_type: str
    operating_power_kw: float
    weather_condition: str
    outdoor_temp_c: float
    latest_cooling_load_kw: float
    water_mass_flow_kg_s: float
    water_temp_diff_c: float

    def __post_init__(self):
        if self.past_success < 0:
            raise ValueError("past_success must be >= 0")
        if not 0.0 <= self.prediction_accuracy <= 1.0:
            raise ValueError("prediction_accuracy must be in [0, 1]")

    def numeric(self) -> np.ndarray:
        return np.array([float(getattr(self, f)) for f in _NUMERIC_FIELDS])


@dataclass(frozen=True, eq=False)
class FeatureSchema:
    """Vocabularies and scaling statistics learned from a history of rows."""

    buildings: tuple[str, ...]
    model_types: tuple[str, ...]
    weather_conditions: tuple[str, ...]
    numeric_mean: np.ndarray
    numeric_std: np.ndarray

    @classmethod
    def from_rows(cls, rows: Sequence[TaskFeatureRow]) -> "FeatureSchema":
        if not rows:
            raise ValueError("cannot build a feature schema from an empty history")
        numeric = np.stack([r.numeric() for r in rows])
        return cls(
            buildings=tuple(sorted({r.building for r in rows})),
            model_types=tuple(sorted({r.model_type for r in rows})),
            weather_conditions=tuple(sorted({r.weather_condition for r in rows})),
            numeric_mean=_readonly(numeric.mean(axis=0)),
            numeric_std=_readonly(numeric.std(axis=0)),
        )

    def feature_length(self) -> int:
        # 2 general + building/model one-hots + power + weather one-hot
        # + 4 remaining numerics + bias
        return (2 + len(self.buildings) + len(self.model_types) + 1
                + len(self.weather_conditions) + 4 + 1)

    def to_dict(self) -> dict:
        return {
            "buildings": list(self.buildings),
            "model_types": list(self.model_types),
            "weather_conditions": list(self.weather_conditions),
            "numeric_mean": [float(x) for x in self.numeric_mean],
            "numeric_std": [float(x) for x in self.numeric_std],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSchema":
        return cls(
            buildings=tuple(doc["buildings"]),
            model_types=tuple(doc["model_types"]),
            weather_conditions=tuple(doc["weather_conditions"]),
            numeric_mean=_readonly(np.asarray(doc["numeric_mean"], dtype=float)),
            numeric_std=_readonly(np.asarray(doc["numeric_std"], dtype=float)),
        )


def _one_hot(vocab: tuple[str, ...], value: str) -> np.ndarray:
    # unseen categories map to the all-zero block
    block = np.zeros(len(vocab))
    if value in vocab:
        block[vocab.index(value)] = 1.0
    return block


def build_features(schema: FeatureSchema, row: TaskFeatureRow) -> np.ndarray:
    """Engineered vector: z-scored numerics, one-hot categoricals, trailing bias 1."""
    z = row.numeric() - schema.numeric_mean
    z = np.where(schema.numeric_std > 0, z / np.where(schema.numeric_std > 0,
                                                      schema.numeric_std, 1.0), 0.0)
    past, acc, power, temp, load, flow, tdiff = z
    return np.concatenate([
        [past, acc],
        _one_hot(schema.buildings, row.building),
        _one_hot(schema.model_types, row.model_type),
        [power],
        _one_hot(schema.weather_conditions, row.weather_condition),
        [temp, load, flow, tdiff],
        [1.0],
    ])


def prediction_accuracy(predicted: Sequence[float], actual: Sequence[float]) -> float:
    """Similarity of past predictions to reality: 1 - min(1, mean|p-a| / mean|a|).

    Returns 0.0 for an empty history and for an all-zero actual series with
    nonzero predictions.
    """
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape:
        raise ValueError("predicted/actual length mismatch")
    if p.size == 0:
        return 0.0
    denom = np.abs(a).mean()
    err = np.abs(p - a).mean()
    if denom == 0:
        return 1.0 if err == 0 else 0.0
    return 1.0 - min(1.0, err / denom)


def svm_loss(w: np.ndarray, sample: SvmSample) -> float:
    """Per-sample loss: 0.5 ||w||^2 + 0.5 max(0, 1 - y w.x)^2."""
    w = np.asarray(w, dtype=float)
    if w.shape != sample.x.shape:
        raise ValueError("weight/feature dimension mismatch")
    margin = 1.0 - sample.y * float(w @ sample.x)
    hinge = max(0.0, margin)
    return 0.5 * float(w @ w) + 0.5 * hinge * hinge


def svm_grad(w: np.ndarray, sample: SvmSample) -> np.ndarray:
    """Gradient of svm_loss; the squared hinge is C1 so this is exact everywhere."""
    w = np.asarray(w, dtype=float)
    if w.shape != sample.x.shape:
        raise ValueError("weight/feature dimension mismatch")
    hinge = max(0.0, 1.0 - sample.y * float(w @ sample.x))
    return w - sample.y * hinge * sample.x


def dataset_loss(w: np.ndarray, samples: Sequence[SvmSample]) -> float:
    return float(np.mean([svm_loss(w, s) for s in samples]))


def train_svm(samples: Sequence[SvmSample], lr: float = 0.01, epochs: int = 1000,
              batch_size: int = 16, seed: int = 0) -> SvmModel:
    """Mini-batch SGD on the mean loss; returns the best full-dataset-loss iterate.

    Initialized at w = 0, so the result is never worse than the zero vector.
    Deterministic given the seed.
    """
    if not samples:
        raise ValueError("cannot train on an empty dataset")
    if lr <= 0:
        raise ValueError("lr must be > 0")
    dim = samples[0].x.size
    X = np.stack([s.x for s in samples])
    y = np.array([s.y for s in samples], dtype=float)
    if X.shape[1] != dim:
        raise ValueError("inconsistent feature dimensions")
    rng = np.random.default_rng(seed)
    w = np.zeros(dim)
    best_w = w.copy()
    best_loss = _batch_loss(w, X, y)
    n = len(samples)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            Xb, yb = X[idx], y[idx]
            hinge = np.maximum(0.0, 1.0 - yb * (Xb @ w))
            grad = w - (yb * hinge) @ Xb / len(idx)
            w = w - lr * grad
        loss = _batch_loss(w, X, y)
        if loss < best_loss:
            best_loss = loss
            best_w = w.copy()
    return SvmModel(best_w)


def _batch_loss(w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    hinge = np.maximum(0.0, 1.0 - y * (X @ w))
    return float(0.5 * (w @ w) + 0.5 * np.mean(hinge ** 2))


def predict_scores(model: SvmModel, rows: np.ndarray) -> np.ndarray:
    """Raw linear scores w.x per row; positive means allocate/prioritize."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.shape[1] != model.w.size:
        raise ValueError("feature dimension does not match the model")
    return rows @ model.w


@dataclass(frozen=True)
class TrainingRow:
    day_id: int
    task_id: int
    row: TaskFeatureRow
    label: int


def load_svm_training_csv(path: str | Path) -> list[TrainingRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SVM_CSV_HEADER:
            raise ValueError(f"bad SVM training CSV header in {path}")
        out = []
        for r in reader:
            label = int(r["label"])
            if label not in (-1, 1):
                raise ValueError(f"label must be -1 or 1, got {label}")
            out.append(TrainingRow(
                day_id=int(r["day_id"]),
                task_id=int(r["task_id"]),
                row=TaskFeatureRow(
                    past_success=int(r["past_success"]),
                    prediction_accuracy=float(r["prediction_accuracy"]),
                    building=r["building"],
                    model_type=r["model_type"],
                    operating_power_kw=float(r["operating_power_kw"]),
                    weather_condition=r["weather_condition"],
                    outdoor_temp_c=float(r["outdoor_temp_c"]),
                    latest_cooling_load_kw=float(r["latest_cooling_load_kw"]),
                    water_mass_flow_kg_s=float(r["water_mass_flow_kg_s"]),
                    water_temp_diff_c=float(r["water_temp_diff_c"]),
                ),
                label=label,
            ))
    return out


def save_svm_training_csv(path: str | Path, rows: Sequence[TrainingRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SVM_CSV_HEADER)
        for tr in rows:
            r = tr.row
            writer.writerow([
                tr.day_id, tr.task_id, r.past_success, fmt_num(r.prediction_accuracy),
                r.building, r.model_type, fmt_num(r.operating_power_kw),
                r.weather_condition, fmt_num(r.outdoor_temp_c),
                fmt_num(r.latest_cooling_load_kw), fmt_num(r.water_mass_flow_kg_s),
                fmt_num(r.water_temp_diff_c), tr.label,
            ])


def save_svm_model(path: str | Path, model: SvmModel, schema: FeatureSchema) -> None:
    doc = {"w": [float(x) for x in model.w], "feature_schema": schema.to_dict()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_svm_model(path: str | Path) -> tuple[SvmModel, FeatureSchema]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return SvmModel(np.asarray(doc["w"], dtype=float)), FeatureSchema.from_dict(doc["feature_schema"])
