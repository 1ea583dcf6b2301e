"""Structured-text model artifacts, CV reports, prediction CSVs and SVG scatters."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ParameterError, SchemaError
from .cv import CvReport, FittedModel
from .prep import IQR_FACTOR

SPEC_VERSION = 1


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


def dumps(doc: dict) -> str:
    """Canonical text: sorted keys, shortest round-trip float repr."""
    return json.dumps(_clean(doc), sort_keys=True, indent=1) + "\n"


def _num(v):
    return float("nan") if v is None else float(v)


@dataclass(frozen=True)
class ModelArtifact:
    """A trained model that can score new feature tables by column name."""

    features: tuple[str, ...]
    mean: np.ndarray
    q1: np.ndarray
    q3: np.ndarray
    replacement: np.ndarray
    z_mean: np.ndarray
    z_std: np.ndarray
    w: np.ndarray
    b: float
    C: float
    eps: float
    seed: int
    feature_spec_hash: str = ""
    config_hash: str = ""
    retained: tuple[str, ...] = ()

    @classmethod
    def from_fitted(cls, model: FittedModel, names: Sequence[str], seed: int,
                    feature_spec_hash: str = "", config_hash: str = "") -> "ModelArtifact":
        pos = np.searchsorted(model.prep.columns, model.columns)
        p = model.prep
        retained = tuple(names[c] for c in p.columns[model.stability.retained])
        return cls(tuple(names[c] for c in model.columns), p.mean[pos], p.q1[pos], p.q3[pos],
                   p.replacement[pos], p.z_mean[pos], p.z_std[pos], model.svr.w.copy(),
                   float(model.svr.b), float(model.svr.C), float(model.svr.eps), int(seed),
                   feature_spec_hash, config_hash, retained)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.features):
            raise ParameterError(f"expected {len(self.features)} feature columns")
        iqr = self.q3 - self.q1
        lo, hi = self.q1 - IQR_FACTOR * iqr, self.q3 + IQR_FACTOR * iqr
        X = np.where(np.isnan(X), self.mean, X)
        X = np.where((X < lo) | (X > hi), self.replacement, X)
        return (X - self.z_mean) / self.z_std

    def predict(self, X) -> np.ndarray:
        """Predict from raw (unprepared) values of ``self.features``, in that order."""
        return self.transform(X) @ self.w + self.b

    def to_dict(self) -> dict:
        return {
            "kind": "model_artifact", "spec_version": SPEC_VERSION,
            "feature_spec_hash": self.feature_spec_hash, "config_hash": self.config_hash,
            "seed": self.seed, "features": list(self.features),
            "retained_by_stability_selection": list(self.retained),
            "scaler": {"mean": self.mean, "q1": self.q1, "q3": self.q3,
                       "replacement": self.replacement, "z_mean": self.z_mean,
                       "z_std": self.z_std},
            "svr": {"w": self.w, "b": self.b, "C": self.C, "eps": self.eps},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelArtifact":
        if doc.get("kind") != "model_artifact":
            raise SchemaError("not a model artifact")
        if doc.get("spec_version") != SPEC_VERSION:
            raise SchemaError(f"unsupported artifact version {doc.get('spec_version')!r}")
        try:
            sc, svr = doc["scaler"], doc["svr"]
            arr = {k: np.array([_num(v) for v in sc[k]])
                   for k in ("mean", "q1", "q3", "replacement", "z_mean", "z_std")}
            return cls(tuple(doc["features"]), w=np.array(svr["w"], dtype=float),
                       b=float(svr["b"]), C=float(svr["C"]), eps=float(svr["eps"]),
                       seed=int(doc["seed"]), feature_spec_hash=doc.get("feature_spec_hash", ""),
                       config_hash=doc.get("config_hash", ""),
                       retained=tuple(doc.get("retained_by_stability_selection", ())), **arr)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed model artifact: {exc}") from None

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(dumps(self.to_dict()))
        return path

    @classmethod
    def load(cls, path) -> "ModelArtifact":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: {exc}") from None
        return cls.from_dict(doc)


def cv_report_dict(report: CvReport, names: Sequence[str], subject_ids: Sequence[str],
                   config_hash: str = "", feature_spec_hash: str = "") -> dict:
    folds = []
    for f in report.folds:
        m = f.model
        retained = [names[c] for c in m.prep.columns[m.stability.retained]]
        folds.append({
            "index": f.index, "n_test": int(f.test.size),
            "test_subjects": [subject_ids[i] for i in f.test],
            "r": f.r, "rmse": f.rmse, "mae": f.mae,
            "retained": retained,
            "selected": [names[c] for c in m.columns],
            "C": m.svr.C, "eps": m.svr.eps,
            "inner_r_trace": list(m.stepwise.trace),
            "dropped_columns": len(m.prep.dropped),
            "elastic_net_unconverged": m.stability.n_unconverged,
        })
    pooled = report.pooled
    return {
        "kind": "cv_report", "spec_version": SPEC_VERSION,
        "config_hash": config_hash, "feature_spec_hash": feature_spec_hash,
        "seed": report.seed, "config": report.config.to_dict(),
        "fold_mean_r": report.fold_mean_r,
        "pooled": {"r": pooled.r, "rmse": pooled.rmse, "mae": pooled.mae},
        "folds": folds,
        "predictions": [{"subject_id": sid, "observed": o, "predicted": p, "fold": int(k)}
                        for sid, o, p, k in zip(subject_ids, report.observed,
                                                report.predicted, report.fold_of)],
    }


def write_cv_report(report: CvReport, path, names, subject_ids, config_hash: str = "",
                    feature_spec_hash: str = "", svg: bool = True) -> Path:
    """Write the report plus ``<stem>.predictions.csv`` (and an SVG scatter)."""
    path = Path(path)
    doc = cv_report_dict(report, names, subject_ids, config_hash, feature_spec_hash)
    path.write_text(dumps(doc))
    write_predictions(path.with_suffix(".predictions.csv"), subject_ids,
                      report.observed, report.predicted)
    if svg:
        write_scatter_svg(path.with_suffix(".svg"), report.observed, report.predicted,
                          f"fold-averaged r = {report.fold_mean_r:.3f}")
    return path


def read_cv_report(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    if doc.get("kind") != "cv_report":
        raise SchemaError(f"{path}: not a CV report")
    if doc.get("spec_version") != SPEC_VERSION:
        raise SchemaError(f"{path}: unsupported report version")
    return doc


def write_predictions(path, subject_ids, observed, predicted) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("subject_id", "observed", "predicted"))
        for sid, o, p in zip(subject_ids, observed, predicted):
            w.writerow((sid, repr(float(o)), repr(float(p))))
    return path


def write_scatter_svg(path, observed, predicted, title: str = "", size: int = 360) -> Path:
    """Predicted against observed, with the identity line. Best effort, numbers live in CSV."""
    obs = np.asarray(observed, dtype=float)
    pred = np.asarray(predicted, dtype=float)
    lo = float(min(obs.min(), pred.min()))
    hi = float(max(obs.max(), pred.max()))
    if hi == lo:
        hi = lo + 1.0
    pad = 40

    def px(v):
        return pad + (v - lo) / (hi - lo) * (size - 2 * pad)

    def py(v):
        return size - px(v)

    dots = "\n".join(f'<circle cx="{px(o):.2f}" cy="{py(p):.2f}" r="3" fill="#1f77b4"/>'
                     for o, p in zip(obs, pred))
    svg = f"""<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">
<rect width="{size}" height="{size}" fill="white"/>
<line x1="{px(lo):.2f}" y1="{py(lo):.2f}" x2="{px(hi):.2f}" y2="{py(hi):.2f}" stroke="#999"/>
{dots}
<text x="{size / 2}" y="20" text-anchor="middle" font-size="13">{title}</text>
<text x="{size / 2}" y="{size - 8}" text-anchor="middle" font-size="12">observed</text>
<text x="12" y="{size / 2}" font-size="12" transform="rotate(-90 12 {size / 2})">predicted</text>
</svg>
"""
    path = Path(path)
    path.write_text(svg)
    return path
