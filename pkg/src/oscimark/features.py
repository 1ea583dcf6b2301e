"""Feature registry: naming, ordering, extraction and CSV persistence.

Feature names follow ``family.band.locus[.metric]``::

    pow.alpha.Fp1            per-electrode band power
    rpow.gamma.FP            region band power (regions plus ``global``)
    coh.beta.F3-P3           band coherence, pair labels in sorted order
    dynfc.theta.state2.dwell brain-state metric (occ, dwell or trans)
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dynfc import DYNFC_BANDS, StateModel, assign_states, cluster_states, subject_wpli
from .errors import ConfigurationError, ParameterError, ParseError, SchemaError
from .signal import Montage, Recording
from .spectral import (BandSet, all_pairs_coherence, band_mask, band_power,
                       pooled_band_coherence, region_power, welch_psd)

SPEC_VERSION = 1
FAMILIES = ("power", "region_power", "coherence", "dynfc")
PREFIX = {"power": "pow", "region_power": "rpow", "coherence": "coh", "dynfc": "dynfc"}
FAMILY_OF = {v: k for k, v in PREFIX.items()}
DYNFC_METRICS = ("occ", "dwell", "trans")


@dataclass(frozen=True, order=True)
class FeatureDescriptor:
    family: str
    band: str
    locus: str              # channel, region, "A-B" pair or "state<k>"
    metric: str | None = None

    @property
    def name(self) -> str:
        return feature_name(self)


def pair_locus(a: str, b: str) -> str:
    return "-".join(sorted((a, b)))


def feature_name(d: FeatureDescriptor) -> str:
    """Canonical name of a descriptor.

    >>> feature_name(FeatureDescriptor("coherence", "beta", "P3-F3"))
    'coh.beta.F3-P3'
    """
    locus = d.locus
    if d.family == "coherence":
        locus = pair_locus(*locus.split("-"))
    parts = [PREFIX[d.family], d.band, locus]
    if d.metric is not None:
        parts.append(d.metric)
    return ".".join(parts)


def parse_feature_name(name: str) -> FeatureDescriptor:
    parts = name.split(".")
    if len(parts) not in (3, 4) or parts[0] not in FAMILY_OF:
        raise ParseError(f"not a feature name: {name!r}")
    family = FAMILY_OF[parts[0]]
    if (family == "dynfc") != (len(parts) == 4):
        raise ParseError(f"metric suffix mismatch in {name!r}")
    return FeatureDescriptor(family, parts[1], parts[2], parts[3] if len(parts) == 4 else None)


def _names_or_all(selected, available):
    if selected is None:
        return tuple(available)
    unknown = [b for b in selected if b not in available]
    if unknown:
        raise ConfigurationError(f"unknown bands {unknown}")
    return tuple(selected)


@dataclass(frozen=True)
class FeatureSpec:
    """Which features to extract, in which order, with which estimator settings.

    Band lists of ``None`` mean every band in ``bands``. The default spec
    yields 96 power + 36 region power + 720 coherence + 60 dynFC = 912
    features.
    """

    montage: Montage = field(default_factory=Montage)
    bands: BandSet = field(default_factory=BandSet)
    families: tuple[str, ...] = FAMILIES
    power_bands: tuple[str, ...] | None = None
    region_bands: tuple[str, ...] | None = None
    coherence_bands: tuple[str, ...] | None = None
    dynfc_bands: tuple[str, ...] = DYNFC_BANDS
    n_states: int = 4
    dynfc_metrics: tuple[str, ...] = DYNFC_METRICS
    coherence_estimator: str = "mean"
    nperseg: int = 1000
    overlap: float = 0.5
    window_s: float = 4.0
    step_s: float = 1.0

    def __post_init__(self):
        for f in self.families:
            if f not in FAMILIES:
                raise ConfigurationError(f"unknown feature family {f!r}")
        for m in self.dynfc_metrics:
            if m not in DYNFC_METRICS:
                raise ConfigurationError(f"unknown dynFC metric {m!r}")
        if self.coherence_estimator not in ("mean", "pooled"):
            raise ConfigurationError("coherence_estimator must be 'mean' or 'pooled'")
        if self.n_states < 2:
            raise ConfigurationError("n_states must be at least 2")
        names = self.bands.names
        for attr in ("power_bands", "region_bands", "coherence_bands", "dynfc_bands"):
            object.__setattr__(self, attr, _names_or_all(getattr(self, attr), names))

    @cached_property
    def descriptors(self) -> tuple[FeatureDescriptor, ...]:
        out = []
        labels = self.montage.labels
        if "power" in self.families:
            out += [FeatureDescriptor("power", b, ch)
                    for b in self.power_bands for ch in labels]
        if "region_power" in self.families:
            regions = list(self.montage.regions) + ["global"]
            out += [FeatureDescriptor("region_power", b, r)
                    for b in self.region_bands for r in regions]
        if "coherence" in self.families:
            pairs = [pair_locus(labels[i], labels[j])
                     for i, j in combinations(range(len(labels)), 2)]
            out += [FeatureDescriptor("coherence", b, p)
                    for b in self.coherence_bands for p in pairs]
        if "dynfc" in self.families:
            out += [FeatureDescriptor("dynfc", b, f"state{s}", m)
                    for b in self.dynfc_bands for s in range(self.n_states)
                    for m in self.dynfc_metrics]
        names = [d.name for d in out]
        if len(set(names)) != len(names):
            raise ConfigurationError("feature names are not unique")
        return tuple(out)

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.descriptors)

    def __len__(self):
        return len(self.descriptors)

    def counts(self) -> dict[str, int]:
        out = dict.fromkeys(self.families, 0)
        for d in self.descriptors:
            out[d.family] += 1
        return out

    def to_dict(self) -> dict:
        return {
            "spec_version": SPEC_VERSION,
            "labels": list(self.montage.labels),
            "regions": {k: list(v) for k, v in self.montage.regions.items()},
            "bands": [[b.name, b.lo, b.hi] for b in self.bands],
            "families": list(self.families),
            "power_bands": list(self.power_bands),
            "region_bands": list(self.region_bands),
            "coherence_bands": list(self.coherence_bands),
            "dynfc_bands": list(self.dynfc_bands),
            "n_states": self.n_states,
            "dynfc_metrics": list(self.dynfc_metrics),
            "coherence_estimator": self.coherence_estimator,
            "nperseg": self.nperseg, "overlap": self.overlap,
            "window_s": self.window_s, "step_s": self.step_s,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "FeatureSpec":
        if doc.get("spec_version") != SPEC_VERSION:
            raise SchemaError(f"unsupported feature spec version {doc.get('spec_version')!r}")
        try:
            return cls(
                montage=Montage(tuple(doc["labels"]), {k: tuple(v) for k, v in doc["regions"].items()}),
                bands=BandSet([tuple(b) for b in doc["bands"]]),
                families=tuple(doc["families"]),
                power_bands=tuple(doc["power_bands"]),
                region_bands=tuple(doc["region_bands"]),
                coherence_bands=tuple(doc["coherence_bands"]),
                dynfc_bands=tuple(doc["dynfc_bands"]),
                n_states=int(doc["n_states"]),
                dynfc_metrics=tuple(doc["dynfc_metrics"]),
                coherence_estimator=doc["coherence_estimator"],
                nperseg=int(doc["nperseg"]), overlap=float(doc["overlap"]),
                window_s=float(doc["window_s"]), step_s=float(doc["step_s"]),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed feature spec: {exc}") from None

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1))
        return path

    @classmethod
    def load(cls, path) -> "FeatureSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


# -- extraction --------------------------------------------------------------

@dataclass(frozen=True)
class FeatureVector:
    subject_id: str
    names: tuple[str, ...]
    values: np.ndarray
    # coherence features touching a zero-power bin (value forced to 0)
    flagged: np.ndarray


def dynfc_vectors(rec: Recording, spec: FeatureSpec) -> dict[str, np.ndarray]:
    """Windowed wPLI upper-triangle vectors per dynFC band."""
    if "dynfc" not in spec.families:
        return {}
    return {b: subject_wpli(rec, spec.bands[b], spec.window_s, spec.step_s)
            for b in spec.dynfc_bands}


def fit_state_models(wpli: Sequence[Mapping[str, np.ndarray]], spec: FeatureSpec,
                     seed: int = 0) -> dict[str, StateModel]:
    """Group-level brain states per band from every subject's windows."""
    models = {}
    for b in spec.dynfc_bands:
        stacked = np.concatenate([w[b] for w in wpli], axis=0)
        models[b] = cluster_states(stacked, spec.n_states, seed, b)
    return models


def extract_features(rec: Recording, spec: FeatureSpec = FeatureSpec(),
                     state_models: Mapping[str, StateModel] | None = None,
                     wpli: Mapping[str, np.ndarray] | None = None) -> FeatureVector:
    """One value per descriptor of ``spec``, in spec order.

    ``rec`` should already be preprocessed. dynFC features need
    ``state_models`` (one per dynFC band); ``wpli`` may carry the subject's
    precomputed window vectors to avoid recomputing them.
    """
    if rec.montage.labels != spec.montage.labels:
        raise ConfigurationError("recording montage differs from the feature spec montage")
    if "dynfc" in spec.families:
        if state_models is None:
            raise ConfigurationError("dynFC features need fitted state models")
        missing = [b for b in spec.dynfc_bands if b not in state_models]
        if missing:
            raise ConfigurationError(f"no state model for bands {missing}")
    values: dict[str, float] = {}
    flagged: set[str] = set()
    labels = spec.montage.labels

    if {"power", "region_power"} & set(spec.families):
        psd = welch_psd(rec, spec.nperseg, spec.overlap)
        for b in spec.bands:
            bp = band_power(psd, b)
            if b.name in spec.power_bands:
                for ch, v in zip(labels, bp):
                    values[f"pow.{b.name}.{ch}"] = float(v)
            if b.name in spec.region_bands:
                for region, v in region_power(bp, spec.montage).items():
                    values[f"rpow.{b.name}.{region}"] = v

    if "coherence" in spec.families:
        pairs, freqs, coh, sxy, sxx = all_pairs_coherence(rec, spec.nperseg, spec.overlap)
        a = np.array([p[0] for p in pairs])
        c = np.array([p[1] for p in pairs])
        zero = (sxx[a] * sxx[c]) <= 0
        for bname in spec.coherence_bands:
            mask = band_mask(freqs, spec.bands[bname])
            if spec.coherence_estimator == "mean":
                vals = coh[:, mask].mean(axis=1)
            else:
                vals = pooled_band_coherence(sxy[:, mask], sxx[a][:, mask], sxx[c][:, mask])
            hit = zero[:, mask].any(axis=1)
            for k, (i, j) in enumerate(pairs):
                name = f"coh.{bname}.{pair_locus(labels[i], labels[j])}"
                values[name] = float(vals[k])
                if hit[k]:
                    flagged.add(name)

    if "dynfc" in spec.families:
        wpli = wpli if wpli is not None else dynfc_vectors(rec, spec)
        metric_index = {"occ": 0, "dwell": 1, "trans": 2}
        for b in spec.dynfc_bands:
            seq = assign_states(wpli[b], state_models[b], rec.subject_id)
            metrics = (seq.occupancy, seq.mean_dwell, seq.transitions)
            for s in range(spec.n_states):
                for m in spec.dynfc_metrics:
                    values[f"dynfc.{b}.state{s}.{m}"] = float(metrics[metric_index[m]][s])

    names = spec.names
    vec = np.array([values[n] for n in names])
    return FeatureVector(rec.subject_id, names, vec, np.array([n in flagged for n in names]))


# -- tables ------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureTable:
    """Subjects by features; missing cells are NaN."""

    subject_ids: tuple[str, ...]
    names: tuple[str, ...]
    values: np.ndarray
    spec: FeatureSpec | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.subject_ids), len(self.names)):
            raise ParameterError("values must be (n_subjects, n_features)")
        if np.any(np.isinf(values)):
            raise ParameterError("feature values must be finite or missing")
        if self.spec is not None and tuple(self.spec.names) != tuple(self.names):
            raise SchemaError("table columns do not match the feature spec")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    @classmethod
    def from_vectors(cls, vectors: Sequence[FeatureVector], spec: FeatureSpec | None = None):
        if not vectors:
            raise ParameterError("no feature vectors")
        names = vectors[0].names
        if any(v.names != names for v in vectors):
            raise SchemaError("feature vectors disagree on names")
        return cls(tuple(v.subject_id for v in vectors), names,
                   np.array([v.values for v in vectors]), spec)

    def select_rows(self, subject_ids: Sequence[str]) -> "FeatureTable":
        index = {s: i for i, s in enumerate(self.subject_ids)}
        try:
            rows = [index[s] for s in subject_ids]
        except KeyError as exc:
            raise SchemaError(f"subject {exc.args[0]!r} not in feature table") from None
        return FeatureTable(tuple(subject_ids), self.names, self.values[rows], self.spec)

    def columns(self, names: Sequence[str]) -> np.ndarray:
        index = {n: i for i, n in enumerate(self.names)}
        try:
            return np.array([index[n] for n in names], dtype=int)
        except KeyError as exc:
            raise SchemaError(f"feature {exc.args[0]!r} not in table") from None


def _spec_path(path: Path) -> Path:
    return path.with_name(path.name + ".spec.json")


def write_table(table: FeatureTable, path) -> Path:
    """CSV with a ``subject_id`` column, 17 significant digits, empty missing cells.

    The feature spec, when known, is written next to it as ``<name>.spec.json``.
    """
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("subject_id",) + table.names)
        for sid, row in zip(table.subject_ids, table.values):
            w.writerow([sid] + ["" if np.isnan(v) else format(v, ".17g") for v in row])
    if table.spec is not None:
        table.spec.save(_spec_path(path))
    return path


def read_table(path, spec: FeatureSpec | None = None) -> FeatureTable:
    """Read a feature CSV; with ``spec`` given, the header must match it exactly."""
    path = Path(path)
    if spec is None and _spec_path(path).exists():
        spec = FeatureSpec.load(_spec_path(path))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "subject_id":
            raise SchemaError(f"{path}: first column must be subject_id")
        names = tuple(header[1:])
        if spec is not None and names != spec.names:
            raise SchemaError(f"{path}: header does not match the feature spec")
        ids, rows = [], []
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} fields")
            ids.append(row[0])
            try:
                rows.append([float(v) if v != "" else np.nan for v in row[1:]])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric value") from None
    values = np.array(rows, dtype=float).reshape(len(ids), len(names))
    return FeatureTable(tuple(ids), names, values, spec)
