"""EEG recordings, montages and the automated preprocessing chain.

Inputs are assumed to be artifact-cleaned already: bad-channel
interpolation, manual segment rejection and ICA are not performed here.
The loader only refuses data that is structurally broken or non-finite.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import signal as sps

from .errors import (
    DataIntegrityError,
    MontageMismatchError,
    ParameterError,
    ParseError,
    SchemaError,
)

DEFAULT_LABELS = (
    "Fp1", "Fp2", "F7", "F3", "F4", "F8", "C3", "C4",
    "P3", "P4", "T3", "T4", "T5", "T6", "O1", "O2",
)

# The parietal group is listed as (P7, P3) in the source protocol, but P7
# is not part of the 16-channel montage; P3/P4 is used instead.
DEFAULT_REGIONS = {
    "FP": ("Fp1", "Fp2"),
    "F": ("F7", "F3", "F4", "F8"),
    "C": ("C3", "C4"),
    "P": ("P3", "P4"),
    "T": ("T3", "T4", "T5", "T6"),
}

FILTER_ORDER = 4
NOTCH_BAND = (49.0, 51.0)


@dataclass(frozen=True)
class Montage:
    """Ordered channel labels plus named channel groups (regions)."""

    labels: tuple[str, ...] = DEFAULT_LABELS
    regions: Mapping[str, tuple[str, ...]] = field(
        default_factory=lambda: dict(DEFAULT_REGIONS))

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(
            self, "regions", {k: tuple(v) for k, v in self.regions.items()})
        if len(set(self.labels)) != len(self.labels):
            raise ParameterError("montage labels must be unique")
        known = set(self.labels)
        for name, chans in self.regions.items():
            missing = [c for c in chans if c not in known]
            if missing:
                raise ParameterError(
                    f"region {name!r} references unknown channels {missing}")

    @property
    def n_channels(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ParameterError(f"channel {label!r} not in montage") from None


@dataclass(frozen=True)
class Recording:
    """Multichannel EEG in microvolts, shape ``(n_channels, n_samples)``."""

    subject_id: str
    montage: Montage
    fs: float
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise ParameterError("recording data must be 2-D (channels x samples)")
        if data.shape[0] != self.montage.n_channels:
            raise MontageMismatchError(
                f"{data.shape[0]} data rows for {self.montage.n_channels} montage labels")
        if not self.fs > 0:
            raise ParameterError("sampling rate must be positive")
        if not np.all(np.isfinite(data)):
            raise DataIntegrityError(f"{self.subject_id}: non-finite samples")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "fs", float(self.fs))

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.fs

    def with_data(self, data: np.ndarray) -> "Recording":
        return replace(self, data=data)


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".meta")


def read_sidecar(path) -> dict[str, str]:
    meta = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            meta[key.strip()] = value.strip()
    return meta


def load_recording(path, montage: Montage | None = None) -> Recording:
    """Read an EEG CSV plus its ``.meta`` sidecar.

    The CSV holds one header row of channel labels followed by one row per
    sample (microvolts). The sidecar holds ``key=value`` lines and must
    define ``fs``; ``subject_id`` defaults to the file stem.
    """
    path = Path(path)
    montage = montage or Montage()
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in header]
    if tuple(header) != montage.labels:
        raise MontageMismatchError(
            f"{path}: header {header} does not match montage {list(montage.labels)}")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if data.shape[1] != len(header):
        raise ParseError(f"{path}: ragged rows")
    if not np.all(np.isfinite(data)):
        raise DataIntegrityError(f"{path}: non-finite sample")

    meta = read_sidecar(_sidecar_path(path))
    if "fs" not in meta:
        raise ParseError(f"{_sidecar_path(path)}: missing 'fs'")
    try:
        fs = float(meta["fs"])
    except ValueError:
        raise ParseError(f"bad fs value {meta['fs']!r}") from None
    return Recording(meta.get("subject_id", path.stem), montage, fs, data.T)


def write_recording(rec: Recording, path, fmt: str = "%.17g") -> Path:
    """Inverse of :func:`load_recording`.

    The default format keeps 17 significant digits, so values round-trip
    exactly.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(rec.montage.labels) + "\n")
        np.savetxt(fh, rec.data.T, delimiter=",", fmt=fmt)
    fs = repr(rec.fs) if rec.fs != int(rec.fs) else str(int(rec.fs))
    _sidecar_path(path).write_text(f"fs={fs}\nsubject_id={rec.subject_id}\n")
    return path


MANIFEST_REQUIRED = ("subject_id", "group", "eeg_path", "panss_fsns_t0", "panss_fsns_t1")
MANIFEST_OPTIONAL = ("panss_fsps_t0", "panss_fsps_t1")


def load_manifest(path) -> list[dict]:
    """Read a cohort manifest CSV into a list of row dicts.

    Score columns are converted to float; ``eeg_path`` is resolved relative
    to the manifest's directory.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        columns = reader.fieldnames or []
        missing = [c for c in MANIFEST_REQUIRED if c not in columns]
        if missing:
            raise SchemaError(f"{path}: manifest missing columns {missing}")
        rows = []
        for raw in reader:
            row = dict(raw)
            for col in MANIFEST_REQUIRED[3:] + MANIFEST_OPTIONAL:
                if col in row:
                    try:
                        row[col] = float(row[col])
                    except (TypeError, ValueError):
                        raise ParseError(
                            f"{path}: non-numeric {col} for {row['subject_id']}") from None
            eeg = Path(row["eeg_path"])
            row["eeg_path"] = eeg if eeg.is_absolute() else path.parent / eeg
            rows.append(row)
    return rows


def write_manifest(rows: Sequence[Mapping], path) -> Path:
    path = Path(path)
    cols = list(MANIFEST_REQUIRED) + [c for c in MANIFEST_OPTIONAL if rows and c in rows[0]]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore",
                                lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: (repr(row[c]) if isinstance(row[c], float) else row[c])
                             for c in cols})
    return path


# -- filtering ---------------------------------------------------------------

def _zero_phase(data, sos, order):
    """Forward-backward SOS filtering with even (reflect) padding of 3x order."""
    padlen = 3 * order
    if data.shape[-1] <= padlen:
        raise ParameterError(
            f"signal of {data.shape[-1]} samples too short for padding of {padlen}")
    return sps.sosfiltfilt(sos, data, axis=-1, padtype="even", padlen=padlen)


def bandpass_sos(lo: float, hi: float, fs: float, order: int = FILTER_ORDER):
    if not 0 < lo < hi < fs / 2:
        raise ParameterError(f"need 0 < lo < hi < fs/2, got lo={lo}, hi={hi}, fs={fs}")
    return sps.butter(order, [lo, hi], btype="bandpass", fs=fs, output="sos")


def bandpass_array(data, lo, hi, fs, order: int = FILTER_ORDER):
    sos = bandpass_sos(lo, hi, fs, order)
    return _zero_phase(np.asarray(data, dtype=float), sos, 2 * order)


def bandpass_filter(rec: Recording, lo: float = 0.5, hi: float = 40.0) -> Recording:
    """Zero-phase 4th-order Butterworth band-pass applied per channel."""
    return rec.with_data(bandpass_array(rec.data, lo, hi, rec.fs))


def notch_filter(rec: Recording, band: tuple[float, float] = NOTCH_BAND) -> Recording:
    """Zero-phase Butterworth band-stop over 49-51 Hz (mains interference)."""
    lo, hi = band
    if rec.fs / 2 <= hi:
        raise ParameterError(f"Nyquist {rec.fs / 2} Hz must exceed {hi} Hz for the notch")
    sos = sps.butter(FILTER_ORDER, [lo, hi], btype="bandstop", fs=rec.fs, output="sos")
    return rec.with_data(_zero_phase(rec.data, sos, 2 * FILTER_ORDER))


def average_reference(rec: Recording) -> Recording:
    if rec.montage.n_channels < 2:
        raise ParameterError("average reference needs at least two channels")
    data = rec.data - rec.data.mean(axis=0, keepdims=True)
    return rec.with_data(data)


def preprocess(rec: Recording, lo: float = 0.5, hi: float = 40.0,
               notch: bool = True) -> Recording:
    """Band-pass, notch (when the sampling rate allows it), average reference."""
    rec = bandpass_filter(rec, lo, hi)
    if notch:
        if rec.fs / 2 > NOTCH_BAND[1]:
            rec = notch_filter(rec)
        else:
            warnings.warn(f"{rec.subject_id}: notch skipped, Nyquist below 51 Hz")
    return average_reference(rec)
