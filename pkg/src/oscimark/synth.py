"""Synthetic cohorts with planted band-limited coupling and a known outcome model.

Each channel carries independent pink (1/f) noise. Every planted coupling
replaces the in-band part of both channels of its pair by a same-power
mixture of the channel's own activity and a shared band-limited source. The
per-subject gain ``g`` is the planted band coherence of the pair; band power
stays put. The
outcome is a weighted sum of the gains plus Gaussian noise, written as
negative-symptom scores whose endpoint equals the outcome.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .pipeline.endpoint import SCALE_FLOOR
from .pipeline.selection import child_seed
from .signal import Montage, Recording, bandpass_array, write_manifest, write_recording
from .spectral import BandSet

BACKGROUND_UV = 10.0


@dataclass(frozen=True)
class Coupling:
    pair: tuple[str, str]
    band: str
    strength: float = 1.0   # upper end of the per-subject gain range

    def feature(self) -> str:
        return f"coh.{self.band}.{'-'.join(sorted(self.pair))}"


def _default_couplings():
    return (Coupling(("F3", "P3"), "beta"), Coupling(("P4", "T3"), "gamma"),
            Coupling(("Fp1", "T5"), "theta"))


@dataclass(frozen=True)
class SynthConfig:
    """Generative settings for a synthetic cohort.

    Per subject and coupling, the gain is ``strength * u`` with ``u`` uniform
    on [0, 1]. The outcome is ``intercept + sum(weights * gains) + noise``;
    by default ``noise_std`` is derived from ``target_r2``, the share of
    outcome variance explained by the gains.
    """

    n_subjects: int = 50
    fs: float = 500.0
    duration_s: float = 60.0
    montage: Montage = field(default_factory=Montage)
    bands: BandSet = field(default_factory=BandSet)
    couplings: tuple[Coupling, ...] = field(default_factory=_default_couplings)
    weights: tuple[float, ...] = (0.25, 0.25, 0.25)
    intercept: float = 0.05
    noise_std: float | None = None
    target_r2: float = 0.8
    seed: int = 0
    # decimals kept in the EEG CSV files (microvolts)
    csv_decimals: int = 4

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ConfigurationError("n_subjects must be positive")
        if not self.fs > 0 or not self.duration_s > 0:
            raise ConfigurationError("fs and duration_s must be positive")
        if len(self.weights) != len(self.couplings):
            raise ConfigurationError("one outcome weight per coupling")
        if not np.all(np.isfinite(self.weights)):
            raise ConfigurationError("weights must be finite")
        if self.noise_std is not None and not self.noise_std >= 0:
            raise ConfigurationError("noise_std must be non-negative")
        if not 0 < self.target_r2 <= 1:
            raise ConfigurationError("target_r2 must lie in (0, 1]")
        for c in self.couplings:
            if not 0 <= c.strength <= 1:
                raise ConfigurationError("coupling strengths must lie in [0, 1]")
            for ch in c.pair:
                self.montage.index(ch)
            try:
                band = self.bands[c.band]
            except KeyError:
                raise ConfigurationError(f"unknown band {c.band!r}") from None
            if not 0 < band.lo < band.hi < self.fs / 2:
                raise ConfigurationError(f"band {c.band} lies outside (0, {self.fs / 2}) Hz")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.fs))

    def resolved_noise_std(self) -> float:
        """Noise std giving ``target_r2`` for uniform gains (signal variance ``sum w^2 s^2 / 12``)."""
        if self.noise_std is not None:
            return float(self.noise_std)
        signal_var = sum(w * w * c.strength ** 2 / 12.0
                         for w, c in zip(self.weights, self.couplings))
        return float(np.sqrt(signal_var * (1.0 - self.target_r2) / self.target_r2))

    def to_dict(self) -> dict:
        return {
            "n_subjects": self.n_subjects, "fs": self.fs, "duration_s": self.duration_s,
            "labels": list(self.montage.labels),
            "couplings": [{"pair": list(c.pair), "band": c.band, "strength": c.strength}
                          for c in self.couplings],
            "weights": list(self.weights), "intercept": self.intercept,
            "noise_std": self.resolved_noise_std(), "target_r2": self.target_r2,
            "seed": self.seed,
        }


def pink_noise(rng: np.random.Generator, n_channels: int, n_samples: int) -> np.ndarray:
    """Unit-variance noise with a 1/f power spectrum (DC removed)."""
    spec = rng.standard_normal((n_channels, n_samples // 2 + 1)) \
        + 1j * rng.standard_normal((n_channels, n_samples // 2 + 1))
    f = np.arange(spec.shape[1], dtype=float)
    f[0] = 1.0
    spec /= np.sqrt(f)
    spec[:, 0] = 0.0
    x = np.fft.irfft(spec, n=n_samples, axis=1)
    return x / x.std(axis=1, keepdims=True)


def _band_source(rng, n_samples, band, fs):
    s = bandpass_array(rng.standard_normal(n_samples), band.lo, band.hi, fs)
    return s / s.std()


@dataclass(frozen=True)
class SyntheticSubject:
    recording: Recording
    gains: np.ndarray       # one per coupling
    noise: float
    outcome: float
    t0: float
    t1: float


@dataclass(frozen=True)
class Cohort:
    config: SynthConfig
    subjects: tuple[SyntheticSubject, ...]

    @property
    def recordings(self) -> list[Recording]:
        return [s.recording for s in self.subjects]

    @property
    def outcomes(self) -> np.ndarray:
        return np.array([s.outcome for s in self.subjects])

    @property
    def gains(self) -> np.ndarray:
        return np.array([s.gains for s in self.subjects])

    def ground_truth(self) -> dict:
        return {
            "kind": "synthetic_ground_truth", "spec_version": 1,
            "config": self.config.to_dict(),
            "planted_features": [c.feature() for c in self.config.couplings],
            "subjects": [{"subject_id": s.recording.subject_id,
                          "gains": s.gains.tolist(), "noise": s.noise,
                          "outcome": s.outcome, "t0": s.t0, "t1": s.t1}
                         for s in self.subjects],
        }


def _subject(cfg: SynthConfig, index: int, noise_std: float) -> SyntheticSubject:
    rng = np.random.default_rng(child_seed(cfg.seed, index))
    n, labels = cfg.n_samples, cfg.montage.labels
    data = pink_noise(rng, len(labels), n)
    gains = np.array([c.strength * rng.uniform() for c in cfg.couplings])
    for c, g in zip(cfg.couplings, gains):
        band = cfg.bands[c.band]
        src = _band_source(rng, n, band, cfg.fs)
        for ch in c.pair:
            row = cfg.montage.index(ch)
            own = bandpass_array(data[row], band.lo, band.hi, cfg.fs)
            rms = np.sqrt(np.mean(own ** 2))
            # swap the in-band part for a same-power mixture; the two band
            # parts then correlate at sqrt(g), i.e. coherence g
            rho = np.sqrt(g)
            data[row] += (np.sqrt(1.0 - rho) - 1.0) * own + np.sqrt(rho) * rms * src
    data *= BACKGROUND_UV
    data = np.round(data, cfg.csv_decimals)
    noise = float(rng.standard_normal() * noise_std)
    outcome = float(cfg.intercept + np.dot(cfg.weights, gains) + noise)
    if outcome > 1.0:
        raise ConfigurationError(
            f"subject {index}: outcome {outcome:.3f} exceeds 1, beyond the score scale")
    # baseline on the 7..49 negative-symptom scale; follow-up reproduces the outcome
    t0 = float(rng.integers(20, 36))
    t1 = t0 - outcome * (t0 - SCALE_FLOOR)
    rec = Recording(f"S{index + 1:03d}", cfg.montage, cfg.fs, data)
    return SyntheticSubject(rec, gains, noise, outcome, t0, t1)


def generate_cohort(cfg: SynthConfig = SynthConfig()) -> Cohort:
    """Generate every subject from a child seed of ``cfg.seed`` and the subject index."""
    noise_std = cfg.resolved_noise_std()
    return Cohort(cfg, tuple(_subject(cfg, i, noise_std) for i in range(cfg.n_subjects)))


def write_cohort(cohort: Cohort, directory, group: str = "active") -> Path:
    """Write EEG CSVs with sidecars, ``manifest.csv`` and ``ground_truth.json``.

    Returns the manifest path. Output is byte-identical for identical cohorts.
    """
    directory = Path(directory)
    eeg_dir = directory / "eeg"
    eeg_dir.mkdir(parents=True, exist_ok=True)
    fmt = f"%.{cohort.config.csv_decimals}f"
    rows = []
    for s in cohort.subjects:
        sid = s.recording.subject_id
        write_recording(s.recording, eeg_dir / f"{sid}.csv", fmt=fmt)
        rows.append({"subject_id": sid, "group": group, "eeg_path": f"eeg/{sid}.csv",
                     "panss_fsns_t0": s.t0, "panss_fsns_t1": s.t1})
    manifest = write_manifest(rows, directory / "manifest.csv")
    (directory / "ground_truth.json").write_text(
        json.dumps(cohort.ground_truth(), indent=1))
    return manifest


def outcome_from_gains(gains: Sequence[Sequence[float]], weights, intercept, noise) -> np.ndarray:
    """Recompute outcomes from recorded gains and noise draws."""
    return np.array([float(intercept + np.dot(weights, g) + e) for g, e in zip(gains, noise)])
