"""Welch spectra, band/region power and magnitude-squared coherence."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterator, NamedTuple, Sequence

import numpy as np
from scipy import signal as sps

from .errors import ConfigurationError, InsufficientDataError, ParameterError
from .signal import Montage, Recording


class Band(NamedTuple):
    name: str
    lo: float
    hi: float


DEFAULT_BANDS = (
    Band("delta", 0.5, 4.0),
    Band("theta", 4.0, 8.0),
    Band("alpha", 8.0, 13.0),
    Band("beta", 13.0, 30.0),
    Band("gamma", 30.0, 40.0),
    Band("broadband", 0.5, 40.0),
)


class BandSet:
    """Ordered, uniquely named frequency bands with half-open ``[lo, hi)`` edges."""

    def __init__(self, bands: Sequence[Band | tuple] = DEFAULT_BANDS):
        self.bands = tuple(Band(*b) for b in bands)
        names = [b.name for b in self.bands]
        if len(set(names)) != len(names):
            raise ParameterError("band names must be unique")
        for b in self.bands:
            if not b.lo < b.hi:
                raise ParameterError(f"band {b.name}: lo must be below hi")

    def __iter__(self) -> Iterator[Band]:
        return iter(self.bands)

    def __len__(self):
        return len(self.bands)

    def __getitem__(self, name: str) -> Band:
        for b in self.bands:
            if b.name == name:
                return b
        raise KeyError(name)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(b.name for b in self.bands)

    def subset(self, names: Sequence[str]) -> "BandSet":
        return BandSet([self[n] for n in names])

    def __eq__(self, other):
        return isinstance(other, BandSet) and self.bands == other.bands

    def __repr__(self):
        return f"BandSet({list(self.bands)!r})"


@dataclass(frozen=True)
class PsdEstimate:
    freqs: np.ndarray
    power: np.ndarray       # (n_channels, n_freqs), uV^2/Hz
    df: float
    n_segments: int


@dataclass(frozen=True)
class CoherenceSpectrum:
    pair: tuple[str, str]
    freqs: np.ndarray
    coherence: np.ndarray
    sxy: np.ndarray
    sxx: np.ndarray
    syy: np.ndarray
    zero_power: np.ndarray  # bins where an auto-spectrum vanished; coherence set to 0


def _segments(n_samples: int, nperseg: int, overlap: float) -> np.ndarray:
    if not 0 <= overlap < 1:
        raise ParameterError("overlap must lie in [0, 1)")
    if nperseg < 2:
        raise ParameterError("nperseg must be at least 2")
    if n_samples < nperseg:
        raise InsufficientDataError(
            f"{n_samples} samples is shorter than one {nperseg}-sample segment")
    step = nperseg - int(overlap * nperseg)
    return np.arange(0, n_samples - nperseg + 1, step)


def segment_spectra(data: np.ndarray, fs: float, nperseg: int = 1000,
                    overlap: float = 0.5):
    """Hamming-tapered, mean-detrended segment FFTs.

    Returns ``(freqs, X, scale)`` with ``X`` of shape
    ``(n_channels, n_segments, n_freqs)``. One-sided densities follow as
    ``scale * mean(X_a * conj(X_b))`` over segments.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    starts = _segments(data.shape[-1], nperseg, overlap)
    idx = starts[:, None] + np.arange(nperseg)
    segs = data[:, idx]
    segs = segs - segs.mean(axis=-1, keepdims=True)
    win = sps.get_window("hamming", nperseg, fftbins=False)
    X = np.fft.rfft(segs * win, axis=-1)
    freqs = np.fft.rfftfreq(nperseg, 1.0 / fs)
    scale = np.full(freqs.size, 2.0 / (fs * np.sum(win ** 2)))
    scale[0] /= 2
    if nperseg % 2 == 0:
        scale[-1] /= 2
    return freqs, X, scale


def welch_psd(rec: Recording, nperseg: int = 1000, overlap: float = 0.5) -> PsdEstimate:
    """Welch power spectral density of every channel.

    Parameters
    ----------
    rec : Recording
    nperseg : int
        Segment length in samples. At 500 Hz the default gives 0.5 Hz bins.
    overlap : float
        Fractional overlap between consecutive segments.
    """
    freqs, X, scale = segment_spectra(rec.data, rec.fs, nperseg, overlap)
    power = scale * np.mean(X.real ** 2 + X.imag ** 2, axis=1)
    return PsdEstimate(freqs, power, rec.fs / nperseg, X.shape[1])


def band_mask(freqs: np.ndarray, band: Band) -> np.ndarray:
    mask = (freqs >= band.lo) & (freqs < band.hi)
    if not mask.any():
        raise ParameterError(f"band {band.name} [{band.lo}, {band.hi}) holds no frequency bins")
    return mask


def band_power(psd: PsdEstimate, band: Band) -> np.ndarray:
    """Per-channel mean spectral density over the band's bins."""
    return psd.power[:, band_mask(psd.freqs, band)].mean(axis=1)


def region_power(band_powers, montage: Montage) -> dict[str, float]:
    """Mean over each region's channels, plus a ``global`` mean over all channels."""
    band_powers = np.asarray(band_powers, dtype=float)
    if band_powers.shape != (montage.n_channels,):
        raise ConfigurationError("one band power per montage channel expected")
    out = {}
    for name, chans in montage.regions.items():
        try:
            idx = [montage.labels.index(c) for c in chans]
        except ValueError:
            raise ConfigurationError(f"region {name} references a missing channel") from None
        out[name] = float(band_powers[idx].mean())
    out["global"] = float(band_powers.mean())
    return out


def _coherence_from_spectra(sxy, sxx, syy):
    denom = sxx * syy
    zero = denom <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        coh = (sxy.real ** 2 + sxy.imag ** 2) / denom
    coh = np.where(zero, 0.0, coh)
    return np.clip(coh, 0.0, 1.0), zero


def msc_coherence(rec: Recording, pair: tuple[str, str], nperseg: int = 1000,
                  overlap: float = 0.5) -> CoherenceSpectrum:
    """Magnitude-squared coherence ``|Sxy|^2 / (Sxx Syy)`` from segment-averaged spectra."""
    i, j = rec.montage.index(pair[0]), rec.montage.index(pair[1])
    # compute in montage order so that C(x, y) and C(y, x) agree bit for bit
    swap = i > j
    freqs, X, scale = segment_spectra(rec.data[sorted((i, j))], rec.fs, nperseg, overlap)
    if X.shape[1] < 2:
        raise InsufficientDataError("coherence needs at least two Welch segments")
    sxx = scale * np.mean(X[0].real ** 2 + X[0].imag ** 2, axis=0)
    syy = scale * np.mean(X[1].real ** 2 + X[1].imag ** 2, axis=0)
    sxy = scale * np.mean(X[0] * np.conj(X[1]), axis=0)
    coh, zero = _coherence_from_spectra(sxy, sxx, syy)
    if swap:
        sxx, syy, sxy = syy, sxx, np.conj(sxy)
    return CoherenceSpectrum(tuple(pair), freqs, coh, sxy, sxx, syy, zero)


def all_pairs_coherence(rec: Recording, nperseg: int = 1000, overlap: float = 0.5):
    """Coherence spectra for every channel pair ``i < j`` in montage order.

    Returns ``(pairs, freqs, coh, sxy, sxx)`` where ``coh`` and ``sxy`` are
    ``(n_pairs, n_freqs)`` and ``sxx`` is ``(n_channels, n_freqs)``.
    """
    freqs, X, scale = segment_spectra(rec.data, rec.fs, nperseg, overlap)
    if X.shape[1] < 2:
        raise InsufficientDataError("coherence needs at least two Welch segments")
    pairs = list(combinations(range(rec.montage.n_channels), 2))
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    sxx = scale * np.mean(X.real ** 2 + X.imag ** 2, axis=1)
    sxy = scale * np.mean(X[a] * np.conj(X[b]), axis=1)
    coh, _ = _coherence_from_spectra(sxy, sxx[a], sxx[b])
    return pairs, freqs, coh, sxy, sxx


def band_coherence(coh: CoherenceSpectrum, band: Band, estimator: str = "mean") -> float:
    """Band-level coherence.

    ``estimator="mean"`` averages the per-bin coherence over the band.
    ``estimator="pooled"`` instead pools the spectra first,
    ``|sum Sxy|^2 / (sum Sxx * sum Syy)``.
    """
    mask = band_mask(coh.freqs, band)
    if estimator == "mean":
        return float(coh.coherence[mask].mean())
    if estimator == "pooled":
        return pooled_band_coherence(coh.sxy[mask], coh.sxx[mask], coh.syy[mask])
    raise ParameterError(f"unknown coherence estimator {estimator!r}")


def pooled_band_coherence(sxy, sxx, syy) -> float:
    s = np.sum(sxy, axis=-1)
    denom = np.sum(sxx, axis=-1) * np.sum(syy, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (s.real ** 2 + s.imag ** 2) / denom
    c = np.where(denom > 0, np.clip(c, 0.0, 1.0), 0.0)
    return float(c) if np.ndim(c) == 0 else c
