import hashlib
import json
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import spearmanr

from oscimark.errors import ConfigurationError
from oscimark.pipeline import endpoint_pct
from oscimark.signal import Montage, load_manifest, load_recording
from oscimark.spectral import BandSet, band_coherence, msc_coherence
from oscimark.synth import (Coupling, SynthConfig, generate_cohort, outcome_from_gains,
                            pink_noise, write_cohort)

from cohort import cohort_features


def beta_coupling(strength):
    return SynthConfig(n_subjects=4, duration_s=20.0,
                       couplings=(Coupling(("F3", "P3"), "beta", strength),),
                       weights=(0.25,), noise_std=0.0)


def mean_beta_coherence(cfg):
    band = cfg.bands["beta"]
    return np.mean([band_coherence(msc_coherence(r, ("F3", "P3")), band)
                    for r in generate_cohort(cfg).recordings])


def test_coupling_raises_planted_coherence():
    wins = 0
    for seed in range(20):
        on = mean_beta_coherence(replace(beta_coupling(1.0), seed=seed))
        off = mean_beta_coherence(replace(beta_coupling(0.0), seed=seed))
        wins += on > off
    assert wins >= 19


def test_coherence_rises_with_strength():
    levels = [0.0, 0.25, 0.5, 0.75, 1.0]
    coh = [mean_beta_coherence(replace(beta_coupling(s), seed=3))
           for s in levels]
    assert spearmanr(levels, coh).statistic > 0


def test_gain_sets_in_band_coherence():
    cfg = SynthConfig(n_subjects=6, duration_s=60.0,
                      couplings=(Coupling(("F3", "P3"), "beta", 1.0),),
                      weights=(0.25,), noise_std=0.0, seed=5)
    cohort = generate_cohort(cfg)
    band = cfg.bands["beta"]
    coh = [band_coherence(msc_coherence(r, ("F3", "P3")), band) for r in cohort.recordings]
    # estimated coherence tracks the planted gain closely
    assert np.corrcoef(coh, cohort.gains[:, 0])[0, 1] > 0.95


def test_zero_noise_outcome_is_reconstructable():
    cfg = SynthConfig(n_subjects=5, duration_s=10.0,
                      couplings=(Coupling(("F3", "P3"), "beta", 0.8),),
                      weights=(1.0,), intercept=0.0, noise_std=0.0)
    cohort = generate_cohort(cfg)
    truth = cohort.ground_truth()
    gains = [s["gains"] for s in truth["subjects"]]
    noise = [s["noise"] for s in truth["subjects"]]
    assert noise == [0.0] * 5
    np.testing.assert_array_equal(outcome_from_gains(gains, [1.0], 0.0, noise), cohort.outcomes)
    np.testing.assert_array_equal(cohort.outcomes, cohort.gains[:, 0])
    for s in cohort.subjects:
        assert endpoint_pct(s.t0, s.t1) == pytest.approx(s.outcome, abs=1e-12)


def test_default_noise_hits_target_r2():
    cfg = SynthConfig()
    # three uniform gains of weight 0.25: signal variance 3 * 0.0625 / 12
    assert cfg.resolved_noise_std() == pytest.approx(np.sqrt(0.015625 * 0.2 / 0.8))


def test_files_are_byte_identical(tmp_path):
    cfg = SynthConfig(n_subjects=3, duration_s=5.0, seed=11)

    def digest(directory):
        return {p.relative_to(directory).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
                for p in sorted(directory.rglob("*")) if p.is_file()}

    write_cohort(generate_cohort(cfg), tmp_path / "a")
    write_cohort(generate_cohort(cfg), tmp_path / "b")
    a, b = digest(tmp_path / "a"), digest(tmp_path / "b")
    assert a == b
    assert "manifest.csv" in a and "ground_truth.json" in a
    other = tmp_path / "c"
    write_cohort(generate_cohort(SynthConfig(n_subjects=3, duration_s=5.0, seed=12)), other)
    assert digest(other) != a


def test_written_cohort_loads_back(tmp_path):
    cohort = generate_cohort(SynthConfig(n_subjects=2, duration_s=5.0, seed=1))
    manifest = write_cohort(cohort, tmp_path)
    rows = load_manifest(manifest)
    assert [r["subject_id"] for r in rows] == ["S001", "S002"]
    for row, s in zip(rows, cohort.subjects):
        rec = load_recording(row["eeg_path"], Montage())
        np.testing.assert_allclose(rec.data, s.recording.data, atol=5e-5)
        assert float(row["panss_fsns_t0"]) == s.t0
    truth = json.loads((tmp_path / "ground_truth.json").read_text())
    assert truth["planted_features"] == ["coh.beta.F3-P3", "coh.gamma.P4-T3",
                                         "coh.theta.Fp1-T5"]


def test_default_features_have_no_nan():
    X, _, names, _ = cohort_features(SynthConfig(n_subjects=4, duration_s=20.0, seed=2))
    assert X.shape == (4, 912)
    assert not np.isnan(X).any()
    assert len(names) == 912


def test_pink_noise_spectrum(rng):
    x = pink_noise(rng, 2, 2**14)
    np.testing.assert_allclose(x.std(axis=1), 1.0)
    power = np.abs(np.fft.rfft(x, axis=1)) ** 2
    lo = power[:, 10:20].mean()
    hi = power[:, 100:200].mean()
    # 1/f: a tenfold higher frequency carries about a tenth of the power
    assert 5 < lo / hi < 20


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SynthConfig(fs=60.0)        # gamma 30-40 Hz is above Nyquist
    with pytest.raises(ConfigurationError):
        SynthConfig(couplings=(Coupling(("F3", "P3"), "beta", 1.5),), weights=(1.0,))
    with pytest.raises(ConfigurationError):
        SynthConfig(weights=(1.0,))
    with pytest.raises(ConfigurationError):
        SynthConfig(noise_std=-1.0)
    with pytest.raises(ConfigurationError):
        SynthConfig(couplings=(Coupling(("F3", "P3"), "kappa", 1.0),), weights=(1.0,))
    with pytest.raises(ConfigurationError):
        SynthConfig(weights=(np.inf, 0.25, 0.25))
    with pytest.raises(Exception):
        SynthConfig(couplings=(Coupling(("F3", "XX"), "beta", 1.0),), weights=(1.0,))
    bands = BandSet([("delta", 0.0, 4.0)])
    with pytest.raises(ConfigurationError):
        SynthConfig(bands=bands, couplings=(Coupling(("F3", "P3"), "delta", 1.0),),
                    weights=(1.0,))


def test_outcome_above_scale_is_rejected():
    cfg = SynthConfig(n_subjects=3, duration_s=2.0, intercept=2.0, noise_std=0.0)
    with pytest.raises(ConfigurationError):
        generate_cohort(cfg)
