"""Recover planted coherence features from a synthetic cohort.

Generates a cohort whose outcome is driven by three coupled channel pairs,
extracts the default 912-feature vector, runs nested cross-validation and
reports which features the final models used.

    python demos/planted_recovery.py --subjects 50 --duration 60 --seed 0

The default size takes a few minutes on one core.
"""
import argparse
import time

import numpy as np

from oscimark.features import FeatureSpec, dynfc_vectors, extract_features, fit_state_models
from oscimark.pipeline import nested_cv
from oscimark.signal import preprocess
from oscimark.synth import SynthConfig, generate_cohort


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--subjects", type=int, default=50)
    ap.add_argument("--duration", type=float, default=60.0, help="seconds of EEG per subject")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = SynthConfig(n_subjects=args.subjects, duration_s=args.duration, seed=args.seed)
    spec = FeatureSpec()
    t0 = time.perf_counter()
    cohort = generate_cohort(cfg)
    recs = [preprocess(r) for r in cohort.recordings]
    wpli = [dynfc_vectors(r, spec) for r in recs]
    models = fit_state_models(wpli, spec, seed=args.seed)
    X = np.array([extract_features(r, spec, models, w).values for r, w in zip(recs, wpli)])
    print(f"features {X.shape} in {time.perf_counter() - t0:.0f} s")

    t0 = time.perf_counter()
    report = nested_cv(X, cohort.outcomes, args.seed)
    print(f"nested CV in {time.perf_counter() - t0:.0f} s")
    print("fold r:", np.round(report.fold_r, 3))
    print(f"fold-averaged r {report.fold_mean_r:.3f}, pooled r {report.pooled.r:.3f}")

    planted = set(cohort.ground_truth()["planted_features"])
    for f in report.folds:
        used = [spec.names[j] for j in f.model.columns]
        hits = sorted(planted.intersection(used))
        print(f"fold {f.index}: {len(used)} features, planted found {hits}")


if __name__ == "__main__":
    main()
