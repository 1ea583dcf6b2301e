"""Acceptance suite: one PASS/FAIL line per criterion.

Run ``pytest tests/test_acceptance.py -s`` (the lines are printed either way).
Criterion 4 is bounded by ``OSCIMARK_ACCEPT_BUDGET_S`` seconds (default 900);
when the budget runs out before a verdict the line reads FAIL with the work
done and the projected cost, and the test is reported as xfail.
"""
import os
import time

import numpy as np
import pytest
from scipy import signal as sps

from oscimark.cli import main
from oscimark.dynfc import assign_states, cluster_states, state_metrics, wpli_matrix
from oscimark.errors import DegenerateBaselineError
from oscimark.features import FeatureSpec, feature_name, parse_feature_name
from oscimark.optim import ElasticNetConfig, elastic_net_fit, svr_fit, svr_primal
from oscimark.pipeline import (PipelineConfig, child_seed, classify_responder, endpoint_pct,
                               fit_model, fold_indices, spearman_perm)
from oscimark.pipeline.cv import _perm_task, cv_statistic
from oscimark.spectral import msc_coherence, welch_psd
from oscimark.synth import SynthConfig

from cohort import cohort_features
from helpers import make_rec
from oracles import svr_dual_grid
from test_cli import SMALL_INI
from test_dynfc import planted_clusters
from test_pipeline import fold_fingerprint

FS = 500.0
BUDGET_S = float(os.environ.get("OSCIMARK_ACCEPT_BUDGET_S", 900))


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number} {'PASS' if ok else 'FAIL'} {title}: {detail}")
    return emit


def perm_stat(X, y, i, master, cfg):
    # permutation i exactly as permutation_test draws it; undefined runs score -1
    r = _perm_task((X, y, i, master, master, cfg))
    return -1.0 if np.isnan(r) else r


# -- 1 ----------------------------------------------------------------------------

def test_c1_solver_oracles(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    X = rng.standard_normal((20, 5))
    y = rng.standard_normal(20)
    ols = np.linalg.solve(X.T @ X, X.T @ y)
    ols_err = np.abs(elastic_net_fit(X, y, ElasticNetConfig(alpha=0.0)).coef - ols).max()

    q, _ = np.linalg.qr(rng.standard_normal((30, 6)))
    yq = q @ np.array([3.0, -2.0, 0.05, 0.0, 1.0, -0.02]) + 0.01 * rng.standard_normal(30)
    soft_err = 0.0
    for alpha in (0.01, 0.3, 2.5):
        z = q.T @ yq
        expected = np.sign(z) * np.maximum(np.abs(z) - alpha / 2, 0)
        beta = elastic_net_fit(q, yq, ElasticNetConfig(alpha=alpha, lam=1.0)).coef
        soft_err = max(soft_err, np.abs(beta - expected).max())

    worst = 0.0
    for seed in range(50):
        r = np.random.default_rng(1000 + seed)
        Xs = r.standard_normal((4, int(r.integers(1, 4))))
        ys = r.standard_normal(4)
        C, eps = 10 ** r.uniform(-2, 3), r.uniform(0.01, 1.0)
        m = svr_fit(Xs, ys, C, eps)
        primal = svr_primal(Xs, ys, m.w, m.b, C, eps)
        dual, _ = svr_dual_grid(Xs, ys, C, eps)
        worst = max(worst, abs(primal - dual) / max(abs(primal), 1e-8))
    elapsed = time.perf_counter() - t0
    ok = ols_err <= 1e-6 and soft_err <= 1e-9 and worst <= 1e-4 and elapsed < 60
    verdict(1, "solver oracles", ok,
            f"OLS {ols_err:.1e}, soft-threshold {soft_err:.1e}, "
            f"SVR worst rel gap {worst:.1e} over 50, {elapsed:.1f} s")
    assert ok


# -- 2 ----------------------------------------------------------------------------

def test_c2_signal_oracles(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    df = welch_psd(make_rec(rng.standard_normal(5000))).df

    totals = np.array([welch_psd(make_rec(rng.standard_normal(int(60 * FS)))).power[0].sum() * df
                       for _ in range(100)])
    psd_ok = bool(np.all(np.abs(totals - 1) <= 0.1))

    x = rng.standard_normal(20000)
    ident = msc_coherence(make_rec([x, x], labels=("a", "b")), ("a", "b")).coherence
    ident_err = np.abs(ident - 1).max()
    pair = rng.standard_normal((2, 20000))
    base = msc_coherence(make_rec(pair, labels=("a", "b")), ("a", "b")).coherence
    scaled = msc_coherence(make_rec(pair * [[1e3], [1e-2]], labels=("a", "b")),
                           ("a", "b")).coherence
    scale_err = np.abs(base - scaled).max()

    # K disjoint segments of independent noise: E[C] = 1/K
    K, draws = 20, 200
    means = np.array([msc_coherence(make_rec(rng.standard_normal((2, K * 1000)),
                                             labels=("a", "b")), ("a", "b"),
                                    overlap=0.0).coherence[1:-1].mean() for _ in range(draws)])
    se = means.std(ddof=1) / np.sqrt(draws)
    bias_ok = abs(means.mean() - 1 / K) < 3 * se

    t = np.arange(2000) / FS
    quad = wpli_matrix(sps.hilbert(np.vstack([np.cos(2 * np.pi * 10 * t),
                                              np.sin(2 * np.pi * 10 * t)]))).matrix[0, 1]
    same = wpli_matrix(sps.hilbert(np.vstack([np.cos(2 * np.pi * 10 * t)] * 2))).matrix[0, 1]
    elapsed = time.perf_counter() - t0
    ok = (df == 0.5 and psd_ok and ident_err <= 1e-12 and scale_err <= 1e-9 and bias_ok
          and abs(quad - 1) <= 1e-12 and same == 0.0 and elapsed < 120)
    verdict(2, "signal oracles", ok,
            f"df {df}, PSD/var in [{totals.min():.3f}, {totals.max():.3f}], "
            f"identity err {ident_err:.1e}, scale err {scale_err:.1e}, "
            f"noise bias {means.mean():.4f} vs 1/K {1 / K:.4f} (SE {se:.1e}), "
            f"wPLI {quad:.12f}/{same}, {elapsed:.1f} s")
    assert ok


# -- 3 ----------------------------------------------------------------------------

def test_c3_feature_registry(verdict):
    spec = FeatureSpec()
    counts = spec.counts()
    names = list(spec.names)
    bijective = (len(set(names)) == len(names)
                 and all(parse_feature_name(feature_name(d)) == d for d in spec.descriptors)
                 and [feature_name(parse_feature_name(n)) for n in names] == names)
    ok = (len(spec) == 912 and bijective
          and counts == {"power": 96, "region_power": 36, "coherence": 720, "dynfc": 60})
    verdict(3, "feature registry", ok, f"{len(spec)} features {counts}, bijective {bijective}")
    assert ok


# -- 4 ----------------------------------------------------------------------------

def test_c4_planted_recovery(verdict):
    start = time.perf_counter()
    cfg = PipelineConfig()
    success, failed, cv_times, log = 0, 0, [], []
    exhausted = False
    for s in range(20):
        if time.perf_counter() - start > BUDGET_S:
            exhausted = True
            break
        X, y, _, _ = cohort_features(SynthConfig(seed=s))
        t = time.perf_counter()
        observed = cv_statistic(X, y, s, cfg)
        cv_times.append(time.perf_counter() - t)
        observed = -1.0 if np.isnan(observed) else observed
        if observed < 0.7:
            failed += 1
            log.append(f"seed {s}: r {observed:.3f}")
        else:
            # p < 0.01 at 199 permutations needs every null value below the observed r
            beaten, done = False, 0
            for i in range(199):
                if time.perf_counter() - start > BUDGET_S:
                    exhausted = True
                    break
                t = time.perf_counter()
                beaten = perm_stat(X, y, i, s, cfg) >= observed
                cv_times.append(time.perf_counter() - t)
                done += 1
                if beaten:
                    break
            log.append(f"seed {s}: r {observed:.3f}, {done} permutations"
                       + (", beaten" if beaten else ""))
            if beaten:
                failed += 1
            elif done == 199:
                success += 1
        if failed > 2 or exhausted:
            break
    per_cv = float(np.mean(cv_times)) if cv_times else float("nan")
    detail = (f"{success} succeeded, {failed} failed of 20 ({'; '.join(log)}); "
              f"{time.perf_counter() - start:.0f} s used")
    if failed > 2 or success >= 18:
        verdict(4, "planted-signal recovery", success >= 18, detail)
        assert success >= 18
        return
    projected = 20 * 200 * per_cv / 3600
    verdict(4, "planted-signal recovery", False,
            f"budget of {BUDGET_S:.0f} s exhausted before a verdict; {detail}; "
            f"full run projected at {projected:.0f} CPU-hours ({per_cv:.0f} s per nested CV)")
    pytest.xfail("planted-recovery criterion exceeds the compute budget")


# -- 5 ----------------------------------------------------------------------------

def test_c5_null_calibration(verdict):
    t0 = time.perf_counter()
    cfg = PipelineConfig()
    above = 0
    runs = []
    for s in range(20):
        rng = np.random.default_rng(child_seed(500, s))
        X = rng.standard_normal((15, 4))
        y = rng.standard_normal(15)
        observed = cv_statistic(X, y, s, cfg)
        observed = -1.0 if np.isnan(observed) else observed
        # five null values at or above the observed r already force p >= 6/100
        count, done = 0, 0
        for i in range(99):
            count += perm_stat(X, y, i, s, cfg) >= observed
            done += 1
            if count >= 5:
                break
        above += count >= 5
        runs.append(done)
    spear = 0
    for s in range(50):
        rng = np.random.default_rng(child_seed(501, s))
        _, p = spearman_perm(rng.standard_normal(30), rng.standard_normal(30), seed=s)
        spear += p > 0.05
    ok = above >= 18 and spear >= 45
    verdict(5, "null calibration", ok,
            f"permutation p > 0.05 in {above}/20 (permutations run {sum(runs)}), "
            f"spearman p > 0.05 in {spear}/50, {time.perf_counter() - t0:.0f} s")
    assert ok


# -- 6 ----------------------------------------------------------------------------

def test_c6_leakage(verdict):
    rng = np.random.default_rng(6)
    n, p, seed = 25, 12, 11
    X = rng.standard_normal((n, p))
    y = X[:, 2] - X[:, 7] + 0.3 * rng.standard_normal(n)
    X[rng.random(X.shape) < 0.05] = np.nan
    cfg = PipelineConfig()
    same = []
    for k, test in enumerate(fold_indices(n, 5, seed)):
        train = np.setdiff1d(np.arange(n), test)
        base = fit_model(X, y, child_seed(seed, k), cfg, train)
        X2, y2 = X.copy(), y.copy()
        X2[test] = rng.standard_normal((test.size, p)) * 1e6
        X2[test[0], 0] = np.nan
        y2[test] = -y2[test] * 100
        moved = fit_model(X2, y2, child_seed(seed, k), cfg, train)
        same.append(fold_fingerprint(base) == fold_fingerprint(moved))
    ok = all(same)
    verdict(6, "leakage", ok, f"prep, selection and weights unchanged in {sum(same)}/5 folds")
    assert ok


# -- 7 ----------------------------------------------------------------------------

def test_c7_determinism(verdict, tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text(SMALL_INI.replace("n_subjects = 30", "n_subjects = 20"))

    def run(*argv):
        return main([str(a) for a in argv])

    assert run("synth", "--config", ini, "--seed", 5, "--out", tmp_path / "c") == 0
    manifest = tmp_path / "c" / "manifest.csv"
    assert run("features", "--config", ini, "--seed", 5, "--manifest", manifest,
               "--out", tmp_path / "f.csv") == 0
    for w in (1, 8):
        assert run("train", "--config", ini, "--seed", 5, "--workers", w, "--features",
                   tmp_path / "f.csv", "--manifest", manifest, "--out", tmp_path / f"w{w}") == 0
    same = {name: (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w8" / name).read_bytes()
            for name in ("cv_report.json", "model.json")}
    ok = all(same.values())
    verdict(7, "determinism", ok, f"byte-identical at workers 1 and 8: {same}")
    assert ok


# -- 8 ----------------------------------------------------------------------------

def test_c8_endpoint(verdict):
    try:
        endpoint_pct(7, 7)
        degenerate = False
    except DegenerateBaselineError:
        degenerate = True
    pct = endpoint_pct(31, 25)
    ok = pct == 0.25 and classify_responder(0.25) and not classify_responder(0.20) and degenerate
    verdict(8, "endpoint math", ok,
            f"endpoint_pct(31, 25) = {pct}, 0.20 responder {classify_responder(0.20)}, "
            f"t0 = 7 raises {degenerate}")
    assert ok


# -- 9 ----------------------------------------------------------------------------

def test_c9_dynfc(verdict):
    from sklearn.metrics import adjusted_rand_score
    cases = [
        (([0, 0, 1, 1, 1, 2], 4), ([1 / 3, 1 / 2, 1 / 6, 0], [2, 3, 1, 0], [1, 1, 0, 0])),
        (([3] * 10, 4), ([0, 0, 0, 1], [0, 0, 0, 10], [0, 0, 0, 0])),
        (([0, 1] * 5, 2), ([0.5, 0.5], [1, 1], [5, 4])),
    ]
    exact = 0
    for (labels, k), (occ, dwell, trans) in cases:
        o, d, t = state_metrics(labels, k)
        exact += (np.allclose(o, occ, rtol=0, atol=1e-15) and np.array_equal(d, dwell)
                  and np.array_equal(t, trans))
    rng = np.random.default_rng(9)
    aris = []
    for seed in range(5):
        X, truth = planted_clusters(rng)
        labels = assign_states(X, cluster_states(X, k=4, seed=seed)).labels
        aris.append(adjusted_rand_score(truth, labels))
    ok = exact == 3 and all(a == 1.0 for a in aris)
    verdict(9, "dynamic FC", ok, f"{exact}/3 sequences exact, ARI {aris}")
    assert ok

