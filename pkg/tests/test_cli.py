import csv
import json

import pytest
from scipy.stats import spearmanr

from oscimark.cli import main
from oscimark.pipeline import endpoint_pct

# six channels carrying the three planted pairs; 69 features
SMALL_INI = """\
[montage]
labels = F3,P3,P4,T3,Fp1,T5
region.FP = Fp1
region.F = F3
region.C =
region.P = P3,P4
region.T = T3,T5

[features]
families = power,coherence,dynfc
power_bands = theta,beta,gamma
coherence_bands = theta,beta,gamma
dynfc_bands = alpha
n_states = 2

[svr]
c_min_exp = -1
c_max_exp = 1
n_c = 2
eps_min = 0.1
eps_max = 0.5
n_eps = 2

[permutation]
n_perm = 3
spearman_n_perm = 500

[synth]
n_subjects = 30
duration_s = 30
"""


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    ini = root / "run.ini"
    ini.write_text(SMALL_INI)
    assert run("synth", "--config", ini, "--seed", 3, "--out", root / "cohort") == 0
    manifest = root / "cohort" / "manifest.csv"
    feats = root / "features.csv"
    assert run("features", "--config", ini, "--seed", 3, "--manifest", manifest,
               "--out", feats) == 0
    assert run("train", "--config", ini, "--seed", 3, "--features", feats,
               "--manifest", manifest, "--out", root / "train") == 0
    return {"root": root, "ini": ini, "manifest": manifest, "features": feats}


def load(path):
    return json.loads(path.read_text())


def test_synth_writes_cohort_and_log(ws):
    log = load(ws["root"] / "cohort" / "run_log.json")
    assert log["status"] == "ok"
    assert log["command"] == "synth"
    assert log["seed"] == 3
    assert "config_hash" in log and "wall_time_s" in log
    assert any(o.endswith("manifest.csv") for o in log["outputs"])
    # inputs map each path to its sha256
    assert all(len(h) == 64 for h in log["inputs"].values())


def test_features_table_and_log(ws):
    header = ws["features"].read_text().splitlines()[0].split(",")
    assert header[0] == "subject_id"
    assert len(header) == 1 + 69
    assert (ws["root"] / "features.states.json").exists()
    log = load(ws["root"] / "features.log.json")
    assert log["status"] == "ok"
    assert any(i.endswith("manifest.csv") for i in log["inputs"])


def test_train_outputs(ws):
    out = ws["root"] / "train"
    report = load(out / "cv_report.json")
    assert "fold_mean_r" in report
    assert len(report["folds"]) == 5
    assert report["config_hash"]
    model = load(out / "model.json")
    assert model["kind"] == "model_artifact"
    assert model["config_hash"] == report["config_hash"]
    assert model["features"]
    rows = list(csv.DictReader(open(out / "cv_report.predictions.csv")))
    assert len(rows) == 30
    assert (out / "cv_report.svg").exists()
    assert load(out / "run_log.json")["status"] == "ok"


def test_report_checks_config(ws, tmp_path):
    report = ws["root"] / "train" / "cv_report.json"
    assert run("report", "--config", ws["ini"], "--seed", 3, "--report", report,
               "--out", tmp_path / "r.txt") == 0
    assert "fold-averaged r" in (tmp_path / "r.txt").read_text()
    # a different seed changes the config hash
    assert run("report", "--config", ws["ini"], "--seed", 4, "--report", report,
               "--out", tmp_path / "r2.txt") == 2


def test_predict_applies_model(ws, tmp_path):
    out = tmp_path / "pred.csv"
    assert run("predict", "--config", ws["ini"], "--model", ws["root"] / "train" / "model.json",
               "--features", ws["features"], "--manifest", ws["manifest"], "--out", out) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 30
    assert all(float(r["observed"]) == float(r["observed"]) for r in rows)


def test_permtest_is_reproducible(ws, tmp_path):
    docs = []
    for k in range(2):
        out = tmp_path / f"perm{k}.json"
        assert run("permtest", "--config", ws["ini"], "--seed", 7, "--features", ws["features"],
                   "--manifest", ws["manifest"], "--n-perm", 3, "--out", out) == 0
        docs.append(load(out))
    assert docs[0]["p_value"] == docs[1]["p_value"]
    assert docs[0]["null"] == docs[1]["null"]
    assert docs[0]["n_perm"] == 3
    assert docs[0]["master_seed"] == 7


def test_correlate(ws, tmp_path):
    out = tmp_path / "corr.csv"
    cols = ["coh.beta.F3-P3", "pow.theta.T5"]
    assert run("correlate", "--config", ws["ini"], "--features", ws["features"],
               "--manifest", ws["manifest"], "--columns", *cols, "--out", out) == 0
    rows = list(csv.DictReader(open(out)))
    assert [r["feature"] for r in rows] == cols
    assert all(r["config_hash"] for r in rows)
    assert all(1 / 501 <= float(r["p_value"]) <= 1 for r in rows)
    feats = list(csv.DictReader(open(ws["features"])))
    man = {r["subject_id"]: r for r in csv.DictReader(open(ws["manifest"]))}
    y = [endpoint_pct(float(man[f["subject_id"]]["panss_fsns_t0"]),
                      float(man[f["subject_id"]]["panss_fsns_t1"])) for f in feats]
    for r in rows:
        x = [float(f[r["feature"]]) for f in feats]
        assert float(r["rho"]) == pytest.approx(spearmanr(x, y).statistic, abs=1e-12)


def test_correlate_with_baseline_of_itself(ws, tmp_path):
    out = tmp_path / "delta.csv"
    code = run("correlate", "--config", ws["ini"], "--features", ws["features"],
               "--baseline", ws["features"], "--manifest", ws["manifest"],
               "--columns", "coh.beta.F3-P3", "--out", out)
    # all changes are zero, so the correlation is undefined
    assert code == 3


def test_missing_outcome_column_is_schema_error(ws, tmp_path):
    text = ws["manifest"].read_text().splitlines()
    header = text[0].split(",")
    k = header.index("panss_fsns_t1")
    rows = [",".join(c for j, c in enumerate(line.split(",")) if j != k) for line in text]
    bad = ws["root"] / "cohort" / "manifest_no_t1.csv"
    bad.write_text("\n".join(rows) + "\n")
    assert run("train", "--config", ws["ini"], "--features", ws["features"],
               "--manifest", bad, "--out", tmp_path / "t") == 2


def test_missing_input_file(ws, tmp_path):
    assert run("train", "--config", ws["ini"], "--features", tmp_path / "none.csv",
               "--manifest", ws["manifest"], "--out", tmp_path / "t") == 2


def test_bad_config_is_schema_error(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[run]\nspeed = 11\n")
    assert run("synth", "--config", ini, "--out", tmp_path / "c") == 2


def test_empty_selection_exit_code(ws, tmp_path):
    ini = tmp_path / "strong.ini"
    ini.write_text(SMALL_INI + "\n[elastic_net]\nalpha = 1e6\n")
    assert run("train", "--config", ini, "--features", ws["features"],
               "--manifest", ws["manifest"], "--out", tmp_path / "t") == 4


def test_seed_precedence(tmp_path, monkeypatch):
    ini = tmp_path / "tiny.ini"
    ini.write_text("[synth]\nn_subjects = 2\nduration_s = 2\n")
    monkeypatch.setenv("OSCIMARK_SEED", "5")
    assert run("synth", "--config", ini, "--out", tmp_path / "env") == 0
    assert run("synth", "--config", ini, "--seed", 6, "--out", tmp_path / "flag") == 0
    monkeypatch.delenv("OSCIMARK_SEED")
    assert run("synth", "--config", ini, "--seed", 5, "--out", tmp_path / "plain") == 0
    env = (tmp_path / "env" / "ground_truth.json").read_text()
    assert env == (tmp_path / "plain" / "ground_truth.json").read_text()
    assert env != (tmp_path / "flag" / "ground_truth.json").read_text()
    assert load(tmp_path / "flag" / "run_log.json")["seed"] == 6


def test_features_identical_across_workers(ws, tmp_path):
    out = tmp_path / "f2.csv"
    assert run("features", "--config", ws["ini"], "--seed", 3, "--workers", 2,
               "--manifest", ws["manifest"], "--out", out) == 0
    assert out.read_bytes() == ws["features"].read_bytes()


def test_permtest_199_twice_identical_p(tmp_path):
    ini = tmp_path / "tiny.ini"
    ini.write_text(SMALL_INI.replace("n_subjects = 30", "n_subjects = 15")
                   .replace("families = power,coherence,dynfc", "families = power")
                   .replace("power_bands = theta,beta,gamma", "power_bands = beta"))
    assert run("synth", "--config", ini, "--seed", 1, "--out", tmp_path / "c") == 0
    manifest = tmp_path / "c" / "manifest.csv"
    assert run("features", "--config", ini, "--manifest", manifest,
               "--out", tmp_path / "f.csv") == 0
    ps = []
    for k in range(2):
        out = tmp_path / f"p{k}.json"
        assert run("permtest", "--config", ini, "--n-perm", 199, "--seed", 7,
                   "--features", tmp_path / "f.csv", "--manifest", manifest, "--out", out) == 0
        ps.append(load(out)["p_value"])
    assert ps[0] == ps[1]


def test_version(capsys):
    with pytest.raises(SystemExit):
        main(["--version"])
    assert capsys.readouterr().out.strip()
