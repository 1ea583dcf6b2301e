"""Command line front end: ``oscimark <command> [options]``.

Exit codes: 0 success, 2 schema, configuration or missing-input problem,
3 computation error, 4 stability selection retained nothing.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .dynfc import load_state_models, save_state_models
from .errors import (ConfigurationError, EmptySelectionError, MontageMismatchError,
                     OscimarkError, ParseError, SchemaError)
from .features import (FeatureSpec, FeatureTable, dynfc_vectors, extract_features,
                       fit_state_models, read_table, write_table)
from .pipeline import (ModelArtifact, endpoint_pct, fit_model, nested_cv, permutation_test,
                       read_cv_report, spearman_perm, write_cv_report, write_predictions)
from .pipeline.artifacts import dumps
from .signal import load_manifest, load_recording, preprocess
from .synth import generate_cohort, write_cohort

EXIT_OK, EXIT_SCHEMA, EXIT_COMPUTE, EXIT_EMPTY = 0, 2, 3, 4
SCHEMA_ERRORS = (SchemaError, ParseError, ConfigurationError, MontageMismatchError)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects what a command did, for the machine-readable run log."""

    def __init__(self, command: str, cfg: RunConfig, seed: int, workers: int, argv):
        self.command, self.cfg, self.seed, self.workers = command, cfg, seed, workers
        self.argv = list(argv)
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.start = time.perf_counter()

    def input(self, path):
        path = Path(path)
        if path.is_file():
            self.inputs[str(path)] = _sha256(path)

    def output(self, path):
        self.outputs.append(str(path))

    def write_log(self, path, status: str, error: str | None = None):
        doc = {
            "kind": "run_log", "command": self.command, "argv": self.argv,
            "version": __version__, "status": status, "error": error,
            "seed": self.seed, "workers": self.workers,
            "config": self.cfg.to_dict(), "config_hash": self.cfg.hash(),
            "wall_time_s": round(time.perf_counter() - self.start, 3),
            "inputs": self.inputs, "outputs": self.outputs,
        }
        Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


# -- shared helpers ------------------------------------------------------------

def _outcomes(manifest_path, subject_ids, group: str = ""):
    """Endpoint per subject of the feature table, in table order."""
    rows = load_manifest(manifest_path)
    if group:
        rows = [r for r in rows if r["group"] == group]
    by_id = {r["subject_id"]: r for r in rows}
    missing = [s for s in subject_ids if s not in by_id]
    if missing:
        raise SchemaError(f"subjects {missing[:5]} absent from the manifest"
                          + (f" (group {group!r})" if group else ""))
    return np.array([endpoint_pct(by_id[s]["panss_fsns_t0"], by_id[s]["panss_fsns_t1"])
                     for s in subject_ids])


def _table_and_outcomes(args, cfg):
    table = read_table(args.features)
    group = cfg["cv"]["group"]
    if group:
        keep = {r["subject_id"] for r in load_manifest(args.manifest) if r["group"] == group}
        table = table.select_rows([s for s in table.subject_ids if s in keep])
    y = _outcomes(args.manifest, table.subject_ids, group)
    return table, y


def _spec_hash(table: FeatureTable) -> str:
    return table.spec.hash() if table.spec is not None else ""


def _extract_one(task):
    path, spec, pre, models, montage = task
    rec = load_recording(path, montage)
    if pre["enabled"]:
        rec = preprocess(rec, pre["lo"], pre["hi"], pre["notch"])
    wpli = dynfc_vectors(rec, spec)
    return rec, wpli


def _pmap(fn, items, workers):
    if workers <= 1:
        return [fn(t) for t in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- commands ---------------------------------------------------------------

def cmd_synth(args, cfg, run):
    out = Path(args.out)
    cohort = generate_cohort(cfg.synth(run.seed))
    manifest = write_cohort(cohort, out, group=args.group)
    run.output(manifest)
    run.output(out / "ground_truth.json")
    print(f"wrote {len(cohort.subjects)} subjects to {out}")
    return out / "run_log.json"


def cmd_features(args, cfg, run):
    spec = cfg.feature_spec()
    rows = load_manifest(args.manifest)
    run.input(args.manifest)
    tasks = [(r["eeg_path"], spec, cfg["preprocess"], None, spec.montage) for r in rows]
    loaded = _pmap(_extract_one, tasks, run.workers)
    out = Path(args.out)
    models = None
    if "dynfc" in spec.families:
        if args.states:
            models = load_state_models(args.states)
            run.input(args.states)
        else:
            models = fit_state_models([w for _, w in loaded], spec, seed=run.seed)
            states = save_state_models(models, out.with_name(out.stem + ".states.json"))
            run.output(states)
    vectors = [extract_features(rec, spec, models, wpli) for rec, wpli in loaded]
    table = FeatureTable.from_vectors(vectors, spec)
    write_table(table, out)
    run.output(out)
    print(f"wrote {len(table.subject_ids)} x {len(table.names)} feature table to {out}")
    return out.with_name(out.stem + ".log.json")


def cmd_train(args, cfg, run):
    table, y = _table_and_outcomes(args, cfg)
    run.input(args.features)
    run.input(args.manifest)
    pcfg = cfg.pipeline()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = nested_cv(table.values, y, run.seed, pcfg, workers=run.workers)
    path = write_cv_report(report, out / "cv_report.json", table.names, table.subject_ids,
                           cfg.hash(), _spec_hash(table))
    run.output(path)
    model = fit_model(table.values, y, run.seed, pcfg)
    art = ModelArtifact.from_fitted(model, table.names, run.seed, _spec_hash(table), cfg.hash())
    run.output(art.save(out / "model.json"))
    print(f"fold-averaged r = {report.fold_mean_r:.4f}  pooled r = {report.pooled.r:.4f}")
    print(f"final model features: {', '.join(art.features)}")
    return out / "run_log.json"


def cmd_predict(args, cfg, run):
    art = ModelArtifact.load(args.model)
    table = read_table(args.features)
    run.input(args.model)
    run.input(args.features)
    if art.feature_spec_hash and table.spec is not None and table.spec.hash() != art.feature_spec_hash:
        raise SchemaError("feature table was built with a different feature spec than the model")
    X = table.values[:, table.columns(art.features)]
    pred = art.predict(X)
    out = Path(args.out)
    if args.manifest:
        obs = _outcomes(args.manifest, table.subject_ids)
    else:
        obs = np.full(pred.shape, np.nan)
    write_predictions(out, table.subject_ids, obs, pred)
    run.output(out)
    print(f"wrote {pred.size} predictions to {out}")
    return out.with_name(out.stem + ".log.json")


def cmd_permtest(args, cfg, run):
    table, y = _table_and_outcomes(args, cfg)
    run.input(args.features)
    run.input(args.manifest)
    n_perm = args.n_perm if args.n_perm is not None else cfg["permutation"]["n_perm"]
    res = permutation_test(table.values, y, n_perm, run.seed, cfg.pipeline(),
                           workers=run.workers)
    out = Path(args.out)
    doc = {"kind": "permutation_result", "spec_version": 1, "config_hash": cfg.hash(),
           "feature_spec_hash": _spec_hash(table), "statistic": "fold_mean_r",
           "observed": res.observed, "p_value": res.p_value, "n_perm": res.n_perm,
           "master_seed": res.master_seed, "cv_seed": res.cv_seed,
           "n_undefined": res.n_undefined, "null": res.null}
    out.write_text(dumps(doc))
    run.output(out)
    print(f"observed r = {res.observed:.4f}  p = {res.p_value:.6g} ({res.n_perm} permutations)")
    return out.with_name(out.stem + ".log.json")


def cmd_correlate(args, cfg, run):
    table = read_table(args.features)
    run.input(args.features)
    run.input(args.manifest)
    values = table.values
    if args.baseline:
        base = read_table(args.baseline)
        run.input(args.baseline)
        if base.names != table.names:
            raise SchemaError("baseline table columns differ from the follow-up table")
        values = values - base.select_rows(table.subject_ids).values
    group = cfg["cv"]["group"]
    y = _outcomes(args.manifest, table.subject_ids, group)
    names = args.columns or list(table.names)
    cols = table.columns(names)
    n_perm = args.n_perm if args.n_perm is not None else cfg["permutation"]["spearman_n_perm"]
    out = Path(args.out)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("feature", "n", "rho", "p_value", "n_perm", "config_hash"))
        for k, (name, c) in enumerate(zip(names, cols)):
            v = values[:, c]
            ok = ~np.isnan(v)
            rho, p = spearman_perm(v[ok], y[ok], n_perm, seed=run.seed + k)
            w.writerow((name, int(ok.sum()), repr(rho), repr(p), n_perm, cfg.hash()))
    run.output(out)
    print(f"wrote {len(names)} correlations to {out}")
    return out.with_name(out.stem + ".log.json")


def cmd_report(args, cfg, run):
    doc = read_cv_report(args.report)
    run.input(args.report)
    if args.config and doc.get("config_hash") != cfg.hash():
        raise SchemaError(f"report was produced with config {doc.get('config_hash')}, "
                          f"not {cfg.hash()} ({args.config})")
    lines = [f"CV report {args.report}", f"config hash: {doc.get('config_hash')}",
             f"seed: {doc['seed']}",
             f"fold-averaged r: {doc['fold_mean_r']}",
             f"pooled r / RMSE / MAE: {doc['pooled']['r']} / {doc['pooled']['rmse']} / "
             f"{doc['pooled']['mae']}", ""]
    for f in doc["folds"]:
        lines.append(f"fold {f['index']}: n_test={f['n_test']} r={f['r']} rmse={f['rmse']:.4f} "
                     f"C={f['C']:g} eps={f['eps']:g} features={','.join(f['selected'])}")
    text = "\n".join(lines) + "\n"
    out = Path(args.out) if args.out else Path(args.report).with_suffix(".txt")
    out.write_text(text)
    run.output(out)
    print(text, end="")
    return out.with_name(out.stem + ".log.json")


COMMANDS = {"synth": cmd_synth, "features": cmd_features, "train": cmd_train,
            "predict": cmd_predict, "permtest": cmd_permtest,
            "correlate": cmd_correlate, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides OSCIMARK_SEED)")
    common.add_argument("--workers", type=int, help="worker processes")

    p = argparse.ArgumentParser(prog="oscimark", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic cohort")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--group", default="active")

    s = sub.add_parser("features", parents=[common], help="extract the feature table")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True, help="feature CSV to write")
    s.add_argument("--states", help="existing brain-state model file to apply")

    for name, helptext in (("train", "nested CV plus final model"),
                           ("permtest", "permutation test of the nested-CV r")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--features", required=True)
        s.add_argument("--manifest", required=True)
        s.add_argument("--out", required=True)
        if name == "permtest":
            s.add_argument("--n-perm", type=int)

    s = sub.add_parser("predict", parents=[common], help="apply a model artifact")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--manifest", help="optional, adds observed outcomes")
    s.add_argument("--out", required=True)

    s = sub.add_parser("correlate", parents=[common],
                       help="Spearman permutation tests of feature changes against the endpoint")
    s.add_argument("--features", required=True, help="change table, or follow-up table")
    s.add_argument("--baseline", help="baseline table; changes are features - baseline")
    s.add_argument("--manifest", required=True)
    s.add_argument("--columns", nargs="*", help="feature names (default all)")
    s.add_argument("--n-perm", type=int)
    s.add_argument("--out", required=True)

    s = sub.add_parser("report", parents=[common], help="summarize a CV report")
    s.add_argument("--report", required=True)
    s.add_argument("--out")
    return p


def _resolve_seed(args, cfg) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("OSCIMARK_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigurationError(f"OSCIMARK_SEED={env!r} is not an integer") from None
    return int(cfg["run"]["seed"])


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    run = None
    log_path = None
    try:
        cfg = RunConfig.from_file(args.config)
        seed = _resolve_seed(args, cfg)
        workers = args.workers if args.workers is not None else cfg["run"]["workers"]
        if workers < 1:
            raise ConfigurationError("--workers must be at least 1")
        cfg.set("run", "seed", seed)
        cfg.set("run", "workers", workers)
        run = Run(args.command, cfg, seed, workers, argv)
        if args.config:
            run.input(args.config)
        log_path = COMMANDS[args.command](args, cfg, run)
        run.write_log(log_path, "ok")
        return EXIT_OK
    except OscimarkError as exc:
        if isinstance(exc, EmptySelectionError):
            code = EXIT_EMPTY
        elif isinstance(exc, SCHEMA_ERRORS):
            code = EXIT_SCHEMA
        else:
            code = EXIT_COMPUTE
        print(f"oscimark: error [{exc.category}]: {exc}", file=sys.stderr)
        _failure_log(run, args, exc)
        return code
    except FileNotFoundError as exc:
        print(f"oscimark: error [missing-input]: {exc}", file=sys.stderr)
        _failure_log(run, args, exc)
        return EXIT_SCHEMA
    except (OSError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"oscimark: error [computation]: {exc}", file=sys.stderr)
        _failure_log(run, args, exc)
        return EXIT_COMPUTE


def _failure_log(run, args, exc):
    if run is None:
        return
    out = getattr(args, "out", None)
    if not out:
        return
    out = Path(out)
    target = out / "run_log.json" if out.is_dir() else out.with_name(out.stem + ".log.json")
    try:
        run.write_log(target, "error", f"{type(exc).__name__}: {exc}")
    except OSError:
        pass


if __name__ == "__main__":
    sys.exit(main())
