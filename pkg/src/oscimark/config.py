"""Run configuration: one INI file with fixed sections and keys.

Unknown sections or keys are rejected, and every value is validated before
any computation starts.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, OscimarkError
from .features import FeatureSpec
from .optim import ElasticNetConfig
from .pipeline import GridConfig, PipelineConfig, SelectionConfig
from .signal import DEFAULT_LABELS, DEFAULT_REGIONS, Montage
from .spectral import DEFAULT_BANDS, BandSet
from .synth import Coupling, SynthConfig

# section -> key -> default (as text, parsed by the type of the default)
DEFAULTS: dict[str, dict[str, object]] = {
    "run": {"seed": 0, "workers": 1},
    "montage": {"labels": ",".join(DEFAULT_LABELS),
                **{f"region.{k}": ",".join(v) for k, v in DEFAULT_REGIONS.items()}},
    "bands": {b.name: f"{b.lo:g},{b.hi:g}" for b in DEFAULT_BANDS},
    "preprocess": {"enabled": True, "lo": 0.5, "hi": 40.0, "notch": True},
    "features": {"families": "power,region_power,coherence,dynfc",
                 "power_bands": "all", "region_bands": "all", "coherence_bands": "all",
                 "dynfc_bands": "delta,theta,alpha,beta,broadband", "n_states": 4,
                 "dynfc_metrics": "occ,dwell,trans", "coherence_estimator": "mean",
                 "nperseg": 1000, "overlap": 0.5, "window_s": 4.0, "step_s": 1.0},
    "elastic_net": {"alpha": 0.01, "lambda": 0.8, "tol": 1e-7, "max_iter": 10000,
                    "loss_scale": "sum"},
    "selection": {"n_folds": 5, "min_folds": 3, "loo_share": 0.5},
    "svr": {"c_min_exp": -2.0, "c_max_exp": 3.0, "n_c": 6,
            "eps_min": 0.01, "eps_max": 1.0, "n_eps": 10},
    "cv": {"outer_folds": 5, "min_test": 3, "group": ""},
    "permutation": {"n_perm": 1000, "spearman_n_perm": 100000},
    "synth": {"n_subjects": 50, "fs": 500.0, "duration_s": 60.0,
              "couplings": "F3-P3:beta:1.0,P4-T3:gamma:1.0,Fp1-T5:theta:1.0",
              "weights": "0.25,0.25,0.25", "intercept": 0.05, "target_r2": 0.8,
              "noise_std": "auto", "csv_decimals": 4},
}


def _parse(section, key, raw, default):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigurationError(f"[{section}] {key}: cannot parse {raw!r}") from None


def _split(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {s: dict(d) for s, d in DEFAULTS.items()})

    @classmethod
    def from_file(cls, path=None) -> "RunConfig":
        cfg = cls()
        if path is None:
            cfg.validate()
            return cfg
        parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
        parser.optionxform = str
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (configparser.Error, OSError) as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
        for section in parser.sections():
            if section not in DEFAULTS:
                raise ConfigurationError(f"{path}: unknown section [{section}]")
            for key, raw in parser.items(section):
                known = DEFAULTS[section]
                if section in ("montage", "bands") and key not in known:
                    # free-form entries: extra regions or extra bands
                    if section == "montage" and not key.startswith("region."):
                        raise ConfigurationError(f"{path}: unknown key {key!r} in [montage]")
                    cfg.values[section][key] = raw.strip()
                    continue
                if key not in known:
                    raise ConfigurationError(f"{path}: unknown key {key!r} in [{section}]")
                cfg.values[section][key] = _parse(section, key, raw, known[key])
        cfg.validate()
        return cfg

    def set(self, section: str, key: str, value):
        self.values[section][key] = value

    def __getitem__(self, section):
        return self.values[section]

    def to_dict(self) -> dict:
        return {s: dict(sorted(v.items())) for s, v in sorted(self.values.items())}

    def hash(self, exclude=("run",)) -> str:
        """Digest of every setting that can change a result (worker count excluded)."""
        doc = {s: v for s, v in self.to_dict().items() if s not in exclude}
        doc["run"] = {"seed": self.values["run"]["seed"]}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]

    # -- typed views ----------------------------------------------------------
    def montage(self) -> Montage:
        m = self.values["montage"]
        regions = {k.split(".", 1)[1]: _split(v) for k, v in m.items()
                   if k.startswith("region.") and _split(v)}
        return Montage(_split(m["labels"]), regions)

    def bands(self) -> BandSet:
        out = []
        for name, raw in self.values["bands"].items():
            parts = _split(str(raw))
            if len(parts) != 2:
                raise ConfigurationError(f"[bands] {name}: expected 'lo,hi'")
            try:
                out.append((name, float(parts[0]), float(parts[1])))
            except ValueError:
                raise ConfigurationError(f"[bands] {name}: non-numeric edge") from None
        return BandSet(out)

    def feature_spec(self) -> FeatureSpec:
        f = self.values["features"]

        def bands_of(key):
            return None if f[key] == "all" else _split(f[key])

        return FeatureSpec(
            montage=self.montage(), bands=self.bands(), families=_split(f["families"]),
            power_bands=bands_of("power_bands"), region_bands=bands_of("region_bands"),
            coherence_bands=bands_of("coherence_bands"), dynfc_bands=_split(f["dynfc_bands"]),
            n_states=f["n_states"], dynfc_metrics=_split(f["dynfc_metrics"]),
            coherence_estimator=f["coherence_estimator"], nperseg=f["nperseg"],
            overlap=f["overlap"], window_s=f["window_s"], step_s=f["step_s"])

    def pipeline(self) -> PipelineConfig:
        en, sel, svr, cv = (self.values[k] for k in ("elastic_net", "selection", "svr", "cv"))
        if svr["n_c"] < 1 or svr["n_eps"] < 1:
            raise ConfigurationError("[svr] grid sizes must be positive")
        grid = GridConfig(np.logspace(svr["c_min_exp"], svr["c_max_exp"], svr["n_c"]),
                          np.linspace(svr["eps_min"], svr["eps_max"], svr["n_eps"]))
        enc = ElasticNetConfig(en["alpha"], en["lambda"], en["tol"], en["max_iter"],
                               en["loss_scale"])
        return PipelineConfig(cv["outer_folds"], cv["min_test"],
                              SelectionConfig(sel["n_folds"], sel["min_folds"], sel["loo_share"],
                                              enc), grid)

    def synth(self, seed: int) -> SynthConfig:
        s = self.values["synth"]
        couplings = []
        for item in _split(s["couplings"]):
            try:
                pair, band, strength = item.split(":")
                a, b = pair.split("-")
                couplings.append(Coupling((a, b), band, float(strength)))
            except ValueError:
                raise ConfigurationError(
                    f"[synth] couplings: expected 'A-B:band:strength', got {item!r}") from None
        try:
            weights = tuple(float(w) for w in _split(s["weights"]))
            noise = None if s["noise_std"] == "auto" else float(s["noise_std"])
        except ValueError:
            raise ConfigurationError("[synth] weights/noise_std must be numeric") from None
        return SynthConfig(n_subjects=s["n_subjects"], fs=s["fs"], duration_s=s["duration_s"],
                           montage=self.montage(), bands=self.bands(),
                           couplings=tuple(couplings), weights=weights,
                           intercept=s["intercept"], noise_std=noise,
                           target_r2=s["target_r2"], seed=seed,
                           csv_decimals=s["csv_decimals"])

    def validate(self):
        """Build every typed view once so bad values fail before any work."""
        try:
            self.feature_spec()
            self.pipeline()
            self.synth(int(self.values["run"]["seed"]))
        except ConfigurationError:
            raise
        except OscimarkError as exc:
            raise ConfigurationError(str(exc)) from None
        p = self.values["preprocess"]
        if not 0 < p["lo"] < p["hi"]:
            raise ConfigurationError("[preprocess] need 0 < lo < hi")
        if self.values["run"]["workers"] < 1:
            raise ConfigurationError("[run] workers must be at least 1")
        if self.values["permutation"]["n_perm"] < 1:
            raise ConfigurationError("[permutation] n_perm must be positive")

    def write(self, path) -> Path:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for s, kv in self.to_dict().items():
            parser[s] = {k: str(v) for k, v in kv.items()}
        path = Path(path)
        with open(path, "w") as fh:
            parser.write(fh)
        return path
