"""Declarative experiment runner: JSON configs in, CSV series and a manifest out.

A config names a model family, the true and filter priors, the test
functions and the metrics to compute. ``run_experiment`` validates it,
checks admissibility, runs the paired filters and writes one CSV per metric
kind followed by ``manifest.json``. Same config, same bytes.
"""
import copy
import hashlib
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from .errors import ConfigInvalid, NotAbsolutelyContinuous, PartialFailure
from .filtering import discretize
from .measure import FiniteDistribution, density_ratio
from .models import (
    Categorical, GaussianPrior, GridSpec, HmmModel, MultNoiseParams, Normal, PerStateChannel, SgParams, SignalKernel,
    build_additive_model, build_finite_hmm, build_mult_noise_model, build_nonmixing_control, with_prior,
)
from .seeding import RNG_ALGORITHM, derive_seed
from .stability import (
    MAX_ENUMERATION_DEPTH, TabulatedFunction, _enumerated_series, _jsonable, _prior_weights, _series_from_trials, char_metric,
    check_conditions, mixing_constants, moment_matrix, predictor_metric, rho_metric, run_paired_trials,
    tv_metric, weak_metric, write_series_csv,
)

__all__ = [
    "SCHEMA_VERSION", "ExperimentConfig", "RunManifest", "Experiment", "load_config", "run_experiment",
    "canned_experiments", "derive_seed", "FAILURE_LIMIT",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FAILURE_LIMIT = 0.01
METRICS = ("weak", "tv", "predictor", "char", "rho-diff")
METHODS = ("montecarlo", "enumerate", "auto")

_TOP_FIELDS = {
    "schema_version", "name", "model", "true_prior", "filter_prior", "functions", "metrics",
    "n_max", "trials", "seed", "grid", "method", "output_dir", "conditions",
}
_MODEL_FIELDS = {
    "finite-hmm": {"kind", "matrix", "atoms", "emissions", "moment_matrix"},
    "nonmixing-control": {"kind", "emission"},
    "mult-noise": {"kind", "a", "b", "rho"},
    "additive": {"kind", "a", "b", "noise"},
}
_PRIOR_FIELDS = {"finite": {"kind", "weights"}, "gaussian": {"kind", "mean", "std"}, "sg": {"kind", "sigma", "alpha"}}
_NOISE_FIELDS = {"normal": {"kind", "mean", "std"}, "categorical": {"kind", "values", "probs"}}
_FUNCTION_FIELDS = {
    "polynomial": {"kind", "coefficients"},
    "abs": {"kind", "scale"},
    "indicator": {"kind", "lo", "hi"},
    "table": {"kind", "points", "values"},
}


# --- validation helpers ------------------------------------------------------

def _require(record, key, path):
    if not isinstance(record, dict):
        raise ConfigInvalid(path, "expected an object")
    if key not in record:
        raise ConfigInvalid(f"{path}.{key}" if path else key, "missing required field")
    return record[key]


def _no_extra(record, allowed, path):
    extra = sorted(set(record) - allowed)
    if extra:
        where = f"{path}.{extra[0]}" if path else extra[0]
        raise ConfigInvalid(where, "unknown field")


def _kind(record, table, path):
    kind = _require(record, "kind", path)
    if kind not in table:
        raise ConfigInvalid(f"{path}.kind", f"unknown family {kind!r}; expected one of {sorted(table)}")
    _no_extra(record, table[kind], path)
    return kind


def _number(value, path, positive=False, integer=False, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigInvalid(path, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigInvalid(path, f"expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigInvalid(path, "must be finite")
    if positive and not value > 0:
        raise ConfigInvalid(path, f"must be positive, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigInvalid(path, f"must be >= {minimum}, got {value!r}")
    return int(value) if integer else float(value)


def _numbers(value, path):
    if not isinstance(value, list) or not value:
        raise ConfigInvalid(path, "expected a non-empty list of numbers")
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _wrap(path, fn, *args):
    """Call a domain constructor and report its ValueError against ``path``."""
    try:
        return fn(*args)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigInvalid):
            raise
        raise ConfigInvalid(path, str(exc)) from exc


def _noise(record, path):
    kind = _kind(record, _NOISE_FIELDS, path)
    if kind == "normal":
        mean = _number(record.get("mean", 0.0), f"{path}.mean")
        std = _number(record.get("std", 1.0), f"{path}.std", positive=True)
        return Normal(mean, std)
    values = tuple(_numbers(_require(record, "values", path), f"{path}.values"))
    probs = tuple(_numbers(_require(record, "probs", path), f"{path}.probs"))
    return _wrap(path, Categorical, values, probs)


def _prior(record, path, states=None):
    kind = _kind(record, _PRIOR_FIELDS, path)
    if kind == "finite":
        weights = _numbers(_require(record, "weights", path), f"{path}.weights")
        if states is None:
            raise ConfigInvalid(f"{path}.kind", "finite priors need a finite-state model")
        if len(weights) != len(states):
            raise ConfigInvalid(f"{path}.weights", f"expected {len(states)} weights, got {len(weights)}")
        return _wrap(f"{path}.weights", FiniteDistribution, np.asarray(states), np.asarray(weights))
    if states is not None:
        raise ConfigInvalid(f"{path}.kind", "finite-state models need a finite prior")
    if kind == "gaussian":
        mean = _number(record.get("mean", 0.0), f"{path}.mean")
        return GaussianPrior(mean, _number(_require(record, "std", path), f"{path}.std", positive=True))
    sigma = _number(_require(record, "sigma", path), f"{path}.sigma", positive=True)
    alpha = tuple(_numbers(record.get("alpha", [1.0]), f"{path}.alpha"))
    return _wrap(path, SgParams, sigma, alpha)


def _function(record, path):
    kind = _kind(record, _FUNCTION_FIELDS, path)
    if kind == "polynomial":
        coef = np.asarray(_numbers(_require(record, "coefficients", path), f"{path}.coefficients"))
        return lambda x: np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), coef)
    if kind == "abs":
        scale = _number(record.get("scale", 1.0), f"{path}.scale")
        return lambda x: scale * np.abs(np.asarray(x, dtype=float))
    if kind == "indicator":
        lo = _number(_require(record, "lo", path), f"{path}.lo")
        hi = _number(_require(record, "hi", path), f"{path}.hi")
        if not lo < hi:
            raise ConfigInvalid(f"{path}.hi", "indicator needs lo < hi")
        return lambda x: ((np.asarray(x, dtype=float) >= lo) & (np.asarray(x, dtype=float) < hi)).astype(float)
    points = np.asarray(_numbers(_require(record, "points", path), f"{path}.points"))
    values = np.asarray(_numbers(_require(record, "values", path), f"{path}.values"))
    if len(points) != len(values):
        raise ConfigInvalid(f"{path}.values", "points and values differ in length")
    order = np.argsort(points)
    if np.any(np.diff(points[order]) == 0):
        raise ConfigInvalid(f"{path}.points", "points must be distinct")
    return TabulatedFunction(points[order], values[order])


# --- config ------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Validated experiment description; ``raw`` keeps the JSON record for the manifest echo."""

    raw: dict
    name: str
    model: object
    nu: object
    nu_bar: object
    f: object
    g: object
    t_values: tuple
    metrics: tuple
    n_max: int
    trials: int
    seed: int
    method: str
    output_dir: str
    conditions: bool

    @classmethod
    def from_dict(cls, record):
        record = copy.deepcopy(record)
        if not isinstance(record, dict):
            raise ConfigInvalid("<root>", "config must be a JSON object")
        _no_extra(record, _TOP_FIELDS, "")
        version = _require(record, "schema_version", "")
        if version != SCHEMA_VERSION:
            raise ConfigInvalid("schema_version", f"unsupported schema version {version!r}; expected {SCHEMA_VERSION}")
        name = _require(record, "name", "")
        if not isinstance(name, str) or not name:
            raise ConfigInvalid("name", "expected a non-empty string")
        n_max = _number(_require(record, "n_max", ""), "n_max", integer=True, minimum=1)
        trials = _number(_require(record, "trials", ""), "trials", integer=True, minimum=1)
        seed = _number(_require(record, "seed", ""), "seed", integer=True, minimum=0)
        method = record.get("method", "montecarlo")
        if method not in METHODS:
            raise ConfigInvalid("method", f"expected one of {list(METHODS)}, got {method!r}")
        output_dir = record.get("output_dir", f"results/{name}")
        if not isinstance(output_dir, str) or not output_dir:
            raise ConfigInvalid("output_dir", "expected a non-empty path string")
        conditions = record.get("conditions", True)
        if not isinstance(conditions, bool):
            raise ConfigInvalid("conditions", "expected true or false")

        model = _build_model(record)
        states = model.states if model.grid is None else None
        nu = _prior(_require(record, "true_prior", ""), "true_prior", states)
        nu_bar = _prior(_require(record, "filter_prior", ""), "filter_prior", states)
        if model.name == "mult-noise":
            if not isinstance(nu, SgParams):
                raise ConfigInvalid("true_prior.kind", "the multiplicative-noise model takes an sg true prior")
        model = _wrap("true_prior", with_prior, model, nu)
        if model.grid is not None:
            model = _wrap("grid", discretize, model, model.grid)

        functions = record.get("functions", {})
        if not isinstance(functions, dict):
            raise ConfigInvalid("functions", "expected an object")
        _no_extra(functions, {"f", "g", "trig"}, "functions")
        f = _function(functions["f"], "functions.f") if "f" in functions else None
        g = _function(functions["g"], "functions.g") if "g" in functions else None
        t_values = ()
        if "trig" in functions:
            trig = functions["trig"]
            _require(trig, "t_values", "functions.trig")
            _no_extra(trig, {"kind", "t_values"}, "functions.trig")
            if trig.get("kind", "trig") != "trig":
                raise ConfigInvalid("functions.trig.kind", "expected 'trig'")
            t_values = tuple(_numbers(trig["t_values"], "functions.trig.t_values"))

        metrics = _require(record, "metrics", "")
        if not isinstance(metrics, list) or not metrics:
            raise ConfigInvalid("metrics", "expected a non-empty list")
        for i, m in enumerate(metrics):
            if m not in METRICS:
                raise ConfigInvalid(f"metrics[{i}]", f"unknown metric {m!r}; expected one of {list(METRICS)}")
        if len(set(metrics)) != len(metrics):
            raise ConfigInvalid("metrics", "duplicate metric")
        needs = {"weak": (f, "functions.f"), "predictor": (g, "functions.g"), "char": (t_values or None, "functions.trig")}
        for m in metrics:
            if m in needs and needs[m][0] is None:
                raise ConfigInvalid(needs[m][1], f"metric {m!r} needs this function")
        if "char" in metrics and model.spec.get("kind") != "additive":
            raise ConfigInvalid("metrics", "the 'char' metric needs the additive model")
        if method == "enumerate" and model.channel.alphabet is None:
            raise ConfigInvalid("method", "exact enumeration needs a finite observation alphabet")

        return cls(record, name, model, nu, nu_bar, f, g, t_values, tuple(metrics), n_max, trials,
                   seed, method, output_dir, conditions)

    def with_overrides(self, seed=None, trials=None, n_max=None, output_dir=None):
        """Re-validate with command-line overrides applied on top of the file values."""
        record = copy.deepcopy(self.raw)
        for key, value in (("seed", seed), ("trials", trials), ("n_max", n_max), ("output_dir", output_dir)):
            if value is not None:
                record[key] = value
        return ExperimentConfig.from_dict(record)

    def to_dict(self):
        return copy.deepcopy(self.raw)


def _build_model(record):
    spec = _require(record, "model", "")
    kind = _kind(spec, _MODEL_FIELDS, "model")
    grid = None
    if kind in ("mult-noise", "additive"):
        g = _require(record, "grid", "")
        _no_extra(g, {"lo", "hi", "cells"}, "grid")
        lo = _number(_require(g, "lo", "grid"), "grid.lo")
        hi = _number(_require(g, "hi", "grid"), "grid.hi")
        cells = _number(_require(g, "cells", "grid"), "grid.cells", integer=True)
        grid = _wrap("grid", GridSpec, lo, hi, cells)
    elif "grid" in record:
        raise ConfigInvalid("grid", "finite-state models take no grid")

    if kind == "finite-hmm":
        matrix = _require(spec, "matrix", "model")
        emissions = _require(spec, "emissions", "model")
        if not isinstance(emissions, list):
            raise ConfigInvalid("model.emissions", "expected a list of noise laws")
        dists = tuple(_noise(e, f"model.emissions[{i}]") for i, e in enumerate(emissions))
        atoms = _numbers(spec["atoms"], "model.atoms") if "atoms" in spec else None
        model = _wrap("model", build_finite_hmm, matrix, atoms, dists, "finite-hmm")
        if "moment_matrix" in spec:
            declared = np.asarray(spec["moment_matrix"], dtype=float)
            actual = _wrap("model.moment_matrix", moment_matrix, dists).entries
            if declared.shape != actual.shape or not np.allclose(declared, actual, atol=1e-12, rtol=0):
                raise ConfigInvalid("model.moment_matrix", f"declared matrix does not match the emissions: {actual.tolist()}")
    elif kind == "nonmixing-control":
        noise = _noise(spec["emission"], "model.emission") if "emission" in spec else None
        model = build_nonmixing_control(noise)
    elif kind == "mult-noise":
        a = _number(_require(spec, "a", "model"), "model.a")
        b = _number(_require(spec, "b", "model"), "model.b", positive=True)
        rho = _number(_require(spec, "rho", "model"), "model.rho", positive=True)
        # placeholder prior; the configured true prior replaces it
        params = _wrap("model.a", MultNoiseParams, a, b, rho, SgParams(1.0))
        model = build_mult_noise_model(params)
    else:
        a = _number(_require(spec, "a", "model"), "model.a")
        b = _number(_require(spec, "b", "model"), "model.b", positive=True)
        noise = _noise(spec.get("noise", {"kind": "normal"}), "model.noise")
        signal = _wrap("model.a", SignalKernel.ar1, a, b)
        model = build_additive_model(signal, lambda x: x, noise, h_id="identity")
    return _replace_meta(model, dict(spec), grid)


def _replace_meta(model, spec, grid):
    return HmmModel(model.signal, model.channel, model.nu, model.states, grid, model.name, spec, None)


def load_config(path):
    """Parse and validate a JSON config file; errors name the file or the field."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigInvalid(str(path), f"cannot read config file: {exc.strerror or exc}") from exc
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(str(path), f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return ExperimentConfig.from_dict(record)


# --- manifest ----------------------------------------------------------------

def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    config: dict
    version: str
    rng: dict
    outputs: list
    admissibility: dict
    conditions: object
    mixing: object
    failures: dict
    wall_clock_seconds: float
    status: str
    moment_matrix: object = None
    series: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        out = {k: v for k, v in self.__dict__.items() if k != "series"}
        return _jsonable(out)

    def write(self, directory):
        """Write ``manifest.json`` atomically (temp file in the same directory, then rename)."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=".manifest-", suffix=".json", dir=directory)
        try:
            with os.fdopen(fd, "w") as fh:
                json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")
            os.replace(tmp, directory / "manifest.json")
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return directory / "manifest.json"

    def verify(self, directory):
        """True when every listed output exists with the declared rows and hash."""
        directory = Path(directory)
        for entry in self.outputs:
            path = directory / entry["path"]
            if not path.exists() or _sha256(path) != entry["sha256"]:
                return False
            with open(path) as fh:
                if sum(1 for _ in fh) - 1 != entry["rows"]:
                    return False
        return True


# --- running -----------------------------------------------------------------

def _metric_objects(cfg):
    model = cfg.model
    out = []
    for name in cfg.metrics:
        if name == "weak":
            out.append(("weak", [weak_metric(model, cfg.f)]))
        elif name == "tv":
            out.append(("tv", [tv_metric()]))
        elif name == "predictor":
            out.append(("predictor", [predictor_metric(model, cfg.g)]))
        elif name == "char":
            out.append(("char", [char_metric(model, t) for t in cfg.t_values]))
        else:
            out.append(("rho-diff", [rho_metric()]))
    return out


def _fg_id(cfg, name, metric):
    functions = cfg.raw.get("functions", {})
    if name == "weak":
        return json.dumps(functions["f"], sort_keys=True, separators=(",", ":"))
    if name == "predictor":
        return json.dumps(functions["g"], sort_keys=True, separators=(",", ":"))
    if name == "char":
        return metric.kind.split("=", 1)[1]
    return ""


def _compute(cfg, workers):
    """Series per metric name plus failure list, sharing one filter pass per law."""
    groups = _metric_objects(cfg)
    flat = [m for _, ms in groups for m in ms]
    method = cfg.method
    if method == "auto":
        method = "enumerate" if cfg.model.channel.alphabet is not None and cfg.n_max <= MAX_ENUMERATION_DEPTH else "montecarlo"
    series, failures = {}, ()
    if method == "enumerate":
        for name, ms in groups:
            series[name] = [(m, _enumerated_series(cfg.model, cfg.nu, cfg.nu_bar, m, cfg.n_max)) for m in ms]
        return series, failures, method
    values, failures, alive = run_paired_trials(cfg.model, cfg.nu, cfg.nu_bar, flat, cfg.trials, cfg.n_max,
                                                cfg.seed, workers)
    for name, ms in groups:
        series[name] = [
            (m, _series_from_trials(values[m.kind], failures, alive, m, 0 if m.timing == "posterior" else 1,
                                    "monte-carlo"))
            for m in ms
        ]
    return series, failures, method


def run_experiment(config, workers=None, output_dir=None):
    """Run ``config`` and write its CSVs and manifest under the output directory.

    Inadmissible priors give a REJECTED manifest carrying the witness atom;
    runs losing more than ``FAILURE_LIMIT`` of their trials are written,
    marked FAILED and reported through PartialFailure.
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    rng = {"algorithm": RNG_ALGORITHM, "master_seed": cfg.seed}
    model = cfg.model
    mm = None
    finite = model.is_finite and model.grid is None
    if finite and isinstance(model.channel, PerStateChannel):
        mm = moment_matrix(model.channel.dists)
        mm = {"entries": mm.entries.tolist(), "det": mm.det, "condition_number": mm.condition_number}
    mixing = mixing_constants(model.signal).to_dict() if finite else None

    try:
        ratio = density_ratio(_prior_weights(model, cfg.nu), _prior_weights(model, cfg.nu_bar))
    except NotAbsolutelyContinuous as exc:
        manifest = RunManifest(cfg.to_dict(), _version(), rng, [], {"admissible": False, "witness": exc.witness,
                               "message": str(exc)}, None, mixing, {"count": 0, "fraction": 0.0, "trials": []},
                               time.perf_counter() - start, "REJECTED", mm)
        manifest.write(out)
        return manifest
    admissibility = {"admissible": True, "ratio_sup": ratio.sup_bound}

    conditions = None
    if cfg.conditions and cfg.g is not None:
        conditions = check_conditions(model, cfg.nu, cfg.nu_bar, cfg.g, horizon=min(cfg.n_max, 50),
                                      trials=min(cfg.trials, 200), seed=cfg.seed).to_dict()

    log.info("%s: %d trials, n_max %d, seed %d", cfg.name, cfg.trials, cfg.n_max, cfg.seed)
    series, failures, method = _compute(cfg, workers)
    outputs = []
    for name, items in series.items():
        path = out / f"{name}.csv"
        rows = write_series_csv(path, [(s, cfg.name, _fg_id(cfg, name, m), cfg.seed) for m, s in items])
        outputs.append({"metric": name, "path": path.name, "rows": rows, "sha256": _sha256(path),
                        "method": method})
    fraction = len(failures) / cfg.trials if method == "montecarlo" else 0.0
    status = "FAILED" if fraction > FAILURE_LIMIT else "OK"
    manifest = RunManifest(
        cfg.to_dict(), _version(), rng, outputs, admissibility, conditions, mixing,
        {"count": len(failures), "fraction": fraction, "trials": [list(f) for f in failures]},
        time.perf_counter() - start, status, mm,
        {name: [s for _, s in items] for name, items in series.items()},
    )
    manifest.write(out)
    if status == "FAILED":
        raise PartialFailure(f"{len(failures)} of {cfg.trials} trials failed (limit {FAILURE_LIMIT:.0%})",
                             failed_trials=list(failures), manifest=manifest)
    return manifest


# --- canned experiments ------------------------------------------------------

_PROP4_MODEL = {
    "kind": "finite-hmm",
    "matrix": [[0.7, 0.3], [0.3, 0.7]],
    "emissions": [{"kind": "normal", "mean": 0.0, "std": 1.0}, {"kind": "normal", "mean": 1.0, "std": 1.0}],
    "moment_matrix": [[0.0, 1.0], [1.0, 2.0]],
}
_GRID = {"lo": -6.0, "hi": 6.0, "cells": 2048}


def _canned_records():
    identity = {"kind": "polynomial", "coefficients": [0.0, 1.0]}
    return [
        {
            "schema_version": SCHEMA_VERSION, "name": "hmm-prop4", "model": _PROP4_MODEL,
            "true_prior": {"kind": "finite", "weights": [0.5, 0.5]},
            "filter_prior": {"kind": "finite", "weights": [0.99, 0.01]},
            "functions": {"g": identity},
            "metrics": ["tv", "predictor"], "n_max": 200, "trials": 1000, "seed": 20240401,
        },
        {
            "schema_version": SCHEMA_VERSION, "name": "hmm-prop4-negative",
            "model": {"kind": "nonmixing-control", "emission": {"kind": "normal", "mean": 0.0, "std": 1.0}},
            "true_prior": {"kind": "finite", "weights": [0.5, 0.5]},
            "filter_prior": {"kind": "finite", "weights": [0.99, 0.01]},
            "metrics": ["tv"], "n_max": 200, "trials": 1000, "seed": 20240402,
        },
        {
            "schema_version": SCHEMA_VERSION, "name": "sg-volatility",
            "model": {"kind": "mult-noise", "a": 0.8, "b": 0.5, "rho": 1.0}, "grid": _GRID,
            "true_prior": {"kind": "sg", "sigma": 0.7, "alpha": [0.5, 0.5]},
            "filter_prior": {"kind": "gaussian", "mean": 0.0, "std": 1.0},
            "functions": {"f": {"kind": "abs", "scale": 1.0},
                          "g": {"kind": "abs", "scale": 1.0 / math.sqrt(math.pi)}},
            "metrics": ["weak"], "n_max": 100, "trials": 500, "seed": 20240403,
        },
        {
            "schema_version": SCHEMA_VERSION, "name": "linear-prop5",
            "model": {"kind": "additive", "a": 0.8, "b": 0.5, "noise": {"kind": "normal", "mean": 0.0, "std": 1.0}},
            "grid": _GRID,
            "true_prior": {"kind": "gaussian", "mean": 1.0, "std": 0.5},
            "filter_prior": {"kind": "gaussian", "mean": 0.0, "std": 1.0},
            "functions": {"f": {"kind": "polynomial", "coefficients": [0.0, 0.0, 1.0]},
                          "trig": {"kind": "trig", "t_values": [0.0, 0.5, 1.0, 2.0]}},
            "metrics": ["weak", "char"], "n_max": 100, "trials": 500, "seed": 20240404,
        },
        {
            "schema_version": SCHEMA_VERSION, "name": "mixing-rate", "model": _PROP4_MODEL,
            "true_prior": {"kind": "finite", "weights": [0.5, 0.5]},
            "filter_prior": {"kind": "finite", "weights": [0.99, 0.01]},
            "metrics": ["tv"], "n_max": 200, "trials": 1000, "seed": 20240405,
        },
    ]


@dataclass(frozen=True)
class Experiment:
    name: str
    config: ExperimentConfig


def canned_experiments():
    """The five reference experiments with pinned seeds, validated."""
    out = []
    for record in _canned_records():
        record = copy.deepcopy(record)
        record["output_dir"] = f"results/{record['name']}"
        out.append(Experiment(record["name"], ExperimentConfig.from_dict(record)))
    return out
