"""Command line interface.

Subcommands: gram, regress, sensitivity, converge, drift. Each one reads an
optional JSON config validated against a strict schema (unknown keys are
rejected), applies flag overrides (flags win), and writes CSV output, PNG
figures, and a JSON run manifest into --out. Reruns with the same config are
bit-identical except for the manifest's wall_clock block.

Exit codes: 0 success, 1 internal numeric failure, 2 invalid user input.
Errors are emitted as one JSON object on stderr. RNTK_THREADS caps workers.

Regression selects the ridge penalty (and, when a model name appears with
several kernel entries, the kernel hyperparameters) by k-fold cross
validation per repeat; penalties are absolute, and candidates whose solve
fails are skipped.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time

import jsonschema
import numpy as np

from . import __version__, plotting
from .baselines import BaselineParams, MlpNtk, Polynomial, Rbf, baseline_cross_gram, baseline_gram
from .core import cross_gram as analytic_cross_gram
from .core import gram as analytic_gram
from .datasets import make_csv_task, make_sinusoid_task, normalize_sequences, read_series_csv
from .learners import GramMatrix, fit_ridge, last_value_predictions, predict, snr_db
from .oracle import FiniteRnn, convergence_experiment, drift_experiment
from .params import RntkParams, activation_from_name
from .rng import derive_seed, substream
from .sensitivity import sensitivity_profile

# ---------------------------------------------------------------- schemas

_POS_NUM = {"type": "number", "exclusiveMinimum": 0}
_NONNEG_NUM = {"type": "number", "minimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}
_SEED = {"type": "integer", "minimum": 0}
_PADDING = {"enum": ["zero_pad_to_max", "error_on_mismatch"]}

_RNTK_KERNEL_PROPS = {
    "kind": {"enum": ["rntk", "nngp"]},
    "sigma_w": _POS_NUM,
    "sigma_u": _POS_NUM,
    "sigma_b": _NONNEG_NUM,
    "sigma_h": _NONNEG_NUM,
    "sigma_v": _POS_NUM,
    "depth": _POS_INT,
    "activation": {"enum": ["relu", "erf"]},
}

KERNEL_SCHEMAS = {
    "rntk": {"type": "object", "additionalProperties": False,
             "properties": _RNTK_KERNEL_PROPS},
    "nngp": {"type": "object", "additionalProperties": False,
             "properties": _RNTK_KERNEL_PROPS},
    "rbf": {"type": "object", "additionalProperties": False,
            "properties": {"kind": {"const": "rbf"}, "alpha": _POS_NUM,
                           "padding": _PADDING}},
    "poly": {"type": "object", "additionalProperties": False,
             "properties": {"kind": {"const": "poly"}, "degree": _POS_INT,
                            "offset": _NONNEG_NUM, "padding": _PADDING}},
    "mlp-ntk": {"type": "object", "additionalProperties": False,
                "properties": {"kind": {"const": "mlp-ntk"}, "depth": _POS_INT,
                               "sigma_w": _POS_NUM, "sigma_b": _NONNEG_NUM,
                               "activation": {"enum": ["relu", "erf"]},
                               "padding": _PADDING}},
}

TASK_SCHEMAS = {
    "sinusoid": {"type": "object", "additionalProperties": False,
                 "properties": {"kind": {"const": "sinusoid"},
                                "T_fixed": _POS_INT,
                                "T_var": {"type": "integer", "minimum": 0},
                                "noise_sigma": _NONNEG_NUM,
                                "N_train": _POS_INT, "N_test": _POS_INT}},
    "csv": {"type": "object", "additionalProperties": False,
            "properties": {"kind": {"const": "csv"},
                           "path": {"type": "string"},
                           "split_index": _POS_INT,
                           "T_fixed": _POS_INT,
                           "T_var": {"type": "integer", "minimum": 0},
                           "N_train": _POS_INT, "N_test": _POS_INT,
                           "standardize": {"type": "boolean"}},
            "required": ["path", "split_index"]},
}

_MODEL_SCHEMA = {
    "type": "object", "additionalProperties": False,
    "properties": {"name": {"type": "string", "minLength": 1},
                   "kernel": {"type": "object"},
                   "ridge_lambdas": {"type": "array", "minItems": 1,
                                     "items": _NONNEG_NUM}},
    "required": ["name", "kernel"],
}

COMMAND_SCHEMAS = {
    "gram": {"type": "object", "additionalProperties": False,
             "properties": {"kernel": {"type": "object"},
                            "inputs": {"type": "array", "minItems": 1,
                                       "items": {"type": "string"}},
                            "normalize_inputs": {"type": "boolean"},
                            "out": {"type": "string"}},
             "required": ["inputs"]},
    "regress": {"type": "object", "additionalProperties": False,
                "properties": {"task": {"type": "object"},
                               "models": {"type": "array", "minItems": 1,
                                          "items": _MODEL_SCHEMA},
                               "repeats": _POS_INT,
                               "folds": {"type": "integer", "minimum": 2},
                               "include_pts": {"type": "boolean"},
                               "normalize_inputs": {"type": "boolean"},
                               "seed": _SEED,
                               "out": {"type": "string"}}},
    "sensitivity": {"type": "object", "additionalProperties": False,
                    "properties": {"T": _POS_INT, "m": _POS_INT,
                                   "num_trials": _POS_INT,
                                   "fd_step": _POS_NUM,
                                   "seed": _SEED,
                                   "profiles": {
                                       "type": "array", "minItems": 1,
                                       "items": {"type": "object",
                                                 "additionalProperties": False,
                                                 "properties": {
                                                     "name": {"type": "string",
                                                              "minLength": 1},
                                                     "kernel": {"type": "object"}},
                                                 "required": ["name"]}},
                                   "out": {"type": "string"}}},
    "converge": {"type": "object", "additionalProperties": False,
                 "properties": {"widths": {"type": "array", "minItems": 1,
                                           "items": _POS_INT},
                                "num_pairs": _POS_INT,
                                "T": _POS_INT, "m": _POS_INT,
                                "tied": {"type": "boolean"},
                                "seed": _SEED,
                                "kernel": {"type": "object"},
                                "out": {"type": "string"}}},
    "drift": {"type": "object", "additionalProperties": False,
              "properties": {"widths": {"type": "array", "minItems": 1,
                                        "items": _POS_INT},
                             "num_sequences": _POS_INT,
                             "T": _POS_INT, "m": _POS_INT,
                             "steps": _POS_INT,
                             "lr": {"type": ["number", "null"],
                                    "exclusiveMinimum": 0},
                             "seed": _SEED,
                             "kernel": {"type": "object"},
                             "out": {"type": "string"}}},
}

_DEFAULT_LAMBDAS = [0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0]


def _default_models():
    """Model grid used when a regress config lists no models: the recurrent
    kernels plus padded baselines; entries sharing a name form one model
    whose hyperparameters are selected by cross-validation per repeat."""
    models = [{"name": "rnn-nngp", "kernel": {"kind": "nngp"},
               "ridge_lambdas": _DEFAULT_LAMBDAS}]
    for sigma_w in (1.34, math.sqrt(2.0)):
        for sigma_b in (0.0, 0.5):
            models.append({"name": "rntk",
                           "kernel": {"kind": "rntk", "sigma_w": sigma_w,
                                      "sigma_b": sigma_b},
                           "ridge_lambdas": _DEFAULT_LAMBDAS})
    for alpha in (0.01, 0.1, 1.0, 10.0):
        models.append({"name": "rbf", "kernel": {"kind": "rbf", "alpha": alpha},
                       "ridge_lambdas": _DEFAULT_LAMBDAS})
    for degree in (1, 2, 3):
        for offset in (0.0, 1.0):
            models.append({"name": "poly",
                           "kernel": {"kind": "poly", "degree": degree,
                                      "offset": offset},
                           "ridge_lambdas": _DEFAULT_LAMBDAS})
    for depth in (1, 3):
        for sigma_b in (0.0, 0.5):
            models.append({"name": "mlp-ntk",
                           "kernel": {"kind": "mlp-ntk", "depth": depth,
                                      "sigma_w": math.sqrt(2.0), "sigma_b": sigma_b},
                           "ridge_lambdas": _DEFAULT_LAMBDAS})
    return models


# ------------------------------------------------------ config plumbing


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _validate(doc, schema, where):
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        loc = f"{where}/{path}" if path else where
        raise UsageError(f"{loc}: {exc.message}") from None


def _validate_kernel(doc, where="kernel"):
    if not isinstance(doc, dict):
        raise UsageError(f"{where}: must be an object")
    kind = doc.get("kind", "rntk")
    if kind not in KERNEL_SCHEMAS:
        raise UsageError(
            f"{where}: unknown kernel kind {kind!r}; expected one of {sorted(KERNEL_SCHEMAS)}")
    _validate(doc, KERNEL_SCHEMAS[kind], where)
    return {**doc, "kind": kind}


def _rntk_params(doc) -> RntkParams:
    return RntkParams(sigma_w=doc.get("sigma_w", math.sqrt(2.0)),
                      sigma_u=doc.get("sigma_u", 1.0),
                      sigma_b=doc.get("sigma_b", 0.0),
                      sigma_h=doc.get("sigma_h", 0.0),
                      sigma_v=doc.get("sigma_v", 1.0),
                      depth=doc.get("depth", 1),
                      activation=activation_from_name(doc.get("activation", "relu")))


def _baseline_params(doc) -> BaselineParams:
    kind = doc["kind"]
    padding = doc.get("padding", "zero_pad_to_max")
    if kind == "rbf":
        return BaselineParams(Rbf(alpha=doc.get("alpha", 1.0)), padding=padding)
    if kind == "poly":
        return BaselineParams(Polynomial(degree=doc.get("degree", 2),
                                         offset=doc.get("offset", 1.0)), padding=padding)
    return BaselineParams(MlpNtk(depth=doc.get("depth", 3),
                                 sigma_w=doc.get("sigma_w", math.sqrt(2.0)),
                                 sigma_b=doc.get("sigma_b", 0.1),
                                 activation=activation_from_name(
                                     doc.get("activation", "relu"))), padding=padding)


class _Kernel:
    """Uniform gram/cross interface over analytic and baseline kernels."""

    def __init__(self, doc):
        self.doc = _validate_kernel(doc)
        self.kind = self.doc["kind"]
        if self.kind in ("rntk", "nngp"):
            self.params = _rntk_params(self.doc)
            self._analytic_kind = "theta" if self.kind == "rntk" else "nngp"
        else:
            self.params = _baseline_params(self.doc)

    def gram(self, seqs, ids=None, pad_to=None) -> GramMatrix:
        if self.kind in ("rntk", "nngp"):
            return analytic_gram(self.params, seqs, kind=self._analytic_kind, ids=ids)
        return baseline_gram(self.params, seqs, ids=ids, pad_to=pad_to)

    def cross(self, rows, cols, pad_to=None) -> np.ndarray:
        if self.kind in ("rntk", "nngp"):
            return analytic_cross_gram(self.params, rows, cols, kind=self._analytic_kind)
        return baseline_cross_gram(self.params, rows, cols, pad_to=pad_to)


def _load_config(args, command):
    doc = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"{args.config}: invalid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise UsageError(f"{args.config}: config root must be a JSON object")
    for key, value in getattr(args, "overrides", {}).items():
        doc[key] = value
    if getattr(args, "kernel", None):
        # the flag replaces only the kind; other kernel keys stay
        doc["kernel"] = {**doc.get("kernel", {}), "kind": args.kernel}
    _validate(doc, COMMAND_SCHEMAS[command], "config")
    return doc


def _prepare_out(doc, command):
    out = doc.get("out", f"rntk-{command}")
    os.makedirs(out, exist_ok=True)
    return out


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                             for v in row])


def _json_ready(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else ("inf" if f > 0 else ("-inf" if f < 0 else "nan"))
    return obj


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_json_ready(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(out, command, config, outputs, started, extra=None):
    payload = {"command": command, "config": config,
               "outputs": sorted(os.path.basename(p) for p in outputs),
               "package_version": __version__,
               "wall_clock": {"started_unix": started,
                              "elapsed_seconds": time.time() - started}}
    if extra:
        payload.update(extra)
    path = os.path.join(out, "manifest.json")
    _write_json(path, payload)
    return path


# ----------------------------------------------------------- subcommands


def cmd_gram(args) -> int:
    started = time.time()
    doc = _load_config(args, "gram")
    kernel = _Kernel(doc.get("kernel", {}))
    out = _prepare_out(doc, "gram")
    seqs = [read_series_csv(p) for p in doc["inputs"]]
    if doc.get("normalize_inputs", False):
        seqs = normalize_sequences(seqs)
    ids = [os.path.basename(p) for p in doc["inputs"]]
    if len(set(ids)) != len(ids):
        ids = list(doc["inputs"])
    g = kernel.gram(seqs, ids=ids)
    paths = [os.path.join(out, "gram.csv"),
             os.path.join(out, "gram_precomputed.txt"),
             os.path.join(out, "gram.png")]
    g.to_csv(paths[0])
    g.to_precomputed(paths[1])
    plotting.save_gram_heatmap(g, paths[2])
    min_eig = g.min_eigenvalue()
    paths.append(_write_manifest(out, "gram", doc, paths, started,
                                 extra={"min_eigenvalue": min_eig,
                                        "kernel_descriptor": g.kernel_descriptor}))
    print(f"gram {g.size}x{g.size} min_eigenvalue {min_eig!r}")
    print(f"wrote {out}")
    return 0


def _make_task(task_doc, seed):
    doc = dict(task_doc or {})
    kind = doc.pop("kind", "sinusoid")
    if kind not in TASK_SCHEMAS:
        raise UsageError(
            f"task: unknown kind {kind!r}; expected one of {sorted(TASK_SCHEMAS)}")
    _validate({**doc, "kind": kind}, TASK_SCHEMAS[kind], "task")
    if kind == "sinusoid":
        return make_sinusoid_task(doc, seed=seed)
    path = doc.pop("path")
    split_index = doc.pop("split_index")
    return make_csv_task(path, split_index, doc, seed=seed)


def _cv_mse(kernel_values, targets, ridge_lambda, folds):
    """Mean squared validation error of kernel ridge over contiguous folds
    (deterministic, no shuffling). inf when any fold's solve fails, so grid
    search skips that candidate."""
    n = len(targets)
    parts = np.array_split(np.arange(n), min(folds, n))
    errors = []
    for val in parts:
        if len(val) == n:
            raise UsageError("folds leave an empty training set; lower folds or add data")
        tr = np.setdiff1d(np.arange(n), val)
        sub = kernel_values[np.ix_(tr, tr)]
        try:
            model = fit_ridge(GramMatrix(values=sub, ids=[str(i) for i in tr]),
                              targets[tr], ridge_lambda)
        except np.linalg.LinAlgError:
            return float("inf")
        preds = predict(model, kernel_values[np.ix_(val, tr)])
        errors.append(float(np.mean((preds - targets[val]) ** 2)))
    return float(np.mean(errors))


def cmd_regress(args) -> int:
    started = time.time()
    doc = _load_config(args, "regress")
    out = _prepare_out(doc, "regress")
    repeats = doc.get("repeats", 100)
    folds = doc.get("folds", 5)
    seed = doc.get("seed", 0)
    model_docs = doc.get("models", _default_models())
    groups = {}
    for entry in model_docs:
        kernel = _Kernel(entry["kernel"])
        lambdas = entry.get("ridge_lambdas", _DEFAULT_LAMBDAS)
        groups.setdefault(entry["name"], []).append((kernel, lambdas))
    names = list(groups)
    if doc.get("include_pts", True):
        names.append("pts")
    per_repeat = {name: [] for name in names}
    selections = {name: [] for name in names}
    for r in range(repeats):
        task = _make_task(doc.get("task"), seed=derive_seed(seed, "trials", r))
        train_raw, test_raw = task.train_sequences, task.test_sequences
        y_train, y_test = task.train_targets, task.test_targets
        train_x, test_x = train_raw, test_raw
        if doc.get("normalize_inputs", False):
            train_x, test_x = normalize_sequences(train_raw), normalize_sequences(test_raw)
        pad = max(s.shape[0] for s in train_x + test_x)
        for name, entries in groups.items():
            best = None
            for ei, (kernel, lambdas) in enumerate(entries):
                K = kernel.gram(train_x, pad_to=pad).values
                # descending so equal scores resolve to the stabler penalty
                for lam in sorted(lambdas, reverse=True):
                    mse = _cv_mse(K, y_train, lam, folds)
                    if best is None or mse < best[0] - 1e-12:
                        best = (mse, ei, lam, K)
            if best is None or not math.isfinite(best[0]):
                raise ArithmeticError(
                    f"model {name!r}: every (kernel, ridge_lambda) candidate failed "
                    "cross-validation; add larger ridge_lambdas")
            _, ei, lam, K = best
            kernel, lambdas = entries[ei]
            train_ids = [str(i) for i in range(len(y_train))]
            model = None
            for final_lam in [lam] + sorted([l for l in lambdas if l > lam]):
                try:
                    model = fit_ridge(GramMatrix(values=K, ids=train_ids), y_train, final_lam)
                    break
                except np.linalg.LinAlgError:
                    continue
            if model is None:
                raise ArithmeticError(
                    f"model {name!r}: final ridge solve failed at every candidate "
                    "penalty; add larger ridge_lambdas")
            preds = predict(model, kernel.cross(test_x, train_x, pad_to=pad))
            per_repeat[name].append(snr_db(y_test, preds))
            selections[name].append({"repeat": r, "entry": ei,
                                     "ridge_lambda": model.ridge_lambda})
        if "pts" in per_repeat:
            per_repeat["pts"].append(snr_db(y_test, last_value_predictions(test_raw)))
    summary = {}
    for name in names:
        vals = np.asarray(per_repeat[name])
        # an exact predictor yields inf SNR; its std is then nan, not an error
        with np.errstate(invalid="ignore"):
            summary[name] = {"snr_mean_db": float(np.mean(vals)),
                             "snr_std_db": float(np.std(vals)),
                             "snr_min_db": float(np.min(vals)),
                             "snr_max_db": float(np.max(vals))}
    paths = [os.path.join(out, "snr.csv"), os.path.join(out, "summary.csv"),
             os.path.join(out, "metrics.json"), os.path.join(out, "snr.png")]
    _write_csv(paths[0], ["model", "repeat", "snr_db"],
               [(name, r, float(v)) for name in names
                for r, v in enumerate(per_repeat[name])])
    _write_csv(paths[1], ["model", "snr_mean_db", "snr_std_db", "snr_min_db", "snr_max_db"],
               [(name, summary[name]["snr_mean_db"], summary[name]["snr_std_db"],
                 summary[name]["snr_min_db"], summary[name]["snr_max_db"])
                for name in names])
    _write_json(paths[2], {"models": {name: {**summary[name],
                                             "per_repeat_snr_db": per_repeat[name],
                                             "selections": selections[name]}
                                      for name in names},
                           "repeats": repeats})
    plotting.save_snr_bars(names, [summary[n]["snr_mean_db"] for n in names],
                           [summary[n]["snr_std_db"] for n in names], paths[3])
    paths.append(_write_manifest(out, "regress", doc, paths, started))
    for name in names:
        print(f"{name} snr_mean_db {summary[name]['snr_mean_db']!r}")
    print(f"wrote {out}")
    return 0


def cmd_sensitivity(args) -> int:
    started = time.time()
    doc = _load_config(args, "sensitivity")
    out = _prepare_out(doc, "sensitivity")
    T = doc.get("T", 100)
    profiles_doc = doc.get("profiles", [{"name": "s-relu", "kernel": {"kind": "rntk"}}])
    rows, rendered = [], []
    for pdoc in profiles_doc:
        kdoc = _validate_kernel(pdoc.get("kernel", {}), f"profiles/{pdoc['name']}/kernel")
        if kdoc["kind"] != "rntk":
            raise UsageError("sensitivity profiles require kernel kind 'rntk'")
        prof = sensitivity_profile(_rntk_params(kdoc), T, m=doc.get("m", 1),
                                   num_trials=doc.get("num_trials", 1000),
                                   seed=doc.get("seed", 0),
                                   fd_step=doc.get("fd_step", 1e-3))
        rendered.append((pdoc["name"], prof))
        rows.extend((pdoc["name"], t + 1, float(prof.raw[t]), float(prof.normalized[t]))
                    for t in range(prof.length))
        print(f"{pdoc['name']} argmax_step {prof.argmax_step()} "
              f"min_normalized {float(prof.normalized.min())!r}")
    paths = [os.path.join(out, "sensitivity.csv"), os.path.join(out, "sensitivity.png")]
    _write_csv(paths[0], ["profile", "t", "raw", "normalized"], rows)
    plotting.save_sensitivity_plot(rendered, paths[1])
    paths.append(_write_manifest(out, "sensitivity", doc, paths, started))
    print(f"wrote {out}")
    return 0


def cmd_converge(args) -> int:
    started = time.time()
    doc = _load_config(args, "converge")
    out = _prepare_out(doc, "converge")
    kdoc = _validate_kernel(doc.get("kernel", {"kind": "rntk"}))
    if kdoc["kind"] != "rntk":
        raise UsageError("converge requires kernel kind 'rntk'")
    report = convergence_experiment(_rntk_params(kdoc),
                                    widths=doc.get("widths", [64, 256, 1024]),
                                    num_pairs=doc.get("num_pairs", 20),
                                    T=doc.get("T", 5), m=doc.get("m", 1),
                                    seed=doc.get("seed", 0),
                                    tied=doc.get("tied", True))
    paths = [os.path.join(out, "convergence.csv"), os.path.join(out, "convergence.png")]
    _write_csv(paths[0], ["width", "median_rel_error"],
               list(zip(report.widths, [float(v) for v in report.median_rel_error])))
    plotting.save_convergence_plot(report, paths[1])
    paths.append(_write_manifest(out, "converge", doc, paths, started,
                                 extra={"slope": report.slope, "tied": report.tied}))
    print(f"slope {report.slope!r}")
    print(f"wrote {out}")
    return 0


def cmd_drift(args) -> int:
    started = time.time()
    doc = _load_config(args, "drift")
    out = _prepare_out(doc, "drift")
    kdoc = _validate_kernel(doc.get("kernel", {"kind": "rntk"}))
    if kdoc["kind"] != "rntk":
        raise UsageError("drift requires kernel kind 'rntk'")
    params = _rntk_params(kdoc)
    seed = doc.get("seed", 0)
    T, m = doc.get("T", 5), doc.get("m", 1)
    rng = substream(seed, "trials")
    dataset = [rng.standard_normal((T, m)) for _ in range(doc.get("num_sequences", 4))]
    targets = rng.standard_normal(len(dataset))
    reports = []
    for width in doc.get("widths", [64, 256]):
        rnn = FiniteRnn(width=width, input_dim=m, params=params,
                        seed=derive_seed(seed, "init", width))
        reports.append((width, drift_experiment(rnn, dataset, targets,
                                                lr=doc.get("lr"),
                                                steps=doc.get("steps", 100))))
    paths = [os.path.join(out, "drift.csv"), os.path.join(out, "drift.png")]
    _write_csv(paths[0],
               ["width", "param_drift_sup", "gram_drift_sup", "final_loss", "lr", "eta_star"],
               [(w, rep.param_drift_sup, rep.gram_drift_sup, rep.losses[-1],
                 rep.lr, rep.eta_star) for w, rep in reports])
    plotting.save_drift_plot(reports, paths[1])
    paths.append(_write_manifest(out, "drift", doc, paths, started))
    for w, rep in reports:
        print(f"width {w} param_drift_sup {rep.param_drift_sup!r} "
              f"gram_drift_sup {rep.gram_drift_sup!r}")
    print(f"wrote {out}")
    return 0


# ----------------------------------------------------------------- driver


def _add_common(sub):
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--out", help="output directory (overrides config)")
    sub.add_argument("--seed", type=int, help="top-level seed (overrides config)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rntk", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = subs.add_parser("gram", help="kernel matrix of input sequence CSVs")
    p.add_argument("inputs", nargs="*", help="sequence CSV files, one per sequence")
    p.add_argument("--kernel", choices=sorted(KERNEL_SCHEMAS),
                   help="kernel kind (overrides config)")
    _add_common(p)
    p.set_defaults(func=cmd_gram)

    p = subs.add_parser("regress", help="next-step kernel ridge regression")
    p.add_argument("--repeats", type=int, help="experiment repeats (overrides config)")
    _add_common(p)
    p.set_defaults(func=cmd_regress)

    p = subs.add_parser("sensitivity", help="input-sensitivity profile of the kernel")
    p.add_argument("--T", type=int, dest="T", help="sequence length (overrides config)")
    p.add_argument("--num-trials", type=int, help="Monte Carlo trials (overrides config)")
    _add_common(p)
    p.set_defaults(func=cmd_sensitivity)

    p = subs.add_parser("converge", help="finite-width kernel convergence sweep")
    p.add_argument("--widths", type=int, nargs="+", help="widths (overrides config)")
    _add_common(p)
    p.set_defaults(func=cmd_converge)

    p = subs.add_parser("drift", help="parameter/kernel drift during training")
    p.add_argument("--widths", type=int, nargs="+", help="widths (overrides config)")
    _add_common(p)
    p.set_defaults(func=cmd_drift)
    return parser


def _collect_overrides(args):
    """Flag values that override config keys; flags win over file values."""
    mapping = {}
    for key in ("out", "seed", "repeats", "T", "num_trials", "widths", "inputs"):
        value = getattr(args, key, None)
        if value is not None and value != []:
            mapping[key] = value
    return mapping


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_help(sys.stderr)
            return 2
        args.overrides = _collect_overrides(args)
        return args.func(args)
    except UsageError as exc:
        _emit_error(exc)
        return 2
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        # LinAlgError subclasses ValueError; numeric failures must map to 1
        _emit_error(exc)
        return 1
    except (ValueError, KeyError, TypeError, OSError) as exc:
        _emit_error(exc)
        return 2


def _emit_error(exc) -> None:
    sys.stderr.write(json.dumps(
        {"error": {"type": type(exc).__name__, "message": str(exc)}}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
