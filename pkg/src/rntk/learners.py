"""Kernel ridge models on precomputed Gram matrices, plus summary metrics.

Regression and one-hot classification share the same solver; Gram matrices
export to CSV and to the precomputed-kernel text format consumed by external
SVM tools.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.stats import rankdata


@dataclass
class GramMatrix:
    """Symmetric kernel matrix with row ids and a descriptor of its kernel."""

    values: np.ndarray
    ids: List[str]
    kernel_descriptor: str = ""
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError(f"gram must be square, got {self.values.shape}")
        if len(self.ids) != self.values.shape[0]:
            raise ValueError("ids length does not match matrix size")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("gram contains non-finite values")
        if not np.allclose(self.values, self.values.T, atol=1e-12, rtol=0.0):
            raise ValueError("gram is not symmetric within 1e-12")

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.values)[0])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id"] + self.ids)
            for rid, row in zip(self.ids, self.values):
                writer.writerow([rid] + [repr(float(v)) for v in row])

    def to_precomputed(self, path, labels=None) -> None:
        """One row per sample: `<label> 0:<row-index> 1:<k(x,x1)> ...`.

        Row indices are 1-based per the interchange convention; labels
        default to the stored ones, else 0.
        """
        lab = labels if labels is not None else self.labels
        lab = np.zeros(self.size) if lab is None else np.asarray(lab)
        if lab.shape[0] != self.size:
            raise ValueError("labels length does not match matrix size")
        with open(path, "w") as fh:
            for i, row in enumerate(self.values):
                feats = " ".join(f"{j + 1}:{v:.17g}" for j, v in enumerate(row))
                fh.write(f"{lab[i]:g} 0:{i + 1} {feats}\n")


@dataclass
class RidgeModel:
    alpha_coefficients: np.ndarray
    ridge_lambda: float
    train_ids: List[str] = field(default_factory=list)
    jitter_used: float = 0.0


def fit_ridge(gram: GramMatrix, targets, ridge_lambda: float = 0.0) -> RidgeModel:
    """Solve (K + lambda I) alpha = y by symmetric positive-definite solve.

    When lambda = 0 and the factorization fails at machine-precision
    semidefiniteness, retries once with a diagonal jitter of 1e-10 tr(K)/N
    (recorded on the model). A residual above 1e-8 ||y|| means the system is
    effectively singular and raises with a suggestion to increase lambda.
    """
    if ridge_lambda < 0:
        raise ValueError("ridge_lambda must be >= 0")
    K = gram.values
    y = np.asarray(targets, dtype=float)
    if y.shape[0] != gram.size:
        raise ValueError(f"targets length {y.shape[0]} does not match gram size {gram.size}")
    A = K + ridge_lambda * np.eye(gram.size)
    jitter = 0.0
    try:
        alpha = scipy.linalg.cho_solve(scipy.linalg.cho_factor(A, lower=True), y)
    except np.linalg.LinAlgError:
        if ridge_lambda > 0:
            raise
        jitter = 1e-10 * np.trace(K) / gram.size
        try:
            alpha = scipy.linalg.cho_solve(scipy.linalg.cho_factor(A + jitter * np.eye(gram.size), lower=True), y)
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError(
                "gram solve failed even with jitter; increase ridge_lambda"
            ) from None
    resid = np.linalg.norm(A @ alpha - y)
    if resid > 1e-8 * max(np.linalg.norm(y), 1e-300):
        raise np.linalg.LinAlgError(
            f"ill-conditioned gram solve (residual {resid:.2e}); increase ridge_lambda"
        )
    return RidgeModel(alpha_coefficients=alpha, ridge_lambda=float(ridge_lambda),
                      train_ids=list(gram.ids), jitter_used=jitter)


def predict(model: RidgeModel, cross_gram) -> np.ndarray:
    """predictions = cross_gram @ alpha; columns must follow train_ids order."""
    cg = np.asarray(cross_gram, dtype=float)
    n_train = model.alpha_coefficients.shape[0]
    if cg.ndim != 2 or cg.shape[1] != n_train:
        raise ValueError(f"cross gram must be (n_test, {n_train}), got {cg.shape}")
    return cg @ model.alpha_coefficients


def one_hot(labels):
    """(indicator matrix, class list) for integer or string labels."""
    classes = sorted(set(labels))
    index = {c: k for k, c in enumerate(classes)}
    Y = np.zeros((len(labels), len(classes)))
    for i, lab in enumerate(labels):
        Y[i, index[lab]] = 1.0
    return Y, classes


def decode_one_hot(scores, classes):
    scores = np.asarray(scores)
    return [classes[k] for k in np.argmax(scores, axis=1)]


def snr_db(targets, predictions) -> float:
    """10 log10(||signal||^2 / ||signal - prediction||^2); inf on zero residual."""
    y = np.asarray(targets, dtype=float)
    r = y - np.asarray(predictions, dtype=float)
    power, err = float(y @ y if y.ndim == 1 else (y * y).sum()), float((r * r).sum())
    if err == 0.0:
        return float("inf")
    return 10.0 * np.log10(power / err)


def last_value_predictions(windows) -> np.ndarray:
    """Previous-time-step baseline: predict the last observed value."""
    out = np.array([np.asarray(w)[-1] for w in windows])
    return out[:, 0] if out.ndim == 2 and out.shape[1] == 1 else out


@dataclass
class MetricsReport:
    model_names: List[str]
    mean_accuracy: np.ndarray
    std_accuracy: np.ndarray
    p90: np.ndarray
    p95: np.ndarray
    pma: np.ndarray
    friedman_rank: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "mean_accuracy", "std_accuracy", "p90", "p95", "pma", "friedman_rank"])
            for i, name in enumerate(self.model_names):
                writer.writerow([name] + [repr(col[i]) for col in
                                          (self.mean_accuracy, self.std_accuracy, self.p90,
                                           self.p95, self.pma, self.friedman_rank)])


def summarize_metrics(accuracy_table, model_names: Optional[Sequence[str]] = None) -> MetricsReport:
    """Per-model P90/P95/PMA and Friedman rank over a datasets-by-models table.

    P90 (P95) is the fraction of datasets where a model reaches 90% (95%) of
    the best accuracy on that dataset; PMA is the mean accuracy ratio to the
    best; the Friedman rank averages per-dataset ranks (1 = best, ties get
    the average rank).
    """
    table = np.asarray(accuracy_table, dtype=float)
    if table.ndim != 2 or table.size == 0:
        raise ValueError("accuracy table must be a nonempty 2-D array")
    if np.any(table < 0) or np.any(table > 1):
        raise ValueError("accuracies must lie in [0, 1]")
    n_data, n_models = table.shape
    if model_names is None:
        model_names = [f"model_{j}" for j in range(n_models)]
    if len(model_names) != n_models:
        raise ValueError("model_names length does not match table columns")
    best = table.max(axis=1, keepdims=True)
    if np.any(best == 0):
        raise ValueError("a dataset row is all zeros; ratios undefined")
    p90 = (table >= 0.9 * best).mean(axis=0)
    p95 = (table >= 0.95 * best).mean(axis=0)
    pma = (table / best).mean(axis=0)
    ranks = np.vstack([rankdata(-row, method="average") for row in table])
    return MetricsReport(
        model_names=list(model_names),
        mean_accuracy=table.mean(axis=0),
        std_accuracy=table.std(axis=0),
        p90=p90,
        p95=p95,
        pma=pma,
        friedman_rank=ranks.mean(axis=0),
    )
