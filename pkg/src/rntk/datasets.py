"""Windowed next-step regression tasks: a noisy sinusoid generator and CSV
ingestion, both emitting variable-length windows with replayable manifests."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .rng import substream

SINUSOID_POINTS = 1000

_SINUSOID_DEFAULTS = {
    "T_fixed": 10,
    "T_var": 10,
    "noise_sigma": 0.05,
    "N_train": 20,
    "N_test": 5000,
    "seed": 0,
}

# CSV test regions are usually short, so the test count default is modest.
_CSV_DEFAULTS = {
    "T_fixed": 10,
    "T_var": 10,
    "N_train": 20,
    "N_test": 100,
    "seed": 0,
    "standardize": True,
}


@dataclass(frozen=True)
class WindowedRegressionTask:
    """Windows of a single series paired with the observation that follows
    each window. The manifest carries everything needed to rebuild the task
    without re-drawing randomness."""

    train: List[Tuple[np.ndarray, float]]
    test: List[Tuple[np.ndarray, float]]
    generator_config: Dict
    manifest: Dict = field(default_factory=dict)

    def __post_init__(self):
        lo = self.generator_config["T_fixed"]
        hi = lo + self.generator_config["T_var"]
        for name, split in (("train", self.train), ("test", self.test)):
            for i, (seq, _) in enumerate(split):
                if not lo <= seq.shape[0] <= hi:
                    raise ValueError(
                        f"{name}[{i}] has length {seq.shape[0]}, outside [{lo}, {hi}]")

    @property
    def train_sequences(self) -> List[np.ndarray]:
        return [s for s, _ in self.train]

    @property
    def train_targets(self) -> np.ndarray:
        return np.asarray([t for _, t in self.train])

    @property
    def test_sequences(self) -> List[np.ndarray]:
        return [s for s, _ in self.test]

    @property
    def test_targets(self) -> np.ndarray:
        return np.asarray([t for _, t in self.test])

    def save_manifest(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _merge_config(defaults: Dict, config: Optional[Dict], overrides: Dict) -> Dict:
    merged = dict(defaults)
    for source in (config or {}), overrides:
        for key, value in source.items():
            if key not in defaults:
                raise ValueError(f"unknown config key {key!r}; valid keys: {sorted(defaults)}")
            merged[key] = value
    if merged["T_fixed"] < 1:
        raise ValueError("T_fixed must be >= 1")
    if merged["T_var"] < 0:
        raise ValueError("T_var must be >= 0")
    if merged["N_train"] < 1 or merged["N_test"] < 0:
        raise ValueError("N_train must be >= 1 and N_test >= 0")
    return merged


def _draw_windows(rng: np.random.Generator, lo: int, hi: int, count: int,
                  t_fixed: int, t_var: int) -> List[Tuple[int, int]]:
    """(start, length) pairs with the window and its target inside [lo, hi).

    Start and length are drawn uniformly; draws whose target index would
    reach hi are rejected and redrawn, so windows never cross the boundary.
    """
    if hi - lo < t_fixed + 1:
        raise ValueError(
            f"region [{lo}, {hi}) is too short for a length-{t_fixed} window plus target")
    windows: List[Tuple[int, int]] = []
    misses = 0
    while len(windows) < count:
        start = int(rng.integers(lo, hi))
        length = int(rng.integers(t_fixed, t_fixed + t_var + 1))
        if start + length < hi:
            windows.append((start, length))
            misses = 0
        else:
            misses += 1
            if misses > 100000:
                raise ValueError(f"could not fit a window in [{lo}, {hi}) after {misses} draws")
    return windows


def _slice_windows(series: np.ndarray, windows: Sequence[Tuple[int, int]]):
    out = []
    univariate = series.shape[1] == 1
    for start, length in windows:
        target = series[start + length]
        out.append((series[start:start + length].copy(),
                    float(target[0]) if univariate else target.copy()))
    return out


def _sinusoid_series(noise_sigma: float, seed: int) -> np.ndarray:
    grid = np.arange(SINUSOID_POINTS) / SINUSOID_POINTS
    series = np.sin(2.0 * np.pi * grid)
    if noise_sigma > 0:
        series = series + noise_sigma * substream(seed, "windows", 0).standard_normal(
            SINUSOID_POINTS)
    return series[:, None]


def make_sinusoid_task(config: Optional[Dict] = None, **overrides) -> WindowedRegressionTask:
    """One noisy period of a sinusoid, windowed for next-step prediction.

    The series is sin over SINUSOID_POINTS uniform samples of one period plus
    N(0, noise_sigma^2) noise. Train and test windows are drawn independently
    (uniform start, uniform length in [T_fixed, T_fixed + T_var]) from the
    same series.
    """
    cfg = _merge_config(_SINUSOID_DEFAULTS, config, overrides)
    if not cfg["noise_sigma"] >= 0:
        raise ValueError("noise_sigma must be >= 0")
    series = _sinusoid_series(cfg["noise_sigma"], cfg["seed"])
    train_w = _draw_windows(substream(cfg["seed"], "windows", 1), 0, SINUSOID_POINTS,
                            cfg["N_train"], cfg["T_fixed"], cfg["T_var"])
    test_w = _draw_windows(substream(cfg["seed"], "windows", 2), 0, SINUSOID_POINTS,
                           cfg["N_test"], cfg["T_fixed"], cfg["T_var"])
    manifest = {"kind": "sinusoid", "config": cfg, "series_points": SINUSOID_POINTS,
                "train_windows": [list(w) for w in train_w],
                "test_windows": [list(w) for w in test_w]}
    return WindowedRegressionTask(train=_slice_windows(series, train_w),
                                  test=_slice_windows(series, test_w),
                                  generator_config=cfg, manifest=manifest)


def read_series_csv(path) -> np.ndarray:
    """(N, m) series from a CSV with one column per input dimension and an
    optional single header line. Raises with the 1-based line number of the
    first malformed row."""
    rows: List[List[float]] = []
    width = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            cells = [c.strip() for c in line.split(",")]
            try:
                values = [float(c) for c in cells]
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header
                raise ValueError(f"{path}: line {lineno}: could not parse {line!r}") from None
            if not all(np.isfinite(values)):
                raise ValueError(f"{path}: line {lineno}: non-finite value in {line!r}")
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ValueError(
                    f"{path}: line {lineno}: expected {width} columns, got {len(values)}")
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)


def _standardize(series: np.ndarray, split_index: int):
    """Column means/stds from the train region applied to the whole series.
    Near-constant columns keep scale 1 to avoid dividing by ~0."""
    train_region = series[:split_index]
    mean = train_region.mean(axis=0)
    std = train_region.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return (series - mean) / std, mean, std


def make_csv_task(path, split_index: int, config: Optional[Dict] = None,
                  **overrides) -> WindowedRegressionTask:
    """Next-step windows from a CSV series: train windows (and their targets)
    live entirely before split_index, test windows entirely at or after it."""
    cfg = _merge_config(_CSV_DEFAULTS, config, overrides)
    series = read_series_csv(path)
    n = series.shape[0]
    if not 0 < split_index < n:
        raise ValueError(f"split_index must be in (0, {n}), got {split_index}")
    mean = np.zeros(series.shape[1])
    std = np.ones(series.shape[1])
    if cfg["standardize"]:
        series, mean, std = _standardize(series, split_index)
    train_w = _draw_windows(substream(cfg["seed"], "windows", 1), 0, split_index,
                            cfg["N_train"], cfg["T_fixed"], cfg["T_var"])
    test_w = _draw_windows(substream(cfg["seed"], "windows", 2), split_index, n,
                           cfg["N_test"], cfg["T_fixed"], cfg["T_var"]) if cfg["N_test"] else []
    manifest = {"kind": "csv", "config": cfg, "path": str(path),
                "split_index": int(split_index),
                "standardization": {"mean": mean.tolist(), "std": std.tolist()},
                "train_windows": [list(w) for w in train_w],
                "test_windows": [list(w) for w in test_w]}
    return WindowedRegressionTask(train=_slice_windows(series, train_w),
                                  test=_slice_windows(series, test_w),
                                  generator_config=cfg, manifest=manifest)


def replay_task(manifest: Dict, path=None) -> WindowedRegressionTask:
    """Rebuild a task from its manifest using the recorded window indices
    (no redrawing). For CSV tasks, path overrides the recorded file path."""
    cfg = dict(manifest["config"])
    if manifest["kind"] == "sinusoid":
        series = _sinusoid_series(cfg["noise_sigma"], cfg["seed"])
    elif manifest["kind"] == "csv":
        series = read_series_csv(path if path is not None else manifest["path"])
        if cfg["standardize"]:
            series, _, _ = _standardize(series, manifest["split_index"])
    else:
        raise ValueError(f"unknown task kind {manifest['kind']!r}")
    windows = {name: [tuple(w) for w in manifest[name]]
               for name in ("train_windows", "test_windows")}
    return WindowedRegressionTask(train=_slice_windows(series, windows["train_windows"]),
                                  test=_slice_windows(series, windows["test_windows"]),
                                  generator_config=cfg, manifest=manifest)


def load_task_manifest(path) -> Dict:
    with open(path) as fh:
        return json.load(fh)


def normalize_sequences(dataset: Sequence[np.ndarray]) -> List[np.ndarray]:
    """Scale each sequence so its flattened Euclidean norm is 1."""
    out = []
    for i, seq in enumerate(dataset):
        arr = np.asarray(seq, dtype=float)
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise ValueError(f"dataset[{i}] is all zeros and cannot be normalized")
        out.append(arr / norm)
    return out
