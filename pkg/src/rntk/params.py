"""Shared parameter and sequence types for the recurrent kernels.

An input sequence is a (T, m) float array: T time steps of m-dimensional
observations. Kernel hyperparameters live in RntkParams and are shared
between the analytic recursions and the finite-width networks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence as Seq, Tuple, Union

import numpy as np


class Relu:
    """max(z, 0); derivative at 0 defined as 0."""

    name = "relu"

    def __repr__(self):
        return "Relu()"


class Erf:
    """Gauss error function activation."""

    name = "erf"

    def __repr__(self):
        return "Erf()"


@dataclass(frozen=True)
class Custom:
    """Monte Carlo activation: expectations estimated by sampling.

    fn maps arrays of pre-activations to activations; deriv is its pointwise
    derivative (required only for vphi_prime). Estimates reuse one fixed seed
    per call, so kernels built from a Custom activation are reproducible.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    deriv: Optional[Callable[[np.ndarray], np.ndarray]] = None
    mc_samples: int = 1_000_000
    seed: int = 0
    name: str = "custom"

    def __post_init__(self):
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")


Activation = Union[Relu, Erf, Custom]

RELU = Relu()
ERF = Erf()


def activation_from_name(name: str) -> Activation:
    if name == "relu":
        return RELU
    if name == "erf":
        return ERF
    raise ValueError(f"unknown activation {name!r} (expected 'relu' or 'erf')")


@dataclass(frozen=True)
class RntkParams:
    """Initialization scales and architecture for the recurrent kernel.

    sigma_w: recurrent-weight std      sigma_u: input-weight std
    sigma_b: bias std                  sigma_h: initial-state std
    sigma_v: readout std               depth: number of stacked layers L
    per_layer_overrides: optional per-layer (sigma_w, sigma_u, sigma_b)
    tuples, one per layer; default is shared values across layers.
    """

    sigma_w: float
    sigma_u: float
    sigma_b: float = 0.0
    sigma_h: float = 0.0
    sigma_v: float = 1.0
    depth: int = 1
    activation: Activation = field(default_factory=lambda: RELU)
    per_layer_overrides: Optional[Tuple[Tuple[float, float, float], ...]] = None

    def __post_init__(self):
        for nm in ("sigma_w", "sigma_u", "sigma_v"):
            if not getattr(self, nm) > 0:
                raise ValueError(f"{nm} must be > 0")
        for nm in ("sigma_b", "sigma_h"):
            if getattr(self, nm) < 0:
                raise ValueError(f"{nm} must be >= 0")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.per_layer_overrides is not None:
            ov = tuple(tuple(float(v) for v in layer) for layer in self.per_layer_overrides)
            if len(ov) != self.depth:
                raise ValueError("per_layer_overrides must have exactly `depth` entries")
            if any(len(layer) != 3 for layer in ov):
                raise ValueError("each per-layer override is (sigma_w, sigma_u, sigma_b)")
            if any(layer[0] <= 0 or layer[1] <= 0 or layer[2] < 0 for layer in ov):
                raise ValueError("per-layer sigma_w, sigma_u must be > 0 and sigma_b >= 0")
            object.__setattr__(self, "per_layer_overrides", ov)

    def layer_sigmas(self, layer: int) -> Tuple[float, float, float]:
        """(sigma_w, sigma_u, sigma_b) for 0-based layer index."""
        if not 0 <= layer < self.depth:
            raise IndexError(f"layer {layer} out of range for depth {self.depth}")
        if self.per_layer_overrides is not None:
            return self.per_layer_overrides[layer]
        return (self.sigma_w, self.sigma_u, self.sigma_b)


def relu_reference_params(**overrides) -> RntkParams:
    """ReLU defaults (sigma_w, sigma_u, sigma_b, sigma_h) = (sqrt 2, 1, 0, 0)."""
    kw = dict(sigma_w=math.sqrt(2.0), sigma_u=1.0, sigma_b=0.0, sigma_h=0.0,
              sigma_v=1.0, activation=RELU)
    kw.update(overrides)
    return RntkParams(**kw)


def erf_reference_params(**overrides) -> RntkParams:
    """erf defaults (sigma_w, sigma_u, sigma_b, sigma_h) = (1, 0.01, 0.05, 0)."""
    kw = dict(sigma_w=1.0, sigma_u=0.01, sigma_b=0.05, sigma_h=0.0,
              sigma_v=1.0, activation=ERF)
    kw.update(overrides)
    return RntkParams(**kw)


def as_sequence(x, name: str = "sequence") -> np.ndarray:
    """Validate and return a (T, m) float64 array; 1-D input becomes (T, 1)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be (T, m), got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have T >= 1 and m >= 1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_sequences(xs: Seq, name: str = "dataset") -> list:
    """Validate a nonempty list of sequences sharing one input dimension m."""
    if len(xs) == 0:
        raise ValueError(f"{name} is empty")
    out = [as_sequence(x, f"{name}[{i}]") for i, x in enumerate(xs)]
    m = out[0].shape[1]
    for i, arr in enumerate(out):
        if arr.shape[1] != m:
            raise ValueError(f"{name}[{i}] has m={arr.shape[1]}, expected {m}")
    return out
