"""Reference kernels for comparisons: RBF, polynomial, and the L-layer MLP NTK.

All three operate on sequences flattened to vectors. Unequal lengths are
zero-padded at the tail (preserving the time alignment of early steps) or
rejected, per the padding policy.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .core import BivariateCov, vphi, vphi_prime
from .learners import GramMatrix
from .params import RELU, as_sequence, as_sequences

PAD_POLICIES = ("zero_pad_to_max", "error_on_mismatch")


@dataclass(frozen=True)
class Rbf:
    """k(x, x2) = exp(-alpha |x - x2|^2)."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")

    name = "rbf"


@dataclass(frozen=True)
class Polynomial:
    """k(x, x2) = (offset + <x, x2>)^degree."""

    degree: int
    offset: float = 0.0

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise ValueError("degree must be an integer >= 1")
        if self.offset < 0:
            raise ValueError("offset must be >= 0")

    name = "poly"


@dataclass(frozen=True)
class MlpNtk:
    """NTK of an L-layer fully connected net on the flattened vector.

    sigma_v fixed to 1: the output layer only rescales the kernel.
    """

    depth: int
    sigma_w: float
    sigma_b: float = 0.0
    activation: object = RELU

    def __post_init__(self):
        if int(self.depth) != self.depth or self.depth < 1:
            raise ValueError("depth must be an integer >= 1")
        if not self.sigma_w > 0:
            raise ValueError("sigma_w must be > 0")
        if self.sigma_b < 0:
            raise ValueError("sigma_b must be >= 0")

    name = "mlp-ntk"


@dataclass(frozen=True)
class BaselineParams:
    kind: object
    padding: str = "zero_pad_to_max"

    def __post_init__(self):
        if not isinstance(self.kind, (Rbf, Polynomial, MlpNtk)):
            raise TypeError(f"kind must be Rbf, Polynomial or MlpNtk, got {self.kind!r}")
        if self.padding not in PAD_POLICIES:
            raise ValueError(f"padding must be one of {PAD_POLICIES}, got {self.padding!r}")

    def descriptor(self) -> str:
        return f"{self.kind.name}[{self.kind} padding={self.padding}]"


def _flatten_padded(params: BaselineParams, seqs: List[np.ndarray],
                    pad_to: Optional[int] = None) -> np.ndarray:
    """(N, pad_to * m) matrix of tail-zero-padded flattened sequences.

    The MLP NTK divides by the padded dimension, so pad_to must be shared
    across every Gram/cross block that will be compared or solved together.
    """
    lengths = {s.shape[0] for s in seqs}
    if params.padding == "error_on_mismatch" and len(lengths) > 1:
        raise ValueError(
            f"sequences have different lengths {sorted(lengths)} and padding "
            "policy is error_on_mismatch")
    longest = max(lengths)
    if pad_to is None:
        pad_to = longest
    if pad_to < longest:
        raise ValueError(f"pad_to={pad_to} is shorter than the longest sequence ({longest})")
    m = seqs[0].shape[1]
    out = np.zeros((len(seqs), pad_to * m))
    for i, s in enumerate(seqs):
        out[i, :s.size] = s.ravel()
    return out


def _rbf_block(kind: Rbf, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    sq = (X * X).sum(axis=1)[:, None] + (Y * Y).sum(axis=1)[None, :] - 2.0 * (X @ Y.T)
    return np.exp(-kind.alpha * np.maximum(sq, 0.0))


def _poly_block(kind: Polynomial, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return (kind.offset + X @ Y.T) ** kind.degree


def _mlp_ntk_block(kind: MlpNtk, X: np.ndarray, Y: np.ndarray):
    """(ntk, nngp) blocks via the layer recursion, vectorized over all pairs.

    sig holds the pre-activation covariance per layer; the backward factor
    telescopes products of vphi_prime down from the output.
    """
    D = X.shape[1]
    sw2, sb2 = kind.sigma_w**2, kind.sigma_b**2
    act = kind.activation
    cross = sw2 * (X @ Y.T) / D + sb2
    self_x = sw2 * (X * X).sum(axis=1) / D + sb2
    self_y = sw2 * (Y * Y).sum(axis=1) / D + sb2
    sig_cross, sig_x, sig_y = [cross], [self_x], [self_y]
    for _ in range(1, kind.depth):
        cov = BivariateCov(sig_x[-1][:, None], sig_y[-1][None, :], sig_cross[-1])
        sig_cross.append(sw2 * vphi(act, cov) + sb2)
        sig_x.append(sw2 * vphi(act, BivariateCov(sig_x[-1], sig_x[-1], sig_x[-1])) + sb2)
        sig_y.append(sw2 * vphi(act, BivariateCov(sig_y[-1], sig_y[-1], sig_y[-1])) + sb2)
    covs = [BivariateCov(kx[:, None], ky[None, :], kc)
            for kx, ky, kc in zip(sig_x, sig_y, sig_cross)]
    nngp = vphi(act, covs[-1])  # sigma_v = 1
    back = vphi_prime(act, covs[-1])
    ntk = sig_cross[-1] * back
    for l in range(kind.depth - 2, -1, -1):
        back = back * sw2 * vphi_prime(act, covs[l])
        ntk += sig_cross[l] * back
    return ntk + nngp, nngp


def _block(params: BaselineParams, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    if isinstance(params.kind, Rbf):
        return _rbf_block(params.kind, X, Y)
    if isinstance(params.kind, Polynomial):
        return _poly_block(params.kind, X, Y)
    return _mlp_ntk_block(params.kind, X, Y)[0]


def baseline_pair(params: BaselineParams, x, x2, pad_to: Optional[int] = None) -> float:
    """Scalar kernel value for one pair of sequences."""
    seqs = [as_sequence(x, "x"), as_sequence(x2, "x2")]
    if seqs[0].shape[1] != seqs[1].shape[1]:
        raise ValueError("input dimension mismatch")
    X = _flatten_padded(params, seqs, pad_to)
    return float(_block(params, X[:1], X[1:])[0, 0])


def baseline_gram(params: BaselineParams, dataset, ids=None,
                  pad_to: Optional[int] = None) -> GramMatrix:
    seqs = as_sequences(dataset)
    X = _flatten_padded(params, seqs, pad_to)
    mat = _block(params, X, X)
    mat = (mat + mat.T) / 2.0  # kill float asymmetry from the matmul
    return GramMatrix(values=mat, ids=list(ids) if ids is not None else
                      [str(i) for i in range(len(seqs))],
                      kernel_descriptor=params.descriptor())


def baseline_cross_gram(params: BaselineParams, rows, cols,
                        pad_to: Optional[int] = None) -> np.ndarray:
    rows = as_sequences(rows, "rows")
    cols = as_sequences(cols, "cols")
    if rows[0].shape[1] != cols[0].shape[1]:
        raise ValueError("rows and cols have different input dimensions")
    if pad_to is None:
        pad_to = max(s.shape[0] for s in rows + cols)
    X = _flatten_padded(params, rows, pad_to)
    Y = _flatten_padded(params, cols, pad_to)
    return _block(params, X, Y)
