"""Analytic recurrent kernels for pairs of variable-length sequences.

Computes the recurrent tangent kernel theta and the recurrent NNGP kernel for
single- or multi-layer simple RNNs in the infinite-width limit, via the
forward covariance recursion (Sigma tables), its backward companion (Pi), and
the bivariate Gaussian expectation operators vphi / vphi_prime.

Both recursions only ever touch the tau-offset diagonal of the (t, t') grid,
where tau is the length difference of the pair, so the production path
(rntk_pair, gram, cross_gram) walks that diagonal with batched array ops.
forward_table / backward_table fill the full grids with plain loops; they are
the readable reference implementation and the diagnostics surface, and the
test suite pins the fast path to them.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional, Sequence as Seq

import numpy as np

from .learners import GramMatrix
from .parallel import thread_map
from .params import Custom, Erf, Relu, RntkParams, as_sequence, as_sequences

TWO_PI = 2.0 * np.pi


class BivariateCov(NamedTuple):
    """Covariance of a bivariate Gaussian (z1, z2): variances k1, k2, cov k3.

    Fields may be scalars or broadcastable arrays; k3 is clamped to the PSD
    interval [-sqrt(k1 k2), sqrt(k1 k2)] before use.
    """

    k1: object
    k2: object
    k3: object


@dataclass(frozen=True)
class KernelOutput:
    """theta: tangent-kernel value; nngp: output GP kernel value.

    pi_trace, when requested, holds the (depth, T) grid of backward factors
    Pi along the tau-offset diagonal, T being the shorter length.
    """

    theta: float
    nngp: float
    pi_trace: Optional[np.ndarray] = None


@dataclass(frozen=True)
class KernelTable:
    """Full forward covariance grids for one ordered pair (x, x2).

    cross[l, i, j] = Sigma^(l+1, i+1, j+1)(x, x2); diag1 and diag2 hold the
    same-sequence diagonals Sigma^(l+1, t, t)(x, x) and (x2, x2). The 2x2
    matrices K^(l, t, t') consumed by the V-operators are assembled from
    entries at (t-1, t'-1), so these grids are everything the output kernel
    and the backward recursion need.
    """

    cross: np.ndarray
    diag1: np.ndarray
    diag2: np.ndarray
    equal_inputs: bool

    @property
    def depth(self) -> int:
        return self.cross.shape[0]

    @property
    def lengths(self):
        return self.cross.shape[1], self.cross.shape[2]


def _clamped(cov: BivariateCov):
    k1 = np.maximum(np.asarray(cov.k1, dtype=float), 0.0)
    k2 = np.maximum(np.asarray(cov.k2, dtype=float), 0.0)
    lim = np.sqrt(k1 * k2)
    k3 = np.clip(np.asarray(cov.k3, dtype=float), -lim, lim)
    return k1, k2, k3, lim


def _relu_vphi(k1, k2, k3):
    lim = np.sqrt(k1 * k2)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(lim > 0, k3 / np.where(lim > 0, lim, 1.0), 0.0)
    c = np.clip(c, -1.0, 1.0)
    return (c * (np.pi - np.arccos(c)) + np.sqrt(1.0 - c * c)) * lim / TWO_PI


def _relu_vphi_prime(k1, k2, k3):
    lim = np.sqrt(k1 * k2)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(lim > 0, k3 / np.where(lim > 0, lim, 1.0), 0.0)
    c = np.clip(c, -1.0, 1.0)
    out = (np.pi - np.arccos(c)) / TWO_PI
    # zero-variance limit: both variances 0 -> 0; exactly one 0 -> the c=0 value
    return np.where((k1 == 0) & (k2 == 0), 0.0, out)


def _erf_vphi(k1, k2, k3):
    den = np.sqrt((1.0 + 2.0 * k1) * (1.0 + 2.0 * k2))
    return (2.0 / np.pi) * np.arcsin(np.clip(2.0 * k3 / den, -1.0, 1.0))


def _erf_vphi_prime(k1, k2, k3):
    rad = (1.0 + 2.0 * k1) * (1.0 + 2.0 * k2) - 4.0 * k3 * k3
    if np.any(rad <= 0):
        raise ValueError("erf vphi_prime radicand <= 0 after clamping; covariance is not PSD")
    return 4.0 / (np.pi * np.sqrt(rad))


def _custom_expect(act: Custom, fn, k1, k2, k3):
    rng = np.random.default_rng(act.seed)
    eps = rng.standard_normal((2, act.mc_samples))
    k1b, k2b, k3b = np.broadcast_arrays(
        np.asarray(k1, dtype=float), np.asarray(k2, dtype=float), np.asarray(k3, dtype=float)
    )
    k1f, k2f, k3f = k1b.ravel(), k2b.ravel(), k3b.ravel()
    out = np.empty(k1f.shape)
    for i in range(k1f.size):
        a, b, c = k1f[i], k2f[i], k3f[i]
        l11 = np.sqrt(a)
        l21 = c / l11 if l11 > 0 else 0.0
        l22 = np.sqrt(max(b - l21 * l21, 0.0))
        z1 = l11 * eps[0]
        z2 = l21 * eps[0] + l22 * eps[1]
        out[i] = np.mean(fn(z1) * fn(z2))
    return out.reshape(k1b.shape) if k1b.shape else float(out[0])


def _vphi_fn(act):
    if isinstance(act, Relu):
        return _relu_vphi
    if isinstance(act, Erf):
        return _erf_vphi
    if isinstance(act, Custom):
        return lambda k1, k2, k3: _custom_expect(act, act.fn, k1, k2, k3)
    raise TypeError(f"unsupported activation {act!r}")


def _vphi_prime_fn(act):
    if isinstance(act, Relu):
        return _relu_vphi_prime
    if isinstance(act, Erf):
        return _erf_vphi_prime
    if isinstance(act, Custom):
        if act.deriv is None:
            raise ValueError("Custom activation needs `deriv` for vphi_prime")
        return lambda k1, k2, k3: _custom_expect(act, act.deriv, k1, k2, k3)
    raise TypeError(f"unsupported activation {act!r}")


def vphi(activation, cov: BivariateCov):
    """E[phi(z1) phi(z2)] for (z1, z2) ~ N(0, [[k1, k3], [k3, k2]])."""
    k1, k2, k3, _ = _validated_cov(cov)
    return _vphi_fn(activation)(k1, k2, k3)


def vphi_prime(activation, cov: BivariateCov):
    """E[phi'(z1) phi'(z2)] under the same law as vphi."""
    k1, k2, k3, _ = _validated_cov(cov)
    return _vphi_prime_fn(activation)(k1, k2, k3)


def _validated_cov(cov: BivariateCov):
    for nm, val in zip(("k1", "k2", "k3"), cov):
        if not np.all(np.isfinite(np.asarray(val, dtype=float))):
            raise ValueError(f"non-finite covariance entry {nm}")
    return _clamped(cov)


# ---------------------------------------------------------------------------
# batched tau-offset engine


def _layer_scales(params: RntkParams):
    return [tuple(s * s for s in params.layer_sigmas(l)) for l in range(params.depth)]


def _offset_tables(params: RntkParams, xb: np.ndarray, x2b: np.ndarray, eq: np.ndarray):
    """Diagonal Sigma tracks for a batch of same-shape pairs.

    xb: (B, T, m), x2b: (B2, T2, m) with T <= T2 and B2 in {1, B}; eq marks
    element-wise-identical pairs. Returns per-layer lists a (B, T), a2
    (B2, T2), s (B, T): the two self tracks and the tau-offset cross track.
    """
    v = _vphi_fn(params.activation)
    T, m = xb.shape[1], xb.shape[2]
    T2 = x2b.shape[1]
    tau = T2 - T
    sh2 = params.sigma_h**2
    eqf = eq.astype(float)
    ip1 = np.einsum("btm,btm->bt", xb, xb)
    ip2 = np.einsum("btm,btm->bt", x2b, x2b)
    ipc = (xb * x2b[:, tau:tau + T, :]).sum(axis=2)

    a_layers: List[np.ndarray] = []
    a2_layers: List[np.ndarray] = []
    s_layers: List[np.ndarray] = []
    scales = _layer_scales(params)
    for l in range(params.depth):
        sw2, su2, sb2 = scales[l]
        a = np.empty_like(ip1)
        a2 = np.empty_like(ip2)
        s = np.empty_like(ipc)
        if l == 0:
            in_a, in_a2, in_c = su2 / m * ip1, su2 / m * ip2, su2 / m * ipc
        else:
            pa, pa2, ps = a_layers[l - 1], a2_layers[l - 1], s_layers[l - 1]
            in_a, in_a2 = su2 * v(pa, pa, pa), su2 * v(pa2, pa2, pa2)
            in_c = su2 * v(pa, pa2[:, tau:tau + T], ps)
        a[:, 0] = sw2 * sh2 + in_a[:, 0] + sb2
        a2[:, 0] = sw2 * sh2 + in_a2[:, 0] + sb2
        s[:, 0] = (sw2 * sh2 * eqf if tau == 0 else 0.0) + in_c[:, 0] + sb2
        for t in range(1, T2):
            a2[:, t] = sw2 * v(a2[:, t - 1], a2[:, t - 1], a2[:, t - 1]) + in_a2[:, t] + sb2
        for t in range(1, T):
            a[:, t] = sw2 * v(a[:, t - 1], a[:, t - 1], a[:, t - 1]) + in_a[:, t] + sb2
            s[:, t] = sw2 * v(a[:, t - 1], a2[:, t - 1 + tau], s[:, t - 1]) + in_c[:, t] + sb2
        a_layers.append(a)
        a2_layers.append(a2)
        s_layers.append(s)
    return a_layers, a2_layers, s_layers


def _theta_nngp(params: RntkParams, a_layers, a2_layers, s_layers):
    """Assemble theta, nngp, and the Pi diagonal from the offset tracks."""
    v = _vphi_fn(params.activation)
    vp = _vphi_prime_fn(params.activation)
    L = params.depth
    T = a_layers[0].shape[1]
    T2 = a2_layers[0].shape[1]
    tau = T2 - T
    sv2 = params.sigma_v**2
    scales = _layer_scales(params)

    nngp = sv2 * v(a_layers[-1][:, T - 1], a2_layers[-1][:, T2 - 1], s_layers[-1][:, T - 1])
    vpv = [vp(a_layers[l], a2_layers[l][:, tau:tau + T], s_layers[l]) for l in range(L)]
    B = np.broadcast(a_layers[0][:, :1], a2_layers[0][:, :1]).shape[0]
    p = [np.empty((B, T)) for _ in range(L)]
    p[L - 1][:, T - 1] = sv2 * vpv[L - 1][:, T - 1]
    sw2_top = scales[L - 1][0]
    for t in range(T - 2, -1, -1):
        p[L - 1][:, t] = sw2_top * vpv[L - 1][:, t] * p[L - 1][:, t + 1]
    for l in range(L - 2, -1, -1):
        sw2_l = scales[l][0]
        su2_up = scales[l + 1][1]
        p[l][:, T - 1] = su2_up * vpv[l][:, T - 1] * p[l + 1][:, T - 1]
        for t in range(T - 2, -1, -1):
            p[l][:, t] = vpv[l][:, t] * (sw2_l * p[l][:, t + 1] + su2_up * p[l + 1][:, t])
    theta = nngp + sum((p[l] * s_layers[l]).sum(axis=1) for l in range(L))
    return theta, nngp, p


def _batch_pair_kernel(params: RntkParams, xb, x2b, eq):
    """(theta, nngp, pi) for batched pairs; caller guarantees T <= T2."""
    a, a2, s = _offset_tables(params, xb, x2b, eq)
    return _theta_nngp(params, a, a2, s)


# ---------------------------------------------------------------------------
# public pair and Gram surface


def rntk_pair(params: RntkParams, x, x2, want_pi_trace: bool = False) -> KernelOutput:
    """Tangent and NNGP kernel values for one pair of sequences.

    Symmetric in (x, x2); the pair is internally ordered so the shorter
    sequence comes first. pi_trace, when requested, is indexed by (layer,
    step of the shorter sequence).
    """
    x = as_sequence(x, "x")
    x2 = as_sequence(x2, "x2")
    if x.shape[1] != x2.shape[1]:
        raise ValueError(f"input dimension mismatch: {x.shape[1]} vs {x2.shape[1]}")
    if x.shape[0] > x2.shape[0]:
        x, x2 = x2, x
    eq = np.array([np.array_equal(x, x2)])
    theta, nngp, p = _batch_pair_kernel(params, x[None], x2[None], eq)
    out = KernelOutput(
        theta=float(theta[0]),
        nngp=float(nngp[0]),
        pi_trace=np.vstack([row[0] for row in p]) if want_pi_trace else None,
    )
    if not (np.isfinite(out.theta) and np.isfinite(out.nngp)):
        raise ArithmeticError("kernel recursion produced non-finite values (overflow?)")
    return out


def _pair_custom_seed(base_seed: int, i: int, j: int) -> int:
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(i), int(j)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _params_for_pair(params: RntkParams, i: int, j: int) -> RntkParams:
    """Custom activations get a per-pair substream seed so Gram assembly is
    deterministic regardless of evaluation order."""
    act = params.activation
    if isinstance(act, Custom):
        return replace(params, activation=replace(act, seed=_pair_custom_seed(act.seed, i, j)))
    return params


def _grouped_pair_values(params: RntkParams, rows, cols, pairs, kind: str) -> dict:
    """Kernel values for explicit (i, j) index pairs; batched by shape."""
    sel = 0 if kind == "theta" else 1
    values = {}
    if isinstance(params.activation, Custom):
        def one(pair):
            i, j = pair
            out = rntk_pair(_params_for_pair(params, i, j), rows[i], cols[j])
            return (out.theta, out.nngp)[sel]

        for pair, val in zip(pairs, thread_map(one, pairs)):
            values[pair] = float(val)
        return values

    buckets: dict = {}
    for i, j in pairs:
        x, x2 = rows[i], cols[j]
        swapped = x.shape[0] > x2.shape[0]
        if swapped:
            x, x2 = x2, x
        buckets.setdefault((x.shape[0], x2.shape[0]), []).append((i, j, swapped))

    def run_bucket(item):
        (_, _), entries = item
        xb = np.stack([(cols[j] if sw else rows[i]) for i, j, sw in entries])
        x2b = np.stack([(rows[i] if sw else cols[j]) for i, j, sw in entries])
        eq = np.array([xb.shape[1] == x2b.shape[1] and bool(np.all(xb[k] == x2b[k]))
                       for k in range(xb.shape[0])])
        res = _batch_pair_kernel(params, xb, x2b, eq)[sel]
        return [(i, j, float(val)) for (i, j, _), val in zip(entries, res)]

    for chunk in thread_map(run_bucket, sorted(buckets.items())):
        for i, j, val in chunk:
            values[(i, j)] = val
    return values


def gram(params: RntkParams, dataset: Seq, kind: str = "theta", ids=None) -> GramMatrix:
    """Symmetric kernel matrix over a dataset of sequences.

    Each unordered pair is computed once; the diagonal runs through the same
    code path, where the equal-inputs indicator fires.
    """
    if kind not in ("theta", "nngp"):
        raise ValueError(f"kind must be 'theta' or 'nngp', got {kind!r}")
    seqs = as_sequences(dataset)
    n = len(seqs)
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    values = _grouped_pair_values(params, seqs, seqs, pairs, kind)
    mat = np.empty((n, n))
    for (i, j), val in values.items():
        mat[i, j] = mat[j, i] = val
    if not np.all(np.isfinite(mat)):
        raise ArithmeticError("gram contains non-finite kernel values")
    return GramMatrix(
        values=mat,
        ids=list(ids) if ids is not None else [str(i) for i in range(n)],
        kernel_descriptor=kernel_descriptor(params, kind),
    )


def cross_gram(params: RntkParams, rows: Seq, cols: Seq, kind: str = "theta") -> np.ndarray:
    """Rectangular kernel block k(rows[i], cols[j]); used for prediction."""
    if kind not in ("theta", "nngp"):
        raise ValueError(f"kind must be 'theta' or 'nngp', got {kind!r}")
    rows = as_sequences(rows, "rows")
    cols = as_sequences(cols, "cols")
    if rows[0].shape[1] != cols[0].shape[1]:
        raise ValueError("rows and cols have different input dimensions")
    pairs = [(i, j) for i in range(len(rows)) for j in range(len(cols))]
    values = _grouped_pair_values(params, rows, cols, pairs, kind)
    mat = np.empty((len(rows), len(cols)))
    for (i, j), val in values.items():
        mat[i, j] = val
    if not np.all(np.isfinite(mat)):
        raise ArithmeticError("cross gram contains non-finite kernel values")
    return mat


def kernel_descriptor(params: RntkParams, kind: str) -> str:
    ov = "" if params.per_layer_overrides is None else f" overrides={params.per_layer_overrides}"
    return (f"{kind}[{params.activation.name} L={params.depth} "
            f"sw={params.sigma_w:g} su={params.sigma_u:g} sb={params.sigma_b:g} "
            f"sh={params.sigma_h:g} sv={params.sigma_v:g}{ov}]")


# ---------------------------------------------------------------------------
# full-grid reference path


def forward_table(params: RntkParams, x, x2) -> KernelTable:
    """Full Sigma grids for an ordered pair, by the plain nested recursion.

    Reference implementation: one scalar V-operator call per grid entry, no
    batching. rntk_pair and gram use the tau-diagonal fast path; tests pin
    the two paths together.
    """
    x = as_sequence(x, "x")
    x2 = as_sequence(x2, "x2")
    if x.shape[1] != x2.shape[1]:
        raise ValueError(f"input dimension mismatch: {x.shape[1]} vs {x2.shape[1]}")
    v = _vphi_fn(params.activation)
    T, m = x.shape
    T2 = x2.shape[0]
    L = params.depth
    eq = bool(np.array_equal(x, x2))
    sh2 = params.sigma_h**2
    cross = np.empty((L, T, T2))
    diag1 = np.empty((L, T))
    diag2 = np.empty((L, T2))
    scales = _layer_scales(params)
    for l in range(L):
        sw2, su2, sb2 = scales[l]

        def inp(i, j):
            # layer-1 input term is the data inner product; deeper layers
            # couple to the previous layer's table one step ahead
            if l == 0:
                return su2 / m * float(x[i] @ x2[j])
            return su2 * float(v(diag1[l - 1, i], diag2[l - 1, j], cross[l - 1, i, j]))

        def inp_self(seq, dg, i):
            if l == 0:
                return su2 / m * float(seq[i] @ seq[i])
            return su2 * float(v(dg[l - 1, i], dg[l - 1, i], dg[l - 1, i]))

        diag1[l, 0] = sw2 * sh2 + inp_self(x, diag1, 0) + sb2
        diag2[l, 0] = sw2 * sh2 + inp_self(x2, diag2, 0) + sb2
        for t in range(1, T):
            prev = diag1[l, t - 1]
            diag1[l, t] = sw2 * float(v(prev, prev, prev)) + inp_self(x, diag1, t) + sb2
        for t in range(1, T2):
            prev = diag2[l, t - 1]
            diag2[l, t] = sw2 * float(v(prev, prev, prev)) + inp_self(x2, diag2, t) + sb2
        cross[l, 0, 0] = (sw2 * sh2 if eq else 0.0) + inp(0, 0) + sb2
        for j in range(1, T2):
            cross[l, 0, j] = inp(0, j) + sb2
        for i in range(1, T):
            cross[l, i, 0] = inp(i, 0) + sb2
        for i in range(1, T):
            for j in range(1, T2):
                cov = float(v(diag1[l, i - 1], diag2[l, j - 1], cross[l, i - 1, j - 1]))
                cross[l, i, j] = sw2 * cov + inp(i, j) + sb2
    return KernelTable(cross=cross, diag1=diag1, diag2=diag2, equal_inputs=eq)


def backward_table(params: RntkParams, table: KernelTable, T: int, T2: int) -> np.ndarray:
    """Pi grid (depth, T, T2) from a completed forward table; needs T <= T2.

    Only the tau-offset diagonal is nonzero; every other entry of the
    returned grid is identically zero.
    """
    if T > T2:
        raise ValueError("backward recursion requires T <= T2; swap the pair")
    if (T, T2) != table.lengths:
        raise ValueError(f"table was built for lengths {table.lengths}, got ({T}, {T2})")
    vp = _vphi_prime_fn(params.activation)
    L = params.depth
    tau = T2 - T
    sv2 = params.sigma_v**2
    scales = _layer_scales(params)
    pi = np.zeros((L, T, T2))

    def vp_at(l, t):
        return float(vp(table.diag1[l, t], table.diag2[l, t + tau], table.cross[l, t, t + tau]))

    pi[L - 1, T - 1, T2 - 1] = sv2 * vp_at(L - 1, T - 1)
    for t in range(T - 2, -1, -1):
        pi[L - 1, t, t + tau] = scales[L - 1][0] * vp_at(L - 1, t) * pi[L - 1, t + 1, t + 1 + tau]
    for l in range(L - 2, -1, -1):
        su2_up = scales[l + 1][1]
        pi[l, T - 1, T2 - 1] = su2_up * vp_at(l, T - 1) * pi[l + 1, T - 1, T2 - 1]
        for t in range(T - 2, -1, -1):
            pi[l, t, t + tau] = vp_at(l, t) * (
                scales[l][0] * pi[l, t + 1, t + 1 + tau] + su2_up * pi[l + 1, t, t + tau]
            )
    return pi


def output_from_tables(params: RntkParams, table: KernelTable) -> KernelOutput:
    """Assemble KernelOutput from the full-grid tables (reference path)."""
    T, T2 = table.lengths
    if T > T2:
        raise ValueError("reference assembly requires T <= T2; swap the pair")
    v = _vphi_fn(params.activation)
    tau = T2 - T
    pi = backward_table(params, table, T, T2)
    nngp = params.sigma_v**2 * float(
        v(table.diag1[-1, T - 1], table.diag2[-1, T2 - 1], table.cross[-1, T - 1, T2 - 1])
    )
    diag = pi[:, np.arange(T), np.arange(T) + tau]
    sig = table.cross[:, np.arange(T), np.arange(T) + tau]
    theta = nngp + float((diag * sig).sum())
    return KernelOutput(theta=theta, nngp=nngp, pi_trace=diag)
