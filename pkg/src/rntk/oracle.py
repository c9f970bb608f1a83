"""Finite-width simple RNN with explicit forward/backward passes.

Monte Carlo ground truth for the analytic kernels: empirical NTK
<grad f(x), grad f(x2)> from hand-written gradients (no autodiff), width
convergence sweeps, and the gradient-descent drift experiment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy.special import erf as _erf_fn

from . import core
from .params import Custom, Erf, Relu, RntkParams, as_sequence, as_sequences
from .parallel import thread_map
from .rng import derive_seed, substream


def _phi_pair(activation):
    """Elementwise (phi, phi') for the finite network."""
    if isinstance(activation, Relu):
        # derivative at 0 defined as 0 (measure-zero; matches the closed forms)
        return (lambda z: np.maximum(z, 0.0)), (lambda z: (z > 0).astype(float))
    if isinstance(activation, Erf):
        return (lambda z: _erf_fn(z)), (lambda z: (2.0 / math.sqrt(math.pi)) * np.exp(-z * z))
    if isinstance(activation, Custom):
        if activation.deriv is None:
            raise ValueError("Custom activation needs `deriv` for the finite network")
        return activation.fn, activation.deriv
    raise TypeError(f"unsupported activation {activation!r}")


@dataclass
class FiniteRnn:
    """Simple RNN at NTK initialization: raw weights are i.i.d. standard
    normal, all sigma/sqrt(width) scaling is applied in the forward pass.

    tied=False stores independent W/U/b copies per time step (max_time_steps
    of them); the read-out v and the initial states stay shared. Instances
    are treated as immutable after construction except by drift_experiment,
    which trains a private clone.
    """

    width: int
    input_dim: int
    params: RntkParams
    tied: bool = True
    seed: int = 0
    max_time_steps: Optional[int] = None
    w: List = field(init=False, repr=False)
    u: List = field(init=False, repr=False)
    b: List = field(init=False, repr=False)
    v: np.ndarray = field(init=False, repr=False)
    h0: List = field(init=False, repr=False)

    def __post_init__(self):
        if self.width < 1 or self.input_dim < 1:
            raise ValueError("width and input_dim must be >= 1")
        if not self.tied:
            if self.max_time_steps is None or self.max_time_steps < 1:
                raise ValueError("untied networks need max_time_steps >= 1")
        n, m, L = self.width, self.input_dim, self.params.depth
        rng = substream(self.seed, "init")
        # draw order is part of the reproducibility contract:
        # per layer W, U, b (per step when untied), then v, then h0 per layer
        self.w, self.u, self.b = [], [], []
        for l in range(L):
            ucols = m if l == 0 else n
            if self.tied:
                self.w.append(rng.standard_normal((n, n)))
                self.u.append(rng.standard_normal((n, ucols)))
                self.b.append(rng.standard_normal(n))
            else:
                steps = list(range(self.max_time_steps))
                self.w.append([rng.standard_normal((n, n)) for _ in steps])
                self.u.append([rng.standard_normal((n, ucols)) for _ in steps])
                self.b.append([rng.standard_normal(n) for _ in steps])
        self.v = rng.standard_normal(n)
        self.h0 = [self.params.sigma_h * rng.standard_normal(n) for _ in range(L)]

    @property
    def depth(self) -> int:
        return self.params.depth

    def _step_weights(self, layer: int, t: int):
        if self.tied:
            return self.w[layer], self.u[layer], self.b[layer]
        return self.w[layer][t], self.u[layer][t], self.b[layer][t]

    def clone(self) -> "FiniteRnn":
        other = object.__new__(FiniteRnn)
        other.width, other.input_dim, other.params = self.width, self.input_dim, self.params
        other.tied, other.seed, other.max_time_steps = self.tied, self.seed, self.max_time_steps
        copy2 = (lambda ws: [w.copy() for w in ws]) if self.tied else \
                (lambda ws: [[w.copy() for w in step] for step in ws])
        other.w, other.u, other.b = copy2(self.w), copy2(self.u), copy2(self.b)
        other.v = self.v.copy()
        other.h0 = [h.copy() for h in self.h0]
        return other


@dataclass
class ForwardPass:
    """Network output with everything the backward pass needs cached."""

    output: float
    g: List[np.ndarray]  # per layer (T, n) pre-activations
    h: List[np.ndarray]  # per layer (T+1, n) states, row 0 is h0
    x: np.ndarray


@dataclass
class EmpiricalNtkResult:
    value: float
    per_parameter_breakdown: Dict[str, float]
    width: int
    seed: int


def forward(rnn: FiniteRnn, x) -> ForwardPass:
    """f(x) = (sigma_v/sqrt n) v.h^(L,T) with all g^(l,t), h^(l,t) cached."""
    x = as_sequence(x, "x")
    T, m = x.shape
    if m != rnn.input_dim:
        raise ValueError(f"input dim {m} does not match network input_dim {rnn.input_dim}")
    if not rnn.tied and T > rnn.max_time_steps:
        raise ValueError(f"sequence length {T} exceeds untied max_time_steps {rnn.max_time_steps}")
    n = rnn.width
    rn = math.sqrt(n)
    phi, _ = _phi_pair(rnn.params.activation)
    g_layers, h_layers = [], []
    for l in range(rnn.depth):
        sw, su, sb = rnn.params.layer_sigmas(l)
        below = x if l == 0 else h_layers[l - 1][1:]
        den = math.sqrt(m) if l == 0 else rn
        g = np.empty((T, n))
        h = np.empty((T + 1, n))
        h[0] = rnn.h0[l]
        for t in range(T):
            W, U, bvec = rnn._step_weights(l, t)
            g[t] = (sw / rn) * (W @ h[t]) + (su / den) * (U @ below[t]) + sb * bvec
            h[t + 1] = phi(g[t])
        g_layers.append(g)
        h_layers.append(h)
    out = rnn.params.sigma_v / rn * float(rnn.v @ h_layers[-1][T])
    return ForwardPass(output=out, g=g_layers, h=h_layers, x=x)


def _deltas(rnn: FiniteRnn, fp: ForwardPass) -> List[np.ndarray]:
    """Scaled adjoints delta^(l,t) = sqrt(n) df/dg^(l,t), per layer (T, n).

    Seeded at delta^(L,T) = sigma_v v * phi'(g^(L,T)); each step applies
    phi'(g^(l,t)) to the incoming W (later time) and U (layer above)
    messages.
    """
    _, dphi = _phi_pair(rnn.params.activation)
    n, L = rnn.width, rnn.depth
    rn = math.sqrt(n)
    T = fp.g[0].shape[0]
    phip = [dphi(g) for g in fp.g]
    delta = [np.empty((T, n)) for _ in range(L)]
    delta[L - 1][T - 1] = rnn.params.sigma_v * rnn.v * phip[L - 1][T - 1]
    for t in range(T - 1, -1, -1):
        for l in range(L - 1, -1, -1):
            if t == T - 1 and l == L - 1:
                continue
            acc = np.zeros(n)
            if t < T - 1:
                sw_l = rnn.params.layer_sigmas(l)[0]
                W_next = rnn.w[l] if rnn.tied else rnn.w[l][t + 1]
                acc += (sw_l / rn) * (W_next.T @ delta[l][t + 1])
            if l < L - 1:
                su_up = rnn.params.layer_sigmas(l + 1)[1]
                U_up = rnn.u[l + 1] if rnn.tied else rnn.u[l + 1][t]
                acc += (su_up / rn) * (U_up.T @ delta[l + 1][t])
            delta[l][t] = phip[l][t] * acc
    return delta


def _block_sums(rnn: FiniteRnn, fp1: ForwardPass, d1, fp2: ForwardPass, d2):
    """(w, u, b, v) gradient inner-product blocks from cached passes.

    Tied weights sum over all (t, t2); untied parameters exist per step, so
    only t = t2 (up to the shorter length) contributes.
    """
    n = rnn.width
    T1, T2 = fp1.x.shape[0], fp2.x.shape[0]
    td = min(T1, T2)
    diag = np.arange(td)
    w_sum = u_sum = b_sum = 0.0
    for l in range(rnn.depth):
        sw, su, sb = rnn.params.layer_sigmas(l)
        D = (d1[l] @ d2[l].T) / n
        Hw = (fp1.h[l][:-1] @ fp2.h[l][:-1].T) / n
        if l == 0:
            Hu = (fp1.x @ fp2.x.T) / fp1.x.shape[1]
        else:
            Hu = (fp1.h[l - 1][1:] @ fp2.h[l - 1][1:].T) / n
        if rnn.tied:
            w_sum += sw**2 * float((D * Hw).sum())
            u_sum += su**2 * float((D * Hu).sum())
            b_sum += sb**2 * float(D.sum())
        else:
            Dd = D[diag, diag]
            w_sum += sw**2 * float((Dd * Hw[diag, diag]).sum())
            u_sum += su**2 * float((Dd * Hu[diag, diag]).sum())
            b_sum += sb**2 * float(Dd.sum())
    v_sum = rnn.params.sigma_v**2 / n * float(fp1.h[-1][T1] @ fp2.h[-1][T2])
    return w_sum, u_sum, b_sum, v_sum


def empirical_ntk(rnn: FiniteRnn, x, x2) -> EmpiricalNtkResult:
    """<grad_theta f(x), grad_theta f(x2)> assembled from the four blocks.

    value is exactly the sum of the breakdown entries.
    """
    fp1 = forward(rnn, x)
    fp2 = forward(rnn, x2)
    w_sum, u_sum, b_sum, v_sum = _block_sums(rnn, fp1, _deltas(rnn, fp1), fp2, _deltas(rnn, fp2))
    breakdown = {"w": w_sum, "u": u_sum, "b": b_sum, "v": v_sum}
    return EmpiricalNtkResult(value=w_sum + u_sum + b_sum + v_sum,
                              per_parameter_breakdown=breakdown,
                              width=rnn.width, seed=rnn.seed)


def empirical_gram(rnn: FiniteRnn, dataset) -> np.ndarray:
    """Empirical NTK matrix over a dataset, reusing one pass per sequence."""
    seqs = as_sequences(dataset)
    passes = [forward(rnn, s) for s in seqs]
    deltas = [_deltas(rnn, fp) for fp in passes]
    N = len(seqs)
    mat = np.empty((N, N))
    for i in range(N):
        for j in range(i, N):
            blocks = _block_sums(rnn, passes[i], deltas[i], passes[j], deltas[j])
            mat[i, j] = mat[j, i] = sum(blocks)
    return mat


@dataclass
class SequenceGradients:
    """df/dtheta for one sequence, with respect to the raw (unscaled) weights."""

    output: float
    w: List
    u: List
    b: List
    v: np.ndarray


def parameter_gradients(rnn: FiniteRnn, x) -> SequenceGradients:
    """Explicit gradients shaped like the stored raw weights.

    The scaling factors live in the forward pass, so e.g. df/dW_raw carries
    sigma_w/n (one 1/sqrt(n) from the layer map, one from the adjoint).
    """
    fp = forward(rnn, x)
    d = _deltas(rnn, fp)
    n = rnn.width
    rn = math.sqrt(n)
    gw, gu, gb = [], [], []
    for l in range(rnn.depth):
        sw, su, sb = rnn.params.layer_sigmas(l)
        below = fp.x if l == 0 else fp.h[l - 1][1:]
        den = math.sqrt(fp.x.shape[1]) if l == 0 else rn
        H = fp.h[l][:-1]
        if rnn.tied:
            gw.append((sw / n) * (d[l].T @ H))
            gu.append((su / (rn * den)) * (d[l].T @ below))
            gb.append((sb / rn) * d[l].sum(axis=0))
        else:
            T = fp.x.shape[0]
            gw.append([(sw / n) * np.outer(d[l][t], H[t]) for t in range(T)])
            gu.append([(su / (rn * den)) * np.outer(d[l][t], below[t]) for t in range(T)])
            gb.append([(sb / rn) * d[l][t] for t in range(T)])
    gv = rnn.params.sigma_v / rn * fp.h[-1][-1]
    return SequenceGradients(output=fp.output, w=gw, u=gu, b=gb, v=gv)


def _weight_arrays(rnn: FiniteRnn):
    """Flat list of references to every raw weight array, fixed order."""
    out = []
    for l in range(rnn.depth):
        for group in (rnn.w, rnn.u, rnn.b):
            if rnn.tied:
                out.append(group[l])
            else:
                out.extend(group[l])
    out.append(rnn.v)
    return out


def _gradient_arrays(rnn: FiniteRnn, grads: SequenceGradients):
    out = []
    for l in range(rnn.depth):
        for group in (grads.w, grads.u, grads.b):
            if rnn.tied:
                out.append(group[l])
            else:
                out.extend(group[l])
    out.append(grads.v)
    return out


def parameter_vector(rnn: FiniteRnn) -> np.ndarray:
    """Copy of all raw parameters, flattened in the documented order.

    Untied parameters beyond the trained sequence lengths are included; they
    never move during training, so drift norms are unaffected.
    """
    return np.concatenate([a.ravel() for a in _weight_arrays(rnn)])


@dataclass
class DriftReport:
    param_drift_sup: float
    gram_drift_sup: float
    losses: np.ndarray
    lr: float
    eta_star: float
    steps: int
    width: int
    param_drift: np.ndarray
    gram_drift: np.ndarray


def drift_experiment(rnn: FiniteRnn, dataset, targets, lr: Optional[float] = None,
                     steps: int = 200) -> DriftReport:
    """Full-batch gradient descent on 0.5 sum (f - y)^2, tracking
    sup_s |theta_s - theta_0|/sqrt(n) and sup_s |Gram_s - Gram_0|_2.

    lr defaults to eta* = 2/(lambda_min + lambda_max) of the analytic
    tangent-kernel Gram. Divergence (loss > 1e6) raises and names that bound.
    The caller's network is left untouched; training runs on a clone.
    """
    seqs = as_sequences(dataset)
    y = np.asarray(targets, dtype=float)
    if len(seqs) > 10:
        raise ValueError("drift experiment is meant for small datasets (<= 10 sequences)")
    if y.shape[0] != len(seqs):
        raise ValueError("targets length does not match dataset size")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    evals = np.linalg.eigvalsh(core.gram(rnn.params, seqs, kind="theta").values)
    eta_star = 2.0 / (evals[0] + evals[-1])
    if lr is None:
        lr = eta_star
    net = rnn.clone()
    theta0 = parameter_vector(net)
    gram0 = empirical_gram(net, seqs)
    rn = math.sqrt(net.width)
    param_drift, gram_drift, losses = [0.0], [0.0], []
    for s in range(steps):
        grads = [parameter_gradients(net, sq) for sq in seqs]
        resid = np.array([g.output for g in grads]) - y
        loss = 0.5 * float(resid @ resid)
        losses.append(loss)
        if loss > 1e6:
            raise ArithmeticError(
                f"training diverged (loss {loss:.3g} > 1e6) at step {s}: learning rate "
                f"{lr:g} is above the stable range; keep lr below eta* = "
                f"2/(lambda_min+lambda_max) = {eta_star:.3g}")
        weight_refs = _weight_arrays(net)
        for r, g in zip(resid, grads):
            for wref, garr in zip(weight_refs, _gradient_arrays(net, g)):
                wref -= (lr * r) * garr
        param_drift.append(float(np.linalg.norm(parameter_vector(net) - theta0)) / rn)
        gram_drift.append(float(np.linalg.norm(empirical_gram(net, seqs) - gram0, 2)))
    return DriftReport(
        param_drift_sup=max(param_drift), gram_drift_sup=max(gram_drift),
        losses=np.asarray(losses), lr=float(lr), eta_star=float(eta_star),
        steps=steps, width=rnn.width,
        param_drift=np.asarray(param_drift), gram_drift=np.asarray(gram_drift),
    )


@dataclass
class ConvergenceReport:
    """Empirical-vs-analytic tangent kernel across widths, fixed pair set."""

    widths: List[int]
    tied: bool
    rel_errors: np.ndarray    # (widths, pairs) |emp - analytic| / |analytic|
    ratios: np.ndarray        # (widths, pairs) emp / analytic
    median_rel_error: np.ndarray
    slope: float              # log-log fit of median error against width


def convergence_experiment(params: RntkParams, widths, num_pairs: int = 50,
                           T: int = 5, m: int = 1, seed: int = 0,
                           tied: bool = True) -> ConvergenceReport:
    """Median relative error of the empirical NTK at each width.

    The same num_pairs standard-normal sequence pairs are reused at every
    width; each (width, pair) gets a fresh network from its own seed.
    """
    widths = [int(w) for w in widths]
    if len(widths) < 1 or num_pairs < 1:
        raise ValueError("need at least one width and one pair")
    pairs = []
    for k in range(num_pairs):
        rng = substream(seed, "trials", k)
        pairs.append((rng.standard_normal((T, m)), rng.standard_normal((T, m))))
    analytic = np.array([core.rntk_pair(params, x, x2).theta for x, x2 in pairs])
    if np.any(analytic == 0):
        raise ArithmeticError("analytic kernel value is 0 for a pair; relative error undefined")

    ratios = np.empty((len(widths), num_pairs))
    for wi, n in enumerate(widths):
        def one(k, _n=n, _wi=wi):
            rnn = FiniteRnn(width=_n, input_dim=m, params=params, tied=tied,
                            seed=derive_seed(seed, "init", _wi, k),
                            max_time_steps=None if tied else T)
            x, x2 = pairs[k]
            return empirical_ntk(rnn, x, x2).value
        # untied networks at large width hold T weight copies; cap concurrency
        cap = 2 if (not tied and n >= 2048) else None
        emp = np.array(thread_map(one, range(num_pairs), max_workers=cap))
        ratios[wi] = emp / analytic
    rel = np.abs(ratios - 1.0)
    med = np.median(rel, axis=1)
    slope = float(np.polyfit(np.log(widths), np.log(med), 1)[0]) if len(widths) > 1 else float("nan")
    return ConvergenceReport(widths=widths, tied=tied, rel_errors=rel, ratios=ratios,
                             median_rel_error=med, slope=slope)
