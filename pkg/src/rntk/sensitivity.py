"""Per-time-step input sensitivity of the tangent kernel.

s(t) = |grad_{x_t} Theta(x, x2)|_2 averaged over random standard-normal
pairs, with the normalized profile s(t)/max_t s(t) used to read off which
time steps the kernel weights most.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import _batch_pair_kernel
from .params import RntkParams
from .parallel import thread_map
from .rng import substream


@dataclass
class SensitivityProfile:
    raw: np.ndarray         # trial-mean s(t), length T
    normalized: np.ndarray  # raw / max(raw), max exactly 1 at the argmax
    params: RntkParams
    num_trials: int
    seed: int
    fd_step: float

    @property
    def length(self) -> int:
        return self.raw.shape[0]

    def argmax_step(self) -> int:
        """1-based time step of the peak sensitivity."""
        return int(np.argmax(self.raw)) + 1


def _trial_profile(params: RntkParams, T: int, m: int, seed: int, trial: int,
                   fd_step: float) -> np.ndarray:
    rng = substream(seed, "trials", trial)
    x = rng.standard_normal((T, m))
    x2 = rng.standard_normal((T, m))
    B = 2 * T * m
    xb = np.broadcast_to(x, (B, T, m)).copy()
    tt = np.repeat(np.arange(T), m * 2)
    jj = np.tile(np.repeat(np.arange(m), 2), T)
    ss = np.tile([1.0, -1.0], T * m)
    xb[np.arange(B), tt, jj] += ss * fd_step
    theta = _batch_pair_kernel(params, xb, x2[None], np.zeros(B, dtype=bool))[0]
    d = (theta.reshape(T, m, 2)[:, :, 0] - theta.reshape(T, m, 2)[:, :, 1]) / (2.0 * fd_step)
    prof = np.sqrt((d * d).sum(axis=1))
    if not np.all(np.isfinite(prof)):
        t_bad = int(np.flatnonzero(~np.isfinite(prof))[0]) + 1
        raise ArithmeticError(
            f"non-finite sensitivity at time step {t_bad}, trial {trial}")
    return prof


def sensitivity_profile(params: RntkParams, T: int, m: int = 1,
                        num_trials: int = 1000, seed: int = 0,
                        fd_step: float = 1e-3) -> SensitivityProfile:
    """Trial-mean sensitivity profile via central finite differences.

    Each trial draws x, x2 i.i.d. N(0,1) of shape (T, m), perturbs every
    coordinate of x by +-fd_step, and pushes all 2*T*m perturbed copies
    through the kernel in one batch. Trials run in parallel; the mean is
    taken in trial order, so a given (params, T, m, num_trials, seed,
    fd_step) is bit-reproducible.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if m < 1:
        raise ValueError("m must be >= 1")
    if num_trials < 1:
        raise ValueError("num_trials must be >= 1")
    if not (np.isfinite(fd_step) and fd_step > 0):
        raise ValueError("fd_step must be a positive finite number")
    profs = thread_map(
        lambda k: _trial_profile(params, T, m, seed, k, fd_step), range(num_trials))
    raw = np.mean(np.stack(profs), axis=0)
    peak = raw.max()
    if not peak > 0:
        raise ArithmeticError("sensitivity profile is identically zero; cannot normalize")
    return SensitivityProfile(raw=raw, normalized=raw / peak, params=params,
                              num_trials=num_trials, seed=seed, fd_step=fd_step)
