"""Shared fixtures and deterministic hypothesis settings."""
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=30,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(autouse=True)
def _modest_thread_pool(monkeypatch):
    # keep worker pools small and deterministic-cost under pytest
    monkeypatch.setenv("RNTK_THREADS", "4")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_series(path, values):
    """Write a (T,) or (T, m) array as a plain CSV series file."""
    arr = np.atleast_2d(np.asarray(values, dtype=float))
    if arr.shape[0] == 1 and np.asarray(values).ndim == 1:
        arr = arr.T
    with open(path, "w") as fh:
        for row in arr:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return str(path)


def weight_entries(rnn):
    """(group, layer, step, array) for every raw weight array, storage order."""
    arrays = []
    for l in range(rnn.depth):
        for group_name in ("w", "u", "b"):
            group = getattr(rnn, group_name)[l]
            if rnn.tied:
                arrays.append((group_name, l, None, group))
            else:
                for t, arr in enumerate(group):
                    arrays.append((group_name, l, t, arr))
    arrays.append(("v", None, None, rnn.v))
    return arrays


def fd_gradient(rnn, x, arr, step=1e-5):
    """Central finite differences of the network output w.r.t. one raw array."""
    from rntk.oracle import forward

    out = np.zeros_like(arr, dtype=float)
    flat = arr.ravel()
    for idx in range(flat.size):
        keep = flat[idx]
        flat[idx] = keep + step
        up = forward(rnn, x).output
        flat[idx] = keep - step
        down = forward(rnn, x).output
        flat[idx] = keep
        out.ravel()[idx] = (up - down) / (2.0 * step)
    return out


def grad_lookup(grads, name, layer, t):
    if name == "v":
        return grads.v
    block = getattr(grads, name)[layer]
    return block if t is None else block[t]
