"""Finite-width network oracle: gradients vs finite differences, kernel
assembly, training-drift bookkeeping, convergence report plumbing."""
import math

import numpy as np
import pytest

from rntk.oracle import (
    FiniteRnn,
    convergence_experiment,
    drift_experiment,
    empirical_gram,
    empirical_ntk,
    forward,
    parameter_gradients,
    parameter_vector,
)
from rntk.params import ERF, RntkParams, relu_reference_params

from conftest import fd_gradient, grad_lookup, weight_entries


def erf_params(**kw):
    base = dict(sigma_w=1.0, sigma_u=0.8, sigma_b=0.3, sigma_h=0.4,
                sigma_v=1.1, activation=ERF)
    base.update(kw)
    return RntkParams(**base)


@pytest.mark.parametrize("tied,depth", [(True, 1), (True, 2), (False, 1)])
def test_gradients_match_finite_differences(tied, depth):
    rng = np.random.default_rng(3)
    x = rng.standard_normal((3, 2))
    rnn = FiniteRnn(width=6, input_dim=2, params=erf_params(depth=depth),
                    tied=tied, seed=1, max_time_steps=None if tied else 3)
    grads = parameter_gradients(rnn, x)
    for name, layer, t, arr in weight_entries(rnn):
        fd = fd_gradient(rnn, x, np.atleast_1d(arr))
        an = np.atleast_1d(grad_lookup(grads, name, layer, t))
        denom = max(np.linalg.norm(an), 1e-12)
        assert np.linalg.norm(fd - an) / denom < 1e-6, (name, layer, t)


def test_gradient_output_matches_forward():
    rnn = FiniteRnn(width=8, input_dim=1, params=erf_params(), seed=2)
    x = np.array([[0.4], [-0.9]])
    assert parameter_gradients(rnn, x).output == forward(rnn, x).output


def test_empirical_ntk_equals_gradient_inner_product():
    rng = np.random.default_rng(4)
    rnn = FiniteRnn(width=8, input_dim=2, params=erf_params(depth=2), seed=7)
    x, x2 = rng.standard_normal((3, 2)), rng.standard_normal((4, 2))
    res = empirical_ntk(rnn, x, x2)
    g1 = parameter_gradients(rnn, x)
    g2 = parameter_gradients(rnn, x2)

    def flat(g, T):
        parts = []
        for l in range(rnn.depth):
            parts += [g.w[l].ravel(), g.u[l].ravel(), g.b[l].ravel()]
        parts.append(g.v.ravel())
        return np.concatenate(parts)

    dot = float(flat(g1, 3) @ flat(g2, 4))
    assert res.value == pytest.approx(dot, rel=1e-12)
    assert res.value == sum(res.per_parameter_breakdown.values())
    assert set(res.per_parameter_breakdown) == {"w", "u", "b", "v"}


def test_empirical_ntk_untied_gradient_inner_product():
    rng = np.random.default_rng(5)
    rnn = FiniteRnn(width=5, input_dim=1, params=erf_params(), tied=False,
                    seed=3, max_time_steps=4)
    # variable lengths: only the first min(T, T2) step-weights overlap
    x, x2 = rng.standard_normal((2, 1)), rng.standard_normal((4, 1))
    res = empirical_ntk(rnn, x, x2)
    g1 = parameter_gradients(rnn, x)
    g2 = parameter_gradients(rnn, x2)
    dot = float(g1.v @ g2.v)
    for l in range(rnn.depth):
        for t in range(2):
            dot += float(g1.w[l][t].ravel() @ g2.w[l][t].ravel())
            dot += float(g1.u[l][t].ravel() @ g2.u[l][t].ravel())
            dot += float(g1.b[l][t] @ g2.b[l][t])
    assert res.value == pytest.approx(dot, rel=1e-12)


def test_empirical_gram_matches_pairwise_ntk():
    rng = np.random.default_rng(6)
    rnn = FiniteRnn(width=7, input_dim=1, params=erf_params(), seed=11)
    seqs = [rng.standard_normal((int(rng.integers(2, 5)), 1)) for _ in range(3)]
    mat = empirical_gram(rnn, seqs)
    for i in range(3):
        for j in range(3):
            assert mat[i, j] == pytest.approx(
                empirical_ntk(rnn, seqs[i], seqs[j]).value, rel=1e-12)
    np.testing.assert_array_equal(mat, mat.T)


def test_network_construction_is_seeded():
    a = FiniteRnn(width=6, input_dim=2, params=erf_params(), seed=9)
    b = FiniteRnn(width=6, input_dim=2, params=erf_params(), seed=9)
    c = FiniteRnn(width=6, input_dim=2, params=erf_params(), seed=10)
    np.testing.assert_array_equal(a.v, b.v)
    np.testing.assert_array_equal(a.w[0], b.w[0])
    assert not np.array_equal(a.w[0], c.w[0])


def test_clone_is_independent():
    rnn = FiniteRnn(width=4, input_dim=1, params=erf_params(), seed=0)
    before = parameter_vector(rnn)
    other = rnn.clone()
    other.w[0] += 1.0
    other.v += 2.0
    np.testing.assert_array_equal(parameter_vector(rnn), before)


def test_initial_state_scales_with_sigma_h():
    silent = FiniteRnn(width=4, input_dim=1, params=erf_params(sigma_h=0.0), seed=1)
    assert all(np.all(h == 0.0) for h in silent.h0)
    loud = FiniteRnn(width=4, input_dim=1, params=erf_params(sigma_h=0.5), seed=1)
    assert any(np.any(h != 0.0) for h in loud.h0)


def test_untied_validation():
    with pytest.raises(ValueError, match="max_time_steps"):
        FiniteRnn(width=4, input_dim=1, params=erf_params(), tied=False)
    rnn = FiniteRnn(width=4, input_dim=1, params=erf_params(), tied=False,
                    max_time_steps=2)
    with pytest.raises(ValueError, match="exceeds"):
        forward(rnn, np.ones((3, 1)))


def test_forward_rejects_wrong_input_dim():
    rnn = FiniteRnn(width=4, input_dim=2, params=erf_params(), seed=0)
    with pytest.raises(ValueError, match="input_dim"):
        forward(rnn, np.ones((3, 1)))


# ------------------------------------------------------------------ drift


def test_drift_zero_steps_reports_zero():
    rng = np.random.default_rng(8)
    rnn = FiniteRnn(width=8, input_dim=1, params=relu_reference_params(), seed=1)
    seqs = [rng.standard_normal((3, 1)) for _ in range(2)]
    rep = drift_experiment(rnn, seqs, rng.standard_normal(2), steps=0)
    assert rep.param_drift_sup == 0.0
    assert rep.gram_drift_sup == 0.0
    assert rep.losses.size == 0
    assert rep.lr == rep.eta_star


def test_drift_training_reduces_loss_and_preserves_caller_network():
    rng = np.random.default_rng(9)
    rnn = FiniteRnn(width=48, input_dim=1, params=relu_reference_params(), seed=2)
    before = parameter_vector(rnn)
    seqs = [rng.standard_normal((4, 1)) for _ in range(4)]
    rep = drift_experiment(rnn, seqs, rng.standard_normal(4), steps=40)
    assert rep.losses[-1] < rep.losses[0]
    assert rep.param_drift_sup > 0.0
    assert rep.gram_drift_sup > 0.0
    assert rep.steps == 40 and rep.width == 48
    np.testing.assert_array_equal(parameter_vector(rnn), before)


def test_drift_divergence_names_the_stability_bound():
    rng = np.random.default_rng(10)
    rnn = FiniteRnn(width=16, input_dim=1, params=relu_reference_params(), seed=3)
    seqs = [rng.standard_normal((4, 1)) for _ in range(3)]
    with pytest.raises(ArithmeticError, match="eta"):
        drift_experiment(rnn, seqs, 100.0 * rng.standard_normal(3), lr=50.0, steps=400)


def test_drift_input_validation():
    rng = np.random.default_rng(11)
    rnn = FiniteRnn(width=4, input_dim=1, params=relu_reference_params(), seed=0)
    seqs = [rng.standard_normal((3, 1)) for _ in range(2)]
    with pytest.raises(ValueError, match="targets"):
        drift_experiment(rnn, seqs, np.zeros(3))
    with pytest.raises(ValueError, match="small datasets"):
        drift_experiment(rnn, [seqs[0]] * 11, np.zeros(11))


# ------------------------------------------------------------ convergence


def test_convergence_report_shapes_and_determinism():
    params = relu_reference_params()
    rep = convergence_experiment(params, widths=[16, 64], num_pairs=6, T=3, seed=21)
    assert rep.widths == [16, 64]
    assert rep.rel_errors.shape == (2, 6)
    assert rep.ratios.shape == (2, 6)
    assert rep.median_rel_error.shape == (2,)
    assert math.isfinite(rep.slope)
    again = convergence_experiment(params, widths=[16, 64], num_pairs=6, T=3, seed=21)
    np.testing.assert_array_equal(rep.rel_errors, again.rel_errors)


def test_convergence_untied_flag_propagates():
    rep = convergence_experiment(relu_reference_params(), widths=[16],
                                 num_pairs=3, T=3, seed=2, tied=False)
    assert rep.tied is False
    assert math.isnan(rep.slope)


def test_convergence_rejects_empty_sweep():
    with pytest.raises(ValueError, match="at least one"):
        convergence_experiment(relu_reference_params(), widths=[], num_pairs=3)
