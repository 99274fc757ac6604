import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddpinn import ansatz, diffcore as dc
from ddpinn.ansatz import AnsatzCoefficients, SINE, TANH


def _coeffs(alpha, beta, gamma, delta=None):
    f = lambda v: np.array(v, dtype=float).reshape(1, 1)
    return AnsatzCoefficients(f(alpha), f(beta), f(gamma), None if delta is None else f(delta))


def _random(rng, m, n_g, damped, batch=()):
    shape = batch + (m, n_g)
    return AnsatzCoefficients(rng.normal(size=shape), rng.normal(scale=3, size=shape),
                              rng.uniform(-np.pi, np.pi, shape),
                              rng.normal(size=shape) if damped else None)


def test_flat_length():
    assert AnsatzCoefficients.flat_length(4, 5, False) == 3 * 4 * 5
    assert AnsatzCoefficients.flat_length(4, 5, True) == 4 * 4 * 5


def test_flat_layout_is_block_major():
    a = np.arange(12.0)
    c = AnsatzCoefficients.from_flat(a, 2, 2, False)
    np.testing.assert_array_equal(c.alpha, [[0, 1], [2, 3]])
    np.testing.assert_array_equal(c.beta, [[4, 5], [6, 7]])
    np.testing.assert_array_equal(c.gamma, [[8, 9], [10, 11]])
    np.testing.assert_array_equal(c.to_flat(), a)


def test_from_flat_rejects_wrong_length():
    with pytest.raises(ValueError):
        AnsatzCoefficients.from_flat(np.zeros(11), 2, 2, False)


def test_non_finite_coefficients_rejected():
    with pytest.raises(ValueError):
        _coeffs(np.nan, 1, 0)


def test_hand_value_undamped():
    g = ansatz.eval_g(_coeffs(1, 1, 0), SINE, np.pi / 2)
    assert g[0] == pytest.approx(1.0, abs=1e-15)


def test_hand_value_damped():
    g = ansatz.eval_g(_coeffs(1, 0, np.pi / 2, 1), SINE, 1.0)
    assert g[0] == pytest.approx(math.exp(-1) - 1, abs=1e-15)
    assert g[0] == pytest.approx(-0.632121, abs=1e-6)


def test_hand_value_derivative():
    gd = ansatz.eval_g_dot(_coeffs(1, 1, 0), SINE, np.pi / 2)
    assert abs(gd[0]) < 1e-15


@settings(max_examples=200)
@given(st.integers(0, 2 ** 31), st.booleans(), st.integers(1, 4), st.integers(1, 6))
def test_zero_at_t0_bitwise(seed, damped, m, n_g):
    a = _random(np.random.default_rng(seed), m, n_g, damped)
    g = ansatz.eval_g(a, SINE, 0.0)
    assert np.all(g == 0.0)


def test_zero_delta_matches_undamped():
    rng = np.random.default_rng(0)
    a = _random(rng, 3, 4, False)
    ad = AnsatzCoefficients(a.alpha, a.beta, a.gamma, np.zeros_like(a.alpha))
    t = np.linspace(0, 1, 7)
    np.testing.assert_allclose(ansatz.eval_g_dot(ad, SINE, t), ansatz.eval_g_dot(a, SINE, t),
                               rtol=0, atol=1e-14)
    np.testing.assert_allclose(ansatz.eval_g(ad, SINE, t), ansatz.eval_g(a, SINE, t),
                               rtol=0, atol=1e-14)


@pytest.mark.parametrize("damped", [False, True])
@pytest.mark.parametrize("phi", [SINE, TANH])
def test_g_dot_matches_fd(damped, phi):
    rng = np.random.default_rng(1)
    a = _random(rng, 2, 5, damped)
    t, h = 0.01, 1e-6
    fd = (ansatz.eval_g(a, phi, t + h) - ansatz.eval_g(a, phi, t - h)) / (2 * h)
    gd = ansatz.eval_g_dot(a, phi, t)
    assert np.max(np.abs(gd - fd)) / np.max(np.abs(fd)) < 1e-6


def test_base_function_derivatives():
    x = np.linspace(-3, 3, 31)
    h = 1e-6
    for phi in ansatz.BASE_FUNCTIONS.values():
        fd = (phi.value(x + h) - phi.value(x - h)) / (2 * h)
        assert np.max(np.abs(phi.derivative(x) - fd)) < 1e-6 * max(1, np.max(np.abs(fd)))


def test_unknown_base_function():
    with pytest.raises(ValueError):
        ansatz.base_function("relu")


def test_negative_time_rejected():
    a = _coeffs(1, 1, 0)
    with pytest.raises(ValueError):
        ansatz.eval_g(a, SINE, -0.1)


def test_alpha_partial_hand_form():
    rng = np.random.default_rng(2)
    a = _random(rng, 2, 3, False)
    t = 0.37
    dg, _ = ansatz.partials_wrt_a(a, SINE, t)
    expected = np.sin(a.beta * t + a.gamma) - np.sin(a.gamma)
    np.testing.assert_array_equal(dg[0], expected)


@pytest.mark.parametrize("damped", [False, True])
def test_alpha_partial_vanishes_at_t0(damped):
    a = _random(np.random.default_rng(3), 2, 3, damped)
    dg, _ = ansatz.partials_wrt_a(a, SINE, 0.0)
    assert np.all(dg[0] == 0.0)


@pytest.mark.parametrize("damped", [False, True])
def test_partials_match_fd(damped):
    rng = np.random.default_rng(4)
    a = _random(rng, 2, 3, damped)
    t, h = 0.23, 1e-6
    dg, dgd = ansatz.partials_wrt_a(a, SINE, t)
    flat = a.to_flat()
    m, n_g = 2, 3
    fd_g = np.zeros_like(dg)
    fd_gd = np.zeros_like(dgd)
    for k in range(flat.size):
        p, q = flat.copy(), flat.copy()
        p[k] += h
        q[k] -= h
        ap = AnsatzCoefficients.from_flat(p, m, n_g, damped)
        aq = AnsatzCoefficients.from_flat(q, m, n_g, damped)
        blk, j, i = np.unravel_index(k, dg.shape)
        fd_g[blk, j, i] = ((ansatz.eval_g(ap, SINE, t) - ansatz.eval_g(aq, SINE, t)) / (2 * h))[j]
        fd_gd[blk, j, i] = ((ansatz.eval_g_dot(ap, SINE, t) - ansatz.eval_g_dot(aq, SINE, t)) / (2 * h))[j]
    assert np.max(np.abs(dg - fd_g)) / np.max(np.abs(fd_g)) < 1e-6
    assert np.max(np.abs(dgd - fd_gd)) / np.max(np.abs(fd_gd)) < 1e-6


@given(st.integers(0, 2 ** 31), st.floats(-5, 5), st.floats(0, 1.1))
def test_linear_in_alpha(seed, c, t):
    a = _random(np.random.default_rng(seed), 2, 3, True)
    scaled = AnsatzCoefficients(c * a.alpha, a.beta, a.gamma, a.delta)
    np.testing.assert_allclose(ansatz.eval_g(scaled, SINE, t), c * ansatz.eval_g(a, SINE, t),
                               rtol=1e-12, atol=1e-12)


@given(st.integers(0, 2 ** 31), st.floats(0, 1.1))
def test_subfunction_permutation_symmetry(seed, t):
    rng = np.random.default_rng(seed)
    a = _random(rng, 2, 4, True)
    perm = rng.permutation(4)
    b = AnsatzCoefficients(a.alpha[:, perm], a.beta[:, perm], a.gamma[:, perm], a.delta[:, perm])
    np.testing.assert_allclose(ansatz.eval_g(b, SINE, t), ansatz.eval_g(a, SINE, t),
                               rtol=1e-12, atol=1e-13)


def test_batched_time_per_row():
    rng = np.random.default_rng(5)
    a = _random(rng, 2, 3, True, batch=(4,))
    t = np.array([0.0, 0.1, 0.5, 1.0])
    g = ansatz.eval_g(a, SINE, t)
    for r in range(4):
        row = AnsatzCoefficients(a.alpha[r], a.beta[r], a.gamma[r], a.delta[r])
        np.testing.assert_allclose(g[r], ansatz.eval_g(row, SINE, t[r]), rtol=0, atol=1e-15)


@pytest.mark.parametrize("damped", [False, True])
def test_tape_node_matches_closed_form(damped):
    rng = np.random.default_rng(6)
    m, n_g, n = 2, 3, 5
    flat = rng.normal(size=(n, AnsatzCoefficients.flat_length(m, n_g, damped)))
    t = rng.uniform(0, 1.1, n)
    tape = dc.Tape()
    leaf = tape.var(flat)
    g, gd = ansatz.g_and_g_dot_on_tape(leaf, m, n_g, damped, SINE, t)
    a = AnsatzCoefficients.from_flat(flat, m, n_g, damped)
    np.testing.assert_array_equal(g.value, ansatz.eval_g(a, SINE, t))
    np.testing.assert_allclose(gd.value, ansatz.eval_g_dot(a, SINE, t), rtol=1e-14, atol=1e-14)
    w = rng.normal(size=(n, m))
    (grad,) = tape.gradients((g * w).sum() + (gd * gd).sum(), [leaf])
    h = 1e-6
    fd = np.zeros_like(flat)
    for idx in np.ndindex(flat.shape):
        vals = []
        for s in (h, -h):
            f2 = flat.copy()
            f2[idx] += s
            a2 = AnsatzCoefficients.from_flat(f2, m, n_g, damped)
            vals.append(np.sum(ansatz.eval_g(a2, SINE, t) * w) + np.sum(ansatz.eval_g_dot(a2, SINE, t) ** 2))
        fd[idx] = (vals[0] - vals[1]) / (2 * h)
    assert np.max(np.abs(grad - fd)) / np.max(np.abs(fd)) < 1e-6
