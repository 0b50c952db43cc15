import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lgq.assignment import AssignmentMatrix, assign, grad_probs_wrt_centers, grad_probs_wrt_latent
from lgq.numerics import finite_diff_grad, relative_error
from lgq.quantizer import quantize, ste_backward, ste_bias


def _am(p):
    p = np.asarray(p, dtype=float)
    return AssignmentMatrix(p, np.zeros_like(p), 1.0)


def test_one_hot_row():
    centers = np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]])
    r = quantize(np.zeros((1, 2)), centers, _am([[0, 1, 0]]))
    assert np.array_equal(r.hard_tokens[0], centers[1])
    assert np.array_equal(r.soft_average[0], centers[1])
    assert ste_bias(r) == 0.0


def test_tie_goes_to_lowest_index():
    centers = np.array([[0.0], [2.0]])
    r = quantize(np.array([[1.0]]), centers, _am([[0.5, 0.5]]))
    assert r.indices[0] == 0
    assert r.soft_average[0, 0] == 1.0


def test_shape_mismatch():
    with pytest.raises(ValueError):
        quantize(np.zeros((2, 2)), np.zeros((3, 2)), _am(np.full((2, 2), 0.5)))


@given(st.integers(0, 2**32 - 1))
def test_forward_exact_and_ste_identity(seed):
    rng = np.random.default_rng(seed)
    z, c = rng.standard_normal((20, 3)), rng.standard_normal((7, 3))
    a = assign(z, c, rng.uniform(0.05, 2))
    r = quantize(z, c, a)
    idx = np.array([max(range(7), key=lambda k: (a.probs[t, k], -k)) for t in range(20)])
    assert np.array_equal(r.indices, idx)
    assert r.hard_tokens.tobytes() == c[idx].tobytes()
    assert np.allclose(r.ste_tokens(), r.hard_tokens, atol=1e-12, rtol=0)


def test_zero_upstream(rng):
    z, c = rng.standard_normal((4, 2)), rng.standard_normal((3, 2))
    a = assign(z, c, 0.5)
    gz, gc = ste_backward(np.zeros((4, 2)), z, c, a)
    assert not gz.any() and not gc.any()


def test_one_hot_limit_only_direct_term(rng):
    c = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]])
    z = np.array([[0.1, 0.2]])
    a = assign(z, c, 1e-3)
    g = rng.standard_normal((1, 2))
    _, gc = ste_backward(g, z, c, a)
    expected = np.zeros_like(c)
    expected[0] = g[0]
    assert np.allclose(gc, expected, atol=1e-12)


def test_backward_matches_jacobians(rng):
    # per-token composition from the explicit Jacobians
    z, c, tau = rng.uniform(-1, 1, (3, 2)), rng.uniform(-1, 1, (4, 2)), 0.6
    a = assign(z, c, tau)
    g = rng.standard_normal((3, 2))
    gz, gc = ste_backward(g, z, c, a)
    ref_z = np.zeros_like(z)
    ref_c = a.probs.T @ g
    for t in range(3):
        Jz = grad_probs_wrt_latent(z[t], c, tau)            # K x C
        Jc = grad_probs_wrt_centers(z[t], c, tau)           # K x K x C
        s = c @ g[t]                                         # dL/dp_k
        ref_z[t] = s @ Jz
        ref_c += np.einsum("k,kjc->jc", s, Jc)
    assert np.allclose(gz, ref_z, atol=1e-13)
    assert np.allclose(gc, ref_c, atol=1e-13)


def test_soft_path_gradients_vs_finite_differences(rng):
    worst = 0.0
    for i in range(50):
        kernel = ("euclid", "squared")[i % 2]
        T, K, C = (int(v) for v in rng.integers(1, 5, size=3))
        K += 1
        z, c = rng.uniform(-1, 1, (T, C)), rng.uniform(-1, 1, (K, C))
        tau = rng.uniform(0.3, 2)

        def loss(zz, cc):
            s = assign(zz, cc, tau, kernel).probs @ cc
            return float(((s - zz) ** 2).sum())

        a = assign(z, c, tau, kernel)
        s = a.probs @ c
        up = 2 * (s - z)
        gz, gc = ste_backward(up, z, c, a)
        gz = gz - up  # the loss also depends on z directly
        nz = finite_diff_grad(lambda v: loss(v.reshape(T, C), c), z).reshape(T, C)
        nc = finite_diff_grad(lambda v: loss(z, v.reshape(K, C)), c).reshape(K, C)
        worst = max(worst, relative_error(gz, nz), relative_error(gc, nc))
    assert worst <= 1e-5


def test_every_code_gets_gradient(rng):
    z, c = rng.uniform(-1, 1, (16, 3)), rng.uniform(-1, 1, (10, 3))
    a = assign(z, c, 0.8)
    assert (a.probs > 0).all()
    _, gc = ste_backward(rng.standard_normal((16, 3)), z, c, a)
    assert (np.abs(gc).sum(axis=1) > 0).all()
