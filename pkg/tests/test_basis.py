import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import eval_hermite

from ultrafunctions.basis import (
    FOURIER_RING,
    GL_EXTRA_NODES,
    HERMITE_LINE,
    SINE_BOX,
    BasisSpec,
    DomainError,
    TensorOperator,
    basis_eval,
    basis_grad,
    fourier_mode,
    gram_matrix,
    make_quadrature,
    point_matrix,
)


def hermite_function_oracle(n, x):
    # closed form with physicists' Hermite polynomials
    return eval_hermite(n, x) * np.exp(-x * x / 2) / math.sqrt(2.0**n * math.factorial(n) * math.sqrt(math.pi))


@pytest.mark.parametrize(
    "kind,theta,dim",
    [
        (SINE_BOX, 8, 1),
        (SINE_BOX, 32, 1),
        (SINE_BOX, 8, 2),
        (SINE_BOX, (3, 4, 5), 3),
        (FOURIER_RING, 5, 1),
        (FOURIER_RING, 16, 1),
        (FOURIER_RING, 4, 2),
        (HERMITE_LINE, 8, 1),
        (HERMITE_LINE, 16, 1),
        (HERMITE_LINE, 64, 1),
        (HERMITE_LINE, 5, 2),
    ],
)
def test_gram_is_identity(kind, theta, dim):
    spec = BasisSpec(kind, theta, dim)
    G = gram_matrix(spec, make_quadrature(spec, 2))
    assert np.max(np.abs(G - np.eye(spec.dim))) <= 1e-10


def test_spec_validation():
    with pytest.raises(ValueError):
        BasisSpec("wavelet", 4)
    with pytest.raises(ValueError):
        BasisSpec(SINE_BOX, 4, 4)
    with pytest.raises(ValueError):
        BasisSpec(SINE_BOX, (4, 4), 1)
    with pytest.raises(ValueError):
        BasisSpec(SINE_BOX, 0)
    spec = BasisSpec(SINE_BOX, (2, 3), 2)
    assert spec.dim == 6 and spec.shape == (2, 3)
    assert spec.with_theta(4).theta == (4, 4)


def test_multi_index_is_c_order():
    spec = BasisSpec(SINE_BOX, (2, 3), 2)
    assert [spec.multi_index(j) for j in range(1, 7)] == [(1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (2, 3)]
    with pytest.raises(IndexError):
        spec.multi_index(7)
    with pytest.raises(IndexError):
        spec.flat_index((3, 1))


@settings(max_examples=100, deadline=None)
@given(theta=st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6)), data=st.data())
def test_flat_multi_roundtrip(theta, data):
    spec = BasisSpec(SINE_BOX, theta, 3)
    j = data.draw(st.integers(1, spec.dim))
    assert spec.flat_index(spec.multi_index(j)) == j


def test_fourier_mode_order():
    assert [fourier_mode(j) for j in range(1, 8)] == [0, 1, -1, 2, -2, 3, -3]


def test_point_values():
    sine = BasisSpec(SINE_BOX, 4)
    assert basis_eval(sine, 1, 0.25) == pytest.approx(1.0, abs=1e-15)
    assert basis_eval(sine, 2, 0.25) == pytest.approx(math.sqrt(2.0), abs=1e-15)
    assert basis_eval(sine, 3, 0.0) == 0.0
    ring = BasisSpec(FOURIER_RING, 3)
    assert basis_eval(ring, 3, 0.25) == pytest.approx(-1j, abs=1e-15)
    box2 = BasisSpec(SINE_BOX, 2, 2)
    # e_(1,2)(x, y) = 2 sin(pi x) sin(2 pi y)
    assert basis_eval(box2, 2, (0.5, 0.25)) == pytest.approx(2.0, abs=1e-14)


def test_hermite_matches_closed_form():
    spec = BasisSpec(HERMITE_LINE, 12)
    x = np.linspace(-6, 6, 41)
    M = point_matrix(spec, x)
    for n in range(12):
        np.testing.assert_allclose(M[:, n], hermite_function_oracle(n, x), atol=1e-13)


def test_hermite_large_argument_no_overflow():
    spec = BasisSpec(HERMITE_LINE, 64)
    vals = point_matrix(spec, np.array([30.0, -40.0]))
    assert np.all(np.isfinite(vals))
    q = make_quadrature(spec, 4)
    assert np.all(np.isfinite(q.weights)) and np.all(q.weights > 0)


@pytest.mark.parametrize("kind", [SINE_BOX, FOURIER_RING, HERMITE_LINE])
def test_derivatives_match_finite_differences(kind):
    spec = BasisSpec(kind, 6)
    x = np.array([0.2, 0.37, 0.8])
    h = 1e-6
    fd = (point_matrix(spec, x + h) - point_matrix(spec, x - h)) / (2 * h)
    np.testing.assert_allclose(point_matrix(spec, x, derivative=0), fd, atol=1e-7)


def test_gradient_in_2d():
    spec = BasisSpec(SINE_BOX, 2, 2)
    g = basis_grad(spec, 2, (0.3, 0.4))  # e = 2 sin(pi x) sin(2 pi y)
    expect = [2 * math.pi * math.cos(math.pi * 0.3) * math.sin(2 * math.pi * 0.4),
              4 * math.pi * math.sin(math.pi * 0.3) * math.cos(2 * math.pi * 0.4)]
    np.testing.assert_allclose(g, expect, atol=1e-12)


def test_domain_errors():
    spec = BasisSpec(SINE_BOX, 4)
    with pytest.raises(DomainError):
        basis_eval(spec, 1, 1.5)
    with pytest.raises(DomainError):
        basis_eval(BasisSpec(FOURIER_RING, 3), 1, -0.1)
    with pytest.raises(DomainError):
        basis_eval(BasisSpec(SINE_BOX, 2, 2), 1, (0.5, 0.5, 0.5))
    with pytest.raises(IndexError):
        basis_eval(spec, 5, 0.5)
    # the line accepts any real point
    assert np.isfinite(basis_eval(BasisSpec(HERMITE_LINE, 3), 2, 12.0))


def test_quadrature_node_counts():
    spec = BasisSpec(SINE_BOX, 8)
    q = make_quadrature(spec, 2)
    assert q.shape == (2 * 8 + GL_EXTRA_NODES,)
    assert np.all((q.nodes > 0) & (q.nodes < 1))
    assert make_quadrature(BasisSpec(FOURIER_RING, 5), 2).shape == (21,)
    assert make_quadrature(BasisSpec(HERMITE_LINE, 10), 2).shape == (20,)
    with pytest.raises(ValueError):
        make_quadrature(spec, 0.5)


def test_quadrature_integrates_smooth_functions():
    q = make_quadrature(BasisSpec(SINE_BOX, 4, 2), 2)
    X, Y = q.coordinate_grids()
    assert q.integrate(X**3 * Y**5) == pytest.approx(1 / 24, abs=1e-15)
    ring = make_quadrature(BasisSpec(FOURIER_RING, 4), 2)
    x = ring.nodes[:, 0]
    assert ring.integrate(np.cos(2 * np.pi * 3 * x) ** 2) == pytest.approx(0.5, abs=1e-15)
    line = make_quadrature(BasisSpec(HERMITE_LINE, 20), 2)
    x = line.nodes[:, 0]
    assert line.integrate(np.exp(-x * x)) == pytest.approx(math.sqrt(math.pi), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    kind=st.sampled_from([SINE_BOX, FOURIER_RING, HERMITE_LINE]),
    dim=st.integers(1, 3),
    theta=st.integers(1, 5),
    seed=st.integers(0, 2**31 - 1),
)
def test_synthesis_analysis_roundtrip(kind, dim, theta, seed):
    spec = BasisSpec(kind, theta, dim)
    q = make_quadrature(spec, 2)
    op = TensorOperator(spec, q)
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(spec.dim) + (1j * rng.standard_normal(spec.dim) if spec.is_complex else 0)
    grid = op.synthesize(c)
    np.testing.assert_allclose(grid.reshape(-1), point_matrix(spec, q.nodes) @ c, atol=1e-11)
    np.testing.assert_allclose(op.analyze(grid), c, atol=1e-10)


def test_tensor_operator_requires_matching_quadrature():
    spec = BasisSpec(SINE_BOX, 3)
    with pytest.raises(ValueError):
        TensorOperator(spec, make_quadrature(BasisSpec(SINE_BOX, 3, 2)))
