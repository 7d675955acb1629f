import numpy as np
import pytest

from teichstab.boundary import (
    BoundaryFn,
    BoundaryGrid,
    BoundaryOperator,
    d_gamma,
    d_gamma_operator,
    fn_to_vec,
    integrate_J,
    j_operator,
    operator_norm_h1_l2,
    sobolev_weights,
    vec_to_fn,
)
from teichstab.errors import MeanNotZero


GRID = BoundaryGrid(64, 2 * np.pi)


def test_grid_validation():
    with pytest.raises(ValueError):
        BoundaryGrid(15, 1.0)
    with pytest.raises(ValueError):
        BoundaryGrid(14, 1.0)
    with pytest.raises(ValueError):
        BoundaryGrid(64, -1.0)


def test_roundtrip_values_coeffs():
    rng = np.random.default_rng(0)
    for _ in range(5):
        vals = rng.standard_normal(GRID.n_samples) + 1j * rng.standard_normal(GRID.n_samples)
        f = BoundaryFn.from_values(GRID, vals)
        g = BoundaryFn.from_coeffs(GRID, f.coeffs)
        assert np.allclose(g.values, vals, atol=1e-14)


def test_mean_and_integral():
    f = BoundaryFn.from_callable(GRID, lambda l: 3.0 + np.cos(l))
    assert abs(f.mean() - 3.0) < 1e-14
    assert abs(f.integral() - 3.0 * 2 * np.pi) < 1e-13


def test_d_gamma_single_modes():
    # sin' = cos, const' = 0, cos(3l)' = -3 sin(3l): exact on single modes
    f = BoundaryFn.from_callable(GRID, np.sin)
    assert np.allclose(d_gamma(f).values, np.cos(GRID.nodes), atol=1e-13)
    one = BoundaryFn.from_callable(GRID, lambda l: np.ones_like(l))
    assert np.allclose(d_gamma(one).values, 0.0, atol=1e-14)
    f3 = BoundaryFn.from_callable(GRID, lambda l: np.cos(3 * l))
    assert np.allclose(d_gamma(f3).values, -3 * np.sin(3 * GRID.nodes), atol=1e-12)


def test_d_gamma_scaled_length():
    grid = BoundaryGrid(64, 4.0)
    f = BoundaryFn.from_callable(grid, lambda l: np.sin(2 * np.pi * l / 4.0))
    expect = (2 * np.pi / 4.0) * np.cos(2 * np.pi * grid.nodes / 4.0)
    assert np.allclose(d_gamma(f).values, expect, atol=1e-12)


def test_integrate_J_inverts_d_gamma():
    f = BoundaryFn.from_callable(GRID, np.cos)
    assert np.allclose(integrate_J(f).values, np.sin(GRID.nodes), atol=1e-13)
    g = BoundaryFn.from_callable(GRID, np.sin)
    assert np.allclose(integrate_J(g).values, -np.cos(GRID.nodes), atol=1e-13)


def test_integrate_J_rejects_constants():
    one = BoundaryFn.from_callable(GRID, lambda l: np.ones_like(l))
    with pytest.raises(MeanNotZero):
        integrate_J(one)


def test_J_dgamma_roundtrips():
    rng = np.random.default_rng(1)
    K = GRID.n_trunc
    for _ in range(5):
        vec = rng.standard_normal(GRID.dim)
        f = vec_to_fn(GRID, vec)
        # J(d f) = f - mean f
        g = integrate_J(d_gamma(f))
        assert np.allclose(g.values, f.values - f.mean().real, atol=1e-10)
        # d(J f0) = f0 on the mean-zero subspace
        vec0 = vec.copy()
        vec0[0] = 0.0
        f0 = vec_to_fn(GRID, vec0)
        h = d_gamma(integrate_J(f0))
        assert np.allclose(h.values, f0.values, atol=1e-10)


def test_vec_roundtrip_and_orthonormality():
    rng = np.random.default_rng(2)
    vec = rng.standard_normal(GRID.dim)
    f = vec_to_fn(GRID, vec)
    assert np.allclose(fn_to_vec(GRID, f.values), vec, atol=1e-12)
    # Parseval: L2 norm of the function equals euclidean norm of coefficients
    assert abs(f.norm_l2() - np.linalg.norm(vec)) < 1e-10


def test_eval_at_matches_nodes():
    rng = np.random.default_rng(3)
    f = vec_to_fn(GRID, rng.standard_normal(GRID.dim))
    assert np.allclose(f.eval_at(GRID.nodes), f.values, atol=1e-12)
    # band-limited interpolation is exact between nodes too
    pts = rng.uniform(0, GRID.total_length, 17)
    expect = sum(
        fn_to_vec(GRID, f.values)[k] * vec_to_fn(GRID, np.eye(GRID.dim)[k]).eval_at(pts)
        for k in range(GRID.dim)
    )
    assert np.allclose(f.eval_at(pts), expect, atol=1e-10)


def test_operator_norm_trivial_cases():
    assert operator_norm_h1_l2(BoundaryOperator.zero(GRID)) == 0.0
    assert abs(operator_norm_h1_l2(BoundaryOperator.identity(GRID)) - 1.0) < 1e-12


def test_operator_norm_disc_multiplier():
    # |n| multiplier at truncation K: max over n of n / sqrt(1 + n^2)
    grid = BoundaryGrid(258, 2 * np.pi)
    K = grid.n_trunc
    assert K == 128
    lam = BoundaryOperator.from_multiplier(grid, lambda n: float(abs(n)))
    expect = 128.0 / np.sqrt(1.0 + 128.0 ** 2)
    assert abs(operator_norm_h1_l2(lam) - expect) < 1e-12


def test_operator_norm_subadditive():
    rng = np.random.default_rng(4)
    for _ in range(5):
        a = BoundaryOperator(GRID, rng.standard_normal((GRID.dim, GRID.dim)))
        b = BoundaryOperator(GRID, rng.standard_normal((GRID.dim, GRID.dim)))
        assert operator_norm_h1_l2(a + b) <= (
            operator_norm_h1_l2(a) + operator_norm_h1_l2(b) + 1e-12
        )


def test_operator_composition_identity():
    ident = BoundaryOperator.identity(GRID)
    dg = d_gamma_operator(GRID)
    jj = j_operator(GRID)
    # J o d_gamma = identity minus the mean projection
    m = (jj @ dg).matrix
    expect = np.eye(GRID.dim)
    expect[0, 0] = 0.0
    assert np.allclose(m, expect, atol=1e-13)
    assert np.allclose((ident @ dg).matrix, dg.matrix)


def test_operator_apply_matches_functions():
    rng = np.random.default_rng(5)
    vec = rng.standard_normal(GRID.dim)
    vec[0] = 0.0
    f = vec_to_fn(GRID, vec)
    assert np.allclose(j_operator(GRID).apply(f).values, integrate_J(f).values, atol=1e-11)
    assert np.allclose(d_gamma_operator(GRID).apply(f).values, d_gamma(f).values, atol=1e-11)


def test_real_linear_block_operator():
    # swap(Re, Im) as a real-linear operator: eta -> conj(i * eta)-style mixing
    d = GRID.dim
    m = np.zeros((2 * d, 2 * d))
    m[:d, d:] = np.eye(d)
    m[d:, :d] = np.eye(d)
    swap = BoundaryOperator(GRID, m, kind="real-linear")
    f = BoundaryFn.from_callable(GRID, lambda l: np.cos(l) + 2j * np.sin(l))
    g = swap.apply(f)
    assert np.allclose(g.values, 2 * np.sin(GRID.nodes) + 1j * np.cos(GRID.nodes), atol=1e-12)


def test_sobolev_weights_shape():
    w = sobolev_weights(GRID)
    assert w.shape == (GRID.dim,)
    assert w[0] == 1.0
    assert np.all(np.diff(w[1::2]) < 0)
