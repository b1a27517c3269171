import numpy as np
from numpy.testing import assert_allclose
import pytest

from singdos.errors import InsufficientQuadratureError, SingularPointError, UnsupportedDimensionError
from singdos.harmonic import (
    GAMMA,
    HarmonicPoly,
    basis_values,
    dim_cumulative,
    evaluate_sum,
    expand_fundamental,
    fundamental_partial_sum,
    fundamental_solution,
    harmonic_basis,
    project_harmonic,
    sample_sphere,
    sphere_quadrature,
)


# ---------------------------------------------------------------- bases


@pytest.mark.parametrize("d,m,count", [(2, 0, 1), (3, 2, 5), (2, 3, 2), (3, 0, 1), (3, 7, 15)])
def test_basis_size(d, m, count):
    assert len(harmonic_basis(d, m)) == count


def test_basis_2d_degree3_is_z_cubed():
    x = np.array([[0.3, -0.7], [1.1, 0.4]])
    z = (x[:, 0] + 1j * x[:, 1]) ** 3
    b = harmonic_basis(2, 3)
    assert_allclose(b[0](x), z.real, rtol=1e-14)
    assert_allclose(b[1](x), z.imag, rtol=1e-14)


def test_unsupported_dimension():
    with pytest.raises(UnsupportedDimensionError):
        harmonic_basis(4, 1)


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("m", [0, 1, 2, 5, 9])
def test_gram_diagonal(d, m):
    dirs, w = sphere_quadrature(d, 2 * m + 2)
    B = basis_values(d, m, dirs)
    G = (B * w[:, None]).T @ B
    off = G - np.diag(np.diag(G))
    assert np.max(np.abs(off)) <= 1e-10 * np.max(np.diag(G))


@pytest.mark.parametrize("d", [2, 3])
def test_laplacian_residual_second_order(d, rng):
    pts = rng.uniform(-0.8, 0.8, (100, d))
    for m in (2, 4):
        for p in harmonic_basis(d, m):
            res = []
            for h in (1e-2, 5e-3):
                lap = -2 * d * p(pts)
                for k in range(d):
                    e = np.zeros(d)
                    e[k] = h
                    lap = lap + p(pts + e) + p(pts - e)
                res.append(np.max(np.abs(lap / h**2)))
            # residual is pure round-off or falls at order two
            assert res[1] < 1e-5 or res[0] / res[1] > 3.0


@pytest.mark.parametrize("d", [2, 3])
def test_homogeneity(d, rng):
    x = rng.standard_normal((10, d))
    for p in harmonic_basis(d, 4):
        assert_allclose(p(2.5 * x), 2.5**4 * p(x), rtol=1e-12)


# ---------------------------------------------------------------- dimensions


@pytest.mark.parametrize("d,N,total", [(3, 3, 16), (2, 5, 11), (3, 1, 4)])
def test_dim_cumulative(d, N, total):
    n, ok = dim_cumulative(d, N)
    assert n == total
    assert ok
    assert n <= GAMMA[d] * N ** (d - 1)


@pytest.mark.parametrize("d", [2, 3])
def test_dim_cumulative_counts_generated(d):
    for N in range(1, 13):
        n, _ = dim_cumulative(d, N)
        assert n == sum(len(harmonic_basis(d, m)) for m in range(N + 1))
        if d == 3:
            assert n == (N + 1) ** 2


# ---------------------------------------------------------------- fundamental solution


def test_fundamental_values():
    assert_allclose(fundamental_solution(2, [1.0, 0.0]), 0.0, atol=1e-15)
    assert_allclose(fundamental_solution(3, [0.0, 1.0, 0.0]), 1 / (4 * np.pi), rtol=1e-14)
    assert_allclose(fundamental_solution(2, [0.0, np.e]), -1 / (2 * np.pi), rtol=1e-14)
    assert_allclose(1 / (4 * np.pi), 0.0795775, atol=1e-7)


def test_fundamental_singular():
    with pytest.raises(SingularPointError):
        fundamental_solution(3, [0.0, 0.0, 0.0])


def test_fundamental_radial_decreasing():
    r = np.linspace(0.1, 3, 30)
    v = fundamental_solution(3, np.column_stack([r, 0 * r, 0 * r]))
    assert np.all(np.diff(v) < 0)
    u = np.array([[0.6, 0.8, 0.0], [0.0, 0.0, 1.0]])
    assert_allclose(fundamental_solution(3, u), 1 / (4 * np.pi), rtol=1e-14)


# ---------------------------------------------------------------- expansion


def test_expansion_3d_axis_geometric():
    x, y = np.array([0.0, 0.0, 0.5]), np.array([0.0, 0.0, 1.0])
    s = evaluate_sum(expand_fundamental(3, y, 60), x)
    assert_allclose(s, 1 / (2 * np.pi), rtol=1e-14)
    assert_allclose(fundamental_solution(3, x - y), 1 / (2 * np.pi), rtol=1e-14)


def test_expansion_at_origin():
    y = np.array([0.3, -1.2, 0.4])
    assert_allclose(evaluate_sum(expand_fundamental(3, y, 0), np.zeros(3)), fundamental_solution(3, y), rtol=1e-14)
    assert_allclose(evaluate_sum(expand_fundamental(3, y, 5), np.zeros(3)), fundamental_solution(3, y), rtol=1e-14)


def test_expansion_2d_n20():
    x, y = np.array([0.3, 0.0]), np.array([1.0, 0.0])
    s = evaluate_sum(expand_fundamental(2, y, 20), x)
    assert abs(fundamental_solution(2, x - y) - s) < 1e-8


def test_expansion_singular_centre():
    with pytest.raises(SingularPointError):
        expand_fundamental(3, np.zeros(3), 2)


@pytest.mark.parametrize("d", [2, 3])
def test_expansion_matches_independent_series(d, rng):
    for _ in range(10):
        y = rng.standard_normal(d)
        x = rng.standard_normal(d)
        x *= 0.6 * np.linalg.norm(y) / np.linalg.norm(x)
        polys = expand_fundamental(d, y, 15)
        assert_allclose(evaluate_sum(polys, x), fundamental_partial_sum(d, x, y, 15)[0], rtol=1e-12, atol=1e-14)


# ---------------------------------------------------------------- projection


def test_project_xy_3d():
    s = sample_sphere(lambda p: p[:, 0] * p[:, 1], 3, 0.7, 12)
    p2 = project_harmonic(s, 2)
    x = np.array([[0.2, 0.5, -0.1], [0.4, -0.3, 0.6]])
    assert_allclose(p2(x), x[:, 0] * x[:, 1], atol=1e-13)
    for m in (0, 1, 3, 4):
        assert np.max(np.abs(project_harmonic(s, m).coeffs)) < 1e-13


def test_project_constant():
    s = sample_sphere(lambda p: np.full(p.shape[0], 7.0), 2, 1.0, 8)
    assert_allclose(project_harmonic(s, 0).coeffs, [7.0], rtol=1e-14)
    assert_allclose(project_harmonic(s, 1).coeffs, [0.0, 0.0], atol=1e-14)


def test_project_cubic_plus_constant():
    def h(p):
        return ((p[:, 0] + 1j * p[:, 1]) ** 3).real + 2.0

    s = sample_sphere(h, 2, 0.5, 16)
    assert_allclose(project_harmonic(s, 3).coeffs, [1.0, 0.0], atol=1e-10)
    assert_allclose(project_harmonic(s, 0).coeffs, [2.0], atol=1e-10)


def test_project_reconstruction(rng):
    c = rng.standard_normal(5)
    f = HarmonicPoly(3, 2, c)
    s = sample_sphere(lambda p: f(p) + 1.5, 3, 0.8, 10)
    parts = [project_harmonic(s, m) for m in range(5)]
    x = rng.uniform(-0.3, 0.3, (6, 3))
    assert_allclose(evaluate_sum(parts, x), f(x) + 1.5, atol=1e-12)


def test_project_quadrature_too_low():
    s = sample_sphere(lambda p: p[:, 0], 2, 1.0, 3)
    with pytest.raises(InsufficientQuadratureError):
        project_harmonic(s, 2)
