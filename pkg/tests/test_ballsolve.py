import numpy as np
from numpy.testing import assert_allclose
import pytest
from scipy.special import iv

from singdos.ballsolve import (
    GreenBall,
    boundary_data,
    contraction_factor,
    contraction_radius,
    dirichlet_solve_Zr,
    green_exponent,
    green_function,
    green_lq_norm,
    poisson_extend,
)
from singdos.decompose import compute_YN, vanishing_order
from singdos.errors import DomainError, NoContractionError, SingularPointError
from singdos.potentials import BoundedPart, Potential


def const(c):
    return lambda z: np.full(z.shape[0], float(c))


# ---------------------------------------------------------------- Green's function


def test_green_3d_centre_branch():
    g = green_function(GreenBall(1.0, 3), np.array([0.5, 0.0, 0.0]), np.zeros(3))
    assert_allclose(g, 1 / (4 * np.pi), rtol=1e-14)


@pytest.mark.parametrize("d", [2, 3])
def test_green_boundary_vanishing(d, rng):
    # G vanishes linearly at the sphere, so at distance 1e-6 r it is O(1e-6)
    ball = GreenBall(0.8, d)
    y = np.zeros(d)
    y[0] = 0.3
    for _ in range(5):
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        g1 = green_function(ball, 0.8 * (1 - 1e-6) * u, y)
        g2 = green_function(ball, 0.8 * (1 - 2e-6) * u, y)
        assert 0 < g1 < 1e-6
        assert_allclose(g2 / g1, 2.0, rtol=1e-4)
        assert abs(green_function(ball, 0.8 * (1 - 1e-9) * u, y)) < 1e-8


def test_green_symmetry_example():
    ball = GreenBall(1.0, 2)
    x, y = np.array([0.3, 0.0]), np.array([0.6, 0.0])
    assert_allclose(green_function(ball, x, y), green_function(ball, y, x), rtol=1e-12)


@pytest.mark.parametrize("d", [2, 3])
def test_green_symmetric_positive(d, rng):
    ball = GreenBall(1.0, d)
    for _ in range(20):
        x, y = (rng.uniform(-0.55, 0.55, d) for _ in range(2))
        gxy, gyx = green_function(ball, x, y), green_function(ball, y, x)
        assert abs(gxy - gyx) <= 1e-10 * abs(gxy)
        assert gxy > 0


def test_green_errors():
    ball = GreenBall(1.0, 3)
    with pytest.raises(SingularPointError):
        green_function(ball, np.full(3, 0.1), np.full(3, 0.1))
    with pytest.raises(DomainError):
        green_function(ball, np.array([2.0, 0, 0]), np.zeros(3))


# ---------------------------------------------------------------- Poisson extension


@pytest.mark.parametrize("d", [2, 3])
def test_poisson_constant(d, rng):
    ball = GreenBall(1.3, d)
    g = boundary_data(const(2.5), ball)
    assert_allclose(poisson_extend(ball, g, rng.uniform(-0.7, 0.7, (5, d))), 2.5, rtol=1e-13)


def test_boundary_weights_sum_to_area():
    for d, area in ((2, 2 * np.pi * 0.5), (3, 4 * np.pi * 0.25)):
        g = boundary_data(const(1), GreenBall(0.5, d))
        assert_allclose(g.weights.sum(), area, rtol=1e-10)


@pytest.mark.parametrize("t", [0.0, 0.25, 0.5])
def test_poisson_linear_2d(t):
    ball = GreenBall(1.0, 2)
    g = boundary_data(lambda z: z[:, 0], ball)
    assert_allclose(poisson_extend(ball, g, np.array([t, 0.0])), t, atol=1e-13)


@pytest.mark.parametrize("t", [0.0, 0.25, 0.5])
def test_poisson_linear_3d(t):
    ball = GreenBall(1.0, 3)
    g = boundary_data(lambda z: z[:, 2], ball)
    assert_allclose(poisson_extend(ball, g, np.array([0.0, 0.0, t])), t, atol=1e-13)


def test_poisson_outside():
    ball = GreenBall(1.0, 2)
    with pytest.raises(DomainError):
        poisson_extend(ball, boundary_data(const(1), ball), np.array([1.5, 0.0]))


# ---------------------------------------------------------------- solver


@pytest.mark.parametrize("d", [2, 3])
def test_zero_potential_is_poisson(d):
    ball = GreenBall(0.5, d)
    g = boundary_data(lambda z: z[:, 0] ** 2 - z[:, 1] ** 2 + 0.3 * z[:, 0], ball)
    sol = dirichlet_solve_Zr(lambda z: np.zeros(z.shape[0]), g, ball, p=np.inf, W_p=0.0)
    assert_allclose(sol.sample.values, poisson_extend(ball, g, sol.sample.nodes), atol=1e-10)


def test_modified_bessel_oracle():
    ball = GreenBall(0.2, 2)
    W = Potential(d=2, p=np.inf, bounded=BoundedPart(constant=1.0))
    sol = dirichlet_solve_Zr(W, boundary_data(const(1), ball), ball)
    phi0 = float(sol.sample.field(np.zeros((1, 2)))[0])
    assert_allclose(phi0, 1 / iv(0, 0.2), atol=1e-6)
    assert_allclose(phi0, 0.990075, atol=1e-6)
    assert sol.rate <= 2 * sol.kappa_hat
    assert sol.boundary_defect < 1e-8


def test_radial_profile_modified_bessel():
    ball = GreenBall(0.2, 2)
    W = Potential(d=2, p=np.inf, bounded=BoundedPart(constant=1.0))
    sol = dirichlet_solve_Zr(W, boundary_data(const(1), ball), ball)
    r = np.array([0.05, 0.1, 0.15])
    x = np.column_stack([r, 0 * r])
    assert_allclose(sol.sample.field(x), iv(0, r) / iv(0, 0.2), atol=1e-6)


def test_no_contraction():
    ball = GreenBall(2.0, 2)
    with pytest.raises(NoContractionError):
        dirichlet_solve_Zr(lambda z: np.full(z.shape[0], 50.0), boundary_data(const(1), ball), ball)


def test_maximum_principle(rng):
    for _ in range(20):
        d = int(rng.integers(2, 4))
        ball = GreenBall(float(rng.uniform(0.1, 0.3)), d)
        c, a = rng.uniform(0, 3, 2)
        k = rng.standard_normal(d)
        W = Potential(d=d, p=np.inf, bounded=BoundedPart(constant=c + a, amplitude=a))
        g = boundary_data(lambda z: np.cos(z @ k * 5) + 0.5, ball)
        sol = dirichlet_solve_Zr(W, g, ball)
        assert sol.sample.sup() <= g.sup() * (1 + 1e-8)


def test_zr_feeds_decomposition():
    # phi = I_1(r) cos t solves -Lap phi + phi = 0 and vanishes to order 1
    ball = GreenBall(0.3, 2)
    W = Potential(d=2, p=np.inf, bounded=BoundedPart(constant=1.0))

    def exact(z):
        r = np.linalg.norm(z, axis=-1)
        return iv(1, r) * np.cos(np.arctan2(z[..., 1], z[..., 0]))

    sol = dirichlet_solve_Zr(W, boundary_data(exact, ball), ball)
    assert vanishing_order(sol.sample).order == 1
    res = compute_YN(sol.sample, lambda z: np.ones(z.shape[:-1]), 1, tol=1e-5)
    assert_allclose(res.Y_N.coeffs, [0.5, 0.0], atol=1e-4)


# ---------------------------------------------------------------- contraction constants


def test_contraction_radius_positive_and_monotone():
    assert contraction_radius(2, 4.0, 0.0) > 0
    for d, p in ((2, 4.0), (3, 6.0)):
        assert contraction_radius(d, p, 10.0) <= contraction_radius(d, p, 1.0)


def test_contraction_radius_brute_force():
    r2 = contraction_radius(2, 4.0, 1.0)
    scan = [2.0**-k for k in range(60) if contraction_factor(2, 4.0, 2.0**-k, 2.0) <= 0.5]
    assert r2 == scan[0]


@pytest.mark.parametrize("d,p", [(2, 4.0), (3, 6.0)])
def test_green_norm_scaling(d, p):
    # exact scaling of ||G_r(x, .)||_q is r^{2-d+d/q}; the contraction
    # exponent is a weaker Hoelder bound and must not exceed it
    q = p / (p - 1)
    x = np.zeros(d)
    x[0] = 0.3
    n1 = green_lq_norm(GreenBall(1.0, d), x, q)
    n2 = green_lq_norm(GreenBall(0.5, d), 0.5 * x, q)
    fitted = np.log2(n1 / n2)
    exact = 2 - d + d / q
    assert abs(fitted - exact) <= 0.05 * exact
    assert green_exponent(d, p) <= fitted


@pytest.mark.parametrize("d", [2, 3])
def test_observed_rate_vanishes_with_radius(d):
    # the defect constant tends to 0 with r at least at the predicted exponent
    W = Potential(d=d, p=np.inf, bounded=BoundedPart(constant=1.0))
    rates = []
    for r in (0.4, 0.2, 0.1):
        ball = GreenBall(r, d)
        rates.append(dirichlet_solve_Zr(W, boundary_data(lambda z: 1 + z[:, 0], ball), ball).rate)
    halving = np.log2(np.array(rates[:-1]) / np.array(rates[1:]))
    assert np.all(halving >= green_exponent(d, np.inf))
