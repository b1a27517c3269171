import numpy as np
from numpy.testing import assert_allclose
import pytest
from scipy.special import jv

from singdos.calibrate import decompose_cases, decompose_remainders
from singdos.decompose import (
    NewtonianPotential,
    compute_YN,
    harmonic_part,
    newtonian_potential,
    sample_ball,
    vanishing_order,
)
from singdos.errors import DomainError, OrderMismatchError, ShapeError, UndefinedOrderError


def one(y):
    return np.ones(np.shape(y)[:-1])


def zero(y):
    return np.zeros(np.shape(y)[:-1])


def minus_one(y):
    return -one(y)


def polar(y):
    return np.linalg.norm(y, axis=-1), np.arctan2(y[..., 1], y[..., 0])


def j1cos(y):
    r, t = polar(y)
    return jv(1, r) * np.cos(t)


def j2cos2(y):
    r, t = polar(y)
    return jv(2, r) * np.cos(2 * t)


# ---------------------------------------------------------------- ball rule


@pytest.mark.parametrize("d", [2, 3])
def test_ball_weights_sum_to_volume(d):
    s = sample_ball(one, d, np.zeros(d), 0.7)
    assert np.all(s.weights > 0)
    assert_allclose(s.weights.sum(), s.volume, rtol=1e-10)


# ---------------------------------------------------------------- Newtonian potential


def test_newtonian_uniform_ball_centre():
    s = sample_ball(one, 3, np.zeros(3), 1.0)
    assert_allclose(newtonian_potential(s, np.zeros(3)), -0.5, rtol=1e-10)


def test_newtonian_uniform_ball_surface():
    s = sample_ball(one, 3, np.zeros(3), 1.0)
    assert_allclose(newtonian_potential(s, np.array([0.0, 0.6, 0.8])), -1.0 / 3.0, rtol=1e-8)


def test_newtonian_zero_source():
    s = sample_ball(zero, 2, np.zeros(2), 1.0)
    assert newtonian_potential(s, np.array([0.2, 0.3])) == 0.0


def test_newtonian_outside_rejected():
    s = sample_ball(one, 3, np.zeros(3), 1.0)
    with pytest.raises(DomainError):
        newtonian_potential(s, np.array([0.0, 0.0, 1.5]))


def test_newtonian_uniform_ball_profile():
    psi = NewtonianPotential(one, np.zeros(3), 1.0)
    r = np.array([0.1, 0.35, 0.72, 0.95])
    x = np.column_stack([r, 0 * r, 0 * r])
    assert_allclose(psi(x), -(3 - r**2) / 6, rtol=1e-8)


def test_newtonian_convergence_order():
    def f(y):
        return np.cos(2 * y[..., 0]) * np.exp(y[..., 1])

    x = np.array([0.31, -0.22, 0.4])
    ref = NewtonianPotential(f, np.zeros(3), 1.0, n_radial=48, n_angular=36)(x)
    err = [abs(NewtonianPotential(f, np.zeros(3), 1.0, n_radial=n, n_angular=n)(x) - ref) for n in (3, 6)]
    assert err[1] < 1e-9 or np.log2(err[0] / err[1]) >= 1.5


# ---------------------------------------------------------------- harmonic part


def test_harmonic_part_zero_potential():
    def phi(y):
        return y[..., 0] ** 2 - y[..., 1] ** 2

    s = sample_ball(phi, 2, np.zeros(2), 1.0)
    h, res = harmonic_part(s, zero)
    assert_allclose(h.values, s.values, rtol=0, atol=0)
    assert res < 1e-6


def test_harmonic_part_identity():
    s = sample_ball(j1cos, 2, np.zeros(2), 1.0)
    h, res = harmonic_part(s, s)
    assert np.all(h.values == 0)
    assert res == 0.0


def test_harmonic_part_bessel_j0():
    def j0(y):
        return jv(0, np.linalg.norm(y, axis=-1))

    s = sample_ball(j0, 2, np.zeros(2), 1.0)
    psi = NewtonianPotential(lambda y: -j0(y), np.zeros(2), 1.0, n_radial=24, n_angular=32)
    _, res = harmonic_part(s, psi)
    assert res < 1e-4


def test_harmonic_part_shape_mismatch():
    a = sample_ball(one, 2, np.zeros(2), 1.0)
    b = sample_ball(one, 2, np.zeros(2), 1.0, n_radial=8)
    with pytest.raises(ShapeError):
        harmonic_part(a, b)


# ---------------------------------------------------------------- Y_N


def test_YN_harmonic_input():
    def phi(y):
        r, t = polar(y)
        return r**3 * np.cos(3 * t)

    res = compute_YN(sample_ball(phi, 2, np.zeros(2), 1.0), zero, 3)
    assert_allclose(res.Y_N.coeffs, [1.0, 0.0], atol=1e-8)
    assert np.max(np.abs(res.remainder_samples.values)) < 1e-8


def test_YN_bessel_j1():
    res = compute_YN(sample_ball(j1cos, 2, np.zeros(2), 1.0), minus_one, 1)
    assert_allclose(res.Y_N.coeffs, [0.5, 0.0], atol=1e-4)


def test_YN_bessel_j2():
    res = compute_YN(sample_ball(j2cos2, 2, np.zeros(2), 1.0), minus_one, 2)
    assert_allclose(res.Y_N.coeffs, [0.125, 0.0], atol=1e-4)


def test_YN_order_mismatch():
    with pytest.raises(OrderMismatchError):
        compute_YN(sample_ball(j1cos, 2, np.zeros(2), 1.0), minus_one, 2)


def test_YN_kernel_relation():
    # a solution vanishing to order 2 lies in the kernel of Y_1
    s = sample_ball(j2cos2, 2, np.zeros(2), 1.0)
    res = compute_YN(s, minus_one, 1)
    assert res.Y_N.sphere_norm(1.0) <= 1e-6 * s.sup()
    # and Y_1 of an order-exactly-1 solution is not small
    assert compute_YN(sample_ball(j1cos, 2, np.zeros(2), 1.0), minus_one, 1).Y_N.sphere_norm(1.0) > 0.1


def test_YN_linearity(rng):
    def j1sin(y):
        r, t = polar(y)
        return jv(1, r) * np.sin(t)

    for _ in range(3):
        a, b = rng.standard_normal(2)

        def mix(y, a=a, b=b):
            return a * j1cos(y) + b * j1sin(y)

        ya = compute_YN(sample_ball(j1cos, 2, np.zeros(2), 1.0), minus_one, 1).Y_N
        yb = compute_YN(sample_ball(j1sin, 2, np.zeros(2), 1.0), minus_one, 1).Y_N
        ym = compute_YN(sample_ball(mix, 2, np.zeros(2), 1.0), minus_one, 1).Y_N
        expected = a * ya.coeffs + b * yb.coeffs
        assert np.linalg.norm(ym.coeffs - expected) <= 1e-6 * np.linalg.norm(expected)


def test_remainder_slopes():
    for name, d, N, _, radii, rem in decompose_remainders():
        slope = np.polyfit(np.log(radii), np.log(rem), 1)[0]
        assert slope >= N + 0.9, name


def test_remainder_bound_fitted(constants):
    for _, d, N, _, radii, rem in decompose_remainders():
        assert np.all(rem <= constants.per_dim("B", d) * radii ** (N + 1))


# ---------------------------------------------------------------- vanishing order


def test_vanishing_order_homogeneous():
    def phi(y):
        r, t = polar(y)
        return r**2 * np.cos(2 * t)

    assert vanishing_order(sample_ball(phi, 2, np.zeros(2), 1.0)).order == 2


def test_vanishing_order_constant():
    assert vanishing_order(sample_ball(lambda y: 3.0 * one(y), 2, np.zeros(2), 1.0)).order == 0


def test_vanishing_order_bessel():
    v = vanishing_order(sample_ball(j1cos, 2, np.zeros(2), 1.0))
    assert v.order == 1
    assert v.residual < 1e-2


def test_vanishing_order_zero():
    with pytest.raises(UndefinedOrderError):
        vanishing_order(sample_ball(zero, 3, np.zeros(3), 1.0))


def test_suite_cases_have_declared_order():
    for name, d, phi, _, N in decompose_cases():
        assert vanishing_order(sample_ball(phi, d, np.zeros(d), 1.0)).order == N, name
