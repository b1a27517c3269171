import numpy as np
from numpy.testing import assert_allclose
import pytest
from scipy.integrate import quad
from hypothesis import given, settings, strategies as st

from singdos.errors import NotInLpError
from singdos.potentials import (
    BoundedPart,
    Potential,
    PowerBump,
    adaptive_box_integral,
    free_potential,
    lp_norm,
    power_singularity,
    random_singular,
    unit_window_l1_sup,
)


def test_power_bump_norm_2d():
    V = power_singularity((0.0, 0.0), 0.5, 1.0, 1.0, 2, 3.0)
    assert_allclose(V.K2, (4 * np.pi) ** (1 / 3), rtol=1e-14)


def test_power_bump_zero_amplitude():
    assert power_singularity((0.0, 0.0), 0.5, 1.0, 0.0, 2, 3.0).K2 == 0.0


@pytest.mark.parametrize("a", [-3.0, 0.25, 7.0])
def test_power_bump_homogeneity(a):
    base = power_singularity((0.1, 0.2, 0.3), 0.4, 0.8, 1.0, 3, 4.0).K2
    assert_allclose(power_singularity((0.1, 0.2, 0.3), 0.4, 0.8, a, 3, 4.0).K2, abs(a) * base, rtol=1e-14)


def test_not_in_lp_rejected():
    with pytest.raises(NotInLpError):
        power_singularity((0.0, 0.0), 0.5, 1.0, 1.0, 2, 4.0)
    with pytest.raises(NotInLpError):
        Potential(d=3, p=6.0, bumps=(PowerBump((0, 0, 0), 0.5, 1.0, 1.0, 3),))


def test_lp_norm_constant_square():
    V = Potential(d=2, p=2.0, bounded=BoundedPart(constant=1.0))
    assert_allclose(lp_norm(V, (np.zeros(2), np.ones(2)), 2.0), 1.0, rtol=1e-10)


def test_lp_norm_matches_analytic_bump():
    V = power_singularity((0.0, 0.0), 0.5, 1.0, 1.0, 2, 3.0)
    num = lp_norm(V, (-np.ones(2), np.ones(2)), 3.0)
    assert_allclose(num, V.K2, rtol=1e-4)


def test_lp_norm_inf_bounded():
    B = BoundedPart(constant=0.5, amplitude=-1.5)
    assert lp_norm(B, None, np.inf) == 2.0


def test_adaptive_integral_polynomial():
    val = adaptive_box_integral(lambda p: p[..., 0] ** 2 * p[..., 1], np.zeros(2), np.array([1.0, 2.0]))
    assert_allclose(val, 2.0 / 3.0, rtol=1e-12)


def test_unit_window_constant():
    V = Potential(d=1, p=1.0, bounded=BoundedPart(constant=1.0))
    assert_allclose(unit_window_l1_sup(V, (0.0, 5.0)), 2.0, rtol=1e-12)


def test_unit_window_inverse_sqrt():
    V = Potential(d=1, p=1.5, bumps=(PowerBump((0.0,), 0.5, 1.0, 1.0, 1),))
    assert_allclose(unit_window_l1_sup(V, (-3.0, 3.0)), 4.0, rtol=1e-10)


def test_unit_window_zero():
    assert unit_window_l1_sup(free_potential(1), (0.0, 3.0)) == 0.0


def test_random_singular_deterministic():
    a = random_singular(42, 2, 4.0, 0.5, amplitude=2.0, region=(np.zeros(2), np.full(2, 4.0)))
    b = random_singular(42, 2, 4.0, 0.5, amplitude=2.0, region=(np.zeros(2), np.full(2, 4.0)))
    x = np.random.default_rng(0).uniform(0, 4, (50, 2))
    assert a.K2 == b.K2
    assert np.array_equal(a(x), b(x))


def test_random_singular_zero_density():
    V = random_singular(1, 2, 4.0, 0.0)
    assert V.is_zero()
    assert V.K2 == 0.0


def test_random_singular_triangle():
    V = random_singular(5, 2, 4.0, 10 / 9, amplitude=1.0, region=(np.zeros(2), np.full(2, 3.0)))
    assert len(V.bumps) == 10
    assert V.K2 <= sum(b.lp_norm(V.p) for b in V.bumps) * (1 + 1e-4)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), a=st.floats(0.1, 4) | st.floats(-4, -0.1))
def test_homogeneity_random_combination(seed, a):
    V = random_singular(seed, 2, 4.0, 0.3, amplitude=1.0, region=(np.zeros(2), np.full(2, 3.0)))
    scaled = Potential(d=2, p=4.0, bumps=tuple(
        PowerBump(b.center, b.alpha, b.cutoff, a * b.amplitude, 2) for b in V.bumps))
    if V.bumps:
        assert_allclose(scaled.K2, abs(a) * V.K2, rtol=2e-4)


def test_roundtrip_dict():
    V = random_singular(3, 2, 4.0, 0.3, region=(np.zeros(2), np.full(2, 3.0)),
                        bounded=BoundedPart(constant=0.5))
    W = Potential.from_dict(V.to_dict())
    x = np.random.default_rng(1).uniform(0, 3, (20, 2))
    assert_allclose(W(x), V(x), rtol=0, atol=0)


def _cell_average_oracle(c, h, alpha, cutoff):
    """Iterated 1D quadrature of r^-alpha 1_{r<s} with the kinks as breakpoints."""

    def inner(x):
        ymax = np.sqrt(max(cutoff**2 - x * x, 0.0))
        lo, hi = max(c[1] - h / 2, -ymax), min(c[1] + h / 2, ymax)
        if lo >= hi:
            return 0.0
        pts = [0.0] if lo < 0 < hi else None
        return quad(lambda y: (x * x + y * y) ** (-alpha / 2), lo, hi, points=pts,
                    epsabs=1e-13, epsrel=1e-12, limit=200)[0]

    lo, hi = c[0] - h / 2, c[0] + h / 2
    pts = [t for t in (0.0, np.sqrt(cutoff**2 - (c[1] + h / 2) ** 2)) if lo < t < hi]
    return quad(inner, lo, hi, points=pts or None, epsabs=1e-12, epsrel=1e-11, limit=200)[0] / h**2


def test_cell_average_matches_radial_oracle():
    V = power_singularity((0.0, 0.0), 0.5, 1.0, 1.0, 2, 3.999)
    h = 0.2
    centers = np.array([[0.1, 0.1], [0.3, -0.1], [-0.5, 0.7], [0.9, 0.1]])
    got = V.cell_average(centers, h)
    for c, g in zip(centers, got):
        assert_allclose(g, _cell_average_oracle(c, h, 0.5, 1.0), rtol=1e-6)


def test_cell_integrals_1d_mass():
    V = Potential(d=1, p=1.5, bumps=(PowerBump((0.3,), 0.5, 1.0, 2.0, 1),))
    edges = np.linspace(-1, 2, 31)
    assert_allclose(V.cell_integrals_1d(edges).sum(), 2.0 * 4.0, rtol=1e-12)
