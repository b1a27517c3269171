"""Harmonic-polynomial algebra in two and three dimensions.

Bases
-----
d = 2, degree m >= 1: ``[r^m cos(m t), r^m sin(m t)]`` (unnormalised, the
real and imaginary parts of ``(x + i y)^m``); degree 0 is the constant 1.

d = 3, degree m: real solid harmonics ``r^m Y_mk`` for ``k = -m..m``, where
``Y_mk`` are orthonormal on the unit sphere; ``k < 0`` carries
``sin(|k| phi)`` and ``k >= 0`` carries ``cos(k phi)``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    DomainError,
    InsufficientQuadratureError,
    ShapeError,
    SingularPointError,
    UnsupportedDimensionError,
)

#: Admissible constants in dim H_{<=N} <= gamma_d N^{d-1} for N >= 1.
GAMMA = {2: 3.0, 3: 4.0}

SUPPORTED_DIMS = (2, 3)


def _check_dim(d):
    if d not in SUPPORTED_DIMS:
        raise UnsupportedDimensionError(f"dimension {d} not supported (expected 2 or 3)")


def unit_ball_volume(d):
    """Volume omega_d of the unit ball in R^d."""
    from math import gamma, pi

    return pi ** (d / 2.0) / gamma(d / 2.0 + 1.0)


def sphere_area(d, radius=1.0):
    return d * unit_ball_volume(d) * radius ** (d - 1)


def dim_harmonic(d, m):
    """Dimension of H_m^(d)."""
    _check_dim(d)
    if m < 0:
        return 0
    if d == 2:
        return 1 if m == 0 else 2
    return 2 * m + 1


def dim_cumulative(d, N):
    """Return ``(sum_{m<=N} dim H_m^(d), gamma_check)``.

    ``gamma_check`` is True when the count obeys the bound with the
    module constants ``GAMMA``.
    """
    _check_dim(d)
    if N < 1:
        raise ValueError("N must be >= 1")
    total = sum(dim_harmonic(d, m) for m in range(N + 1))
    return total, bool(total <= GAMMA[d] * N ** (d - 1))


# ------------------------------------------------------------------ quadrature


@lru_cache(maxsize=64)
def _sphere_rule(d, order):
    if d == 2:
        n = order + 1
        t = 2.0 * np.pi * np.arange(n) / n
        dirs = np.column_stack([np.cos(t), np.sin(t)])
        w = np.full(n, 2.0 * np.pi / n)
        return dirs, w
    n_mu = order // 2 + 1
    n_phi = order + 1
    mu, wmu = np.polynomial.legendre.leggauss(n_mu)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    MU, PHI = np.meshgrid(mu, phi, indexing="ij")
    st = np.sqrt(1.0 - MU**2)
    dirs = np.column_stack([(st * np.cos(PHI)).ravel(), (st * np.sin(PHI)).ravel(), MU.ravel()])
    w = np.outer(wmu, np.full(n_phi, 2.0 * np.pi / n_phi)).ravel()
    return dirs, w


def sphere_quadrature(d, order):
    """Unit-sphere rule exact for polynomials of degree <= ``order``.

    Returns ``(directions, weights)``; weights sum to the sphere area.
    d = 2 uses the equispaced trapezoid rule, d = 3 a Gauss-Legendre in
    cos(theta) times equispaced longitude product rule.
    """
    _check_dim(d)
    if order < 0:
        raise ValueError("order must be >= 0")
    dirs, w = _sphere_rule(d, int(order))
    return dirs.copy(), w.copy()


# --------------------------------------------------------- basis evaluation


def _legendre_normalized(L, mu):
    """Normalised associated Legendre values ``P[m][k]`` for ``k <= m <= L``."""
    mu = np.asarray(mu, dtype=float)
    st = np.sqrt(np.clip(1.0 - mu * mu, 0.0, None))
    P = [[None] * (m + 1) for m in range(L + 1)]
    P[0][0] = np.full_like(mu, 1.0 / np.sqrt(4.0 * np.pi))
    for k in range(1, L + 1):
        P[k][k] = np.sqrt((2 * k + 1) / (2.0 * k)) * st * P[k - 1][k - 1]
    for k in range(0, L):
        P[k + 1][k] = np.sqrt(2 * k + 3.0) * mu * P[k][k]
    for k in range(0, L + 1):
        for m in range(k + 2, L + 1):
            a = np.sqrt((4.0 * m * m - 1.0) / (m * m - k * k))
            b = np.sqrt(((m - 1.0) ** 2 - k * k) / (4.0 * (m - 1.0) ** 2 - 1.0))
            P[m][k] = a * (mu * P[m - 1][k] - b * P[m - 2][k])
    return P


def real_spherical_harmonics(m, dirs):
    """Orthonormal real spherical harmonics of degree m at unit vectors.

    Returns an array of shape ``(npts, 2m+1)`` ordered ``k = -m..m``.
    """
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    mu = np.clip(dirs[:, 2], -1.0, 1.0)
    phi = np.arctan2(dirs[:, 1], dirs[:, 0])
    P = _legendre_normalized(m, mu)
    out = np.empty((dirs.shape[0], 2 * m + 1))
    out[:, m] = P[m][0]
    for k in range(1, m + 1):
        out[:, m + k] = np.sqrt(2.0) * P[m][k] * np.cos(k * phi)
        out[:, m - k] = np.sqrt(2.0) * P[m][k] * np.sin(k * phi)
    return out


def _split_radial(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.linalg.norm(x, axis=1)
    safe = np.where(r > 0, r, 1.0)
    u = x / safe[:, None]
    u[r == 0] = 0.0
    u[r == 0, -1] = 1.0
    return r, u


def basis_values(d, m, x):
    """Values of every basis element of H_m^(d) at points ``x``.

    ``x`` has shape ``(npts, d)``; the result has shape ``(npts, dim)``.
    """
    _check_dim(d)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != d:
        raise ShapeError(f"points have {x.shape[1]} coordinates, expected {d}")
    if d == 2:
        if m == 0:
            return np.ones((x.shape[0], 1))
        z = (x[:, 0] + 1j * x[:, 1]) ** m
        return np.column_stack([z.real, z.imag])
    r, u = _split_radial(x)
    return (r**m)[:, None] * real_spherical_harmonics(m, u)


def basis_norms_sq(d, m):
    """Squared L^2(unit sphere) norms of the basis elements of H_m^(d)."""
    _check_dim(d)
    if d == 2:
        return np.array([2.0 * np.pi]) if m == 0 else np.array([np.pi, np.pi])
    return np.ones(2 * m + 1)


@dataclass(frozen=True)
class HarmonicPoly:
    """Homogeneous harmonic polynomial of degree ``m`` on R^d."""

    d: int
    m: int
    coeffs: np.ndarray

    def __post_init__(self):
        _check_dim(self.d)
        c = np.asarray(self.coeffs, dtype=float).ravel()
        if c.size != dim_harmonic(self.d, self.m):
            raise ShapeError(
                f"degree {self.m} in d={self.d} needs {dim_harmonic(self.d, self.m)} coefficients, got {c.size}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        flat = basis_values(self.d, self.m, x.reshape(-1, self.d)) @ self.coeffs
        return flat.reshape(x.shape[:-1]) if x.ndim > 1 else float(flat[0])

    def __add__(self, other):
        if (self.d, self.m) != (other.d, other.m):
            raise ShapeError("cannot add harmonic polynomials of different degree or dimension")
        return HarmonicPoly(self.d, self.m, self.coeffs + other.coeffs)

    def __mul__(self, a):
        return HarmonicPoly(self.d, self.m, a * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self):
        return HarmonicPoly(self.d, self.m, -self.coeffs)

    def sphere_norm(self, radius=1.0):
        """L^2 norm over the sphere of the given radius (normalised measure)."""
        ns = basis_norms_sq(self.d, self.m)
        return float(radius**self.m * np.sqrt(np.sum(ns * self.coeffs**2) / sphere_area(self.d)))

    @classmethod
    def zero(cls, d, m):
        return cls(d, m, np.zeros(dim_harmonic(d, m)))


def evaluate_sum(polys, x):
    """Evaluate ``sum(p(x) for p in polys)`` with an empty sum being zero."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] if x.ndim > 1 else ())
    for p in polys:
        out = out + p(x)
    return out


def harmonic_basis(d, m):
    """Orthogonal basis of H_m^(d) as a list of :class:`HarmonicPoly`."""
    _check_dim(d)
    if m < 0:
        raise ValueError("degree must be >= 0")
    k = dim_harmonic(d, m)
    return [HarmonicPoly(d, m, np.eye(k)[i]) for i in range(k)]


# --------------------------------------------------- fundamental solution


def fundamental_solution(d, x):
    """Phi_d(x): -(1/2pi) log|x| in d = 2, (d(d-2) omega_d)^-1 |x|^{2-d} else.

    ``x`` may be a single point or an array of points (last axis = d).
    """
    _check_dim(d)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != d:
        raise ShapeError(f"points have {x.shape[-1]} coordinates, expected {d}")
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise SingularPointError("fundamental solution is singular at the origin")
    return radial_fundamental(d, r)


def radial_fundamental(d, r):
    """Phi_d as a function of the radius (no singularity check)."""
    r = np.asarray(r, dtype=float)
    if d == 2:
        return -np.log(r) / (2.0 * np.pi)
    return r ** (2.0 - d) / (d * (d - 2) * unit_ball_volume(d))


def fundamental_coeffs(d, m, y):
    """Coefficients of ``J_m(., y)`` in the basis of H_m^(d), one row per y.

    ``y`` has shape ``(npts, d)`` and must avoid the origin.
    """
    _check_dim(d)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    ry, u = _split_radial(y)
    if np.any(ry == 0):
        raise SingularPointError("expansion centre y must be nonzero")
    if d == 2:
        if m == 0:
            return (-np.log(ry) / (2.0 * np.pi))[:, None]
        ty = np.arctan2(y[:, 1], y[:, 0])
        a = 1.0 / (2.0 * np.pi * m * ry**m)
        return np.column_stack([a * np.cos(m * ty), a * np.sin(m * ty)])
    return real_spherical_harmonics(m, u) / ((2 * m + 1) * ry ** (m + 1))[:, None]


def expand_fundamental(d, y, N):
    """Solid-harmonic expansion terms ``J_m(., y)``, m = 0..N, of Phi(x - y).

    The partial sum ``sum_m J_m(x, y)`` converges to ``Phi(x - y)`` for
    ``|x| < |y|`` at a geometric rate ``(|x|/|y|)^{N+1}``.
    """
    _check_dim(d)
    y = np.asarray(y, dtype=float).ravel()
    if y.size != d:
        raise ShapeError(f"y has {y.size} coordinates, expected {d}")
    return [HarmonicPoly(d, m, fundamental_coeffs(d, m, y[None, :])[0]) for m in range(N + 1)]


def fundamental_partial_sum(d, x, y, N):
    """Phi_{y,N}(x) evaluated directly from the classical series.

    d = 3 runs the Legendre three-term recurrence on cos(gamma); d = 2 sums
    the logarithmic cosine series. Independent of :func:`expand_fundamental`.
    """
    _check_dim(d)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    ry = float(np.linalg.norm(y))
    if ry == 0.0:
        raise SingularPointError("expansion centre y must be nonzero")
    rx = np.linalg.norm(x, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cosg = np.where(rx > 0, (x @ y) / (np.where(rx > 0, rx, 1.0) * ry), 1.0)
    t = rx / ry
    if d == 2:
        total = np.full(rx.shape, -np.log(ry) / (2.0 * np.pi))
        gamma = np.arccos(np.clip(cosg, -1.0, 1.0))
        for m in range(1, N + 1):
            total += t**m * np.cos(m * gamma) / (2.0 * np.pi * m)
        return total
    p_prev = np.ones_like(cosg)
    total = p_prev.copy()
    if N >= 1:
        p_cur = cosg.copy()
        total += t * p_cur
        for m in range(1, N):
            p_next = ((2 * m + 1) * cosg * p_cur - m * p_prev) / (m + 1)
            p_prev, p_cur = p_cur, p_next
            total += t ** (m + 1) * p_cur
    return total / (4.0 * np.pi * ry)


def expansion_bound(d, x, y, N, A=1.0):
    """Geometric truncation bound ``A (N+1)^{d-2} (4|x|/3|y|)^{N+1} |Phi(y/4)|``.

    Shape of the tail estimate for ``|Phi(x - y) - Phi_{y,N}(x)|`` when
    ``|x| <= |y|/2``; ``A`` is a fitted constant per dimension.
    """
    _check_dim(d)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    ry = float(np.linalg.norm(y))
    t = 4.0 * np.linalg.norm(x, axis=1) / (3.0 * ry)
    return A * (N + 1.0) ** (d - 2) * t ** (N + 1) * abs(float(radial_fundamental(d, ry / 4.0)))


# ------------------------------------------------------- sphere projection


@dataclass(frozen=True)
class SphereSample:
    """Function values on a sphere ``center + radius * S^{d-1}``."""

    d: int
    radius: float
    order: int
    values: np.ndarray
    center: np.ndarray = None

    @property
    def directions(self):
        return sphere_quadrature(self.d, self.order)[0]

    @property
    def weights(self):
        return sphere_quadrature(self.d, self.order)[1]

    @property
    def points(self):
        c = np.zeros(self.d) if self.center is None else np.asarray(self.center, dtype=float)
        return c + self.radius * self.directions


def sample_sphere(f, d, radius, order, center=None):
    """Sample a vectorised callable ``f(points) -> values`` on a sphere."""
    _check_dim(d)
    if radius <= 0:
        raise DomainError("sphere radius must be positive")
    dirs, _ = sphere_quadrature(d, order)
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    vals = np.asarray(f(c + radius * dirs), dtype=float)
    return SphereSample(d, float(radius), int(order), vals, c)


def project_harmonic(sample, m):
    """Project sphere samples of a harmonic function onto H_m^(d).

    Returns ``p_m`` in the normalisation where ``sum_m p_m(x - center)``
    reproduces the function inside the sphere.
    """
    if sample.order < 2 * m:
        raise InsufficientQuadratureError(
            f"quadrature order {sample.order} cannot resolve degree {m} (need >= {2 * m})"
        )
    dirs, w = sphere_quadrature(sample.d, sample.order)
    vals = np.asarray(sample.values, dtype=float)
    if vals.shape != w.shape:
        raise ShapeError("sample values do not match the quadrature node count")
    B = basis_values(sample.d, m, dirs)
    c = (B * w[:, None]).T @ vals / basis_norms_sq(sample.d, m)
    return HarmonicPoly(sample.d, m, c / sample.radius**m)
