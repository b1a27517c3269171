"""Harmonic decomposition of solutions of -Lap(phi) + W phi = 0 on a ball.

A solution splits as ``phi = h + psi`` where ``psi`` is the Newtonian
potential of ``W phi`` and ``h`` is harmonic. Truncating the sphere
projections of ``h`` and the solid-harmonic expansion of ``psi`` at degree
``N`` gives the linear map ``Y_N``, whose kernel on solutions vanishing to
order ``N`` is the set vanishing to order ``N + 1``.

All ball integrals use polar product rules. Integrals against the
fundamental solution are taken in polar coordinates centred at the
evaluation point, so the kernel singularity is absorbed by the Jacobian.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError, OrderMismatchError, ShapeError, UndefinedOrderError
from .harmonic import (
    HarmonicPoly,
    SphereSample,
    _check_dim,
    fundamental_coeffs,
    project_harmonic,
    radial_fundamental,
    sphere_quadrature,
    unit_ball_volume,
)

ORDER_TOL = 1e-6
DEFAULT_ANGULAR = {2: 24, 3: 12}


@lru_cache(maxsize=None)
def _gl01(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def ball_rule(d, center, radius, n_radial=16, order=24):
    """Polar product rule on ``B(center, radius)``.

    Gauss-Legendre in the radius (weight r^{d-1}) times the sphere rule of
    the given exactness order. Exact for polynomials of degree
    ``min(2 n_radial - d, order)``.
    """
    _check_dim(d)
    if radius <= 0:
        raise DomainError("ball radius must be positive")
    s, ws = _gl01(n_radial)
    rho = radius * s
    wr = radius * ws * rho ** (d - 1)
    dirs, wa = sphere_quadrature(d, order)
    nodes = np.asarray(center, dtype=float) + (rho[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    weights = (wr[:, None] * wa[None, :]).ravel()
    return nodes, weights


@dataclass(frozen=True)
class BallSample:
    """Values of a field at the nodes of a polar rule on a ball.

    ``field`` is the vectorised callable the values came from; operations
    that need off-node values (potentials, sphere probes) use it.
    """

    center: np.ndarray
    radius: float
    nodes: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    field: object = None

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).ravel()
        object.__setattr__(self, "center", c)
        nodes = np.asarray(self.nodes, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != c.size:
            raise ShapeError("nodes must have shape (npts, d)")
        if w.shape != (nodes.shape[0],) or v.shape != w.shape:
            raise ShapeError("weights and values must have one entry per node")
        if np.any(w <= 0):
            raise ValueError("quadrature weights must be positive")
        for a in (nodes, w, v):
            a.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "values", v)

    @property
    def d(self):
        return self.center.size

    @property
    def volume(self):
        return unit_ball_volume(self.d) * self.radius**self.d

    def integral(self):
        return float(self.weights @ self.values)

    def sup(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def require_field(self):
        if self.field is None:
            raise ShapeError("this operation needs the sample's field callable")
        return self.field


def sample_ball(f, d, center, radius, n_radial=16, order=24):
    """Sample a vectorised callable ``f(points)`` on a ball polar rule."""
    nodes, weights = ball_rule(d, center, radius, n_radial, order)
    return BallSample(center, radius, nodes, weights, np.asarray(f(nodes), dtype=float), f)


# ---------------------------------------------------------- Newtonian kernel


def _frame(u):
    """Orthonormal vectors completing the unit vector ``u`` (rows)."""
    d = u.size
    if d == 2:
        return np.array([[-u[1], u[0]]])
    a = np.array([1.0, 0.0, 0.0]) if abs(u[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    v1 = a - (a @ u) * u
    v1 /= np.linalg.norm(v1)
    return np.stack([v1, np.cross(u, v1)])


@lru_cache(maxsize=None)
def _angular_rule(d, n_angular):
    """Nodes in (cos beta, sin beta) or (mu, cos phi, sin phi) with weights.

    The polar angle is split where the exit distance can kink (beta = +-pi/2
    in d = 2, mu = 0 in d = 3).
    """
    x, w = np.polynomial.legendre.leggauss(n_angular)
    if d == 2:
        edges = np.linspace(-np.pi, np.pi, 5)
        beta = np.concatenate([0.5 * (b - a) * x + 0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:])])
        wb = np.concatenate([0.5 * (b - a) * w for a, b in zip(edges[:-1], edges[1:])])
        return np.column_stack([np.cos(beta), np.sin(beta)]), wb
    mu = np.concatenate([0.5 * x - 0.5, 0.5 * x + 0.5])
    wm = np.concatenate([0.5 * w, 0.5 * w])
    nphi = 2 * n_angular
    phi = 2.0 * np.pi * np.arange(nphi) / nphi
    M, P = np.meshgrid(mu, phi, indexing="ij")
    sin_t = np.sqrt(1.0 - M**2)
    coords = np.column_stack([M.ravel(), (sin_t * np.cos(P)).ravel(), (sin_t * np.sin(P)).ravel()])
    return coords, np.repeat(wm, nphi) * (2.0 * np.pi / nphi)


def polar_rule_about(x, center, radius, n_radial, n_angular, power=1):
    """Polar product rule on ``B(center, radius)`` centred at the point ``x``.

    Returns ``(points, t, weights)`` with ``points`` of shape ``(A, n, d)``
    and ``t = |points - x|``; ``sum(weights * g)`` approximates the ball
    integral of ``g``. The radial variable is ``t = t* s^power`` with
    ``t*`` the exit distance, which smooths kernels singular at ``x``.
    """
    d = x.size
    off = x - center
    a = float(np.linalg.norm(off))
    u = off / a if a > 0 else np.eye(d)[0]
    frame = np.vstack([u, _frame(u)])
    coords, wa = _angular_rule(d, n_angular)
    dirs = coords @ frame
    mu = coords[:, 0]
    tstar = -a * mu + np.sqrt(np.maximum(a * a * mu * mu + radius * radius - a * a, 0.0))
    s, ws = _gl01(n_radial)
    t = tstar[:, None] * s[None, :] ** power
    jac = power * tstar[:, None] * s[None, :] ** (power - 1) * t ** (d - 1)
    pts = x + t[:, :, None] * dirs[:, None, :]
    return pts, t, wa[:, None] * ws[None, :] * jac


def _polar_about(x, center, radius, n_radial, n_angular):
    """Nodes and weights integrating ``f(y) Phi(x - y)`` over the ball."""
    d = x.size
    # in d = 2 the substitution t = t* s^2 tames t log t at the evaluation point
    pts, t, w = polar_rule_about(x, center, radius, n_radial, n_angular, power=2 if d == 2 else 1)
    ker = radial_fundamental(d, np.where(t > 0, t, 1.0))
    return pts.reshape(-1, d), (w * ker).ravel()


class NewtonianPotential:
    """``psi(x) = -int_B f(y) Phi(x - y) dy`` for a vectorised source ``f``.

    Parameters
    ----------
    f : callable
        Source density, ``f(points) -> values``.
    center, radius
        The ball of integration.
    n_radial, n_angular : int
        Gauss-Legendre sizes per radial line and per angular panel
        (the angular default is 24 in d = 2 and 12 in d = 3).
    """

    def __init__(self, f, center, radius, n_radial=16, n_angular=None):
        self.f = f
        self.center = np.asarray(center, dtype=float).ravel()
        self.radius = float(radius)
        self.d = self.center.size
        _check_dim(self.d)
        self.n_radial = int(n_radial)
        self.n_angular = int(n_angular or DEFAULT_ANGULAR[self.d])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[1] != self.d:
            raise ShapeError(f"points have {pts.shape[1]} coordinates, expected {self.d}")
        dist = np.linalg.norm(pts - self.center, axis=1)
        if np.any(dist > self.radius * (1.0 + 1e-12)):
            raise DomainError("evaluation point lies outside the sampled ball")
        out = np.empty(pts.shape[0])
        for i, xi in enumerate(pts):
            nodes, w = _polar_about(xi, self.center, self.radius, self.n_radial, self.n_angular)
            out[i] = -(w @ np.asarray(self.f(nodes), dtype=float))
        return float(out[0]) if single else out


def newtonian_potential(source, x, n_radial=16, n_angular=None):
    """Newtonian potential of the sampled source ``W phi`` at ``x``.

    ``source`` is a :class:`BallSample` whose field is the density.
    """
    psi = NewtonianPotential(source.require_field(), source.center, source.radius, n_radial, n_angular)
    return psi(x)


# ---------------------------------------------------------- harmonic part


def _mean_value_defect(hfield, center, radius, d, order=24):
    """Max over test spheres of |sphere mean - centre value|."""
    dirs, w = sphere_quadrature(d, order)
    area = w.sum()
    centres = [center] + [center + s * 0.3 * radius * e for e in np.eye(d) for s in (1.0, -1.0)]
    radii = [0.5 * radius] + [0.3 * radius] * (2 * d)
    worst = 0.0
    for c, r in zip(centres, radii):
        vals = hfield(np.vstack([c[None, :], c + r * dirs]))
        worst = max(worst, abs(w @ vals[1:] / area - vals[0]))
    return worst


def _difference(f, g):
    def diff(y):
        return np.asarray(f(y), dtype=float) - np.asarray(g(y), dtype=float)

    return diff


def harmonic_part(phi, psi):
    """``h = phi - psi`` on the nodes of ``phi`` and its harmonicity residual.

    ``psi`` is a callable, a :class:`BallSample` on the same nodes, or an
    array of node values. The residual is the worst mean-value defect over
    interior test spheres divided by ``max |h|``; it is NaN when either
    side lacks a field to evaluate off the nodes.
    """
    if isinstance(psi, BallSample):
        if psi.nodes.shape != phi.nodes.shape or not np.allclose(psi.nodes, phi.nodes):
            raise ShapeError("phi and psi are sampled on different node sets")
        pvals, pfield = psi.values, psi.field
    elif callable(psi):
        pvals, pfield = np.asarray(psi(phi.nodes), dtype=float), psi
    else:
        pvals, pfield = np.asarray(psi, dtype=float), None
        if pvals.shape != phi.values.shape:
            raise ShapeError("psi values do not match the node count of phi")
    hfield = None
    if phi.field is not None and pfield is not None:
        hfield = _difference(phi.field, pfield)
    h = BallSample(phi.center, phi.radius, phi.nodes, phi.weights, phi.values - pvals, hfield)
    scale = h.sup()
    if hfield is None:
        residual = float("nan")
    elif scale == 0.0:
        residual = 0.0
    else:
        residual = _mean_value_defect(hfield, phi.center, phi.radius, phi.d) / scale
    return h, residual


# ---------------------------------------------------------------- Y_N


@dataclass(frozen=True)
class DecompositionResult:
    """Output of :func:`compute_YN`.

    Attributes
    ----------
    h_N, psi_N : list of HarmonicPoly
        Degree-m parts (m = 0..N) of the harmonic part and of the
        truncated Newtonian potential, centred at the ball centre.
    Y_N : HarmonicPoly
        Degree-N component of ``h_N + psi_N``.
    remainder_samples : SphereSample
        ``phi - Y_N`` on the probe sphere.
    lower_norms : ndarray
        Sphere norms (radius r) of the degree < N components, relative to
        ``sup |phi|``.
    """

    h_N: list
    psi_N: list
    Y_N: HarmonicPoly
    remainder_samples: SphereSample
    lower_norms: np.ndarray
    center: np.ndarray
    phi_field: object = field(default=None, repr=False)

    def remainder_max(self, rho, order=None):
        """max over the sphere of radius ``rho`` of ``|phi - Y_N phi|``."""
        d = self.Y_N.d
        order = order or max(2 * self.Y_N.m + 8, 16)
        dirs, _ = sphere_quadrature(d, order)
        pts = self.center + rho * dirs
        return float(np.max(np.abs(self.phi_field(pts) - self.Y_N(rho * dirs))))


def _centre_coefficients(f, center, radius, N, n_radial, order):
    """Coefficients of ``-int_B f(y) J_m(., y - center) dy``, m = 0..N."""
    d = center.size
    s, ws = _gl01(n_radial)
    rho = radius * s**2
    wr = 2.0 * radius * s * ws * rho ** (d - 1)
    dirs, wa = sphere_quadrature(d, order)
    rel = (rho[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    w = (wr[:, None] * wa[None, :]).ravel()
    fw = w * np.asarray(f(center + rel), dtype=float)
    return [HarmonicPoly(d, m, -(fw @ fundamental_coeffs(d, m, rel))) for m in range(N + 1)]


def compute_YN(phi, W, N, probe_radius=None, n_radial=16, n_angular=None, tol=ORDER_TOL):
    """Decompose ``phi`` and return ``Y_N phi`` with diagnostics.

    Parameters
    ----------
    phi : BallSample
        Solution samples with a field callable, centred at the point where
        the vanishing order is measured.
    W : callable
        Potential, vectorised over points.
    N : int
        Truncation degree; ``phi`` must vanish to order ``N`` at the centre.
    probe_radius : float, optional
        Radius of the remainder probe sphere, default ``r / 6``.
    tol : float
        Degree < N components above ``tol * sup|phi|`` (sphere norm at
        radius r) raise :class:`OrderMismatchError`.
    """
    if N < 0:
        raise ValueError("N must be >= 0")
    fphi = phi.require_field()
    d, c, R = phi.d, phi.center, phi.radius

    def source(y):
        return np.asarray(W(y), dtype=float) * np.asarray(fphi(y), dtype=float)

    psi = NewtonianPotential(source, c, R, n_radial, n_angular)
    # project h on the half-radius sphere; the high order suppresses aliasing
    order = 2 * N + 32
    rs = 0.5 * R
    dirs, _ = sphere_quadrature(d, order)
    pts = c + rs * dirs
    hvals = np.asarray(fphi(pts), dtype=float) - psi(pts)
    hs = SphereSample(d, rs, order, hvals, c)
    h_N = [project_harmonic(hs, m) for m in range(N + 1)]
    psi_N = _centre_coefficients(source, c, R, N, 2 * n_radial, 2 * N + 24)

    scale = max(phi.sup(), 1e-300)
    lower = np.array([(h_N[m] + psi_N[m]).sphere_norm(R) / scale for m in range(N)])
    if lower.size and np.max(lower) > tol:
        m_bad = int(np.argmax(lower))
        raise OrderMismatchError(
            f"degree-{m_bad} component is {lower[m_bad]:.2e} of sup|phi|; phi does not vanish to order {N}"
        )
    Y_N = h_N[N] + psi_N[N]
    rho = R / 6.0 if probe_radius is None else float(probe_radius)
    porder = max(2 * N + 8, 16)
    pd, _ = sphere_quadrature(d, porder)
    rem = np.asarray(fphi(c + rho * pd), dtype=float) - Y_N(rho * pd)
    return DecompositionResult(
        h_N=h_N,
        psi_N=psi_N,
        Y_N=Y_N,
        remainder_samples=SphereSample(d, rho, porder, rem, c),
        lower_norms=lower,
        center=c,
        phi_field=fphi,
    )


# ----------------------------------------------------------- vanishing order


@dataclass(frozen=True)
class VanishingOrder:
    """Estimated vanishing order and the log-log regression behind it."""

    order: int
    slope: float
    intercept: float
    residual: float
    radii: np.ndarray
    maxima: np.ndarray


def vanishing_order(phi, x0=None, radii=None, order=32, n_spheres=6):
    """Estimate the vanishing order of ``phi`` at ``x0``.

    Fits ``log max_{|x - x0| = rho} |phi|`` against ``log rho`` over dyadic
    radii and rounds the slope. Radii where the maximum has fallen to
    round-off are dropped; at least four must remain.
    """
    fphi = phi.require_field()
    d = phi.d
    x0 = phi.center if x0 is None else np.asarray(x0, dtype=float).ravel()
    reach = phi.radius - np.linalg.norm(x0 - phi.center)
    if reach <= 0:
        raise DomainError("x0 must lie inside the sampled ball")
    if radii is None:
        radii = reach * 2.0 ** -np.arange(2, 2 + n_spheres)
    radii = np.asarray(radii, dtype=float)
    dirs, _ = sphere_quadrature(d, order)
    maxima = np.array([np.max(np.abs(fphi(x0 + r * dirs))) for r in radii])
    scale = max(phi.sup(), np.max(maxima))
    if scale == 0.0 or np.max(maxima) <= 1e-12 * scale:
        raise UndefinedOrderError("phi vanishes to round-off; the vanishing order is undefined")
    keep = maxima > 1e-13 * scale
    if keep.sum() < 4:
        raise UndefinedOrderError("fewer than four probe spheres resolve phi above round-off")
    lr, lm = np.log(radii[keep]), np.log(maxima[keep])
    A = np.column_stack([lr, np.ones_like(lr)])
    coef, *_ = np.linalg.lstsq(A, lm, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - lm) ** 2)))
    return VanishingOrder(int(round(coef[0])), float(coef[0]), float(coef[1]), resid, radii, maxima)
