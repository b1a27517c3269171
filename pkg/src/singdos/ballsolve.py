"""Dirichlet problem for -Lap(phi) + W phi = 0 on a ball.

The solution operator maps boundary data ``g`` to the fixed point of

    phi = P[g] - int_B G_r(., y) W(y) phi(y) dy,

where ``P[g]`` is the harmonic (Poisson) extension and ``G_r`` the
Dirichlet Green's function of the ball. The iteration contracts when
``C_d r^e ||W||_p < 1`` with ``C_d`` the sup over ``x`` of the
``L^q(B_1)`` norm of ``G_1(x, .)``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize
from scipy.interpolate import BarycentricInterpolator

from .decompose import BallSample, _gl01, ball_rule, polar_rule_about
from .errors import (
    DivergenceError,
    DomainError,
    NoContractionError,
    ShapeError,
    SingularPointError,
)
from .harmonic import (
    _check_dim,
    basis_norms_sq,
    basis_values,
    radial_fundamental,
    sphere_quadrature,
    unit_ball_volume,
)

ALPHA = {2: 2.0, 3: 2.0}


@dataclass(frozen=True)
class GreenBall:
    """The ball ``B(0, radius)`` in R^d."""

    radius: float
    d: int

    def __post_init__(self):
        _check_dim(self.d)
        if self.radius <= 0:
            raise DomainError("ball radius must be positive")


def _inside(ball, pts, strict):
    r = np.linalg.norm(pts, axis=-1)
    lim = ball.radius * (1.0 + 1e-12)
    bad = r >= ball.radius if strict else r > lim
    if np.any(bad):
        raise DomainError("point outside the ball")
    return r


def _green(d, R, x, y):
    """Vectorised G_R(x, y) without checks; broadcasts over leading axes."""
    diff = np.linalg.norm(x - y, axis=-1)
    ry = np.linalg.norm(y, axis=-1)
    safe = np.where(ry > 0, ry, 1.0)
    ystar = (R * R / safe**2)[..., None] * y
    img = np.where(ry > 0, (safe / R) * np.linalg.norm(x - ystar, axis=-1), R)
    return radial_fundamental(d, diff) - radial_fundamental(d, img)


def green_function(ball, x, y):
    """Dirichlet Green's function ``G_r(x, y)`` of the ball (image charge)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != ball.d or y.shape[-1] != ball.d:
        raise ShapeError("point dimension does not match the ball")
    _inside(ball, x, strict=False)
    _inside(ball, y, strict=True)
    if np.any(np.linalg.norm(x - y, axis=-1) == 0):
        raise SingularPointError("Green's function is singular at x = y")
    g = _green(ball.d, ball.radius, x, y)
    return float(g) if np.ndim(g) == 0 else g


def green_ball_integral(ball, x):
    """``int_B G_r(x, y) dy = (r^2 - |x|^2) / (2d)``."""
    x = np.asarray(x, dtype=float)
    return (ball.radius**2 - np.sum(x * x, axis=-1)) / (2.0 * ball.d)


def poisson_kernel(ball, x, zeta):
    """``(r^2 - |x|^2) / (d omega_d r |x - zeta|^d)`` for ``|zeta| = r``."""
    x = np.asarray(x, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    d, r = ball.d, ball.radius
    num = r * r - np.sum(x * x, axis=-1)
    return num / (d * unit_ball_volume(d) * r * np.linalg.norm(x - zeta, axis=-1) ** d)


# ---------------------------------------------------------- boundary data


@dataclass(frozen=True)
class BoundaryData:
    """Values on the boundary sphere nodes of a ball with surface weights."""

    d: int
    radius: float
    order: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.shape != self.weights.shape:
            raise ShapeError("boundary values do not match the sphere rule")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def directions(self):
        return sphere_quadrature(self.d, self.order)[0]

    @property
    def nodes(self):
        return self.radius * self.directions

    @property
    def weights(self):
        return sphere_quadrature(self.d, self.order)[1] * self.radius ** (self.d - 1)

    def sup(self):
        return float(np.max(np.abs(self.values)))


def boundary_data(g, ball, order=24):
    """Sample a vectorised callable on the boundary of ``ball``."""
    dirs, _ = sphere_quadrature(ball.d, order)
    return BoundaryData(ball.d, ball.radius, order, np.asarray(g(ball.radius * dirs), dtype=float))


def _harmonic_coefficients(g):
    """Sphere-harmonic coefficients of boundary data up to degree order/2."""
    dirs, w = sphere_quadrature(g.d, g.order)
    return [
        (basis_values(g.d, m, dirs) * w[:, None]).T @ g.values / basis_norms_sq(g.d, m)
        for m in range(g.order // 2 + 1)
    ]


def poisson_extend(ball, g, x):
    """Harmonic extension of the boundary data ``g`` evaluated at ``x``.

    The data are expanded in sphere harmonics up to half the rule's order
    and continued inward as solid harmonics; this equals the Poisson
    integral of the band-limited data and stays accurate up to the
    boundary.
    """
    if g.d != ball.d or not np.isclose(g.radius, ball.radius):
        raise ShapeError("boundary data belong to a different ball")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    _inside(ball, pts, strict=False)
    rel = pts / ball.radius
    out = np.zeros(pts.shape[0])
    for m, c in enumerate(_harmonic_coefficients(g)):
        out += basis_values(ball.d, m, rel) @ c
    return float(out[0]) if single else out


# ----------------------------------------------------- Green L^q constants


def green_lq_norm(ball, x, q, n_radial=24, n_angular=24):
    """``||G_r(x, .)||_{L^q(B_r)}`` by polar quadrature centred at ``x``."""
    x = np.asarray(x, dtype=float).ravel()
    _inside(ball, x[None, :], strict=True)
    pts, t, w = polar_rule_about(x, np.zeros(ball.d), ball.radius, n_radial, n_angular, power=3)
    live = t > 0
    vals = np.zeros_like(t)
    vals[live] = np.abs(_green(ball.d, ball.radius, x, pts[live])) ** q
    return float(np.sum(w * vals)) ** (1.0 / q)


def conjugate(p):
    return 1.0 if np.isinf(p) else p / (p - 1.0)


def green_exponent(d, p):
    """The radius exponent ``d(alpha - q)/(alpha q)`` of the contraction bound."""
    q = conjugate(p)
    a = ALPHA[d]
    return d * (a - q) / (a * q)


@lru_cache(maxsize=None)
def _green_constant(d, q):
    ball = GreenBall(1.0, d)

    def neg(s):
        return -green_lq_norm(ball, np.r_[s, np.zeros(d - 1)], q)

    grid = np.linspace(0.0, 0.95, 20)
    vals = np.array([neg(s) for s in grid])
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = optimize.minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-4})
    return float(max(-res.fun, -vals[k]))


def green_constant(d, p):
    """``C_d = sup_x ||G_1(x, .)||_{L^q(B_1)}`` with ``q = p/(p-1)`` (cached)."""
    _check_dim(d)
    q = conjugate(p)
    if d == 3 and q >= 3.0:
        raise ValueError("G is not in L^q for q >= 3 in d = 3")
    return _green_constant(d, round(q, 12))


def contraction_factor(d, p, r, W_p):
    """``C_d r^e W_p``, the contraction estimate of the Green iteration."""
    return green_constant(d, p) * r ** green_exponent(d, p) * W_p


def contraction_radius(d, p, W_p, kmax=200):
    """Largest ``r = 2^-k`` with ``C_d r^e (1 + W_p) <= 1/2``."""
    if not p > d:
        raise ValueError("contraction_radius needs p > d")
    C = green_constant(d, p)
    e = green_exponent(d, p)
    for k in range(kmax + 1):
        r = 2.0**-k
        if C * r**e * (1.0 + W_p) <= 0.5:
            return r
    return 0.0


# ----------------------------------------------------------- interpolation


class PolarInterpolant:
    """Spectral interpolant of values on a ball polar product rule.

    Values at each radial node are expanded in sphere harmonics of degree
    ``<= order // 2``; each coefficient is interpolated in the radius by
    barycentric Lagrange on the radial Gauss nodes.
    """

    def __init__(self, d, center, radius, n_radial, order, values):
        self.d = d
        self.center = np.asarray(center, dtype=float).ravel()
        self.radius = float(radius)
        s, _ = _gl01(n_radial)
        dirs, w = sphere_quadrature(d, order)
        vals = np.asarray(values, dtype=float).reshape(n_radial, dirs.shape[0])
        self.degrees = range(order // 2 + 1)
        coeffs = [
            vals @ (basis_values(d, m, dirs) * w[:, None]) / basis_norms_sq(d, m) for m in self.degrees
        ]
        self._sizes = [c.shape[1] for c in coeffs]
        self._radial = BarycentricInterpolator(radius * s, np.hstack(coeffs))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.d) - self.center
        rho = np.linalg.norm(flat, axis=1)
        safe = np.where(rho > 0, rho, 1.0)
        u = flat / safe[:, None]
        c = np.atleast_2d(self._radial(rho))
        out = np.zeros(flat.shape[0])
        start = 0
        for m, size in zip(self.degrees, self._sizes):
            out += np.sum(basis_values(self.d, m, u) * c[:, start : start + size], axis=1)
            start += size
        return out.reshape(x.shape[:-1]) if x.ndim > 1 else float(out[0])


# ------------------------------------------------------------------ solve


@dataclass(frozen=True)
class ZrSolution:
    """Result of :func:`dirichlet_solve_Zr`.

    ``sample`` holds the solution on the interior nodes and carries the
    polar interpolant as its field. ``trace`` lists the sup-norm changes of
    successive iterates.
    """

    sample: BallSample
    trace: np.ndarray
    kappa_hat: float
    iterations: int
    pde_residual: float
    boundary_defect: float

    @property
    def rate(self):
        """Observed linear convergence factor (median successive ratio)."""
        t = self.trace[self.trace > 0]
        if t.size < 3:
            return 0.0
        return float(np.median(t[1:] / t[:-1]))


def _potential_norm(W, p, W_p, nodes):
    if W_p is not None:
        return (np.inf if p is None else p), float(W_p)
    if p is None:
        p = getattr(W, "p", None)
    if p is not None and hasattr(W, "K2"):
        return p, float(W.K)
    return np.inf, float(np.max(np.abs(W(nodes))))


def _pde_residual(field, W, ball, npts=12, seed=0):
    """max |(-Lap_h + W) phi| / max|phi| at interior points, 2nd-order stencil."""
    rng = np.random.default_rng(seed)
    d, r = ball.d, ball.radius
    dirs = rng.normal(size=(npts, d))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    pts = dirs * (0.5 * r * rng.random(npts) ** (1.0 / d))[:, None]
    h = 1e-2 * r
    stencil = [pts]
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        stencil += [pts + e, pts - e]
    vals = field(np.stack(stencil))
    lap = (np.sum(vals[1:], axis=0) - 2 * d * vals[0]) / (h * h)
    res = -lap + np.asarray(W(pts), dtype=float) * vals[0]
    return float(np.max(np.abs(res)) / max(np.max(np.abs(vals[0])), 1e-300))


def dirichlet_solve_Zr(W, g, ball, p=None, W_p=None, n_radial=16, tol=1e-10, max_iter=200):
    """Solve ``-Lap(phi) + W phi = 0`` in ``ball`` with ``phi = g`` on the boundary.

    Parameters
    ----------
    W : callable
        Potential. When it carries ``p`` and ``K`` attributes (a
        :class:`~singdos.potentials.Potential`) those give the exponent and
        the norm; otherwise pass ``p`` and ``W_p`` or the sup of ``|W|`` on
        the nodes is used with ``p = inf``.
    g : BoundaryData
    ball : GreenBall
    n_radial : int
        Radial Gauss nodes; the angular rule reuses the order of ``g``.

    Raises
    ------
    NoContractionError
        If the contraction estimate is >= 1.
    DivergenceError
        If the iterate sup-norm doubles from one step to the next.
    """
    if g.d != ball.d or not np.isclose(g.radius, ball.radius):
        raise ShapeError("boundary data belong to a different ball")
    d, R = ball.d, ball.radius
    order = g.order
    nodes, weights = ball_rule(d, np.zeros(d), R, n_radial, order)
    p_eff, norm = _potential_norm(W, p, W_p, nodes)
    kappa = contraction_factor(d, p_eff, R, norm)
    if kappa >= 1.0:
        raise NoContractionError(f"contraction estimate {kappa:.3g} >= 1; shrink the ball")

    u0 = poisson_extend(ball, g, nodes)
    wv = np.asarray(W(nodes), dtype=float)
    # Nystrom matrix with the diagonal singularity subtracted analytically
    with np.errstate(divide="ignore", invalid="ignore"):
        K = _green(d, R, nodes[:, None, :], nodes[None, :, :])
    np.fill_diagonal(K, 0.0)
    K *= weights[None, :]
    diag = green_ball_integral(ball, nodes) - K.sum(axis=1)

    phi = u0.copy()
    base = max(np.max(np.abs(u0)), 1e-300)
    prev_norm = base
    trace = []
    it = 0
    for it in range(1, max_iter + 1):
        f = wv * phi
        new = u0 - (K @ f + diag * f)
        change = float(np.max(np.abs(new - phi)))
        trace.append(change)
        phi = new
        norm_k = float(np.max(np.abs(phi)))
        if not np.isfinite(norm_k) or norm_k >= 2.0 * prev_norm:
            raise DivergenceError("fixed-point iterate norm doubled; the map is not contracting")
        prev_norm = norm_k
        if change < tol * base:
            break
    field = PolarInterpolant(d, np.zeros(d), R, n_radial, order, phi)
    sample = BallSample(np.zeros(d), R, nodes, weights, phi, field)
    bdefect = float(np.max(np.abs(field(g.nodes) - g.values)))
    return ZrSolution(sample, np.array(trace), kappa, it, _pde_residual(field, W, ball), bdefect)
