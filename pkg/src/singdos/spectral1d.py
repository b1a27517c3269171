"""One-dimensional Dirichlet spectra and the log-Hölder pipeline.

The operator -psi'' + V psi on (a0, a0 + L) is discretised by second-order
finite differences with V replaced by its exact cell averages, which
keeps integrable singularities at their correct L^1 mass. Eigenvalues are
Richardson-extrapolated from three grids with halving spacing.

The constrained subspace, transfer system and Gronwall check follow the
one-dimensional argument: window eigenfunctions with vanishing value and
slope at a lattice of points are small in sup-norm, which caps the number
of eigenvalues in a short energy window.
"""

from dataclasses import dataclass
import math
import warnings

import numpy as np
from scipy.linalg import eigh_tridiagonal, eigvalsh_tridiagonal

from . import kernels
from .errors import (
    IntegrationFailureError,
    PotentialRejectedError,
    PreconditionError,
    RangeError,
    ShapeError,
)
from .potentials import unit_window_l1_sup

EDGE_TOL = 1e-9
NULL_TOL = 1e-10
CONSTRAINT_TOL = 1e-8
# one-sided fourth-order first derivative
_D1 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0


@dataclass(frozen=True)
class Interval:
    """The open interval ``(a0, a0 + L)``."""

    a0: float
    L: float

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("interval length must be positive")

    @property
    def b(self):
        return self.a0 + self.L


@dataclass(frozen=True)
class EigenSystem:
    """Dirichlet eigenpairs of the discretised operator on an interval.

    ``values`` are Richardson-extrapolated; ``raw_values`` and ``vectors``
    belong to the finest grid, whose tridiagonal matrix is ``(diag, off)``.
    Vectors include the zero boundary values and are orthonormal for the
    trapezoid weights.
    """

    interval: Interval
    h: float
    x: np.ndarray
    values: np.ndarray
    raw_values: np.ndarray
    vectors: np.ndarray
    diag: np.ndarray
    off: np.ndarray
    E_max: float
    error_estimates: np.ndarray
    orders: np.ndarray
    ratios: np.ndarray
    converged: np.ndarray
    boundary: str = "dirichlet"

    @property
    def weights(self):
        w = np.full(self.x.size, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def apply(self, u):
        """Discrete ``H u`` for grid functions with zero boundary values."""
        u = np.asarray(u, dtype=float)
        inner = u[1:-1]
        out = np.zeros_like(u)
        out[1:-1] = self.diag * inner
        out[1:-2] += self.off * inner[1:]
        out[2:-1] += self.off * inner[:-1]
        return out

    def norm(self, u):
        return float(np.sqrt(np.sum(self.weights * np.asarray(u) ** 2)))


def _tridiagonal(V, iv, n):
    h = iv.L / (n + 1)
    edges = iv.a0 + h * (np.arange(n + 1) + 0.5)
    if V is None or V.is_zero():
        vbar = np.zeros(n)
    else:
        vbar = V.cell_integrals_1d(edges) / h
    if not np.all(np.isfinite(vbar)):
        raise PotentialRejectedError("cell averages of V are not finite")
    return 2.0 / h**2 + vbar, np.full(n - 1, -1.0 / h**2), h


def _extrapolate(l1, l2, l3):
    """Richardson from three halving levels; returns value, error, order, ratio."""
    d12 = l1 - l2
    d23 = l2 - l3
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d23 != 0, d12 / d23, np.inf)
    order = np.full(l1.shape, 2.0)
    off_band = ~((ratio >= 3.5) & (ratio <= 4.5))
    est = np.log2(np.abs(np.where(np.isfinite(ratio), ratio, 4.0)))
    order[off_band] = np.clip(est[off_band], 0.5, 6.0)
    fac = 2.0**order - 1.0
    e23 = l3 - d23 / fac
    e12 = l2 - d12 / fac
    return e23, np.abs(e23 - e12), order, ratio


def default_grid(iv, E_max):
    """Interior node count with ``E_max h^2`` near 1/144 on the coarsest grid."""
    return int(max(64, math.ceil(12.0 * iv.L * math.sqrt(max(abs(E_max), 1.0)))))


def eigs_interval(V, iv, E_max, n=None, vectors=True, rtol=1e-6, max_refine=2, n_cap=2_000_000):
    """All Dirichlet eigenvalues ``<= E_max`` of ``-d^2/dx^2 + V`` on ``iv``.

    Parameters
    ----------
    V : Potential or None
        One-dimensional potential (``None`` for the free operator).
    iv : Interval
    E_max : float
    n : int, optional
        Interior nodes of the coarsest grid; by default scaled so that
        ``E_max h^2`` is about 1/144.
    vectors : bool
        Compute finest-grid eigenvectors.
    rtol : float
        Target relative accuracy of the extrapolated eigenvalues; the grid
        is doubled up to ``max_refine`` times to reach it.

    Raises
    ------
    PotentialRejectedError
        If the unit-window L^1 scan or the cell averages of V diverge.
    """
    if V is not None and V.d != 1:
        raise ShapeError("eigs_interval needs a one-dimensional potential")
    if V is not None and V.bumps:
        unit_window_l1_sup(V, (iv.a0, iv.b))
    n0 = int(n or default_grid(iv, E_max))
    for attempt in range(max_refine + 1):
        levels = [(n0 + 1) * 2**k - 1 for k in range(3)]
        if levels[-1] > n_cap:
            raise PotentialRejectedError(f"grid of {levels[-1]} nodes exceeds the cap {n_cap}")
        mats = [_tridiagonal(V, iv, m) for m in levels]
        dfin, efin, hfin = mats[-1]
        margin = 0.05 * max(abs(E_max), 1.0)
        k = int(kernels.sturm_counts(dfin, efin, np.array([E_max + margin]))[0])
        k = min(k, levels[0])
        if k == 0:
            vals = [np.zeros(0)] * 3
        else:
            vals = [eigvalsh_tridiagonal(dd, ee, select="i", select_range=(0, k - 1)) for dd, ee, _ in mats]
        ext, err, order, ratio = _extrapolate(*vals)
        keep = ext <= E_max
        converged = err <= rtol * np.maximum(np.abs(ext), 1.0)
        if np.all(converged[keep]) or attempt == max_refine:
            break
        n0 = 2 * n0 + 1
    kk = int(np.count_nonzero(keep))
    x = np.linspace(iv.a0, iv.b, levels[-1] + 2)
    vec = np.zeros((x.size, kk))
    raw = vals[2][:kk]
    if vectors and kk:
        raw, v = eigh_tridiagonal(dfin, efin, select="i", select_range=(0, kk - 1))
        vec[1:-1] = v / math.sqrt(hfin)
    return EigenSystem(
        interval=iv,
        h=hfin,
        x=x,
        values=ext[:kk],
        raw_values=raw,
        vectors=vec,
        diag=dfin,
        off=efin,
        E_max=float(E_max),
        error_estimates=err[:kk],
        orders=order[:kk],
        ratios=ratio[:kk],
        converged=converged[:kk],
    )


@dataclass(frozen=True)
class WindowCount:
    count: int
    eta: float
    flagged: tuple


def window_count(values, E, eps, E_max, volume):
    """Count of ``values`` in ``[E, E + eps]`` with edge ties counted inside."""
    if eps <= 0:
        raise ValueError("window width must be positive")
    if E + eps > E_max + EDGE_TOL:
        raise RangeError(f"window top {E + eps} exceeds the computed range {E_max}")
    lo, hi = E - EDGE_TOL, E + eps + EDGE_TOL
    inside = (values >= lo) & (values <= hi)
    near = (np.abs(values - E) <= EDGE_TOL) | (np.abs(values - E - eps) <= EDGE_TOL)
    c = int(np.count_nonzero(inside))
    return WindowCount(c, c / volume, tuple(float(v) for v in values[near]))


def dos_window(es, E, eps, L=None, details=False):
    """Finite-volume DOS ``#{eigenvalues in [E, E+eps]} / L``."""
    L = es.interval.L if L is None else L
    res = window_count(es.values, E, eps, es.E_max, L)
    return res if details else res.eta


def theta_estimate(es, margin=0.1):
    """Lower bound for the spectrum: ground-state energy minus a margin."""
    if es.values.size == 0:
        return es.E_max
    return float(es.values[0] - margin)


# ------------------------------------------------------ constrained subspace


@dataclass(frozen=True)
class ConstrainedSubspace:
    """Window functions with ``psi(a_j) = psi'(a_j) = 0`` at every point.

    ``basis`` columns are grid functions; ``coeffs`` expresses them in the
    input basis (orthonormal columns).
    """

    basis: np.ndarray
    coeffs: np.ndarray
    points: np.ndarray
    dimension: int
    window_dim: int
    bound: int
    singular_values: np.ndarray
    possibly_trivial: bool


def _node_index(x, a):
    h = x[1] - x[0]
    return int(np.clip(np.rint((a - x[0]) / h), 0, x.size - 1))


def point_constraints(u, x, points):
    """Values and one-sided fourth-order slopes of grid functions at points.

    ``u`` has shape ``(npts,)`` or ``(npts, k)``. Returns an array of shape
    ``(2 * len(points), ...)``: the value row then the slope row per point.
    Points snap to the nearest grid node.
    """
    u = np.asarray(u, dtype=float)
    h = x[1] - x[0]
    rows = []
    for a in points:
        i = _node_index(x, a)
        if i + 4 < x.size:
            slope = np.tensordot(_D1, u[i : i + 5], axes=(0, 0)) / h
        else:
            slope = -np.tensordot(_D1, u[i - 4 : i + 1][::-1], axes=(0, 0)) / h
        rows.extend([u[i], slope])
    return np.array(rows)


def constrained_subspace(basis, x, points):
    """Null space of point-value and point-slope functionals on a window.

    Parameters
    ----------
    basis : ndarray, shape (npts, k)
        Orthonormal grid functions spanning the window.
    x : ndarray
        Uniform grid carrying the basis.
    points : sequence of float
        Interior constraint points (snapped to nodes).
    """
    basis = np.asarray(basis, dtype=float)
    if basis.ndim != 2 or basis.shape[0] != x.size:
        raise ShapeError("basis must have one row per grid node")
    pts = np.array([x[_node_index(x, a)] for a in points])
    k = basis.shape[1]
    bound = k - 2 * len(pts)
    trivial = bound <= 0
    if trivial:
        warnings.warn(
            f"window dimension {k} <= {2 * len(pts)} constraints; the subspace may be trivial",
            RuntimeWarning,
            stacklevel=2,
        )
    if len(pts) == 0 or k == 0:
        return ConstrainedSubspace(basis.copy(), np.eye(k), pts, k, k, bound, np.zeros(0), trivial)
    A = point_constraints(basis, x, pts)
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    rank = int(np.count_nonzero(s > NULL_TOL * s[0])) if s.size and s[0] > 0 else 0
    coeffs = vt[rank:].T
    return ConstrainedSubspace(basis @ coeffs, coeffs, pts, coeffs.shape[1], k, bound, s, trivial)


def constraint_points(iv, R):
    """``a_j = a0 + j R`` for ``j = 1 .. ceil(L/R) - 1``."""
    m = math.ceil(iv.L / R) - 1
    return iv.a0 + R * np.arange(1, m + 1)


# ---------------------------------------------------------- transfer system


def transfer_solve(V, E, zeta, a, x, tol=1e-10, n0=64, max_cells=2**22):
    """Solve ``Psi' = [[0, 1], [V - E, 0]] Psi + (0, -zeta)``, ``Psi(a) = 0``.

    Exponential-midpoint steps on a uniform partition of ``[a, x]`` use the
    exact cell averages of V (so V enters only through its integrals) and
    the midpoint value of ``zeta``; the partition is doubled until two
    Richardson-extrapolated results agree to ``tol``.

    Returns the 2-vector ``(psi(x), psi'(x))``.
    """
    if x == a:
        return np.zeros(2)
    span = x - a

    def run(n):
        h = span / n
        edges = a + h * np.arange(n + 1)
        lo, hi = np.minimum(edges[:-1], edges[1:]), np.maximum(edges[:-1], edges[1:])
        if V is None or V.is_zero():
            vbar = np.zeros(n)
        else:
            srt = np.sort(edges)
            ints = V.cell_integrals_1d(srt)
            vbar = (ints if span > 0 else ints[::-1]) / abs(h)
        mids = 0.5 * (lo + hi)
        z = np.asarray(zeta(mids), dtype=float) if callable(zeta) else np.full(n, float(zeta))
        out = kernels.transfer_steps(vbar - E, z, h)
        return out[-1]

    n = int(n0)
    coarse = run(n)
    prev = None
    while 2 * n <= max_cells:
        fine = run(2 * n)
        if not np.all(np.isfinite(fine)):
            break
        extrap = fine + (fine - coarse) / 3.0
        scale = max(np.max(np.abs(extrap)), 1.0)
        if prev is not None and np.max(np.abs(extrap - prev)) <= tol * scale:
            return extrap
        prev, coarse, n = extrap, fine, 2 * n
    raise IntegrationFailureError("transfer integration did not converge (non-integrable V?)")


# ------------------------------------------------------------ Gronwall check


@dataclass(frozen=True)
class GronwallRecord:
    """Both sides of ``sup|psi| <= e^{C max(R,1)} sqrt(R) eps ||psi||_2``.

    The sides are also stored as logarithms since the right side
    overflows for large ``C R``.
    """

    lhs: float
    rhs: float
    log_lhs: float
    log_rhs: float
    C: float
    K: float
    residual_ratio: float
    passed: bool


def gronwall_bound_check(psi, es, V, E, R, eps, points=None, K=None):
    """Check the Gronwall sup bound for ``psi`` in the constrained window.

    Preconditions (raise :class:`PreconditionError`): ``psi`` nonzero,
    ``||(H - E) psi|| <= eps ||psi||`` for the discrete operator, and the
    value and slope constraints below ``1e-8 ||psi||`` at ``points``.
    """
    psi = np.asarray(psi, dtype=float)
    nrm = es.norm(psi)
    if nrm == 0.0:
        raise PreconditionError("psi = 0 is excluded")
    zeta = es.apply(psi) - E * psi
    ratio = es.norm(zeta) / nrm
    if ratio > eps * (1.0 + 1e-9) + 1e-12:
        raise PreconditionError(f"||(H-E)psi|| / ||psi|| = {ratio:.3e} exceeds eps = {eps:.3e}")
    if points is not None and len(points):
        res = np.max(np.abs(point_constraints(psi, es.x, points)))
        if res > CONSTRAINT_TOL * nrm:
            raise PreconditionError(f"constraint residual {res:.2e} exceeds {CONSTRAINT_TOL} ||psi||")
    if K is None:
        K = 0.0 if V is None or V.is_zero() else unit_window_l1_sup(V, (es.interval.a0, es.interval.b))
    C = 1.0 + abs(E) + K
    lhs = float(np.max(np.abs(psi)))
    log_lhs = math.log(lhs) if lhs > 0 else -math.inf
    log_rhs = C * max(R, 1.0) + 0.5 * math.log(R) + math.log(eps) + math.log(nrm)
    rhs = math.exp(log_rhs) if log_rhs < 700 else math.inf
    return GronwallRecord(lhs, rhs, log_lhs, log_rhs, C, float(K), ratio, log_lhs <= log_rhs)


def gronwall_pipeline(es, V, E, eps, R=None):
    """Run the constrained-window construction and check every basis vector.

    ``R`` defaults to ``4 / rho`` with ``rho`` the window DOS, clamped to
    ``[2h, L/2]``. Returns ``(subspace, records)``.
    """
    L = es.interval.L
    sel = (es.raw_values >= E - EDGE_TOL) & (es.raw_values <= E + eps + EDGE_TOL)
    basis = es.vectors[:, sel]
    if R is None:
        rho = basis.shape[1] / L
        R = 4.0 / rho if rho > 0 else L / 2
    R = float(np.clip(R, 2 * es.h, L / 2))
    pts = constraint_points(es.interval, R)
    sub = constrained_subspace(basis, es.x, pts)
    records = [gronwall_bound_check(sub.basis[:, i], es, V, E, R, eps, sub.points) for i in range(sub.dimension)]
    return sub, records


# ------------------------------------------------------------- log-Hölder


@dataclass(frozen=True)
class LogHolderRow:
    eps: float
    L: float
    E: float
    eta: float
    product: float
    grid_n: int


def log_holder_check_1d(V, E0, eps_list, L0, E_grid=None, a0=0.0):
    """Table of ``eta * log(1/eps)`` with ``L = L0 log(1/eps)``.

    One row per ``(eps, E)``; ``E_grid`` defaults to ``[E0]`` and every
    entry must be ``<= E0``.
    """
    E_grid = np.atleast_1d(np.asarray([E0] if E_grid is None else E_grid, dtype=float))
    if np.any(E_grid > E0):
        raise ValueError("energies must not exceed E0")
    rows = []
    for eps in eps_list:
        if not 0 < eps <= 0.5:
            raise ValueError("eps must lie in (0, 1/2]")
        lg = math.log(1.0 / eps)
        iv = Interval(a0, L0 * lg)
        es = eigs_interval(V, iv, float(np.max(E_grid)) + eps, vectors=False)
        for E in E_grid:
            eta = dos_window(es, float(E), eps)
            rows.append(LogHolderRow(float(eps), iv.L, float(E), eta, eta * lg, es.x.size - 2))
    return rows
