"""Grid Hamiltonians on 2D/3D boxes and the log-Hölder pipeline.

``-Delta_h + V`` uses the (2d+1)-point Laplacian with V replaced by its
exact cell averages. Window eigenpairs come from a dense solver on small
grids and from shift-invert Lanczos above that; window counts are exact
Sylvester inertia differences from a symmetric sparse LDL^T.

The remaining operations probe the ingredients of the multidimensional
argument: the heat-kernel sup bound, the peaked vector, the cover of the
box by R-boxes with local flatness constraints at every centre, the
unique-continuation inequality, and the parameter choices (R, N, delta).
"""

from dataclasses import dataclass
from functools import lru_cache
import itertools
import logging
import math

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import eigh
from scipy.sparse.linalg import eigsh, splu

from . import kernels
from .errors import (
    BandError,
    CapacityError,
    DegenerateCoverError,
    EmptySubspaceError,
    HypothesisViolationError,
    InsufficientDataError,
    ParameterInfeasibleError,
    RangeError,
    SubspaceExhaustedError,
    UndefinedProbeError,
    UnsupportedDimensionError,
)
from .harmonic import GAMMA, basis_values, dim_harmonic, sphere_quadrature, unit_ball_volume

log = logging.getLogger(__name__)

EDGE_TOL = 1e-9
NULL_TOL = 1e-10
DENSE_MAX = 5000
CAPACITY_MAX = 40000
BAND_FRACTION = 0.5


# -------------------------------------------------------------------- domains


@dataclass(frozen=True)
class BoxDomain:
    """Open box of side ``L`` centred at ``center`` in R^d."""

    center: tuple
    L: float
    d: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise UnsupportedDimensionError(f"box dimension {self.d} not supported")
        c = tuple(float(v) for v in np.broadcast_to(np.asarray(self.center, float), (self.d,)))
        object.__setattr__(self, "center", c)
        if not self.L > 0:
            raise ValueError("box side must be positive")

    @property
    def lo(self):
        return np.asarray(self.center) - 0.5 * self.L

    @property
    def hi(self):
        return np.asarray(self.center) + 0.5 * self.L

    @property
    def volume(self):
        return self.L**self.d


def _laplacian(n, d, h, periodic):
    main = np.full(n, 2.0)
    off = -np.ones(n - 1)
    T = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    if periodic:
        T[0, n - 1] = -1.0
        T[n - 1, 0] = -1.0
    T = T.tocsr() / (h * h)
    eye = sp.identity(n, format="csr")
    out = sp.csr_matrix((n**d, n**d))
    # axis 0 varies fastest, matching the Fortran-order node layout
    for ax in range(d):
        M = None
        for k in reversed(range(d)):
            f = T if k == ax else eye
            M = f if M is None else sp.kron(M, f, format="csr")
        out = out + M
    return out.tocsr()


@dataclass(frozen=True)
class GridHamiltonian:
    """``-Delta_h + V`` on ``n`` nodes per side of a box.

    Dirichlet grids use ``h = L/(n+1)`` with nodes ``lo + (i+1)h``;
    periodic grids use ``h = L/n`` with nodes ``lo + (i+1/2)h``. Nodes are
    flattened with axis 0 varying fastest. ``vdiag`` holds cell averages
    of V over the cubes of side h around the nodes.
    """

    box: BoxDomain
    n: int
    bc: str
    h: float
    vdiag: np.ndarray
    matrix: sp.csr_matrix
    node_hits: int = 0

    @property
    def d(self):
        return self.box.d

    @property
    def size(self):
        return self.n**self.d

    @property
    def periodic(self):
        return self.bc == "periodic"

    def axes(self):
        off = 0.5 if self.periodic else 1.0
        t = (np.arange(self.n) + off) * self.h
        return [lo + t for lo in self.box.lo]

    @property
    def nodes(self):
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([g.ravel(order="F") for g in grids], axis=-1)

    @property
    def cell_volume(self):
        return self.h**self.d

    def apply(self, u):
        """Matrix-free ``H u``."""
        return kernels.apply_grid_hamiltonian(u, self.vdiag, self.n, self.d, self.h, self.periodic)

    def inner(self, u, v):
        return float(self.cell_volume * np.dot(u, v))

    def norm(self, u):
        return math.sqrt(self.inner(u, u))

    def symmetry_defect(self, rng=None, trials=4):
        """Max of ``|<Hu,v> - <u,Hv>| / (|Hu||v| + |u||Hv|)`` on random pairs."""
        rng = np.random.default_rng(0) if rng is None else rng
        worst = 0.0
        for _ in range(trials):
            u = rng.standard_normal(self.size)
            v = rng.standard_normal(self.size)
            Hu, Hv = self.apply(u), self.apply(v)
            scale = np.linalg.norm(Hu) * np.linalg.norm(v) + np.linalg.norm(u) * np.linalg.norm(Hv)
            worst = max(worst, abs(np.dot(Hu, v) - np.dot(u, Hv)) / scale)
        return worst

    def to_grid(self, u):
        return np.asarray(u).reshape((self.n,) * self.d, order="F")

    @property
    def band_top(self):
        """Upper end of the energies trusted on this grid."""
        return BAND_FRACTION / self.h**2


def memory_estimate(n, d):
    """Bytes needed by the eigensolver for ``n^d`` unknowns."""
    N = n**d
    if N <= DENSE_MAX:
        return 3 * 8 * N * N
    # sparse LU fill of a nested-dissection-like ordering
    fill = N * (2 * d + 1) + (N * n if d == 2 else N * n * n // 4)
    return 24 * fill


def assemble_hamiltonian(V, box, n, bc="dirichlet", max_unknowns=CAPACITY_MAX):
    """Assemble :class:`GridHamiltonian` for ``V`` on ``box``.

    Parameters
    ----------
    V : Potential
    box : BoxDomain
    n : int
        Nodes per side, at least 8 (any n for d = 1).
    bc : {"dirichlet", "periodic"}
    max_unknowns : int
        Capacity cap on ``n**d``; checked before allocation.
    """
    if bc not in ("dirichlet", "periodic"):
        raise ValueError(f"unknown boundary condition {bc!r}")
    d = box.d
    if V.d != d:
        raise ValueError("potential and box dimensions differ")
    if n < 8 and d > 1:
        raise ValueError("need at least 8 nodes per side")
    if n**d > max_unknowns:
        raise CapacityError(
            f"{n}^{d} = {n**d} unknowns exceeds the cap {max_unknowns}"
            f" (about {memory_estimate(n, d) / 2**20:.0f} MiB)"
        )
    periodic = bc == "periodic"
    h = box.L / n if periodic else box.L / (n + 1)
    H = GridHamiltonian(box, int(n), bc, float(h), np.zeros(n**d), sp.csr_matrix((1, 1)))
    nodes = H.nodes
    vdiag = V.cell_average(nodes, h) if not V.is_zero() else np.zeros(n**d)
    hits = 0
    for b in V.bumps:
        rel = (np.asarray(b.center) - box.lo) / h - (0.5 if periodic else 1.0)
        if np.all(np.abs(rel - np.round(rel)) < 1e-9):
            hits += 1
    if hits:
        # cell averages are exact integrals, so a centre on a node is harmless
        log.info("%d singular centre(s) fall on grid nodes; cell averages are exact", hits)
    matrix = (_laplacian(n, d, h, periodic) + sp.diags(vdiag)).tocsr()
    return GridHamiltonian(box, int(n), bc, float(h), vdiag, matrix, hits)


# ------------------------------------------------------------ eigen-windows


def _factor(H, sigma):
    A = (H.matrix - sigma * sp.identity(H.size, format="csr")).tocsc()
    return splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})


def count_below(H, sigma):
    """Number of eigenvalues of ``H`` strictly below ``sigma``.

    Uses Sylvester's law of inertia on a symmetrically permuted LDL^T
    (SuperLU with diagonal pivoting); falls back to a dense solve when the
    factorisation pivots off the diagonal.
    """
    if H.size <= DENSE_MAX:
        vals = np.linalg.eigvalsh(H.matrix.toarray())
        return int(np.count_nonzero(vals < sigma))
    lu = _factor(H, sigma)
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise RangeError("factorisation pivoted off the diagonal; inertia undefined")
    return int(np.count_nonzero(lu.U.diagonal() < 0))


def eigenpairs_between(H, lo, hi, vectors=True):
    """All eigenpairs of ``H`` with eigenvalue in ``[lo, hi]``.

    Vectors are returned as columns normalised in the grid L^2 norm.
    """
    if H.size <= DENSE_MAX:
        A = H.matrix.toarray()
        if vectors:
            vals, vecs = eigh(A, subset_by_value=(lo, hi), driver="evr")
        else:
            vals = eigh(A, eigvals_only=True, subset_by_value=(lo, hi), driver="evr")
            vecs = None
    else:
        k = count_below(H, hi) - count_below(H, lo)
        if k == 0:
            vals, vecs = np.zeros(0), np.zeros((H.size, 0))
        else:
            # the k eigenvalues nearest the midpoint are exactly those in [lo, hi]
            v0 = np.full(H.size, 1.0 / math.sqrt(H.size))
            vals, vecs = eigsh(H.matrix, k=k, sigma=0.5 * (lo + hi), which="LM", v0=v0, tol=1e-12)
        order = np.argsort(vals)
        vals = vals[order]
        vecs = vecs[:, order] if vectors else None
    if vecs is not None:
        vecs = vecs / math.sqrt(H.cell_volume)
        # fix signs so the largest entry is positive (reproducible output)
        idx = np.argmax(np.abs(vecs), axis=0)
        sgn = np.sign(vecs[idx, np.arange(vecs.shape[1])])
        vecs = vecs * np.where(sgn == 0, 1.0, sgn)
    return np.asarray(vals), vecs


@dataclass(frozen=True)
class SpectralWindow:
    """Eigenpairs of ``H`` in ``[E, E + eps]``.

    ``basis`` has one column per eigenvector, orthonormal in the grid L^2
    product; ``residuals`` are ``|(H - E) psi| / |psi|``. ``flagged`` lists
    eigenvalues within ``EDGE_TOL`` of an edge (counted inside) and
    ``refinement_stable`` records the count comparison on a 1.25x finer grid.
    """

    H: GridHamiltonian
    E: float
    eps: float
    values: np.ndarray
    basis: np.ndarray
    residuals: np.ndarray
    flagged: tuple = ()
    refinement_stable: bool = None

    @property
    def count(self):
        return int(self.values.size)

    @property
    def dim(self):
        return self.count

    def orthonormality_defect(self):
        if self.basis is None or self.count == 0:
            return 0.0
        G = self.H.cell_volume * self.basis.T @ self.basis
        return float(np.max(np.abs(G - np.eye(self.count))))


def _check_band(H, top):
    if top > H.band_top:
        raise BandError(
            f"window top {top:g} exceeds the trusted band {H.band_top:g} = 0.5 h^-2; refine the grid"
        )


def eigs_window(H, E, eps, vectors=True, refine_check=False, V=None):
    """Spectral window ``[E, E + eps]`` of ``H``.

    With ``refine_check`` (requires the potential ``V``) the window count
    is recomputed on a grid with ``ceil(1.25 n)`` nodes per side and
    ``refinement_stable`` records whether the counts agree.
    """
    if not eps > 0:
        raise ValueError("window width must be positive")
    _check_band(H, E + eps)
    vals, vecs = eigenpairs_between(H, E - EDGE_TOL, E + eps + EDGE_TOL, vectors=vectors)
    flagged = tuple(
        float(v) for v in vals if abs(v - E) <= EDGE_TOL or abs(v - E - eps) <= EDGE_TOL
    )
    if vectors:
        res = np.array([H.norm(H.apply(vecs[:, i]) - E * vecs[:, i]) for i in range(vals.size)])
    else:
        res = np.abs(vals - E)
    stable = None
    if refine_check:
        if V is None:
            raise ValueError("refine_check needs the potential")
        n2 = int(math.ceil(1.25 * H.n))
        H2 = assemble_hamiltonian(V, H.box, n2, H.bc)
        c2 = count_below(H2, E + eps + EDGE_TOL) - count_below(H2, E - EDGE_TOL)
        stable = c2 == vals.size
        if not stable:
            log.warning("window count %d changes to %d under refinement", vals.size, c2)
    return SpectralWindow(H, float(E), float(eps), vals, vecs, res, flagged, stable)


def window_count_nd(H, E, eps):
    """Number of eigenvalues in ``[E, E + eps]`` without eigenvectors."""
    _check_band(H, E + eps)
    return count_below(H, E + eps + EDGE_TOL) - count_below(H, E - EDGE_TOL)


def theta_estimate_nd(H, margin=0.1):
    """``max(0, -lambda_min) + margin``: operational lower-bound shift."""
    if H.size <= DENSE_MAX:
        lam = float(eigh(H.matrix.toarray(), eigvals_only=True, subset_by_index=(0, 0))[0])
    else:
        sigma = float(np.min(H.vdiag)) - 1.0
        lam = float(eigsh(H.matrix, k=1, sigma=sigma, which="LM", return_eigenvectors=False)[0])
    return max(0.0, -lam) + margin


def weyl_cap(d, top, theta, factor=2.0):
    """Weyl-type density cap ``factor * omega_d (top + theta + 1)^{d/2} / (2 pi)^d``."""
    return factor * unit_ball_volume(d) * (max(top + theta, 0.0) + 1.0) ** (d / 2.0) / (2 * np.pi) ** d


@dataclass(frozen=True)
class DosResult:
    eta: float
    count: int
    cap: float
    within_cap: bool


def dos_window_nd(window, L=None, d=None, theta=0.0, weyl_factor=2.0, details=False):
    """Finite-volume DOS ``count / L^d`` of a spectral window.

    Accepts a :class:`SpectralWindow` or a plain integer count (then ``L``
    and ``d`` are required).
    """
    if isinstance(window, SpectralWindow):
        count = window.count
        L = window.H.box.L if L is None else L
        d = window.H.d if d is None else d
        top = window.E + window.eps
    else:
        count = int(window)
        top = 0.0
        if L is None or d is None:
            raise ValueError("L and d are required for a bare count")
    eta = count / L**d
    if not details:
        return eta
    cap = weyl_cap(d, top, theta, weyl_factor)
    return DosResult(eta, count, cap, eta <= cap)


# ------------------------------------------------------------ sup-norm bound


def heat_kernel_constant(d, t=1.0):
    """``||exp(t Delta / 2)||_{L^2 -> L^inf}`` on R^d, i.e. ``(4 pi t)^{-d/4}``."""
    return (4.0 * np.pi * t) ** (-d / 4.0)


@dataclass(frozen=True)
class SupBoundRecord:
    ratio: float
    cap: float
    passed: bool
    ratios: np.ndarray


def sup_bound_check(window, theta, E0, C):
    """Compare ``max |psi|_inf / |psi|_2`` over the window with ``C e^{E0 + theta + 1}``."""
    if window.count == 0:
        return SupBoundRecord(0.0, C * math.exp(E0 + theta + 1.0), True, np.zeros(0))
    B = window.basis
    ratios = np.max(np.abs(B), axis=0) / np.sqrt(window.H.cell_volume * np.sum(B * B, axis=0))
    worst = float(np.max(ratios))
    cap = C * math.exp(E0 + theta + 1.0)
    return SupBoundRecord(worst, cap, worst <= cap, ratios)


# ------------------------------------------------------------- peaked vector


@dataclass(frozen=True)
class PeakedVector:
    psi: np.ndarray
    index: int
    kernel_max: float
    bound: float
    sup_sq: float
    norm_sq: float
    holds: bool


def peaked_vector(basis, weights):
    """Vector of the span concentrated at the maximiser of the diagonal kernel.

    Parameters
    ----------
    basis : (npts, k) array
        Columns orthonormal for ``sum(weights * u * v)``.
    weights : scalar or (npts,) array
        Quadrature weights; their sum is the volume.

    Returns
    -------
    PeakedVector
        ``psi = sum_i e_i(x*) e_i``. ``holds`` certifies
        ``kernel_max >= dim / volume``, which makes
        ``|psi|_inf^2 >= (dim / volume) |psi|_2^2``.
    """
    B = np.asarray(basis, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if B.size == 0 or B.shape[1] == 0:
        raise EmptySubspaceError("peaked vector of an empty subspace")
    w = np.broadcast_to(np.asarray(weights, dtype=float), (B.shape[0],))
    volume = float(np.sum(w))
    kern = np.sum(B * B, axis=1)
    i = int(np.argmax(kern))
    psi = B @ B[i]
    kmax = float(kern[i])
    bound = B.shape[1] / volume
    return PeakedVector(
        psi, i, kmax, bound, float(np.max(psi**2)), float(np.sum(w * psi**2)), kmax >= bound
    )


# ------------------------------------------------------------ cover and flatness


def cover_grid(L, R, d, center=None):
    """Centres of ``ceil(L/R)^d`` closed R-boxes covering the closed L-box."""
    if not R > 0 or not L > 0:
        raise ValueError("L and R must be positive")
    if R >= L:
        raise DegenerateCoverError(f"R = {R} >= L = {L}: cover is a single box")
    k = int(math.ceil(L / R))
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    t = (np.arange(k) + 0.5) * (L / k) - 0.5 * L
    pts = np.array(list(itertools.product(t, repeat=d)))
    return pts + c


@lru_cache(maxsize=32)
def _monomials(d, M):
    return tuple(a for deg in range(M + 1) for a in itertools.product(range(deg + 1), repeat=d) if sum(a) == deg)


def _vandermonde(X, exps):
    return np.column_stack([np.prod(X ** np.asarray(a), axis=1) for a in exps])


@lru_cache(maxsize=32)
def _harmonic_extractor(d, N, M):
    """Map monomial coefficients (degree <= M) to harmonic parts of degree <= N.

    The degree-m part P_m restricted to the unit sphere equals
    h_m + P_{m-2}|_S, so its projection on spherical harmonics of degree m
    is the harmonic component h_m.
    """
    exps = _monomials(d, M)
    dirs, w = sphere_quadrature(d, 2 * M + 2)
    V = _vandermonde(dirs, exps)
    rows = []
    for m in range(N + 1):
        Y = basis_values(d, m, dirs)
        nrm = (w[:, None] * Y * Y).sum(axis=0)
        P = (Y * w[:, None]).T @ V / nrm[:, None]
        mask = np.array([sum(a) == m for a in exps])
        P[:, ~mask] = 0.0
        rows.append(P)
    return np.vstack(rows)


def _ball_nodes(H, y, r):
    X = H.nodes
    dist = np.linalg.norm(X - y, axis=1)
    idx = np.flatnonzero(dist < r)
    return idx, (X[idx] - y) / r


def local_fit(H, y, r, M):
    """Weighted least-squares polynomial fit operator on the nodes of B(y, r).

    Returns ``(idx, exps, P)`` with ``coeffs = P @ u[idx]`` giving monomial
    coefficients in the scaled variable ``(x - y)/r``; the weight is
    ``(1 - |x - y|^2/r^2)^4``.
    """
    idx, X = _ball_nodes(H, np.asarray(y, dtype=float), r)
    exps = _monomials(H.d, M)
    if idx.size < 2 * len(exps):
        raise RangeError(f"ball of radius {r} holds {idx.size} nodes; need {2 * len(exps)}")
    w = (1.0 - np.sum(X * X, axis=1)) ** 4
    A = _vandermonde(X, exps) * np.sqrt(w)[:, None]
    P = np.linalg.pinv(A, rcond=1e-12) * np.sqrt(w)[None, :]
    return idx, exps, P


def flatness_functionals(H, y, r, N, M=None):
    """Harmonic-moment functionals of degree <= N at centre ``y``.

    Returns ``(idx, F)``: ``F @ u[idx]`` are the coefficients of the
    harmonic components of degree <= N of the local fit of ``u``.
    """
    M = N + 2 if M is None else M
    idx, exps, P = local_fit(H, y, r, M)
    return idx, _harmonic_extractor(H.d, N, M) @ P


def local_polynomial(H, u, y, r, M):
    """Callable evaluating the local least-squares polynomial of ``u`` near ``y``."""
    idx, exps, P = local_fit(H, y, r, M)
    c = P @ np.asarray(u)[idx]
    y = np.asarray(y, dtype=float)

    def poly(x):
        X = (np.atleast_2d(np.asarray(x, dtype=float)) - y) / r
        out = _vandermonde(X, exps) @ c
        return out if np.ndim(x) > 1 else float(out[0])

    return poly


@dataclass(frozen=True)
class FlatnessLedgerRow:
    center: tuple
    functionals: int
    dim_before: int
    dim_after: int
    clipped: bool


@dataclass(frozen=True)
class FlatSubspace:
    basis: np.ndarray
    coeffs: np.ndarray
    dimension: int
    initial_dim: int
    ledger: tuple
    N: int
    r: float

    @property
    def total_drop(self):
        return self.initial_dim - self.dimension

    def ledger_ok(self):
        return all(row.dim_before - row.dim_after <= row.functionals for row in self.ledger)


def harmonic_count(d, N):
    return sum(dim_harmonic(d, m) for m in range(N + 1))


def local_flatness_subspace(window, centers, N, r, M=None):
    """Restrict the window span to vectors whose local harmonic moments vanish.

    At each centre the span is replaced by the null space of the
    ``dim H_{<=N}`` functionals from :func:`flatness_functionals`, found
    by SVD with relative threshold ``NULL_TOL``. Centres whose ball leaves
    the box are kept (the fit only uses interior nodes) and marked as
    clipped in the ledger.
    """
    H = window.H
    if window.count == 0:
        raise EmptySubspaceError("window is empty")
    coeffs = np.eye(window.count)
    basis = window.basis
    rows = []
    lo, hi = H.box.lo, H.box.hi
    for y in np.atleast_2d(centers):
        y = np.asarray(y, dtype=float)
        clipped = bool(np.any(y - r < lo) or np.any(y + r > hi))
        idx, F = flatness_functionals(H, y, r, N, M)
        Mloc = F @ basis[idx]
        before = basis.shape[1]
        if Mloc.size:
            _, s, vt = np.linalg.svd(Mloc, full_matrices=True)
            scale = max(float(s[0]) if s.size else 0.0, np.finfo(float).tiny)
            rank = int(np.count_nonzero(s > NULL_TOL * max(scale, 1.0)))
            null = vt[rank:].T
        else:
            null = np.eye(before)
        if null.shape[1] == 0:
            raise SubspaceExhaustedError(
                f"subspace exhausted at centre {tuple(y)}; lower N or increase R"
            )
        basis = basis @ null
        coeffs = coeffs @ null
        rows.append(FlatnessLedgerRow(tuple(y), F.shape[0], before, null.shape[1], clipped))
    return FlatSubspace(basis, coeffs, basis.shape[1], window.count, tuple(rows), N, r)


# ------------------------------------------------------------ unique continuation


def ucp_exponents(d, p):
    """``(2p/(3p-2d), (4p-2d)/(3p-2d))``: exponents of K and Q in the inequality."""
    den = 3.0 * p - 2.0 * d
    if den <= 0:
        raise HypothesisViolationError(f"p = {p} too small for d = {d}")
    return 2.0 * p / den, (4.0 * p - 2.0 * d) / den


def _box_dist(x, lo, hi):
    return float(np.linalg.norm(np.maximum(0.0, np.maximum(lo - x, x - hi))))


def _box_far(x, lo, hi):
    return float(np.linalg.norm(np.maximum(np.abs(x - lo), np.abs(x - hi))))


def interpolant(H, u):
    """Cubic interpolant of a grid function, extended by the boundary condition."""
    axes = H.axes()
    g = H.to_grid(u)
    if H.periodic:
        axes = [np.concatenate([[a[0] - H.h], a, [a[-1] + H.h]]) for a in axes]
        g = np.pad(g, 1, mode="wrap")
    else:
        axes = [np.concatenate([[lo], a, [hi]]) for a, lo, hi in zip(axes, H.box.lo, H.box.hi)]
        g = np.pad(g, 1, mode="constant")
    return RegularGridInterpolator(axes, g, method="cubic", bounds_error=True)


def _gl_panels(a, b, width, npts=4):
    k = max(1, int(math.ceil((b - a) / width)))
    x, w = np.polynomial.legendre.leggauss(npts)
    edges = np.linspace(a, b, k + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    half = 0.5 * np.diff(edges)[:, None]
    return (mid + half * x).ravel(), (half * w).ravel()


def box_l2_sq(f, lo, hi, width):
    """``int_box f^2`` by panelled tensor Gauss-Legendre."""
    rules = [_gl_panels(a, b, width) for a, b in zip(lo, hi)]
    pts = np.array(list(itertools.product(*[r[0] for r in rules])))
    wts = np.prod(np.array(list(itertools.product(*[r[1] for r in rules]))), axis=1)
    return float(np.sum(wts * f(pts) ** 2))


def ball_l2_sq(f, x0, delta, d, width, order=16):
    """``int_{B(x0, delta)} f^2`` by a polar product rule."""
    nr = max(4, int(math.ceil(2 * delta / width)) * 4)
    t, wt = np.polynomial.legendre.leggauss(nr)
    r = 0.5 * delta * (t + 1.0)
    wr = 0.5 * delta * wt * r ** (d - 1)
    dirs, wd = sphere_quadrature(d, order)
    pts = x0 + (r[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    wts = (wr[:, None] * wd[None, :]).ravel()
    return float(np.sum(wts * f(pts) ** 2))


@dataclass(frozen=True)
class UcpProbe:
    """Geometry and measured norms of one unique-continuation probe.

    ``theta`` is the box ``(lo, hi)``; ``mask`` marks grid nodes inside it.
    """

    theta: tuple
    mask: np.ndarray
    x0: np.ndarray
    delta: float
    Q: float
    K: float
    p: float
    d: int
    psi_sq: float
    theta_sq: float
    ball_sq: float
    zeta_sq: float
    strong_hypothesis: bool

    def exponent_factor(self, m=1.0):
        """``m (1 + K^a)(Q^b + log(|psi|/|psi_Theta|))``."""
        a, b = ucp_exponents(self.d, self.p)
        return m * (1.0 + self.K**a) * (self.Q**b + 0.5 * math.log(self.psi_sq / self.theta_sq))

    @property
    def rhs(self):
        return self.ball_sq + self.delta**2 * self.zeta_sq

    def required_m(self):
        """Smallest ``m`` with lhs <= rhs (0 when any m > 0 passes)."""
        gap = math.log(self.theta_sq) - math.log(self.rhs)
        if gap <= 0:
            return 0.0
        return gap / (self.exponent_factor(1.0) * math.log(self.Q / self.delta))

    def required_exponent(self):
        """Smallest total exponent ``T`` with ``(delta/Q)^T |psi_Theta|^2 <= rhs``."""
        gap = math.log(self.theta_sq) - math.log(self.rhs)
        return max(gap, 0.0) / math.log(self.Q / self.delta)


def make_probe(H, psi, E, theta, x0, delta, K, p, zeta=None):
    """Measure the norms of a probe for grid function ``psi``.

    ``zeta`` defaults to ``(H - E) psi``. Raises ``UndefinedProbeError``
    when the geometric invariants fail or ``psi`` vanishes on Theta.
    """
    d = H.d
    lo, hi = (np.asarray(t, dtype=float) for t in theta)
    x0 = np.asarray(x0, dtype=float)
    if not np.all(lo >= H.box.lo - 1e-12) or not np.all(hi <= H.box.hi + 1e-12):
        raise UndefinedProbeError("Theta must lie in the box")
    dist = _box_dist(x0, lo, hi)
    Q = _box_far(x0, lo, hi)
    if Q < 1:
        raise UndefinedProbeError(f"Q = {Q:.4g} < 1")
    if not 0 < delta <= min(dist, 0.5) + 1e-12:
        raise UndefinedProbeError(f"delta = {delta} must lie in (0, min(dist, 1/2)] = (0, {min(dist, 0.5):.4g}]")
    if np.any(x0 - delta < H.box.lo) or np.any(x0 + delta > H.box.hi):
        raise UndefinedProbeError("B(x0, delta) leaves the box")
    if p < d:
        raise HypothesisViolationError(f"p = {p} < d = {d}")
    psi = np.asarray(psi, dtype=float)
    zeta = H.apply(psi) - E * psi if zeta is None else np.asarray(zeta)
    f = interpolant(H, psi)
    theta_sq = box_l2_sq(f, lo, hi, H.h)
    if not theta_sq > 0:
        raise UndefinedProbeError("psi vanishes on Theta")
    ball_sq = ball_l2_sq(f, x0, delta, d, H.h)
    nodes = H.nodes
    mask = np.all((nodes >= lo) & (nodes <= hi), axis=1)
    strong = p > 2 * d / (4 - d) if d < 4 else False
    return UcpProbe(
        (tuple(lo), tuple(hi)), mask, x0, float(delta), Q, float(K), float(p), d,
        H.cell_volume * float(psi @ psi), theta_sq, ball_sq, H.cell_volume * float(zeta @ zeta),
        strong,
    )


@dataclass(frozen=True)
class UcpRecord:
    lhs: float
    rhs: float
    margin: float
    passed: bool
    log_lhs: float


def ucp_check(probe, m_fit):
    """Evaluate the unique-continuation inequality with constant ``m_fit``.

    ``lhs = (delta/Q)^{m (1 + K^a)(Q^b + log(|psi|/|psi_Theta|))} |psi_Theta|^2``,
    ``rhs = |psi_{x0,delta}|^2 + delta^2 |zeta|^2``; ``margin = log(rhs/lhs)``.
    """
    if not probe.theta_sq > 0:
        raise UndefinedProbeError("psi vanishes on Theta")
    log_lhs = probe.exponent_factor(m_fit) * math.log(probe.delta / probe.Q) + math.log(probe.theta_sq)
    rhs = probe.rhs
    margin = math.log(rhs) - log_lhs
    return UcpRecord(math.exp(log_lhs), rhs, margin, margin >= 0, log_lhs)


UCP_SUITE_Q = (1.5, 2.5, 4.0)
UCP_SUITE_DELTA = (0.1, 0.25, 0.5)


def ucp_geometry(Q, side=0.5, center=(0.0, 0.0)):
    """Theta box of the given side and a point x0 on its axis at sup-distance Q."""
    c = np.asarray(center, dtype=float)
    d = c.size
    half = 0.5 * side
    lo, hi = c - half, c + half
    # |x0 - far corner|^2 = (t + side)^2 + (d - 1) side^2 / 4 with t = dist to the face
    t = math.sqrt(Q * Q - (d - 1) * half * half) - side
    if t <= 0:
        raise UndefinedProbeError(f"Q = {Q} too small for a Theta box of side {side}")
    x0 = c.copy()
    x0[0] = hi[0] + t
    return (lo, hi), x0


def ucp_suite_potentials(p=4.0):
    """The three 2D potentials of the standard probe suite.

    Free, an attractive singular well at the centre of Theta, and a seeded
    random singular field around it. The well localises the ground state,
    which is the regime where continuation from Theta is expensive.
    """
    from .potentials import free_potential, power_singularity, random_singular

    free = free_potential(2)
    well = power_singularity((0.0, 0.0), 0.45, 2.0, -10.0, 2, p)
    rand = random_singular(7, 2, p, 0.3, amplitude=10.0, region=(np.full(2, -2.0), np.full(2, 2.0)))
    return {"free": free, "well": well, "random": rand}


def ucp_suite(n=48, L=10.0, p=4.0, Qs=UCP_SUITE_Q, deltas=UCP_SUITE_DELTA, potentials=None):
    """Probes of the standard 2D suite on an ``n x n`` Dirichlet grid.

    For each potential the window vector is the ground state and
    ``E`` its eigenvalue; Theta is a box of side 1/2 at the centre of the
    box and x0 lies on the horizontal axis at sup-distance Q.
    """
    potentials = ucp_suite_potentials(p) if potentials is None else potentials
    box = BoxDomain((0.0, 0.0), L, 2)
    probes = []
    for name, V in potentials.items():
        H = assemble_hamiltonian(V, box, n)
        vals, vecs = _lowest(H)
        E = float(vals[0])
        psi = vecs[:, 0]
        K = V.K1 + (V.K2 if V.bumps else 0.0) + abs(E)
        for Q in Qs:
            theta, x0 = ucp_geometry(Q)
            for delta in deltas:
                probes.append((name, Q, delta, make_probe(H, psi, E, theta, x0, delta, K, p)))
    return probes


def _lowest(H, k=1):
    if H.size <= DENSE_MAX:
        vals, vecs = eigh(H.matrix.toarray(), subset_by_index=(0, k - 1))
    else:
        sigma = float(np.min(H.vdiag)) - 1.0
        vals, vecs = eigsh(H.matrix, k=k, sigma=sigma, which="LM")
    vecs = vecs / math.sqrt(H.cell_volume)
    s = np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(k)])
    return vals, vecs * s


@dataclass(frozen=True)
class UcpFit:
    m_fit: float
    required: np.ndarray
    exponents: np.ndarray
    Q: np.ndarray
    slope: float


def fit_ucp(probes, safety=1.05):
    """Single constant ``m_fit`` passing every probe, and the exponent trend in Q.

    ``slope`` is the log-log regression slope of the largest required
    total exponent at each Q against Q.
    """
    req = np.array([pr.required_m() for *_, pr in probes])
    expo = np.array([pr.required_exponent() for *_, pr in probes])
    Qv = np.array([pr.Q for *_, pr in probes])
    uq = np.unique(Qv)
    top = np.array([expo[Qv == q].max() for q in uq])
    good = top > 0
    slope = float(np.polyfit(np.log(uq[good]), np.log(top[good]), 1)[0]) if good.sum() >= 2 else float("nan")
    return UcpFit(safety * float(req.max()), req, expo, Qv, slope)


# ------------------------------------------------------------ parameters


def kappa(d, p):
    """Log-Hölder exponent ``kappa_d``; 1 in one dimension."""
    if d == 1:
        return 1.0
    if d not in (2, 3):
        raise UnsupportedDimensionError(f"kappa undefined for d = {d}")
    floor = 2.0 * d / (4.0 - d)
    if not p > floor:
        raise HypothesisViolationError(f"d = {d} requires p > {floor:g}, got p = {p}")
    return ((4.0 - d) * p - 2.0 * d) / (8.0 * p - 4.0 * d)


def R_exponent(d, p):
    """Exponent e in ``rho = c R^e``."""
    return ((d - 4.0) * p + 2.0 * d) / (3.0 * p - 2.0 * d)


def L_exponent(d, p):
    """Exponent of ``log(1/eps)`` in the box-size rule."""
    return (3.0 * p - 2.0 * d) / (8.0 * p - 4.0 * d)


@dataclass(frozen=True)
class RNChoice:
    R: float
    N: int
    delta: float
    delta0: float
    cover_ok: bool
    radius_ok: bool
    dominance_ok: bool
    dominance: float


def choose_R_N(rho, d, p, gamma=None, constants=None, R=None, L=None):
    """Parameter choices ``(R, N, delta)`` for a density ``rho``.

    ``R`` solves ``rho = c R^e`` unless given; ``N`` is
    ``floor((rho / (2^{d+1} gamma))^{1/(d-1)} R^{d/(d-1)})`` and
    ``delta = (c_hat^N R)^{-1}``, clipped below ``delta0 = min(1/2, r0)``.

    ``constants`` supplies ``c``, ``c_hat``, ``r0``, ``rho_ub``,
    ``R_tilde`` and ``M``. The three validity conditions (cover size, R
    large enough, and dominance ``N - M R^b`` of the flatness order over
    the continuation exponent) are reported, not enforced.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    if d not in (2, 3):
        raise UnsupportedDimensionError(f"d = {d}")
    gamma = GAMMA[d] if gamma is None else gamma
    k = dict(c=1.0, c_hat=2.0, r0=0.5, rho_ub=1.0, R_tilde=1.0, M=0.1)
    k.update(constants or {})
    e = R_exponent(d, p)
    if R is None:
        R = (rho / k["c"]) ** (1.0 / e)
    base = rho / (2 ** (d + 1) * gamma)
    N = int(math.floor(base ** (1.0 / (d - 1)) * R ** (d / (d - 1.0)) + 1e-12))
    if N < 1:
        need = 2 ** (d + 1) * gamma * R ** (-d)
        raise ParameterInfeasibleError(f"N = {N} < 1 for rho = {rho:g}, R = {R:g}; need rho >= {need:g}", need)
    delta0 = min(0.5, k["r0"])
    logdelta = -(N * math.log(k["c_hat"]) + math.log(R))
    delta = min(math.exp(logdelta), delta0 * (1.0 - 1e-12))
    cover_ok = 2 ** (d + 1) * gamma * k["rho_ub"] / rho <= R**d and (L is None or R < L / 4.0)
    radius_ok = R > max(k["R_tilde"], 1.0 / delta0)
    _, b = ucp_exponents(d, p)
    dominance = N - k["M"] * R**b
    # (c_hat^N R^2)^{N - M R^b} >= 2
    dominance_ok = dominance > 0 and dominance * (N * math.log(k["c_hat"]) + 2 * math.log(R)) >= math.log(2.0)
    return RNChoice(float(R), N, delta, delta0, cover_ok, radius_ok, dominance_ok, dominance)


# ------------------------------------------------------------ log-Hölder sweep


@dataclass(frozen=True)
class LogHolderFit:
    sup: float
    slope: float
    n_points: int
    argmax: int


def log_holder_fit(eps, eta, kap):
    """Bounded-product statistic and trend of a DOS sweep.

    Returns ``sup eta (log 1/eps)^kappa`` and the least-squares slope of
    ``log eta`` against ``log log(1/eps)`` over rows with ``eta > 0``
    (``nan`` when fewer than two such rows).
    """
    eps = np.asarray(eps, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if eps.size < 5:
        raise InsufficientDataError(f"need at least 5 points, got {eps.size}")
    if eps.shape != eta.shape:
        raise ValueError("eps and eta must have the same length")
    if np.any((eps <= 0) | (eps > 0.5)):
        raise ValueError("eps values must lie in (0, 1/2]")
    if np.any(eta < 0):
        raise ValueError("eta must be nonnegative")
    ll = np.log(np.log(1.0 / eps))
    prod = eta * np.log(1.0 / eps) ** kap
    pos = eta > 0
    if np.count_nonzero(pos) >= 2 and np.ptp(ll[pos]) > 0:
        slope = float(np.polyfit(ll[pos], np.log(eta[pos]), 1)[0])
    else:
        slope = float("nan")
    i = int(np.argmax(prod))
    return LogHolderFit(float(prod[i]), slope, int(eps.size), i)


def box_side(d, p, eps, L0):
    """Box side ``L0 (log 1/eps)^{(3p-2d)/(8p-4d)}``."""
    return L0 * math.log(1.0 / eps) ** L_exponent(d, p)


def grid_size(L, top, d, h_max=None, n_cap=None):
    """Nodes per side so that ``top`` lies in the trusted band, capped."""
    n_cap = {2: 200, 3: 34}.get(d, 200) if n_cap is None else n_cap
    h = math.sqrt(BAND_FRACTION / max(top, 1e-3))
    if h_max is not None:
        h = min(h, h_max)
    n = max(8, int(math.ceil(L / h)) - 1)
    if n > n_cap:
        raise CapacityError(f"{n} nodes per side needed; desk cap is {n_cap}")
    return n


@dataclass(frozen=True)
class NdDosRow:
    eps: float
    L: float
    E: float
    eta: float
    kappa: float
    product: float
    center: tuple
    grid_n: int


def log_holder_sweep_nd(V, E_grid, eps_list, L0, p=None, h_max=0.25, center=None, n_cap=None):
    """Rows ``eta([E, E+eps])`` on boxes ``L = L0 (log 1/eps)^{...}``.

    All energies of one box share one eigenvalue computation.
    """
    d = V.d
    p = V.p if p is None else p
    kap = kappa(d, p)
    E_grid = np.atleast_1d(np.asarray(E_grid, dtype=float))
    center = tuple(np.zeros(d)) if center is None else tuple(center)
    rows = []
    for eps in eps_list:
        if not 0 < eps <= 0.5:
            raise ValueError("eps must lie in (0, 1/2]")
        L = box_side(d, p, eps, L0)
        top = float(E_grid.max()) + eps
        n = grid_size(L, top, d, h_max=h_max, n_cap=n_cap)
        H = assemble_hamiltonian(V, BoxDomain(center, L, d), n)
        _check_band(H, top)
        vals, _ = eigenpairs_between(H, float(E_grid.min()) - EDGE_TOL, top + EDGE_TOL, vectors=False)
        lg = math.log(1.0 / eps)
        for E in E_grid:
            c = int(np.count_nonzero((vals >= E - EDGE_TOL) & (vals <= E + eps + EDGE_TOL)))
            eta = c / L**d
            rows.append(NdDosRow(float(eps), L, float(E), eta, kap, eta * lg**kap, center, n))
    return rows
