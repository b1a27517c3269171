"""Hot numeric kernels with a numba path and a pure-numpy path.

The numba path is used when numba imports and the environment variable
``SINGDOS_DISABLE_NUMBA`` is unset or ``"0"``. Both implementations are
always importable as :data:`numpy_impl` and :data:`numba_impl` so the
benchmark and the tests can compare them directly.

Kernels
-------
sturm_counts(diag, off, shifts)
    Number of eigenvalues of a symmetric tridiagonal matrix strictly
    below each shift (Sylvester inertia of the LDL^T factorisation).
transfer_steps(qbar, zmid, h)
    Exponential-midpoint stepping of the 1D transfer system
    Psi' = [[0, 1], [q, 0]] Psi + [0, -zeta].
apply_grid_hamiltonian(u, vdiag, n, d, h, periodic)
    Matrix-free (-Delta_h + V) u on an n^d grid.
"""

import os
from types import SimpleNamespace

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("SINGDOS_DISABLE_NUMBA", "0") in ("", "0")

_PIVOT_FLOOR = 1e-300


# ---------------------------------------------------------------- numpy path


def _np_sturm_counts(diag, off, shifts):
    diag = np.asarray(diag, dtype=float)
    off2 = np.asarray(off, dtype=float) ** 2
    shifts = np.atleast_1d(np.asarray(shifts, dtype=float))
    counts = np.zeros(shifts.shape, dtype=np.int64)
    piv = diag[0] - shifts
    piv = np.where(piv == 0.0, -_PIVOT_FLOOR, piv)
    counts += piv < 0
    for i in range(1, diag.size):
        piv = diag[i] - shifts - off2[i - 1] / piv
        piv = np.where(piv == 0.0, -_PIVOT_FLOOR, piv)
        counts += piv < 0
    return counts


def _phi_functions(z):
    """Return c(z), s(z), g(z) for z = q h^2 (array-valued).

    c = cosh(sqrt z), s = sinh(sqrt z)/sqrt z, g = (c - 1)/z, continued
    analytically through z = 0 and to z < 0 (trigonometric branch).
    """
    z = np.asarray(z, dtype=float)
    c = np.empty_like(z)
    s = np.empty_like(z)
    g = np.empty_like(z)
    small = np.abs(z) < 1e-3
    zs = z[small]
    c[small] = 1.0 + zs / 2.0 + zs * zs / 24.0 + zs**3 / 720.0
    s[small] = 1.0 + zs / 6.0 + zs * zs / 120.0 + zs**3 / 5040.0
    g[small] = 0.5 + zs / 24.0 + zs * zs / 720.0 + zs**3 / 40320.0
    pos = (~small) & (z > 0)
    w = np.sqrt(z[pos])
    c[pos] = np.cosh(w)
    s[pos] = np.sinh(w) / w
    g[pos] = (c[pos] - 1.0) / z[pos]
    neg = (~small) & (z < 0)
    w = np.sqrt(-z[neg])
    c[neg] = np.cos(w)
    s[neg] = np.sin(w) / w
    g[neg] = (c[neg] - 1.0) / z[neg]
    return c, s, g


def _np_transfer_steps(qbar, zmid, h):
    qbar = np.asarray(qbar, dtype=float)
    zmid = np.asarray(zmid, dtype=float)
    c, s, g = _phi_functions(qbar * h * h)
    out = np.zeros((qbar.size + 1, 2))
    y0 = 0.0
    y1 = 0.0
    for k in range(qbar.size):
        n0 = c[k] * y0 + h * s[k] * y1 - h * h * g[k] * zmid[k]
        n1 = qbar[k] * h * s[k] * y0 + c[k] * y1 - h * s[k] * zmid[k]
        y0, y1 = n0, n1
        out[k + 1, 0] = y0
        out[k + 1, 1] = y1
    return out


def _np_apply_grid_hamiltonian(u, vdiag, n, d, h, periodic):
    grid = np.asarray(u, dtype=float).reshape((n,) * d)
    out = (2.0 * d / (h * h)) * grid
    for ax in range(d):
        if periodic:
            out -= (np.roll(grid, 1, axis=ax) + np.roll(grid, -1, axis=ax)) / (h * h)
        else:
            lo = [slice(None)] * d
            hi = [slice(None)] * d
            lo[ax] = slice(0, n - 1)
            hi[ax] = slice(1, n)
            out[tuple(lo)] -= grid[tuple(hi)] / (h * h)
            out[tuple(hi)] -= grid[tuple(lo)] / (h * h)
    return out.ravel() + np.asarray(vdiag, dtype=float) * np.asarray(u, dtype=float)


numpy_impl = SimpleNamespace(
    sturm_counts=_np_sturm_counts,
    transfer_steps=_np_transfer_steps,
    apply_grid_hamiltonian=_np_apply_grid_hamiltonian,
)


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:
    _njit = numba.njit(cache=True, nogil=True)

    @_njit
    def _nb_sturm_counts_kernel(diag, off2, shifts, counts):
        for j in range(shifts.size):
            x = shifts[j]
            piv = diag[0] - x
            if piv == 0.0:
                piv = -_PIVOT_FLOOR
            c = 1 if piv < 0.0 else 0
            for i in range(1, diag.size):
                piv = diag[i] - x - off2[i - 1] / piv
                if piv == 0.0:
                    piv = -_PIVOT_FLOOR
                if piv < 0.0:
                    c += 1
            counts[j] = c

    def _nb_sturm_counts(diag, off, shifts):
        diag = np.ascontiguousarray(diag, dtype=np.float64)
        off2 = np.ascontiguousarray(off, dtype=np.float64) ** 2
        shifts = np.atleast_1d(np.ascontiguousarray(shifts, dtype=np.float64))
        counts = np.zeros(shifts.shape, dtype=np.int64)
        _nb_sturm_counts_kernel(diag, off2, shifts.ravel(), counts.ravel())
        return counts

    @_njit
    def _nb_transfer_kernel(qbar, zmid, h, out):
        y0 = 0.0
        y1 = 0.0
        for k in range(qbar.size):
            z = qbar[k] * h * h
            if abs(z) < 1e-3:
                c = 1.0 + z / 2.0 + z * z / 24.0 + z**3 / 720.0
                s = 1.0 + z / 6.0 + z * z / 120.0 + z**3 / 5040.0
                g = 0.5 + z / 24.0 + z * z / 720.0 + z**3 / 40320.0
            elif z > 0.0:
                w = np.sqrt(z)
                c = np.cosh(w)
                s = np.sinh(w) / w
                g = (c - 1.0) / z
            else:
                w = np.sqrt(-z)
                c = np.cos(w)
                s = np.sin(w) / w
                g = (c - 1.0) / z
            n0 = c * y0 + h * s * y1 - h * h * g * zmid[k]
            n1 = qbar[k] * h * s * y0 + c * y1 - h * s * zmid[k]
            y0 = n0
            y1 = n1
            out[k + 1, 0] = y0
            out[k + 1, 1] = y1

    def _nb_transfer_steps(qbar, zmid, h):
        qbar = np.ascontiguousarray(qbar, dtype=np.float64)
        zmid = np.ascontiguousarray(zmid, dtype=np.float64)
        out = np.zeros((qbar.size + 1, 2))
        _nb_transfer_kernel(qbar, zmid, float(h), out)
        return out

    @_njit
    def _nb_hamiltonian_kernel(u, vdiag, n, d, h, periodic, out):
        inv = 1.0 / (h * h)
        total = u.size
        for i in range(total):
            acc = (2.0 * d * inv + vdiag[i]) * u[i]
            stride = 1
            rem = i
            for ax in range(d):
                coord = rem % n
                rem //= n
                if coord > 0:
                    acc -= inv * u[i - stride]
                elif periodic:
                    acc -= inv * u[i + (n - 1) * stride]
                if coord < n - 1:
                    acc -= inv * u[i + stride]
                elif periodic:
                    acc -= inv * u[i - (n - 1) * stride]
                stride *= n
            out[i] = acc

    def _nb_apply_grid_hamiltonian(u, vdiag, n, d, h, periodic):
        u = np.ascontiguousarray(u, dtype=np.float64).ravel()
        vdiag = np.ascontiguousarray(vdiag, dtype=np.float64).ravel()
        out = np.empty_like(u)
        _nb_hamiltonian_kernel(u, vdiag, int(n), int(d), float(h), bool(periodic), out)
        return out

    numba_impl = SimpleNamespace(
        sturm_counts=_nb_sturm_counts,
        transfer_steps=_nb_transfer_steps,
        apply_grid_hamiltonian=_nb_apply_grid_hamiltonian,
    )
else:  # pragma: no cover
    numba_impl = numpy_impl

_active = numba_impl if USE_NUMBA else numpy_impl

sturm_counts = _active.sturm_counts
transfer_steps = _active.transfer_steps
apply_grid_hamiltonian = _active.apply_grid_hamiltonian


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
