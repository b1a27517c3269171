"""Calibration suites for the fitted constants.

Each suite is a deterministic function of its settings. ``calibrate``
runs the requested suites and writes the constants file; the acceptance
tests rerun the same suites and compare against the frozen values.

Fitted values that bound a family beyond the calibration sample (A, B,
C_sup) carry the safety factor ``SAFETY``; regression gates (the DOS
products) are frozen at the observed maximum.
"""

import math

import numpy as np

from .constants import PARAMETER_DEFAULTS, load_constants, save_constants
from .potentials import Potential, free_potential, random_singular

SAFETY = 1.25
UCP_SAFETY = 1.05

EPS_1D = tuple(2.0**-k for k in range(1, 13))
EPS_2D = tuple(2.0**-k for k in range(1, 9))
EPS_3D = tuple(2.0**-k for k in range(1, 4))
E_GRID_1D = tuple(np.linspace(0.5, 4.0, 8))
E_GRID_2D = tuple(np.linspace(0.5, 1.5, 21))
E_GRID_3D = (1.5, 2.0, 2.5)
E_FREE_1D = 4.0
P_2D = 4.0
P_3D = 8.0


def _round_up(x, digits=6):
    """Round ``x > 0`` up to ``digits`` significant figures."""
    if x <= 0:
        return 0.0
    e = math.floor(math.log10(x)) - digits + 1
    return math.ceil(x / 10.0**e) * 10.0**e


# ---------------------------------------------------------------- harmonic


def harmonic_pairs(d, count=50, seed=0):
    """Random ``(x, y)`` with ``|y|`` in [1/2, 2] and ``|x| <= |y|/2``."""
    rng = np.random.default_rng(seed + 10 * d)
    out = []
    for _ in range(count):
        y = rng.standard_normal(d)
        y *= rng.uniform(0.5, 2.0) / np.linalg.norm(y)
        x = rng.standard_normal(d)
        x *= rng.uniform(0.0, 0.5) * np.linalg.norm(y) / np.linalg.norm(x)
        out.append((x, y))
    return out


def harmonic_ratios(d, count=50, seed=0, N_max=12):
    """Largest ``error / bound`` for the truncated expansion of Phi(x - y).

    Round-off (1e-13 of ``max(|Phi|, 1)``) is removed from the error first.
    """
    from .harmonic import expansion_bound, fundamental_partial_sum, fundamental_solution

    worst = 0.0
    for x, y in harmonic_pairs(d, count, seed):
        f = float(fundamental_solution(d, x - y))
        for N in range(N_max + 1):
            err = abs(f - float(fundamental_partial_sum(d, x, y, N)[0]))
            b = float(expansion_bound(d, x, y, N)[0])
            err = max(err - 1e-13 * max(abs(f), 1.0), 0.0)
            if b > 0:
                worst = max(worst, err / b)
    return worst


# ---------------------------------------------------------------- decompose


def decompose_cases():
    """Test solutions with known vanishing order: ``(name, d, phi, W, N)``."""
    from scipy.special import jv, spherical_jn

    def j1(y):
        r = np.linalg.norm(y, axis=-1)
        return jv(1, r) * np.cos(np.arctan2(y[..., 1], y[..., 0]))

    def j2(y):
        r = np.linalg.norm(y, axis=-1)
        return jv(2, r) * np.cos(2 * np.arctan2(y[..., 1], y[..., 0]))

    def sj1(y):
        r = np.linalg.norm(y, axis=-1)
        return spherical_jn(1, r) * y[..., 2] / np.where(r > 0, r, 1.0)

    def minus_one(y):
        return -np.ones(np.shape(y)[:-1])

    return [
        ("bessel_j1", 2, j1, minus_one, 1),
        ("bessel_j2", 2, j2, minus_one, 2),
        ("spherical_j1", 3, sj1, minus_one, 1),
    ]


def decompose_remainders(radius=1.0, levels=4):
    """Per case: ``(name, d, N, Y_N, radii, remainder maxima)``."""
    from .decompose import compute_YN, sample_ball

    out = []
    for name, d, phi, W, N in decompose_cases():
        res = compute_YN(sample_ball(phi, d, np.zeros(d), radius), W, N)
        radii = radius / 6.0 * 2.0 ** -np.arange(levels)
        rem = np.array([res.remainder_max(r) for r in radii])
        out.append((name, d, N, res.Y_N, radii, rem))
    return out


def decompose_B(records=None):
    records = decompose_remainders() if records is None else records
    B = {}
    for _, d, N, _, radii, rem in records:
        B[d] = max(B.get(d, 0.0), float(np.max(rem / radii ** (N + 1))))
    return B


# ---------------------------------------------------------------- sup bound


def sup_ratios(d):
    """``max |psi|_inf/|psi|_2 / e^{E0 + theta + 1}`` over free windows on (0, pi)^d."""
    from .spectralnd import BoxDomain, assemble_hamiltonian, eigs_window, sup_bound_check, theta_estimate_nd

    n = 63 if d == 2 else 15
    H = assemble_hamiltonian(free_potential(d), BoxDomain(np.full(d, np.pi / 2), np.pi, d), n)
    theta = theta_estimate_nd(H)
    worst = 0.0
    for E in np.arange(float(d) - 0.25, 12.0, 0.5):
        w = eigs_window(H, float(E), 0.5)
        if w.count:
            rec = sup_bound_check(w, theta, E + 0.5, 1.0)
            worst = max(worst, rec.ratio / rec.cap)
    return worst


# ---------------------------------------------------------------- DOS suites


def dos1d_potentials(L0):
    """Three seeded singular potentials on the largest box of the 1D sweep."""
    top = L0 * math.log(1.0 / min(EPS_1D)) + 1.0
    region = (np.zeros(1), np.full(1, top))
    return {
        f"seed{s}": random_singular(s, 1, 1.0, 0.5, amplitude=3.0, region=region, alpha_fraction=0.8)
        for s in (1, 2, 3)
    }


def dos1d_rows(V, L0, E_grid=E_GRID_1D, eps_list=EPS_1D):
    from .spectral1d import log_holder_check_1d

    return log_holder_check_1d(V, float(max(E_grid)), list(eps_list), L0, E_grid=list(E_grid))


def free_products_1d(L0, eps_list=EPS_1D):
    rows = dos1d_rows(free_potential(1), L0, E_grid=(E_FREE_1D,), eps_list=eps_list)
    return np.array([r.product for r in rows])


def free_check_1d(products, tail=6):
    """Products over the last ``tail`` points are nonincreasing and end at 0."""
    last = np.asarray(products)[-tail:]
    return bool(np.all(np.diff(last) <= 0) and last[-1] == 0)


def choose_L0_1d(start=8, stop=16):
    """Smallest integer ``L0 >= start`` passing the free quantisation check."""
    for L0 in range(start, stop + 1):
        if free_check_1d(free_products_1d(float(L0))):
            return float(L0)
    raise RuntimeError("no L0 in range passes the free check")


def dos2d_potentials(L0, p=P_2D):
    half = 0.5 * L0 * math.log(1.0 / min(EPS_2D)) ** ((3 * p - 4) / (8 * p - 8)) + 1.0
    region = (np.full(2, -half), np.full(2, half))
    free = Potential(d=2, p=p, label="free")
    return {
        "free": free,
        "seed11": random_singular(11, 2, p, 0.2, amplitude=2.0, region=region),
        "seed12": random_singular(12, 2, p, 0.2, amplitude=2.0, region=region, law="positive"),
    }


def dos2d_rows(V, L0, E_grid=E_GRID_2D, eps_list=EPS_2D):
    from .spectralnd import log_holder_sweep_nd

    return log_holder_sweep_nd(V, E_grid, eps_list, L0, p=V.p, h_max=0.25)


def mean_eta(rows, n_eps):
    eta = np.array([r.eta for r in rows]).reshape(n_eps, -1)
    return eta.mean(axis=1)


def dos3d_rows(L0=4.0, seed=21):
    from .spectralnd import log_holder_sweep_nd

    half = 0.5 * L0 * 2.0
    V = random_singular(seed, 3, P_3D, 0.1, amplitude=2.0, region=(np.full(3, -half), np.full(3, half)))
    return log_holder_sweep_nd(V, E_GRID_3D, EPS_3D, L0, p=P_3D, h_max=None, n_cap=34)


# ---------------------------------------------------------------- driver


SUITES = ("harmonic", "decompose", "sup", "ucp", "dos1d", "dos2d")


def run_suite(name, constants):
    """Run one suite and update ``constants`` in place; returns a summary."""
    if name == "harmonic":
        A = {str(d): _round_up(SAFETY * harmonic_ratios(d)) for d in (2, 3)}
        constants["A"] = A
        return {"A": A}
    if name == "decompose":
        B = {str(d): _round_up(SAFETY * b) for d, b in decompose_B().items()}
        constants["B"] = B
        return {"B": B}
    if name == "sup":
        C = {str(d): _round_up(SAFETY * sup_ratios(d)) for d in (2, 3)}
        constants["C_sup"] = C
        return {"C_sup": C}
    if name == "ucp":
        from .spectralnd import fit_ucp, ucp_suite

        fit = fit_ucp(ucp_suite(), safety=UCP_SAFETY)
        constants["m_fit"] = _round_up(fit.m_fit)
        constants["ucp_slope"] = fit.slope
        return {"m_fit": constants["m_fit"], "slope": fit.slope}
    if name == "dos1d":
        L0 = choose_L0_1d()
        best = 0.0
        for V in dos1d_potentials(L0).values():
            best = max(best, max(r.product for r in dos1d_rows(V, L0)))
        constants["L0_1d"] = L0
        constants["bound_1d"] = best
        return {"L0_1d": L0, "bound_1d": best}
    if name == "dos2d":
        L0 = float(constants.get("L0_2d", 8.0))
        best = 0.0
        for V in dos2d_potentials(L0).values():
            best = max(best, max(r.product for r in dos2d_rows(V, L0)))
        constants["L0_2d"] = L0
        constants["bound_2d"] = best
        return {"L0_2d": L0, "bound_2d": best}
    raise ValueError(f"unknown suite {name!r}; expected one of {SUITES} or 'all'")


def calibrate(suites=("all",), path=None, base=None):
    """Run suites and write the constants file. Returns the constants dict."""
    names = SUITES if "all" in suites else tuple(suites)
    if base is None:
        try:
            base = dict(load_constants(path))
        except FileNotFoundError:
            base = {}
    constants = dict(base)
    constants.setdefault("weyl_factor", 2.0)
    constants.setdefault("parameters", dict(PARAMETER_DEFAULTS))
    constants.setdefault("L0_2d", 8.0)
    constants["safety"] = SAFETY
    summary = {n: run_suite(n, constants) for n in names}
    save_constants(constants, path)
    return constants, summary
