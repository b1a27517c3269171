"""Batch experiment runner.

Usage
-----
singdos run CONFIG [--threads N] [--out DIR] [--no-wall-time]
singdos fit CSV --kappa K [--constants PATH] [--out DIR]
singdos calibrate SUITE [--out PATH]

Exit codes: 0 success, 2 validation, 3 numerical, 4 capacity.
"""

import argparse
from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import dataclass, field
import hashlib
import io
import json
import math
from pathlib import Path
import platform
import re
import sys
import time

import numpy as np
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, kernels
from .constants import load_constants
from .errors import (
    CapacityError,
    ConfigError,
    InsufficientDataError,
    SchemaError,
    SingdosError,
)
from .potentials import Potential

CSV_COLUMNS = (
    "d", "p", "L", "E", "eps", "eta", "kappa", "bound_product",
    "center_x", "center_y", "center_z", "seed", "grid_n", "wall_ms",
)
PIPELINES = ("decompose", "ballsolve", "dos1d", "dosnd", "ucp", "fit")
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_CAPACITY = 0, 2, 3, 4
SWEEP_KEYS = ("eps", "E", "L", "delta", "Q", "N")


# ---------------------------------------------------------------- config


def _line_of(text, table, key):
    """1-based line where ``key`` is assigned inside ``[table]`` (None if absent)."""
    if text is None:
        return None
    current = ""
    pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for i, line in enumerate(text.splitlines(), start=1):
        head = re.match(r"^\s*\[\s*([^\]]+?)\s*\]", line)
        if head:
            current = head.group(1)
            continue
        if current == table and pat.match(line):
            return i
    return None


@dataclass
class RunConfig:
    """Validated run configuration.

    ``sweep`` maps each of ``eps, E, L, delta, Q, N`` that is present to a
    nonempty list. ``source`` keeps the original text for line numbers and
    is not serialised.
    """

    pipeline: str
    potential: dict = field(default_factory=dict)
    domain: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])
    output: str = "out"
    constants: str = None
    threads: int = 1
    options: dict = field(default_factory=dict)
    source: str = field(default=None, repr=False, compare=False)

    def to_dict(self):
        out = {"pipeline": self.pipeline, "seeds": list(self.seeds), "output": self.output,
               "threads": int(self.threads)}
        if self.constants is not None:
            out["constants"] = self.constants
        for name in ("potential", "domain", "sweep", "options"):
            val = getattr(self, name)
            if val:
                out[name] = val
        return out

    def to_toml(self):
        return tomli_w.dumps(self.to_dict())

    def digest(self):
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def parse_config(text, base_dir=None):
    """Parse and validate TOML text into a :class:`RunConfig`."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed config: {exc}", int(m.group(1)) if m else None) from None
    return _validate(data, text, base_dir)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base_dir=path.parent)


def _validate(data, text, base_dir):
    def fail(msg, table, key):
        raise ConfigError(msg, _line_of(text, table, key))

    pipeline = data.get("pipeline")
    if pipeline not in PIPELINES:
        fail(f"pipeline must be one of {', '.join(PIPELINES)}; got {pipeline!r}", "", "pipeline")
    sweep = dict(data.get("sweep", {}))
    for key, val in sweep.items():
        if key not in SWEEP_KEYS:
            fail(f"unknown sweep list {key!r}", "sweep", key)
        if not isinstance(val, list) or len(val) == 0:
            fail(f"sweep list {key!r} must be a nonempty list", "sweep", key)
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
            fail(f"sweep list {key!r} must hold numbers", "sweep", key)
    for v in sweep.get("eps", []):
        if not 0 < v <= 0.5:
            fail(f"eps = {v} violates the constraint eps in (0, 1/2]", "sweep", "eps")
    for v in sweep.get("delta", []):
        if not 0 < v <= 0.5:
            fail(f"delta = {v} violates the constraint delta in (0, 1/2]", "sweep", "delta")
    for v in sweep.get("L", []):
        if not v > 0:
            fail(f"L = {v} must be positive", "sweep", "L")
    required = {
        "dos1d": ("eps", "E"), "dosnd": ("eps", "E"), "ucp": ("Q", "delta"),
        "decompose": ("N",), "ballsolve": (), "fit": (),
    }[pipeline]
    for key in required:
        if key not in sweep:
            fail(f"pipeline {pipeline!r} requires sweep list {key!r}", "", "pipeline")
    seeds = data.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        fail("seeds must be a nonempty list of integers", "", "seeds")
    threads = data.get("threads", 1)
    if not isinstance(threads, int) or threads < 1:
        fail("threads must be a positive integer", "", "threads")
    potential = dict(data.get("potential", {}))
    if pipeline != "fit":
        if "d" not in potential:
            fail("potential.d is required", "potential", "d")
        probe = dict(potential)
        if isinstance(probe.get("random"), dict):
            probe["random"] = {"seed": seeds[0], **probe["random"]}
        try:
            Potential.from_dict(probe)
        except (SingdosError, ValueError, TypeError, KeyError) as exc:
            fail(f"invalid potential: {exc}", "potential", next(iter(potential), "d"))
    domain = dict(data.get("domain", {}))
    if pipeline in ("dos1d", "dosnd") and not ("L" in sweep or "L0" in domain):
        fail("dos pipelines need sweep.L or domain.L0", "domain", "L0")
    if pipeline == "dosnd" and int(potential.get("d", 0)) not in (2, 3):
        fail("dosnd needs d = 2 or 3", "potential", "d")
    if pipeline == "dos1d" and int(potential.get("d", 0)) != 1:
        fail("dos1d needs d = 1", "potential", "d")
    options = dict(data.get("options", {}))
    if pipeline == "fit" and "records" not in options:
        fail("fit pipeline needs options.records", "options", "records")
    constants = data.get("constants")
    if constants is not None:
        cpath = Path(constants)
        if base_dir is not None and not cpath.is_absolute():
            cpath = Path(base_dir) / cpath
        if not cpath.exists():
            fail(f"constants file {constants!r} does not exist", "", "constants")
        constants = str(cpath)
    unknown = set(data) - {"pipeline", "potential", "domain", "sweep", "seeds", "output",
                           "constants", "threads", "options"}
    if unknown:
        key = sorted(unknown)[0]
        fail(f"unknown top-level key {key!r}", "", key)
    return RunConfig(pipeline, potential, domain, sweep, list(seeds), str(data.get("output", "out")),
                     constants, threads, options, text)


# ---------------------------------------------------------------- records


def format_value(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_value(row.get(c)) for c in columns])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def dos_record(d, p, L, E, eps, eta, kap, center, seed, grid_n, wall_ms):
    center = list(center) + [None] * (3 - len(center))
    return {
        "d": d, "p": p, "L": L, "E": E, "eps": eps, "eta": eta, "kappa": kap,
        "bound_product": eta * math.log(1.0 / eps) ** kap,
        "center_x": center[0], "center_y": center[1], "center_z": center[2],
        "seed": seed, "grid_n": grid_n, "wall_ms": wall_ms,
    }


def _potential(cfg, seed):
    spec = dict(cfg.potential)
    if "random" in spec:
        spec["random"] = dict(spec["random"], seed=int(spec["random"].get("seed", seed)))
    return Potential.from_dict(spec)


def _dispatch(tasks, threads):
    """Run thunks on a bounded pool; results in task order."""
    if threads <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(t) for t in tasks]
        return [f.result() for f in futures]


def _box_sides(cfg, d, p, eps):
    from .spectralnd import L_exponent

    if "L" in cfg.sweep:
        return [float(L) for L in cfg.sweep["L"]]
    L0 = float(cfg.domain["L0"])
    expo = 1.0 if d == 1 else L_exponent(d, p)
    return [L0 * math.log(1.0 / eps) ** expo]


def _run_dos1d(cfg, timing):
    from .spectral1d import Interval, dos_window, eigs_interval

    tasks = []
    for seed in cfg.seeds:
        for eps in cfg.sweep["eps"]:
            V = _potential(cfg, seed)
            for L in _box_sides(cfg, 1, V.p, eps):
                def task(V=V, L=L, eps=eps, seed=seed):
                    t0 = time.perf_counter()
                    iv = Interval(float(cfg.domain.get("a0", 0.0)), L)
                    es = eigs_interval(V, iv, max(cfg.sweep["E"]) + eps, vectors=False)
                    ms = (time.perf_counter() - t0) * 1e3 if timing else 0.0
                    return [
                        dos_record(1, V.p, L, float(E), eps, dos_window(es, float(E), eps), 1.0,
                                   [iv.a0 + 0.5 * L], seed, es.x.size - 2, round(ms, 3))
                        for E in cfg.sweep["E"]
                    ]

                tasks.append(task)
    return [r for rows in _dispatch(tasks, cfg.threads) for r in rows]


def _run_dosnd(cfg, timing):
    from .spectralnd import (
        EDGE_TOL, BoxDomain, assemble_hamiltonian, eigenpairs_between, grid_size, kappa,
    )

    tasks = []
    Emin, Emax = min(cfg.sweep["E"]), max(cfg.sweep["E"])
    for seed in cfg.seeds:
        V = _potential(cfg, seed)
        d, p = V.d, V.p
        kap = kappa(d, p)
        centers = cfg.domain.get("centers", [[0.0] * d])
        for eps in cfg.sweep["eps"]:
            for L in _box_sides(cfg, d, p, eps):
                for center in centers:
                    def task(V=V, L=L, eps=eps, seed=seed, center=tuple(center)):
                        t0 = time.perf_counter()
                        n = cfg.domain.get("n") or grid_size(
                            L, Emax + eps, d, h_max=cfg.domain.get("h_max", 0.25),
                            n_cap=cfg.domain.get("n_cap"))
                        H = assemble_hamiltonian(V, BoxDomain(center, L, d), int(n),
                                                 cfg.domain.get("bc", "dirichlet"))
                        from .spectralnd import _check_band

                        _check_band(H, Emax + eps)
                        vals, _ = eigenpairs_between(H, Emin - EDGE_TOL, Emax + eps + EDGE_TOL,
                                                     vectors=False)
                        ms = (time.perf_counter() - t0) * 1e3 if timing else 0.0
                        out = []
                        for E in cfg.sweep["E"]:
                            c = int(np.count_nonzero((vals >= E - EDGE_TOL) & (vals <= E + eps + EDGE_TOL)))
                            out.append(dos_record(d, p, L, float(E), eps, c / L**d, kap, center, seed,
                                                  int(n), round(ms, 3)))
                        return out

                    tasks.append(task)
    return [r for rows in _dispatch(tasks, cfg.threads) for r in rows]


def _run_ucp(cfg, constants):
    from .spectralnd import (
        BoxDomain, _lowest, assemble_hamiltonian, make_probe, ucp_check, ucp_geometry,
    )

    rows = []
    m_fit = float(cfg.options.get("m_fit", constants.get("m_fit", 1.0)))
    for seed in cfg.seeds:
        V = _potential(cfg, seed)
        d = V.d
        L = float(cfg.domain.get("L", 10.0))
        H = assemble_hamiltonian(V, BoxDomain(cfg.domain.get("center", [0.0] * d), L, d),
                                 int(cfg.domain.get("n", 48)), cfg.domain.get("bc", "dirichlet"))
        vals, vecs = _lowest(H)
        E = float(vals[0])
        K = V.K + abs(E)
        for Q in cfg.sweep["Q"]:
            theta, x0 = ucp_geometry(float(Q), center=np.zeros(d))
            for delta in cfg.sweep["delta"]:
                pr = make_probe(H, vecs[:, 0], E, theta, x0, float(delta), K, V.p)
                rec = ucp_check(pr, m_fit)
                rows.append({"seed": seed, "Q": pr.Q, "delta": pr.delta, "K": K, "lhs": rec.lhs,
                             "rhs": rec.rhs, "margin": rec.margin, "pass": rec.passed,
                             "required_m": pr.required_m(), "required_exponent": pr.required_exponent()})
    return ("seed", "Q", "delta", "K", "lhs", "rhs", "margin", "pass", "required_m",
            "required_exponent"), rows


def _run_decompose(cfg):
    from .calibrate import decompose_cases
    from .decompose import compute_YN, sample_ball

    wanted = cfg.options.get("cases")
    rows = []
    for name, d, phi, W, N0 in decompose_cases():
        if wanted and name not in wanted:
            continue
        for N in cfg.sweep["N"]:
            if int(N) != N0:
                continue
            res = compute_YN(sample_ball(phi, d, np.zeros(d), float(cfg.domain.get("radius", 1.0))), W, N0)
            for k in range(4):
                rho = float(cfg.domain.get("radius", 1.0)) / 6.0 * 2.0**-k
                rows.append({"case": name, "d": d, "N": N0, "rho": rho,
                             "remainder": res.remainder_max(rho),
                             "Y_coeffs": " ".join(repr(float(c)) for c in res.Y_N.coeffs)})
    return ("case", "d", "N", "rho", "remainder", "Y_coeffs"), rows


def _run_ballsolve(cfg):
    from .ballsolve import GreenBall, boundary_data, dirichlet_solve_Zr

    V = _potential(cfg, cfg.seeds[0])
    d = V.d
    rows = []
    radii = cfg.sweep.get("L", [cfg.domain.get("radius", 0.2)])
    g_kind = cfg.options.get("boundary", "constant")
    for r in radii:
        ball = GreenBall(float(r), d)
        if g_kind == "constant":
            g = boundary_data(lambda z: np.ones(z.shape[0]), ball)
        elif g_kind == "linear":
            g = boundary_data(lambda z: z[:, 0], ball)
        else:
            raise ConfigError(f"unknown boundary data {g_kind!r}", _line_of(cfg.source, "options", "boundary"))
        sol = dirichlet_solve_Zr(V, g, ball)
        rows.append({"radius": float(r), "d": d, "phi_center": float(sol.sample.field(np.zeros((1, d)))[0]),
                     "kappa_hat": sol.kappa_hat, "rate": sol.rate, "iterations": sol.iterations,
                     "pde_residual": sol.pde_residual, "boundary_defect": sol.boundary_defect})
    return ("radius", "d", "phi_center", "kappa_hat", "rate", "iterations", "pde_residual",
            "boundary_defect"), rows


def _versions():
    import numba
    import scipy

    return {"singdos": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "backend": kernels.backend_name()}


def run(cfg, out_dir=None, threads=None, timing=True):
    """Execute a validated config; returns the path of the main CSV."""
    if threads is not None:
        cfg.threads = int(threads)
    out = Path(out_dir or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    constants = load_constants(cfg.constants)
    if cfg.pipeline == "dos1d":
        path = out / "records.csv"
        write_csv(path, CSV_COLUMNS, _run_dos1d(cfg, timing))
    elif cfg.pipeline == "dosnd":
        path = out / "records.csv"
        write_csv(path, CSV_COLUMNS, _run_dosnd(cfg, timing))
    elif cfg.pipeline == "ucp":
        path = out / "ucp.csv"
        write_csv(path, *_run_ucp(cfg, constants))
    elif cfg.pipeline == "decompose":
        path = out / "decompose.csv"
        write_csv(path, *_run_decompose(cfg))
    elif cfg.pipeline == "ballsolve":
        path = out / "ballsolve.csv"
        write_csv(path, *_run_ballsolve(cfg))
    else:
        kap = float(cfg.options.get("kappa", 1.0))
        summary = fit(cfg.options["records"], kap, constants)
        path = out / "fit_summary.json"
        path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    manifest = {
        "config_sha256": cfg.digest(),
        "config": cfg.to_dict(),
        "threads": cfg.threads,
        "versions": _versions(),
        "constants": dict(constants),
        "outputs": [path.name],
        "notes": "eta is the finite-box proxy; the infinite-volume limsup is not computed",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------- fit


def read_records(path):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise InsufficientDataError(f"{path} is empty")
    missing = [c for c in CSV_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise SchemaError(f"{path} is missing columns: {', '.join(missing)}")
    rows = list(reader)
    if not rows:
        raise InsufficientDataError(f"{path} has no records")
    return rows


def fit(records_path, kap, constants=None):
    """Per-(d, p, E) bounded-product statistic and trend of a records file.

    Rows sharing ``eps`` within a group (several boxes or centres) are
    reduced by their maximum, the finite-volume proxy of the outer DOS.
    """
    from .spectralnd import log_holder_fit

    rows = read_records(records_path)
    constants = constants if constants is not None else load_constants()
    groups = {}
    for r in rows:
        key = (int(r["d"]), float(r["p"]), float(r["E"]))
        groups.setdefault(key, {})
        eps = float(r["eps"])
        groups[key][eps] = max(groups[key].get(eps, 0.0), float(r["eta"]))
    out = []
    for (d, p, E), table in sorted(groups.items()):
        eps = np.array(sorted(table, reverse=True))
        eta = np.array([table[e] for e in eps])
        res = log_holder_fit(eps, eta, kap)
        bound = {1: constants.get("bound_1d"), 2: constants.get("bound_2d")}.get(d)
        out.append({
            "d": d, "p": p, "E": E, "n_points": res.n_points, "sup": res.sup,
            "slope": res.slope if np.isfinite(res.slope) else None,
            "kappa_est": -res.slope if np.isfinite(res.slope) else None,
            "bound": bound, "pass": None if bound is None else bool(res.sup <= bound),
        })
    return {"kappa": kap, "groups": out}


def summary_text(summary):
    lines = [f"kappa = {summary['kappa']:g}"]
    for g in summary["groups"]:
        verdict = "n/a" if g["pass"] is None else ("pass" if g["pass"] else "FAIL")
        slope = "n/a" if g["slope"] is None else f"{g['slope']:.6g}"
        lines.append(
            f"d={g['d']} p={g['p']:g} E={g['E']:g}: sup={g['sup']:.6g} slope={slope} "
            f"points={g['n_points']} bound={g['bound']} {verdict}"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------- entry point


def _exit_code(exc):
    if isinstance(exc, CapacityError):
        return EXIT_CAPACITY
    if isinstance(exc, (ConfigError, SchemaError, InsufficientDataError)):
        return EXIT_VALIDATION
    return EXIT_NUMERICAL


def build_parser():
    ap = argparse.ArgumentParser(prog="singdos", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a config file")
    r.add_argument("config")
    r.add_argument("--threads", type=int, default=None)
    r.add_argument("--out", default=None)
    r.add_argument("--no-wall-time", action="store_true", help="write wall_ms = 0")
    f = sub.add_parser("fit", help="fit a records CSV")
    f.add_argument("csv")
    f.add_argument("--kappa", type=float, required=True)
    f.add_argument("--constants", default=None)
    f.add_argument("--out", default=None)
    c = sub.add_parser("calibrate", help="refit the frozen constants")
    c.add_argument("suite", help="suite name or 'all'")
    c.add_argument("--out", default=None, help="constants file to write")
    c.add_argument("--threads", type=int, default=None)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            path = run(cfg, args.out, args.threads, timing=not args.no_wall_time)
            print(f"wrote {path}")
        elif args.command == "fit":
            summary = fit(args.csv, args.kappa, load_constants(args.constants))
            print(summary_text(summary))
            if args.out:
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                (out / "fit_summary.json").write_text(
                    json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        else:
            from .calibrate import calibrate

            _, summary = calibrate((args.suite,), args.out)
            print(json.dumps(summary, indent=2, sort_keys=True))
    except SingdosError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except ValueError as exc:
        print(f"error: ValueError: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
