"""Frozen fitted constants.

The non-explicit constants of the estimates are replaced by values fitted
once by :mod:`singdos.calibrate` and stored in ``data/constants.json``.
Every consumer reads them through :func:`load_constants`; the file records
the suite settings that produced each value so drift is detectable.
"""

from importlib import resources
import json
from pathlib import Path

DEFAULT_PATH = Path(str(resources.files("singdos") / "data" / "constants.json"))

#: Parameters of the (R, N, delta) rule that are chosen, not fitted.
PARAMETER_DEFAULTS = {
    "c": 1.0,
    "c_hat": 2.0,
    "r0": 0.5,
    "rho_ub": 1.0,
    "R_tilde": 1.0,
    "M": 0.1,
}

REQUIRED = ("A", "B", "C_sup", "m_fit", "L0_1d", "bound_1d", "L0_2d", "bound_2d", "weyl_factor")


class Constants(dict):
    """Mapping of constant name to value with attribute access."""

    def __getattr__(self, name):
        try:
            return self[name]
        except KeyError as exc:
            raise AttributeError(name) from exc

    def per_dim(self, name, d):
        return float(self[name][str(d)])

    @property
    def parameters(self):
        out = dict(PARAMETER_DEFAULTS)
        out.update(self.get("parameters", {}))
        return out


def load_constants(path=None):
    """Read the constants file (default: the packaged frozen file)."""
    p = Path(path) if path is not None else DEFAULT_PATH
    with open(p, encoding="utf-8") as fh:
        data = json.load(fh)
    return Constants(data)


def missing(constants):
    return [k for k in REQUIRED if k not in constants]


def save_constants(data, path=None):
    p = Path(path) if path is not None else DEFAULT_PATH
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return p
