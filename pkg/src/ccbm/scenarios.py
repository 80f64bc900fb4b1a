"""Named problem setups, closed-form annulus data and the config-file format."""

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .descent import DescentConfig
from .errors import BadRadii
from .shapes import Circle, PolylineBoundary, Ribbon, lshape
from .mesh import read_polyline

METHODS = ("ccbm", "kv", "both")


def _check_radii(r, R):
    if not (r > 0 and R > r):
        raise BadRadii(f"need 0 < r < R, got r={r!r}, R={R!r}")


def lambda_annulus_2d(r, R):
    """Bernoulli constant for which C(0, R) is the free boundary around C(0, r)."""
    _check_radii(r, R)
    return 1.0 / (R * math.log(r / R))


def lambda_annulus_3d(r, R):
    """Same as :func:`lambda_annulus_2d` for concentric spheres."""
    _check_radii(r, R)
    return -r / (R * (R - r))


def radial_coefficients(r, R, lam):
    """``(a, b)`` with ``u = a + b ln(rho)`` solving the complex Robin state on the annulus."""
    _check_radii(r, R)
    b = (lam - 1j) / (1.0 / R + 1j * math.log(R / r))
    a = 1.0 - b * math.log(r)
    return a, b


def radial_exact_solution(r, R, lam, rho):
    """Closed-form complex state on the annulus ``r <= rho <= R``.

    Accepts scalar or array ``rho``.
    """
    a, b = radial_coefficients(r, R, lam)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < r * (1 - 1e-12)) or np.any(rho > R * (1 + 1e-12)):
        raise BadRadii("rho outside [r, R]")
    out = np.asarray(a + b * np.log(rho))
    return complex(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# scenarios

@dataclass(frozen=True)
class Scenario:
    """Everything needed to reproduce one descent run.

    ``boundary`` is one of ``circle:<r>``, ``lshape``, ``ribbon`` or
    ``polyline:<path>``.  ``reference`` is ``circle:<R>`` (d_H to an exact
    circle), ``final`` (d_H to the last iterate) or ``none``.
    """

    name: str
    boundary: str
    lam: float
    initial_radius: float = 1.25
    h: float = 0.05
    cfg: DescentConfig = field(default_factory=DescentConfig)
    method: str = "ccbm"
    reference: str = "none"
    dump_every: int = 10

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not self.initial_radius > 0:
            raise ValueError("initial_radius must be positive")
        if self.dump_every < 1:
            raise ValueError("dump_every must be at least 1")
        parse_boundary(self.boundary)  # fail early on typos
        _parse_reference(self.reference)

    def fixed_boundary(self):
        return parse_boundary(self.boundary)

    def reference_polyline(self, n=4096):
        """Exact reference as an ``n``-gon, or None for ``final``/``none``.

        With n = 4096 the chord error on C(0, 0.7) is about 2e-7.
        """
        kind, radius = _parse_reference(self.reference)
        if kind != "circle":
            return None
        return Circle(radius).polyline(2 * math.pi * radius / n)


def parse_boundary(spec):
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "circle":
        return Circle(float(arg))
    if kind == "lshape":
        return lshape()
    if kind == "ribbon":
        return Ribbon()
    if kind == "polyline":
        pts = read_polyline(arg.strip())
        return PolylineBoundary(pts, tuple(np.mean(pts, axis=0)))
    raise ValueError(f"unknown boundary {spec!r}")


def _parse_reference(spec):
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "circle":
        radius = float(arg)
        if not radius > 0:
            raise ValueError("reference radius must be positive")
        return kind, radius
    if kind in ("final", "none"):
        return kind, None
    raise ValueError(f"unknown reference {spec!r}")


LAMBDA_2D1 = -4.24573  # 1/(0.7 ln(0.5/0.7)) rounded to five decimals

PRESETS = {
    "example2d1": Scenario(
        "example2d1", "circle:0.5", LAMBDA_2D1, 1.25, 0.05,
        DescentConfig(mu=2.0, tol=1e-6, max_iters=500, cost_plateau_tol=1e-6),
        reference="circle:0.7"),
    "example2d2": Scenario(
        "example2d2", "lshape", -5.0, 1.25, 0.05,
        DescentConfig(mu=1.0, tol=1e-10, max_iters=100, cost_plateau_tol=0.0),
        reference="final"),
    "example2d3": Scenario(
        "example2d3", "ribbon", -5.0, 1.25, 0.05,
        DescentConfig(mu=1.0, tol=1e-10, max_iters=100, cost_plateau_tol=0.0),
        reference="final"),
}


def preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(PRESETS)}") from None


# ---------------------------------------------------------------------------
# flat key = value configuration

_SCENARIO_KEYS = {"name": str, "boundary": str, "lam": float, "initial_radius": float,
                  "h": float, "method": str, "reference": str, "dump_every": int}
_CFG_KEYS = {f.name: f.type for f in fields(DescentConfig)}
_ALIASES = {"lambda": "lam", "scenario": "preset", "max-iters": "max_iters",
            "dump-every": "dump_every"}


def _to_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(key, value):
    typ = _SCENARIO_KEYS.get(key) or _CFG_KEYS.get(key)
    if typ in (bool, "bool"):
        return _to_bool(value)
    if typ in (int, "int"):
        return int(value)
    if typ in (float, "float"):
        return float(value)
    return str(value)


def parse_config_text(text):
    """``key = value`` lines with ``#`` comments into a dict of strings."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def read_config(path):
    with open(path) as f:
        return parse_config_text(f.read())


def normalize_keys(values):
    """Lower-case keys, resolve aliases and drop ``None`` values."""
    return {_ALIASES.get(k.strip().lower(), k.strip().lower()): v
            for k, v in values.items() if v is not None}


def apply_overrides(base, values):
    """New scenario from ``base`` with the given key/value overrides.

    ``values`` may hold strings (from a file) or already-typed values; keys
    belong to either the scenario or its descent config.  ``None`` values
    are ignored, so unset CLI flags leave the base untouched.
    """
    values = normalize_keys(values)
    if "preset" in values:
        base = preset(str(values.pop("preset")))
    unknown = set(values) - set(_SCENARIO_KEYS) - set(_CFG_KEYS)
    if unknown:
        raise ValueError(f"unknown configuration key(s): {', '.join(sorted(unknown))}")
    scen = {k: _convert(k, v) for k, v in values.items() if k in _SCENARIO_KEYS}
    cfg = {k: _convert(k, v) for k, v in values.items() if k in _CFG_KEYS}
    return replace(base, cfg=replace(base.cfg, **cfg), **scen)


def scenario_to_text(s):
    """Inverse of :func:`parse_config_text` + :func:`apply_overrides`."""
    lines = [f"{k} = {getattr(s, k)!r}" if isinstance(getattr(s, k), float)
             else f"{k} = {getattr(s, k)}" for k in _SCENARIO_KEYS]
    lines += [f"{k} = {getattr(s.cfg, k)!r}" if isinstance(getattr(s.cfg, k), float)
              else f"{k} = {getattr(s.cfg, k)}" for k in _CFG_KEYS]
    return "\n".join(lines) + "\n"
