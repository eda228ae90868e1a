"""Shear profiles U(y) on the torus with exact derivatives and critical points.

Supported kinds:

* ``sine``      U = sin y
* ``cosine``    U = cos y
* ``polytrig``  finite trigonometric polynomial, ``sin2`` is sin(2y)
* ``table``     samples (y, U) interpolated trigonometrically

Critical points are located by scanning U' for sign changes and refining
each bracket by bisection, so the same code serves every kind.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .errors import DegenerateCritical, NoCriticalPoints, NonPeriodic, ProfileError

TWO_PI = 2.0 * np.pi

SCAN_POINTS = 4096
BISECTION_STEPS = 60
DEGENERACY_TOL = 1e-8
PERIODICITY_TOL = 1e-10
FLAT_TOL = 1e-14

KINDS = ("sine", "cosine", "polytrig", "table")


@dataclass(frozen=True)
class ShearProfile:
    """Immutable shear profile.

    ``critical_points`` holds ``(y_j, |U''(y_j)|)`` sorted by ``y_j``.
    """

    kind: str
    name: str
    u: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    du: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    d2u: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    critical_points: tuple = ()
    norm_U: float = 0.0
    norm_U1: float = 0.0
    norm_U2: float = 0.0

    @property
    def n_critical(self) -> int:
        return len(self.critical_points)

    @property
    def critical_y(self) -> np.ndarray:
        return np.array([c[0] for c in self.critical_points], dtype=float)

    def __call__(self, y):
        return self.u(np.asarray(y, dtype=float))


def eval_derivatives(profile: ShearProfile, y_samples):
    """Return ``(U, U', U'')`` sampled at ``y_samples``."""
    y = np.asarray(y_samples, dtype=float)
    return profile.u(y), profile.du(y), profile.d2u(y)


def periodic_distance(a, b):
    d = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), TWO_PI)
    return np.minimum(d, TWO_PI - d)


def distance_to_critical(profile: ShearProfile, y):
    """Periodic distance from ``y`` to the nearest critical point."""
    if profile.n_critical == 0:
        raise NoCriticalPoints(f"profile {profile.name!r} has no critical points")
    y = np.asarray(y, dtype=float)
    d = periodic_distance(y[..., None], profile.critical_y)
    return d.min(axis=-1)


# --- trigonometric building blocks -------------------------------------------

def _trig_series(a0, cos_coef, sin_coef):
    """Evaluators for a0 + sum_m (a_m cos my + b_m sin my) and derivatives."""
    cm = np.array(sorted(cos_coef), dtype=float)
    ca = np.array([cos_coef[m] for m in sorted(cos_coef)], dtype=float)
    sm = np.array(sorted(sin_coef), dtype=float)
    sb = np.array([sin_coef[m] for m in sorted(sin_coef)], dtype=float)

    def u(y):
        y = np.asarray(y, dtype=float)
        out = np.full(y.shape, float(a0))
        for m, a in zip(cm, ca):
            out += a * np.cos(m * y)
        for m, b in zip(sm, sb):
            out += b * np.sin(m * y)
        return out

    def du(y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape)
        for m, a in zip(cm, ca):
            out -= a * m * np.sin(m * y)
        for m, b in zip(sm, sb):
            out += b * m * np.cos(m * y)
        return out

    def d2u(y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape)
        for m, a in zip(cm, ca):
            out -= a * m * m * np.cos(m * y)
        for m, b in zip(sm, sb):
            out -= b * m * m * np.sin(m * y)
        return out

    return u, du, d2u


def _table_series(y_tab, u_tab):
    """Trigonometric interpolant of uniform periodic samples."""
    n = len(u_tab)
    coef = np.fft.rfft(u_tab) / n
    modes = np.arange(len(coef), dtype=float)
    weights = np.full(len(coef), 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    shift = y_tab[0]
    # the Nyquist mode has no well-defined derivative; drop it there
    dweights = weights.copy()
    if n % 2 == 0:
        dweights[-1] = 0.0

    def _eval(y, order, w):
        y = np.asarray(y, dtype=float)
        phase = np.exp(1j * np.multiply.outer(y - shift, modes))
        c = coef * w * (1j * modes) ** order
        return np.real(phase @ c)

    return (lambda y: _eval(y, 0, weights),
            lambda y: _eval(y, 1, dweights),
            lambda y: _eval(y, 2, dweights))


# --- critical points ----------------------------------------------------------

def find_critical_points(du, d2u, scan_points=SCAN_POINTS, steps=BISECTION_STEPS):
    """Sign-change scan of U' followed by bisection.

    Returns a sorted tuple of ``(y_j, |U''(y_j)|)``.
    """
    y = np.linspace(0.0, TWO_PI, scan_points, endpoint=False)
    g = du(y)
    scale = max(np.max(np.abs(g)), 1.0)
    if np.max(np.abs(g)) < FLAT_TOL * scale:
        return ()
    roots = []
    for i in range(scan_points):
        a, b = y[i], y[i] + TWO_PI / scan_points
        ga, gb = g[i], g[(i + 1) % scan_points]
        if ga == 0.0:
            roots.append(a)
            continue
        if gb == 0.0 or np.sign(ga) == np.sign(gb):
            continue
        lo, hi, glo = a, b, ga
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            gm = float(du(np.array([mid]))[0])
            if gm == 0.0:
                lo = hi = mid
                break
            if np.sign(gm) == np.sign(glo):
                lo, glo = mid, gm
            else:
                hi = mid
        # pick the endpoint with smaller |U'|
        cand = np.array([lo, hi])
        r = cand[np.argmin(np.abs(du(cand)))]
        roots.append(float(np.mod(r, TWO_PI)))
    roots = np.sort(np.array(roots, dtype=float))
    curv = np.abs(d2u(roots)) if len(roots) else np.array([])
    return tuple((float(r), float(c)) for r, c in zip(roots, curv))


def _build(kind, name, u, du, d2u, sup_points=8192):
    crit = find_critical_points(du, d2u)
    for yj, cj in crit:
        if cj < DEGENERACY_TOL:
            raise DegenerateCritical(f"critical point y={yj:.6f} has |U''|={cj:.2e}")
    ys = np.linspace(0.0, TWO_PI, sup_points, endpoint=False)
    return ShearProfile(
        kind=kind,
        name=name,
        u=u,
        du=du,
        d2u=d2u,
        critical_points=crit,
        norm_U=float(np.max(np.abs(u(ys)))),
        norm_U1=float(np.max(np.abs(du(ys)))),
        norm_U2=float(np.max(np.abs(d2u(ys)))),
    )


def make_profile(kind: str, params: Mapping | None = None) -> ShearProfile:
    """Construct a profile.

    Parameters
    ----------
    kind : str
        One of ``sine``, ``cosine``, ``polytrig``, ``table``.
    params : mapping, optional
        ``sine``/``cosine`` accept ``amplitude`` and ``wavenumber``.
        ``polytrig`` accepts ``a0``, ``cos`` and ``sin`` (mode -> coefficient).
        ``table`` needs ``y`` and ``u`` arrays or a ``path`` to a ``y,U`` CSV.
    """
    params = dict(params or {})
    if kind == "sine":
        amp = float(params.get("amplitude", 1.0))
        m = int(params.get("wavenumber", 1))
        u, du, d2u = _trig_series(0.0, {}, {m: amp})
        name = params.get("name", "sine" if (amp, m) == (1.0, 1) else f"{amp}*sin({m}y)")
    elif kind == "cosine":
        amp = float(params.get("amplitude", 1.0))
        m = int(params.get("wavenumber", 1))
        u, du, d2u = _trig_series(0.0, {m: amp}, {})
        name = params.get("name", "cosine" if (amp, m) == (1.0, 1) else f"{amp}*cos({m}y)")
    elif kind == "polytrig":
        cos_c = {int(k): float(v) for k, v in dict(params.get("cos", {})).items()}
        sin_c = {int(k): float(v) for k, v in dict(params.get("sin", {})).items()}
        if any(m <= 0 for m in list(cos_c) + list(sin_c)):
            raise ProfileError("polytrig modes must be positive integers")
        a0 = float(params.get("a0", 0.0))
        vals = [a0, *cos_c.values(), *sin_c.values()]
        if not np.all(np.isfinite(vals)):
            raise ProfileError("non-finite polytrig coefficient")
        u, du, d2u = _trig_series(a0, cos_c, sin_c)
        name = params.get("name", "polytrig")
    elif kind == "table":
        if "path" in params:
            y_tab, u_tab = read_profile_table(params["path"])
        else:
            y_tab = np.asarray(params["y"], dtype=float)
            u_tab = np.asarray(params["u"], dtype=float)
        y_tab, u_tab = _check_table(y_tab, u_tab)
        u, du, d2u = _table_series(y_tab, u_tab)
        name = params.get("name", f"table:{params.get('path', 'inline')}")
    else:
        raise ProfileError(f"unknown profile kind {kind!r}; expected one of {KINDS}")
    return _build(kind, name, u, du, d2u)


def _check_table(y_tab, u_tab):
    if y_tab.shape != u_tab.shape or y_tab.ndim != 1 or len(y_tab) < 4:
        raise ProfileError("table needs matching 1-d y and U columns with >= 4 rows")
    if not (np.all(np.isfinite(y_tab)) and np.all(np.isfinite(u_tab))):
        raise ProfileError("non-finite entries in profile table")
    span = y_tab[-1] - y_tab[0]
    if np.isclose(span, TWO_PI, rtol=0, atol=1e-9):
        # closed table: endpoint repeats the first sample
        if abs(u_tab[-1] - u_tab[0]) > PERIODICITY_TOL:
            raise NonPeriodic(f"endpoint mismatch |U(0)-U(2pi)| = {abs(u_tab[-1] - u_tab[0]):.3e}")
        y_tab, u_tab = y_tab[:-1], u_tab[:-1]
    n = len(y_tab)
    expected = y_tab[0] + TWO_PI * np.arange(n) / n
    if not np.allclose(y_tab, expected, rtol=0, atol=1e-9):
        raise ProfileError("table must sample one period on a uniform grid")
    return y_tab, u_tab


def read_profile_table(path):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except ValueError:
                continue  # header line
    arr = np.array(rows, dtype=float)
    if arr.size == 0:
        raise ProfileError(f"no numeric rows in {path}")
    return arr[:, 0], arr[:, 1]


def write_profile_table(path, y, u):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y", "U"])
        for a, b in zip(y, u):
            w.writerow([repr(float(a)), repr(float(b))])


def profile_from_name(name: str) -> ShearProfile:
    """Resolve config names: ``sine``, ``cosine``, ``sin2``, ``zero``, ``table:<path>``."""
    if isinstance(name, ShearProfile):
        return name
    if name == "sine":
        return make_profile("sine")
    if name == "cosine":
        return make_profile("cosine")
    if name == "sin2":
        return make_profile("polytrig", {"sin": {2: 1.0}, "name": "sin2"})
    if name == "zero":
        return make_profile("polytrig", {"name": "zero"})
    if name.startswith("table:"):
        path = Path(name[len("table:"):])
        return make_profile("table", {"path": str(path), "name": name})
    raise ProfileError(f"unknown profile name {name!r}")
