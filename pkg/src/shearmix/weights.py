"""Shear-strength, ramp and exponential weights.

    B(y)     = max(|U'(y)|, nu^(1/4))
    phi(t,y) = min(1, nu^(1/3) B^(2/3) t)
    log W    = sigma * nu^(1/3) B^(2/3) * max(nu^(-1/3) B^(-2/3), min(t, nu^(-1/2)))

``log W`` is what gets stored; ``W`` is materialised only while it fits in a
double.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import GridTooCoarse
from .shear import ShearProfile

LOGW_MAX = 700.0


@dataclass
class WeightSet:
    nu: float
    sigma: float
    t: float
    y: np.ndarray
    B: np.ndarray
    Bprime: np.ndarray
    rate: np.ndarray  # nu^(1/3) B^(2/3), the local mixing rate
    layer: np.ndarray  # True where B = nu^(1/4)
    phi: np.ndarray
    logW: np.ndarray
    W: np.ndarray | None
    dtW_bound: np.ndarray
    dyW_bound: np.ndarray

    @property
    def t_cap(self) -> float:
        return self.nu ** -0.5


def _shear_strength(profile, nu, y):
    _, du, d2u = profile.u(y), profile.du(y), profile.d2u(y)
    floor = nu ** 0.25
    absdu = np.abs(du)
    layer = absdu < floor
    B = np.where(layer, floor, absdu)
    Bprime = np.where(layer, 0.0, np.sign(du) * d2u)
    return B, Bprime, layer


def eval_B(profile: ShearProfile, nu: float, y_samples):
    """``B`` and its a.e. derivative (0 on the kink set)."""
    y = np.asarray(y_samples, dtype=float)
    B, Bprime, _ = _shear_strength(profile, nu, y)
    return B, Bprime


def mixing_rate(B, nu, layer=None):
    """``nu^(1/3) B^(2/3)``; exactly ``nu^(1/2)`` inside the critical layer."""
    rate = nu ** (1.0 / 3.0) * np.asarray(B, dtype=float) ** (2.0 / 3.0)
    if layer is not None:
        rate = np.where(layer, np.sqrt(nu), rate)
    return rate


def _log_weight(rate, layer, nu, sigma, t):
    x = rate * min(t, nu ** -0.5)
    # inside the layer x <= 1 holds exactly; keep rounding from breaking it
    x = np.where(layer, np.minimum(x, 1.0), x)
    return sigma * np.maximum(1.0, x)


def eval_phi(profile: ShearProfile, nu: float, t: float, y_samples):
    y = np.asarray(y_samples, dtype=float)
    B, _, layer = _shear_strength(profile, nu, y)
    return np.minimum(1.0, mixing_rate(B, nu, layer) * t)


def eval_logW(profile: ShearProfile, nu: float, sigma: float, t: float, y_samples):
    y = np.asarray(y_samples, dtype=float)
    B, _, layer = _shear_strength(profile, nu, y)
    return _log_weight(mixing_rate(B, nu, layer), layer, nu, sigma, t)


def eval_W(profile: ShearProfile, nu: float, sigma: float, t: float, y_samples):
    logW = eval_logW(profile, nu, sigma, t, y_samples)
    if np.max(logW) >= LOGW_MAX:
        raise OverflowError(f"log W reaches {np.max(logW):.1f}; use eval_logW")
    return np.exp(logW)


def weight_set(profile: ShearProfile, nu: float, sigma: float, t: float, y_samples) -> WeightSet:
    """All weights at one time, plus the pointwise bounds on dW/dt and dW/dy."""
    if not 0.0 < nu <= 1.0:
        raise ValueError(f"nu must lie in (0, 1], got {nu}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    y = np.asarray(y_samples, dtype=float)
    B, Bprime, layer = _shear_strength(profile, nu, y)
    rate = mixing_rate(B, nu, layer)
    phi = np.minimum(1.0, rate * t)
    logW = _log_weight(rate, layer, nu, sigma, t)
    W = np.exp(logW) if np.max(logW) < LOGW_MAX else None
    tcap = nu ** -0.5
    ramp_done = rate * t >= 1.0
    Wv = np.exp(np.minimum(logW, LOGW_MAX))
    dtW_bound = sigma * rate * (ramp_done & (t <= tcap)) * Wv
    dyW_bound = (2.0 * sigma / 3.0) * ramp_done * nu ** (1.0 / 3.0) * B ** (-1.0 / 3.0) \
        * min(t, tcap) * profile.norm_U2 * Wv
    return WeightSet(nu=nu, sigma=sigma, t=t, y=y, B=B, Bprime=Bprime, rate=rate,
                     layer=layer, phi=phi, logW=logW, W=W,
                     dtW_bound=dtW_bound, dyW_bound=dyW_bound)


def weight_time_rates(ws: WeightSet):
    """Right-sided time derivatives ``(d phi/dt, d log W/dt)`` at ``ws.t``."""
    t, nu = ws.t, ws.nu
    dphi = ws.rate * (ws.rate * t < 1.0)
    dlogW = ws.sigma * ws.rate * ((ws.rate * t >= 1.0) & (t < nu ** -0.5))
    return dphi, dlogW


def _regime(profile, nu, t, y):
    """Integer label of the smooth branch of W containing (t, y)."""
    B, _, layer = _shear_strength(profile, nu, y)
    rate = mixing_rate(B, nu, layer)
    return (layer.astype(int) + 2 * (rate * t >= 1.0) + 4 * (t >= nu ** -0.5))


def check_W_lemma(profile: ShearProfile, nu: float, sigma: float, t_grid, y_grid,
                  h: float | None = None, tol: float = 1e-6) -> dict:
    """Compare finite-difference derivatives of W with the a.e. bounds.

    Violations are measured relative to W, i.e. ``(|dW|_FD - bound) / W``.
    Points whose 2-cell neighbourhood (in t or y) crosses a kink of W are
    excluded.

    Returns
    -------
    dict
        ``{max_violation_t, max_violation_y, tol, pass, n_checked, n_excluded}``
    """
    t_grid = np.asarray(t_grid, dtype=float)
    y_grid = np.asarray(y_grid, dtype=float)
    if h is None:
        h = min(1e-6, 1e-3 * nu ** 0.5)
    if h > 1e-3 * nu ** 0.5:
        raise GridTooCoarse(f"FD step {h:g} exceeds 1e-3*nu^(1/2) = {1e-3 * nu ** 0.5:g}")
    dt_cell = t_grid[1] - t_grid[0] if len(t_grid) > 1 else h
    dy_cell = y_grid[1] - y_grid[0] if len(y_grid) > 1 else h
    worst_t = -np.inf
    worst_y = -np.inf
    n_checked = 0
    n_excluded = 0
    for t in t_grid:
        label = _regime(profile, nu, t, y_grid)
        smooth = np.ones_like(y_grid, dtype=bool)
        for tt, yy in ((t - 2 * dt_cell, y_grid), (t + 2 * dt_cell, y_grid),
                       (t, y_grid - 2 * dy_cell), (t, y_grid + 2 * dy_cell),
                       (t - h, y_grid), (t + h, y_grid),
                       (t, y_grid - h), (t, y_grid + h)):
            smooth &= _regime(profile, nu, max(tt, 0.0), yy) == label
        if t - h < 0:
            smooth[:] = False
        n_excluded += int(np.sum(~smooth))
        if not np.any(smooth):
            continue
        ys = y_grid[smooth]
        ws = weight_set(profile, nu, sigma, t, ys)
        W = np.exp(ws.logW)
        Wtp = np.exp(eval_logW(profile, nu, sigma, t + h, ys))
        Wtm = np.exp(eval_logW(profile, nu, sigma, t - h, ys))
        Wyp = np.exp(eval_logW(profile, nu, sigma, t, ys + h))
        Wym = np.exp(eval_logW(profile, nu, sigma, t, ys - h))
        dtW = (Wtp - Wtm) / (2 * h)
        dyW = (Wyp - Wym) / (2 * h)
        worst_t = max(worst_t, float(np.max((np.abs(dtW) - ws.dtW_bound) / W)))
        worst_y = max(worst_y, float(np.max((np.abs(dyW) - ws.dyW_bound) / W)))
        n_checked += len(ys)
    ok = bool(n_checked > 0 and worst_t < tol and worst_y < tol)
    return {"max_violation_t": worst_t, "max_violation_y": worst_y, "tol": tol,
            "pass": ok, "n_checked": n_checked, "n_excluded": n_excluded}


def lemma_report_json(report: dict) -> str:
    keys = ("max_violation_t", "max_violation_y", "tol", "pass")
    return json.dumps({k: report[k] for k in keys}, sort_keys=True)
