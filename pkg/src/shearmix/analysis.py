"""Decay-rate extraction, nu-sweeps and the spectral-inequality constant."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .errors import InsufficientPoints, Unbounded, Underflow
from .functional import HypoParams, eval_functional, fit_log_slope
from .shear import ShearProfile, profile_from_name
from .solver import (Grid, SolveConfig, Trajectory, make_initial, norm2, required_n,
                     resolution_n, solve, spectral_derivatives)
from .weights import eval_B, mixing_rate, weight_set

UNDERFLOW = 1e-280
DATA_KINDS = ("critical_bump", "monotone_bump", "random")


@dataclass
class DecayFit:
    quantity: str
    window: tuple
    rate: float
    r_squared: float
    nu: float

    @property
    def delta(self) -> float:
        """Rate in units of nu^(1/2)."""
        return self.rate / np.sqrt(self.nu)


def _r_squared(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0.0:
        return 1.0
    return float(min(1.0, max(0.0, 1.0 - np.sum(resid ** 2) / ss_tot)))


def quantity_series(traj: Trajectory, quantity: str, params: HypoParams | None = None):
    """``norm_f`` (||f||), ``norm_fW`` (||fW||) or ``phi`` along the trajectory."""
    if quantity == "norm_f":
        return np.asarray(traj.norms, dtype=float)
    params = params or HypoParams(1.0)
    if quantity == "norm_fW":
        out = np.empty(len(traj))
        for i in range(len(traj)):
            ws = weight_set(traj.profile, traj.nu, params.sigma, float(traj.times[i]), traj.grid.y)
            out[i] = np.sqrt(norm2(traj.grid.dy, traj.values[i] * np.exp(ws.logW)))
        return out
    if quantity == "phi":
        return np.array([eval_functional(fl, traj.profile, traj.nu, params).phi_total
                         for fl in traj.fields()])
    raise ValueError(f"unknown quantity {quantity!r}")


def fit_global_rate(traj: Trajectory, quantity: str = "norm_f", window=None,
                    params: HypoParams | None = None, values=None) -> DecayFit:
    """Least-squares decay rate of ``quantity`` over ``window``.

    The default window is [nu^(-1/2), 3 nu^(-1/2)] clipped to the trajectory.
    """
    t = np.asarray(traj.times, dtype=float)
    if window is None:
        tc = traj.nu ** -0.5
        window = (tc, min(3 * tc, t[-1]))
    lo, hi = window
    if lo < t[0] - 1e-12 or hi > t[-1] + 1e-9 or hi <= lo:
        raise ValueError(f"window {window} outside trajectory span [{t[0]}, {t[-1]}]")
    q = quantity_series(traj, quantity, params) if values is None else np.asarray(values)
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-9)
    if sel.sum() < 2:
        raise InsufficientPoints("fewer than two samples in window")
    if np.any(q[sel] < UNDERFLOW):
        raise Underflow(f"{quantity} drops below {UNDERFLOW:g} inside {window}; shrink the window")
    lq = np.log(q[sel])
    slope = fit_log_slope(t[sel], q[sel])
    return DecayFit(quantity=quantity, window=(float(lo), float(hi)), rate=-slope,
                    r_squared=_r_squared(t[sel], lq), nu=traj.nu)


def loglog_slope(nus, rates) -> float:
    """Slope of log(rate) against log(nu)."""
    nus = np.asarray(nus, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if len(nus) < 2:
        raise InsufficientPoints("need at least two points")
    return float(np.polyfit(np.log(nus), np.log(rates), 1)[0])


def rate_window(data_kind: str, nu: float, profile: ShearProfile):
    """Fit window per data kind.

    Shear-free profiles use heat units [nu^-1 / 2, nu^-1]; critical and random
    data use [nu^-1/2, 3 nu^-1/2]; monotone data use the early window
    [nu^-1/3, 2 nu^-1/3], which ends before nu^-1/2 for every nu <= 1e-3.
    """
    if profile.norm_U1 == 0.0:
        return 0.5 / nu, 1.0 / nu
    if data_kind == "monotone_bump":
        return nu ** (-1 / 3), 2 * nu ** (-1 / 3)
    return nu ** -0.5, 3 * nu ** -0.5


def initial_spec(data_kind: str, nu: float, seed: int = 0):
    if data_kind == "critical_bump":
        return "critical_bump", {"nu": nu}
    if data_kind == "monotone_bump":
        return "monotone_bump", {"width": 0.5}
    if data_kind == "random":
        return "random_band", {"seed": seed, "m_max": 8}
    raise ValueError(f"unknown data kind {data_kind!r}")


@dataclass
class SweepPoint:
    nu: float
    data_kind: str
    fit: DecayFit | None
    n: int
    status: str = "ok"


def sweep_point(nu: float, data_kind: str, profile_name="sine", seed: int = 0,
                dt: float | None = None) -> SweepPoint:
    """Solve one (nu, data) pair and fit its decay rate of ||f||."""
    profile = profile_from_name(profile_name)
    lo, hi = rate_window(data_kind, nu, profile)
    if profile.norm_U1 == 0.0 and dt is None:
        dt = hi / 400  # both sub-flows are exact without shear
    kind, params = initial_spec(data_kind, nu, seed)
    if kind == "critical_bump" and profile.n_critical == 0:
        kind, params = "gaussian_bump", {"center": 0.0, "width": nu ** 0.25}
    n = required_n(profile, nu, kind, params)
    cfg = SolveConfig(nu=nu, profile=profile, dt=dt, t_end=hi, n=n, seed=seed).resolve()
    cfg = replace(cfg, stride=max(1, int(round(hi / 400 / cfg.dt))))
    f0 = make_initial(kind, params, Grid(cfg.n), profile)
    traj = solve(cfg, f0, keep_fields=False)
    fit = fit_global_rate(traj, "norm_f", (lo, min(hi, traj.times[-1])))
    return SweepPoint(nu=nu, data_kind=data_kind, fit=fit, n=cfg.n)


def _sweep_point_safe(args):
    try:
        return sweep_point(*args)
    except Exception as exc:  # partial-failure policy: report and continue
        return SweepPoint(nu=args[0], data_kind=args[1], fit=None, n=0,
                          status=f"{type(exc).__name__}: {exc}")


@dataclass
class ScalingResult:
    data_kind: str
    profile: str
    slope: float
    points: list = field(default_factory=list)

    @property
    def nus(self):
        return np.array([p.nu for p in self.points])

    @property
    def rates(self):
        return np.array([p.fit.rate if p.fit else np.nan for p in self.points])


def scaling_exponent(nu_list, data_kind: str, profile="sine", seed: int = 0,
                     workers: int = 1) -> ScalingResult:
    """Log-log slope of the fitted decay rate against nu."""
    nu_list = sorted(float(v) for v in nu_list)
    if len(nu_list) < 4:
        raise InsufficientPoints(f"need >= 4 nu values, got {len(nu_list)}")
    name = profile if isinstance(profile, str) else profile.name
    jobs = [(nu, data_kind, profile, seed) for nu in nu_list]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            points = list(ex.map(_sweep_point_safe, jobs))
    else:
        points = [_sweep_point_safe(j) for j in jobs]
    good = [p for p in points if p.fit is not None]
    slope = loglog_slope([p.nu for p in good], [p.fit.rate for p in good]) if len(good) >= 2 else np.nan
    return ScalingResult(data_kind=data_kind, profile=name, slope=slope, points=points)


# --- streamline-wise rates ----------------------------------------------------------------

@dataclass
class StreamlineRateMap:
    y: np.ndarray
    rate: np.ndarray
    predicted: np.ndarray
    ratio: np.ndarray
    skipped: np.ndarray
    rate_l2: np.ndarray
    windows: np.ndarray  # (n, 2)

    def fraction_within(self, lo=0.25, hi=4.0, mask=None) -> float:
        sel = ~self.skipped if mask is None else (mask & ~self.skipped)
        r = self.ratio[sel]
        return float(np.mean((r >= lo) & (r <= hi))) if r.size else np.nan


def _envelope_fit(t, logf):
    """Decay rate of the local-maximum envelope (all points if no dips)."""
    inner = (logf[1:-1] > logf[:-2]) & (logf[1:-1] >= logf[2:])
    idx = np.flatnonzero(inner) + 1
    if len(idx) >= 3:
        t, logf = t[idx], logf[idx]
    A = np.vstack([t, np.ones_like(t)]).T
    (slope, _), *_ = np.linalg.lstsq(A, logf, rcond=None)
    return -float(slope)


def _circular_mean(a, width):
    k = width // 2
    return np.mean([np.roll(a, s) for s in range(-k, k + 1)], axis=0)


def streamline_rates(traj: Trajectory, profile: ShearProfile | None = None, nu: float | None = None,
                     window=(1.0, 2.0), smooth: int = 5) -> StreamlineRateMap:
    """Per-streamline decay rates compared with nu^(1/3) B^(2/3).

    For each y the rate of the envelope of log|f(t, y)| is fitted on
    ``[window[0] tau(y), window[1] tau(y)]`` with tau = nu^(-1/3) B^(-2/3),
    the time at which the weight's ramp ends, then averaged over ``smooth``
    neighbouring cells.  ``rate_l2`` is the same fit applied to the local L2
    norm over those cells.
    """
    profile = profile or traj.profile
    nu = traj.nu if nu is None else nu
    if traj.values is None:
        raise ValueError("streamline rates need stored fields")
    y = traj.grid.y
    t = np.asarray(traj.times)
    B, _ = eval_B(profile, nu, y)
    layer = np.abs(profile.du(y)) < nu ** 0.25
    pred = mixing_rate(B, nu, layer)
    tau = 1.0 / pred
    amp = np.abs(traj.values)
    local = np.sqrt(_circular_mean(amp.T ** 2, smooth)).T
    raw = np.full(len(y), np.nan)
    raw_l2 = np.full(len(y), np.nan)
    skipped = np.zeros(len(y), dtype=bool)
    windows = np.column_stack([window[0] * tau, window[1] * tau])
    for j in range(len(y)):
        sel = (t >= windows[j, 0]) & (t <= windows[j, 1])
        if sel.sum() < 3:
            skipped[j] = True
            continue
        a = amp[sel, j]
        if np.any(a < UNDERFLOW):
            skipped[j] = True
            continue
        raw[j] = _envelope_fit(t[sel], np.log(a))
        raw_l2[j] = _envelope_fit(t[sel], np.log(local[sel, j]))
    filled = np.where(skipped, 0.0, raw)
    count = _circular_mean((~skipped).astype(float), smooth)
    with np.errstate(invalid="ignore", divide="ignore"):
        rate = np.where(count > 0, _circular_mean(filled, smooth) / count, np.nan)
    rate = np.where(skipped, np.nan, rate)
    return StreamlineRateMap(y=y, rate=rate, predicted=pred, ratio=rate / pred,
                             skipped=skipped, rate_l2=raw_l2, windows=windows)


# --- spectral-inequality constant ----------------------------------------------------------

@dataclass
class SpectralEstimate:
    nu: float
    n: int
    t: float
    c_min: float
    sigma: float
    method: dict = field(default_factory=dict)


def derivative_matrix(n: int) -> np.ndarray:
    """Dense spectral first-derivative matrix (Nyquist mode dropped)."""
    m = np.fft.fftfreq(n, d=1.0 / n)
    m[n // 2] = 0.0
    F = np.fft.fft(np.eye(n), axis=0)
    return np.fft.ifft((1j * m)[:, None] * F, axis=0)


def spectral_forms(profile: ShearProfile, nu: float, t: float, n: int, sigma: float = 1.0):
    """Quadratic forms ``(A, D, M)`` of the spectral inequality on an n-point grid.

    A, M are returned as diagonals; D is dense Hermitian.
    """
    grid = Grid(n)
    y = grid.y
    ws = weight_set(profile, nu, sigma, t, y)
    W2 = np.exp(2 * ws.logW)
    dU = profile.du(y)
    Dm = derivative_matrix(n)
    D = nu * grid.dy * (Dm.conj().T * W2) @ Dm
    D = 0.5 * (D + D.conj().T)
    A = nu ** (1 / 3) * grid.dy * ws.B ** (2 / 3) * ws.phi ** 2 * W2
    M = nu ** (1 / 3) * grid.dy * dU ** 2 * ws.B ** (-4 / 3) * ws.phi ** 2 * W2
    return A, D, M


def _min_eig(D, diag):
    K = D + np.diag(diag)
    return float(sla.eigh(K, eigvals_only=True, subset_by_index=[0, 0])[0])


def estimate_spectral_constant(profile: ShearProfile, nu: float, t: float, sigma: float = 1.0,
                               n: int | None = None, rtol: float = 1e-3,
                               c_max: float = 2.0 ** 20) -> SpectralEstimate:
    """Smallest c with c M + D - A positive semidefinite, by bisection.

    Each bisection step checks the smallest eigenvalue of the Hermitian
    matrix ``D + diag(c M - A)``.
    """
    if n is None:
        n = resolution_n(profile, nu)
    A, D, M = spectral_forms(profile, nu, t, n, sigma)
    scale = max(np.max(np.abs(A)), np.max(np.abs(M)), np.max(np.abs(D)), 1e-300)
    floor = -1e-12 * scale
    evals = 0

    def feasible(c):
        nonlocal evals
        evals += 1
        return _min_eig(D, c * M - A) >= floor

    if feasible(0.0):
        c = 0.0
    else:
        if not feasible(c_max):
            raise Unbounded(f"c = {c_max:g} still fails at nu={nu}, t={t}")
        lo, hi = 0.0, 1.0
        while not feasible(hi):
            lo, hi = hi, 2 * hi
        while hi - lo > rtol * hi:
            mid = 0.5 * (lo + hi)
            if feasible(mid):
                hi = mid
            else:
                lo = mid
        c = hi
    return SpectralEstimate(nu=nu, n=n, t=t, c_min=c, sigma=sigma,
                            method={"bisection_rtol": rtol, "eig_checks": evals,
                                    "c_max": c_max, "eigensolver": "LAPACK syevr subset"})


def spectral_sides(values, profile: ShearProfile, nu: float, t: float, sigma: float = 1.0):
    """The three terms of the spectral inequality for one field.

    Returns ``(lhs, gradient_term, shear_term)`` with lhs <= gradient + c * shear.
    """
    n = len(values)
    grid = Grid(n)
    ws = weight_set(profile, nu, sigma, t, grid.y)
    W = np.exp(ws.logW)
    f, fy = spectral_derivatives(values, 1)
    dU = profile.du(grid.y)
    lhs = nu ** (1 / 3) * norm2(grid.dy, f * ws.B ** (1 / 3) * ws.phi * W)
    grad = nu * norm2(grid.dy, fy * W)
    shear = nu ** (1 / 3) * norm2(grid.dy, dU * ws.B ** (-2 / 3) * f * ws.phi * W)
    return lhs, grad, shear
