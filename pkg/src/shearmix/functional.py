r"""Weighted hypocoercivity functional and its per-term Gronwall audit.

For beta in (0, 1] the functional is

.. math::

    \Phi[f] = \|fW\|^2 + \alpha\nu^{2/3}\|\sqrt\varphi B^{-1/3} f_y W\|^2
        + \beta\nu^{1/3}\,\mathrm{Re}\langle \varphi^2 B^{-4/3} iU' f, f_y W^2\rangle
        + \gamma\|\varphi^{3/2} U' f B^{-1} W\|^2

with alpha = beta^(1/2)/4 and gamma = 4 beta^(3/2).  The four pieces are
reported separately as ``c0, c_alpha, c_beta, c_gamma``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .errors import (EquivalenceViolation, NegativePhi, NoFeasibleBeta, NonFinite,
                     StrideTooCoarse)
from .shear import ShearProfile
from .solver import (Grid, ScalarField, SolveConfig, Trajectory, make_initial, required_n,
                     solve, spectral_derivatives)
from .weights import weight_set, weight_time_rates

LEDGER_COLUMNS = ("t", "phi", "c0", "c_alpha", "c_beta", "c_gamma",
                  "lhs_L2", "rhs_L2", "lhs_a", "rhs_a", "lhs_b", "rhs_b",
                  "lhs_g", "rhs_g", "pass")
TERMS = ("L2", "a", "b", "g")


@dataclass(frozen=True)
class HypoParams:
    beta: float
    spectral_constant: float | None = None
    sigma_override: float | None = None

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if self.sigma_override is not None and not 0.0 < self.sigma_override <= 1.0:
            raise ValueError("sigma must lie in (0, 1]")

    @property
    def alpha(self) -> float:
        return 0.25 * self.beta ** 0.5

    @property
    def gamma(self) -> float:
        return 4.0 * self.beta ** 1.5

    @property
    def sigma(self) -> float:
        if self.sigma_override is not None:
            return self.sigma_override
        return self.beta ** 1.5


@dataclass
class FunctionalLedger:
    t: float
    phi_total: float
    c0: float
    c_alpha: float
    c_beta: float
    c_gamma: float
    lemma_lhs: dict = field(default_factory=dict)
    lemma_rhs: dict = field(default_factory=dict)
    passed: bool | None = None

    @property
    def symmetric_part(self) -> float:
        return self.c0 + self.c_alpha + self.c_gamma

    def row(self) -> list:
        vals = [self.t, self.phi_total, self.c0, self.c_alpha, self.c_beta, self.c_gamma]
        for k in TERMS:
            vals += [self.lemma_lhs.get(k, np.nan), self.lemma_rhs.get(k, np.nan)]
        vals.append("" if self.passed is None else str(bool(self.passed)).lower())
        return vals


class _State:
    """Weights and spectral derivatives of one field, shared by all evaluations."""

    def __init__(self, values, t, dy, profile, nu, sigma, need_third=False):
        self.t = t
        self.dy = dy
        self.nu = nu
        y = np.arange(len(values)) * dy
        self.ws = weight_set(profile, nu, sigma, t, y)
        if self.ws.W is None:
            raise NonFinite(f"weight overflow at t={t}")
        U, dU, _ = profile.u(y), profile.du(y), profile.d2u(y)
        self.U = U
        self.dU = dU
        order = 3 if need_third else 2
        ders = spectral_derivatives(values, order)
        self.f, self.fy, self.fyy = ders[0], ders[1], ders[2]
        self.fyyy = ders[3] if need_third else None

    def integral(self, g):
        return float(np.sum(g) * self.dy)


def _components(st: _State, params: HypoParams):
    ws = st.ws
    W2 = ws.W ** 2
    phi, B = ws.phi, ws.B
    c0 = st.integral(np.abs(st.f) ** 2 * W2)
    c_alpha = params.alpha * st.nu ** (2 / 3) * st.integral(phi * B ** (-2 / 3) * np.abs(st.fy) ** 2 * W2)
    c_beta = params.beta * st.nu ** (1 / 3) * st.integral(
        np.real(phi ** 2 * B ** (-4 / 3) * 1j * st.dU * st.f * np.conj(st.fy) * W2))
    c_gamma = params.gamma * st.integral(phi ** 3 * st.dU ** 2 * np.abs(st.f) ** 2 * B ** -2.0 * W2)
    return c0, c_alpha, c_beta, c_gamma


def eval_functional(field: ScalarField, profile: ShearProfile, nu: float,
                    params: HypoParams) -> FunctionalLedger:
    """Evaluate the four components of the functional at ``field.t``."""
    st = _State(field.values, field.t, field.grid.dy, profile, nu, params.sigma)
    return _ledger_from_state(st, params)


def _ledger_from_state(st, params):
    c0, ca, cb, cg = _components(st, params)
    comps = np.array([c0, ca, cb, cg])
    if not np.all(np.isfinite(comps)):
        raise NonFinite(f"non-finite functional component at t={st.t}")
    return FunctionalLedger(t=st.t, phi_total=float(comps.sum()), c0=c0, c_alpha=ca,
                            c_beta=cb, c_gamma=cg)


def check_equivalence(field: ScalarField, profile: ShearProfile, nu: float,
                      params: HypoParams, tol: float = 1e-10) -> float:
    """Ratio Phi / (c0 + c_alpha + c_gamma); always inside [1/2, 3/2]."""
    led = eval_functional(field, profile, nu, params)
    return equivalence_ratio(led, tol)


def equivalence_ratio(led: FunctionalLedger, tol: float = 1e-10) -> float:
    S = led.symmetric_part
    if S == 0.0:
        return 1.0
    ratio = led.phi_total / S
    if not (0.5 - tol <= ratio <= 1.5 + tol):
        raise EquivalenceViolation(f"Phi/S = {ratio!r} at t={led.t}")
    return ratio


# --- lemma right-hand sides ------------------------------------------------------

def lemma_norms(st: _State) -> dict:
    """Weighted norms appearing in the per-term bounds."""
    ws = st.ws
    W, B, phi = ws.W, ws.B, ws.phi
    I = st.integral
    return {
        "dyW": I(np.abs(st.fy * W) ** 2),
        "f_phi_B13": I(np.abs(st.f * phi * B ** (1 / 3) * W) ** 2),
        "dyy_phi": I(np.abs(st.fyy * np.sqrt(phi) * B ** (-1 / 3) * W) ** 2),
        "Uf_phi_B23": I(np.abs(st.dU * st.f * phi * B ** (-2 / 3) * W) ** 2),
        "Udy_phi32": I(np.abs(st.dU * st.fy * phi ** 1.5 / B * W) ** 2),
    }


def lemma_rhs(st: _State, params: HypoParams, norm_U2: float) -> dict:
    """Right-hand sides of the four per-term estimates, as stated."""
    nu, t = st.nu, st.t
    b, s = params.beta, params.sigma
    u2 = norm_U2 ** 2
    cap = min(nu * t * t, 1.0)
    N = lemma_norms(st)
    rb = np.sqrt(b)
    rhs_L2 = (-1.5 * nu * N["dyW"]
              + (2 * s + 5 * s * s * u2 * cap) * nu ** (1 / 3) * N["f_phi_B13"])
    rhs_a = ((0.5 + 0.75 * rb + 2 * rb * u2 + 4 * s * s * rb * u2 * cap) * nu * N["dyW"]
             - (5 / 12) * rb * nu ** (5 / 3) * N["dyy_phi"]
             + 0.125 * b * nu ** (1 / 3) * N["Uf_phi_B23"])
    rhs_b = (-b * (0.5 - 32 * rb - 64 * rb * u2) * nu ** (1 / 3) * N["Uf_phi_B23"]
             + 8 * b * nu * N["dyW"]
             + (5 / 12) * rb * nu ** (5 / 3) * N["dyy_phi"]
             + 5 * b ** 1.5 * nu * N["Udy_phi32"]
             + 12 * b ** 1.5 * nu ** (1 / 3) * u2 * N["f_phi_B13"])
    rhs_g = (-8 * b ** 1.5 * nu * N["Udy_phi32"]
             + (48 + 8 * u2) * b * nu * N["dyW"]
             + (28 + (8 + 16 / 9 * s * s * cap) * u2) * b ** 1.5 * nu ** (1 / 3) * N["Uf_phi_B23"])
    return {"L2": rhs_L2, "a": rhs_a, "b": rhs_b, "g": rhs_g}


def component_rates(field: ScalarField, profile: ShearProfile, nu: float,
                    params: HypoParams) -> dict:
    """Time derivatives of the four components from the equation itself.

    Uses f_t = nu f_yy - i U f with the a.e. (right-sided) time derivatives
    of phi and W.  Independent of any finite differencing in time.
    """
    st = _State(field.values, field.t, field.grid.dy, profile, nu, params.sigma,
                need_third=True)
    ws = st.ws
    W2 = ws.W ** 2
    phi, B = ws.phi, ws.B
    dphi, dlogW = weight_time_rates(ws)
    dW2 = 2.0 * dlogW * W2
    f, fy = st.f, st.fy
    ft = nu * st.fyy - 1j * st.U * f
    fty = nu * st.fyyy - 1j * (st.dU * f + st.U * fy)
    I = st.integral
    a, b, g = params.alpha, params.beta, params.gamma
    dU = st.dU
    T_L2 = I(2 * np.real(np.conj(f) * ft) * W2 + np.abs(f) ** 2 * dW2)
    w_a = B ** (-2 / 3)
    T_a = a * nu ** (2 / 3) * I(dphi * w_a * np.abs(fy) ** 2 * W2
                                 + phi * w_a * np.abs(fy) ** 2 * dW2
                                 + 2 * phi * w_a * W2 * np.real(fty * np.conj(fy)))
    w_b = B ** (-4 / 3) * 1j * dU
    T_b = b * nu ** (1 / 3) * I(np.real(
        2 * phi * dphi * w_b * f * np.conj(fy) * W2
        + phi ** 2 * w_b * f * np.conj(fy) * dW2
        + phi ** 2 * w_b * W2 * (ft * np.conj(fy) + f * np.conj(fty))))
    w_g = dU ** 2 * B ** -2.0
    T_g = g * I(3 * phi ** 2 * dphi * w_g * np.abs(f) ** 2 * W2
                + phi ** 3 * w_g * np.abs(f) ** 2 * dW2
                + 2 * phi ** 3 * w_g * W2 * np.real(np.conj(f) * ft))
    return {"L2": T_L2, "a": T_a, "b": T_b, "g": T_g}


# --- audit -------------------------------------------------------------------------------

@dataclass
class AuditResult:
    ledgers: list
    delta_fit: float
    delta_cert: float
    term_pass: bool
    decay_pass: bool
    audited_times: np.ndarray
    nu: float
    beta: float

    @property
    def passed(self) -> bool:
        return self.term_pass and self.decay_pass

    @property
    def times(self):
        return np.array([l.t for l in self.ledgers])

    @property
    def phi(self):
        return np.array([l.phi_total for l in self.ledgers])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LEDGER_COLUMNS)
        for led in self.ledgers:
            w.writerow([_fmt(v) for v in led.row()])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, str):
        return v
    return repr(float(v))


def functional_series(traj: Trajectory, params: HypoParams, with_rhs=True):
    """Ledgers (components and optionally lemma right-hand sides) along a trajectory."""
    out = []
    for i in range(len(traj)):
        st = _State(traj.values[i], float(traj.times[i]), traj.grid.dy, traj.profile,
                    traj.nu, params.sigma)
        led = _ledger_from_state(st, params)
        if with_rhs:
            led.lemma_rhs = lemma_rhs(st, params, traj.profile.norm_U2)
        out.append(led)
    return out


def fit_log_slope(t, q):
    """Least-squares slope of log q against t."""
    t = np.asarray(t, dtype=float)
    lq = np.log(np.asarray(q, dtype=float))
    A = np.vstack([t, np.ones_like(t)]).T
    (slope, _), *_ = np.linalg.lstsq(A, lq, rcond=None)
    return float(slope)


def audit_gronwall(traj: Trajectory, profile: ShearProfile | None, nu: float | None,
                   params: HypoParams, tol_rel: float = 5e-2, tol_abs: float | None = None,
                   ledgers: list | None = None) -> AuditResult:
    """Audit the per-term estimates and the late-time decay of the functional.

    (a) every centred difference d/dt of c0, c_alpha, c_beta, c_gamma is at
        most the corresponding right-hand side, up to ``tol_rel*|rhs| + tol_abs``;
    (b) for audited t >= nu^(-1/2):  dPhi/dt <= -delta nu^(1/2) Phi with
        delta > 0.

    ``delta_fit`` is the least-squares decay rate of Phi on
    [nu^(-1/2), 3 nu^(-1/2)] in units of nu^(1/2); ``delta_cert`` is the
    largest delta for which (b) holds at every audited time.
    """
    profile = profile or traj.profile
    nu = traj.nu if nu is None else nu
    if traj.values is None:
        raise ValueError("audit needs a trajectory with stored fields")
    if traj.stride > 10:
        raise StrideTooCoarse(f"output stride {traj.stride} steps exceeds 10")
    if tol_abs is None:
        tol_abs = 1e-12 * float(traj.norms[0]) ** 2
    if ledgers is None:
        ledgers = functional_series(traj, params)
    t = np.array([l.t for l in ledgers])
    phi = np.array([l.phi_total for l in ledgers])
    if np.any(phi <= 0):
        raise NegativePhi(f"Phi <= 0 at t={t[np.argmin(phi)]}")
    comps = {
        "L2": np.array([l.c0 for l in ledgers]),
        "a": np.array([l.c_alpha for l in ledgers]),
        "b": np.array([l.c_beta for l in ledgers]),
        "g": np.array([l.c_gamma for l in ledgers]),
    }
    tcap = nu ** -0.5
    term_ok = True
    audited = []
    ratios = []
    for i in range(1, len(t) - 1):
        if t[i - 1] < tcap <= t[i + 1]:
            continue  # window straddles the Lipschitz time nu^(-1/2)
        led = ledgers[i]
        ok = True
        for k in TERMS:
            lhs = (comps[k][i + 1] - comps[k][i - 1]) / (t[i + 1] - t[i - 1])
            led.lemma_lhs[k] = float(lhs)
            rhs = led.lemma_rhs[k]
            if lhs > rhs + tol_rel * abs(rhs) + tol_abs:
                ok = False
        led.passed = ok
        term_ok &= ok
        audited.append(t[i])
        if t[i] >= tcap:
            dphi = (phi[i + 1] - phi[i - 1]) / (t[i + 1] - t[i - 1])
            ratios.append(-dphi / (np.sqrt(nu) * phi[i]))
    win = (t >= tcap) & (t <= 3 * tcap)
    delta_fit = -fit_log_slope(t[win], phi[win]) / np.sqrt(nu) if win.sum() >= 2 else np.nan
    delta_cert = float(np.min(ratios)) if ratios else np.nan
    decay_ok = bool(ratios) and delta_cert > 0
    return AuditResult(ledgers=ledgers, delta_fit=float(delta_fit), delta_cert=delta_cert,
                       term_pass=bool(term_ok), decay_pass=bool(decay_ok),
                       audited_times=np.array(audited), nu=nu, beta=params.beta)


# --- beta calibration -------------------------------------------------------------------

def closed_form_beta(norm_U2: float, spectral_constant: float) -> float:
    """Largest beta making both brackets of the combined estimate admissible.

    Needs 1 - 3/4 b^(1/2) - 14 b^(1/2) u2 - 56 b - 20 b^(3/2) - 17 b^(3/2) u2 >= 1/2
    and 3/8 - 64 b^(1/2) - 74 b^(1/2) u2 - 20 C b^(1/2) - 17 C b^(1/2) u2 >= 0,
    with u2 = ||U''||^2 and C the spectral constant.
    """
    u2 = norm_U2 ** 2
    C = spectral_constant

    def g1(r):
        return 1 - 0.75 * r - 14 * r * u2 - 56 * r * r - 20 * r ** 3 - 17 * r ** 3 * u2 - 0.5

    def g2(r):
        return 3 / 8 - 64 * r - 74 * r * u2 - 20 * C * r - 17 * C * r * u2

    def g(r):
        return min(g1(r), g2(r))

    if g(1.0) >= 0:
        return 1.0
    r = brentq(g, 0.0, 1.0, xtol=1e-15)
    return r * r


@dataclass
class BetaCalibration:
    beta_star: float
    closed_form: float
    verdicts: dict  # beta -> bool


def calibrate_beta(profile: ShearProfile, nu_list, trial_fields, spectral_constant: float = 1.0,
                   sigma: float | None = None, t_end_factor: float = 4.0, dt: float | None = None,
                   max_j: int = 20, trajectories: dict | None = None) -> BetaCalibration:
    """Largest beta = 2^-j (j >= 1) for which the audit passes on every trial trajectory.

    ``trial_fields`` is a sequence of ``(kind, params)`` initial-data specs,
    each solved once per nu.  Pass ``trajectories`` to reuse solves.
    """
    trajs = []
    if trajectories is not None:
        trajs = list(trajectories)
    else:
        for nu in nu_list:
            cfg = SolveConfig(nu=nu, profile=profile, dt=dt,
                              t_end=t_end_factor * nu ** -0.5, stride=5).resolve()
            for kind, p in trial_fields:
                p = dict(p)
                if kind == "critical_bump":
                    p.setdefault("nu", nu)
                n = max(cfg.n, required_n(profile, nu, kind, p))
                f0 = make_initial(kind, p, Grid(n), profile)
                trajs.append(solve(replace(cfg, n=n), f0))
    verdicts = {}
    beta_star = None
    # beta < 1 strictly, so the grid starts at 1/2
    for j in range(1, max_j + 1):
        beta = 2.0 ** -j
        params = HypoParams(beta, spectral_constant, sigma)
        ok = all(audit_gronwall(tr, profile, tr.nu, params).passed for tr in trajs)
        verdicts[beta] = ok
        if ok:
            beta_star = beta
            break
    if beta_star is None:
        raise NoFeasibleBeta(f"audit fails for every beta down to 2^-{max_j}")
    return BetaCalibration(beta_star=beta_star,
                           closed_form=closed_form_beta(profile.norm_U2, spectral_constant),
                           verdicts=verdicts)
