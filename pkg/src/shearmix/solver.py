"""Strang-split pseudospectral solver for  f_t + i U f = nu f_yy  on the torus.

Both sub-flows are solved exactly: the shear part is a pointwise phase
rotation ``exp(-i U dt)`` and the diffusion part multiplies Fourier mode ``m``
by ``exp(-nu m^2 dt)``.  Each sub-flow is an L2 contraction, so the scheme is
unconditionally stable and the step size only controls accuracy.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import AliasingError, UnresolvedBump, ZeroMode
from .shear import TWO_PI, ShearProfile, profile_from_name

TAIL_TOL = 1e-8


@dataclass(frozen=True)
class Grid:
    n: int

    def __post_init__(self):
        if self.n < 16 or self.n & (self.n - 1):
            raise ValueError(f"grid size must be a power of two >= 16, got {self.n}")

    @property
    def length(self) -> float:
        return TWO_PI

    @property
    def dy(self) -> float:
        return TWO_PI / self.n

    @property
    def y(self) -> np.ndarray:
        return TWO_PI * np.arange(self.n) / self.n

    @property
    def m(self) -> np.ndarray:
        """Integer wavenumbers in FFT order."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n)

    @property
    def tail_mask(self) -> np.ndarray:
        """Top quartile of resolved wavenumbers, |m| > 3n/8."""
        return np.abs(self.m) > 3 * self.n / 8


def resolution_n(profile: ShearProfile, nu: float) -> int:
    """Smallest power of two >= 8 (||U'|| nu^(-1/3) + nu^(-1/4)), at least 16."""
    target = 8.0 * (profile.norm_U1 * nu ** (-1.0 / 3.0) + nu ** -0.25)
    n = 16
    while n < target:
        n *= 2
    return n


def required_n(profile: ShearProfile, nu: float, kind: str | None = None,
               params: dict | None = None) -> int:
    """Resolution rule, doubled further until the initial datum is resolved.

    Gaussian data must span >= 4 cells; band-limited data must have their top
    mode below half the tail cutoff 3n/8.
    """
    n = resolution_n(profile, nu)
    params = params or {}
    width = None
    if kind == "critical_bump":
        width = float(params.get("nu", nu)) ** 0.25
    elif kind in ("gaussian_bump", "monotone_bump"):
        width = float(params.get("width", 0.2 if kind == "gaussian_bump" else 0.5))
    if width is not None:
        while width < 4 * TWO_PI / n:
            n *= 2
    elif kind == "random_band":
        # the band must sit below the 3n/8 tail cutoff, with room to spread
        while int(params.get("m_max", 8)) >= 3 * n / 16:
            n *= 2
    elif kind == "fourier_mode":
        while abs(int(params.get("m", 1))) >= 3 * n / 16:
            n *= 2
    return n


# --- quadrature and spectral calculus ----------------------------------------

def inner(grid_or_dy, a, b) -> complex:
    """Trapezoid rule for <a, b> = int a conj(b) dy on the periodic grid."""
    dy = grid_or_dy.dy if isinstance(grid_or_dy, Grid) else grid_or_dy
    return complex(np.sum(a * np.conj(b)) * dy)


def norm2(dy, a) -> float:
    return float(np.sum(np.abs(a) ** 2) * dy)


def spectral_derivatives(values, order=2):
    """Return ``[f, f_y, f_yy, ...]`` up to ``order`` via FFT."""
    n = len(values)
    m = np.fft.fftfreq(n, d=1.0 / n)
    fh = np.fft.fft(values)
    out = [np.asarray(values)]
    ik = 1j * m
    # odd derivatives lose the unpaired Nyquist mode
    ik_odd = ik.copy()
    ik_odd[n // 2] = 0.0
    for k in range(1, order + 1):
        mult = ik_odd ** k if k % 2 else ik ** k
        out.append(np.fft.ifft(fh * mult))
    return out


def tail_fraction(values) -> float:
    fh = np.fft.fft(values)
    return _tail_from_hat(fh)


def _tail_from_hat(fh) -> float:
    n = len(fh)
    e = np.abs(fh) ** 2
    total = e.sum()
    if total == 0.0:
        return 0.0
    m = np.fft.fftfreq(n, d=1.0 / n)
    return float(e[np.abs(m) > 3 * n / 8].sum() / total)


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray
    t: float = 0.0
    tail: float = field(default=np.nan)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.n,):
            raise ValueError("field length does not match grid")
        if np.isnan(self.tail):
            self.tail = tail_fraction(self.values)

    def norm(self) -> float:
        return float(np.sqrt(norm2(self.grid.dy, self.values)))

    def derivatives(self, order=2):
        return spectral_derivatives(self.values, order)


@dataclass(frozen=True)
class SolveConfig:
    nu: float
    profile: object = "sine"
    dt: float | None = None
    t_end: float | None = None
    stride: int = 10
    n: int | None = None
    seed: int = 0
    tail_tol: float | None = TAIL_TOL

    def __post_init__(self):
        if not 0.0 < self.nu <= 1.0:
            raise ValueError(f"nu must lie in (0, 1], got {self.nu}")
        if self.stride < 1:
            raise ValueError("stride must be a positive step count")

    def resolve(self) -> "SolveConfig":
        """Fill defaults: dt = 0.05/max(1, ||U||), t_end = 4 nu^(-1/2), n by the resolution rule."""
        prof = profile_from_name(self.profile)
        dt = self.dt if self.dt is not None else 0.05 / max(1.0, prof.norm_U)
        t_end = self.t_end if self.t_end is not None else 4.0 * self.nu ** -0.5
        n = self.n if self.n is not None else resolution_n(prof, self.nu)
        if dt <= 0 or dt > t_end:
            raise ValueError("need 0 < dt <= t_end")
        return replace(self, profile=prof, dt=dt, t_end=t_end, n=n)


def reduce_mode(k: int, nu: float):
    """Map x-mode ``k`` of the 2-D problem onto the k = 1 equation.

    With tau = |k| t the rescaled mode solves f_tau + i U f = (nu/|k|) f_yy,
    after removing the factor exp(-nu k^2 t).  Negative k is the complex
    conjugate of the |k| problem for real data.
    """
    if int(k) != k:
        raise ValueError("k must be an integer")
    k = int(k)
    if k == 0:
        raise ZeroMode("k = 0 is the heat equation and has no shear reduction")
    return nu / abs(k), abs(k)


class Stepper:
    """Caches the sub-flow multipliers for a fixed (profile, nu, dt, grid)."""

    def __init__(self, profile: ShearProfile, nu: float, dt: float, grid: Grid,
                 tail_tol: float | None = TAIL_TOL):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.grid = grid
        self.dt = dt
        self.nu = nu
        self.tail_tol = tail_tol
        U = profile.u(grid.y)
        self.half_phase = np.exp(-0.5j * U * dt)
        self.decay = np.exp(-nu * grid.m ** 2 * dt)
        self.mask = grid.tail_mask

    def advance(self, values, t, nsteps=1):
        """Take ``nsteps`` Strang steps, returning (values, t, tail)."""
        f = values
        tail = 0.0
        for _ in range(nsteps):
            fh = np.fft.fft(f * self.half_phase) * self.decay
            if self.tail_tol is not None:
                e = fh.real ** 2 + fh.imag ** 2
                total = e.sum()
                tail = float(e[self.mask].sum() / total) if total > 0 else 0.0
                if tail > self.tail_tol:
                    raise AliasingError(t + self.dt, tail)
            f = np.fft.ifft(fh) * self.half_phase
            t = t + self.dt
        return f, t, tail


def step(field: ScalarField, profile: ShearProfile, nu: float, dt: float,
         tail_tol: float | None = TAIL_TOL) -> ScalarField:
    """One Strang step: half phase, exact diffusion, half phase."""
    st = Stepper(profile, nu, dt, field.grid, tail_tol)
    v, t, _ = st.advance(field.values, field.t)
    return ScalarField(field.grid, v, t)


@dataclass
class Trajectory:
    grid: Grid
    times: np.ndarray
    values: np.ndarray | None  # (n_out, n) or None when fields were not kept
    norms: np.ndarray
    tails: np.ndarray
    nu: float
    profile: ShearProfile
    dt: float
    stride: int
    seed: int = 0

    def __len__(self):
        return len(self.times)

    def field(self, i) -> ScalarField:
        return ScalarField(self.grid, self.values[i], float(self.times[i]), float(self.tails[i]))

    def fields(self):
        for i in range(len(self.times)):
            yield self.field(i)

    @property
    def output_dt(self) -> float:
        return self.dt * self.stride

    def header(self) -> dict:
        return {"nu": self.nu, "profile": self.profile.name, "dt": self.dt,
                "n": self.grid.n, "seed": self.seed, "stride": self.stride}


def solve(config: SolveConfig, f0, keep_fields: bool = True) -> Trajectory:
    """Integrate from ``f0`` to ``config.t_end``, recording every ``stride`` steps.

    ``f0`` is a ScalarField or an array on the resolved grid.
    """
    cfg = config.resolve()
    grid = Grid(cfg.n)
    v0 = f0.values if isinstance(f0, ScalarField) else np.asarray(f0, dtype=complex)
    if v0.shape != (grid.n,):
        raise ValueError(f"initial data has {v0.shape[0]} points, grid needs {grid.n}")
    stepper = Stepper(cfg.profile, cfg.nu, cfg.dt, grid, cfg.tail_tol)
    nsteps = int(round(cfg.t_end / cfg.dt))
    n_out = nsteps // cfg.stride + 1
    times = np.empty(n_out)
    norms = np.empty(n_out)
    tails = np.empty(n_out)
    vals = np.empty((n_out, grid.n), dtype=complex) if keep_fields else None
    f = v0.copy()
    t = 0.0
    for i in range(n_out):
        if i > 0:
            f, _, _ = stepper.advance(f, t, cfg.stride)
            t = i * cfg.stride * cfg.dt
        times[i] = t
        norms[i] = np.sqrt(norm2(grid.dy, f))
        tails[i] = tail_fraction(f)
        if cfg.tail_tol is not None and tails[i] > cfg.tail_tol:
            raise AliasingError(t, tails[i])
        if keep_fields:
            vals[i] = f
    return Trajectory(grid=grid, times=times, values=vals, norms=norms, tails=tails,
                      nu=cfg.nu, profile=cfg.profile, dt=cfg.dt, stride=cfg.stride,
                      seed=cfg.seed)


# --- initial data --------------------------------------------------------------

def _normalize(grid, v):
    return v / np.sqrt(norm2(grid.dy, v))


def _periodic_gaussian(y, center, width):
    d = np.mod(y - center + np.pi, TWO_PI) - np.pi
    out = np.zeros_like(y)
    for shift in (-TWO_PI, 0.0, TWO_PI):
        out += np.exp(-0.5 * ((d + shift) / width) ** 2)
    return out


def make_initial(kind: str, params: dict | None, grid: Grid,
                 profile: ShearProfile | None = None) -> ScalarField:
    """L2-normalised initial data.

    kinds: ``fourier_mode`` (m), ``gaussian_bump`` (center, width),
    ``random_band`` (seed, m_max), ``critical_bump`` (nu; needs a profile),
    ``monotone_bump`` (width; centred where |U'| is largest), ``constant``.
    """
    params = dict(params or {})
    y = grid.y
    if kind == "fourier_mode":
        v = np.exp(1j * int(params.get("m", 1)) * y)
    elif kind == "constant":
        v = np.ones(grid.n, dtype=complex)
    elif kind in ("gaussian_bump", "critical_bump", "monotone_bump"):
        if kind == "critical_bump":
            if profile is None or profile.n_critical == 0:
                raise ValueError("critical_bump needs a profile with critical points")
            center = profile.critical_y[0]
            width = float(params["nu"]) ** 0.25
        elif kind == "monotone_bump":
            if profile is None:
                raise ValueError("monotone_bump needs a profile")
            center = float(params.get("center", y[np.argmax(np.abs(profile.du(y)))]))
            width = float(params.get("width", 0.5))
        else:
            center = float(params.get("center", 0.0))
            width = float(params.get("width", 0.2))
        if width < 4 * grid.dy:
            raise UnresolvedBump(f"width {width:.3g} below 4*dy = {4 * grid.dy:.3g}")
        v = _periodic_gaussian(y, center, width).astype(complex)
    elif kind == "random_band":
        rng = np.random.default_rng(int(params.get("seed", 0)))
        m_max = int(params.get("m_max", 8))
        if not 0 < m_max < 3 * grid.n / 8:
            raise ValueError("m_max must be positive and below the tail band")
        modes = np.arange(-m_max, m_max + 1)
        coef = rng.standard_normal(len(modes)) + 1j * rng.standard_normal(len(modes))
        v = np.exp(1j * np.multiply.outer(y, modes)) @ coef
    else:
        raise ValueError(f"unknown initial data kind {kind!r}")
    return ScalarField(grid, _normalize(grid, v), 0.0)


# --- checkpoints -------------------------------------------------------------------

_ROW_HEAD = struct.Struct("<dq")


def write_checkpoint(path, traj: Trajectory):
    """Binary rows ``(t:<f8, n:<i8, re/im pairs:<f8)`` plus ``<path>.json`` header."""
    path = Path(path)
    with open(path, "wb") as fh:
        for i in range(len(traj)):
            fh.write(_ROW_HEAD.pack(float(traj.times[i]), traj.grid.n))
            fh.write(np.ascontiguousarray(traj.values[i]).astype("<c16").tobytes())
    Path(str(path) + ".json").write_text(json.dumps(traj.header(), sort_keys=True, indent=1))


def read_checkpoint(path):
    """Return ``(header, times, values)``."""
    path = Path(path)
    header = json.loads(Path(str(path) + ".json").read_text())
    raw = path.read_bytes()
    times, rows = [], []
    pos = 0
    while pos < len(raw):
        t, n = _ROW_HEAD.unpack_from(raw, pos)
        pos += _ROW_HEAD.size
        rows.append(np.frombuffer(raw, dtype="<c16", count=n, offset=pos).copy())
        pos += 16 * n
        times.append(t)
    return header, np.array(times), np.array(rows)
