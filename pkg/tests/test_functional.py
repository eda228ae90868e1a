import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shearmix.errors import NegativePhi, NonFinite, StrideTooCoarse
from shearmix.functional import (LEDGER_COLUMNS, HypoParams, audit_gronwall, calibrate_beta,
                                 check_equivalence, closed_form_beta, component_rates,
                                 eval_functional, functional_series)
from shearmix.solver import Grid, ScalarField, SolveConfig, make_initial, norm2, solve

from conftest import random_fields


@pytest.fixture(scope="module")
def random_traj(sine):
    nu = 1e-3
    cfg = SolveConfig(nu=nu, profile=sine, t_end=4 * nu ** -0.5, stride=5, seed=3)
    return solve(cfg, make_initial("random_band", {"seed": 3}, Grid(cfg.resolve().n)))


def test_params_couplings():
    p = HypoParams(0.25)
    assert p.alpha == pytest.approx(0.125)
    assert p.gamma == pytest.approx(0.5)
    assert p.sigma == pytest.approx(0.125)
    assert HypoParams(0.25, sigma_override=0.7).sigma == 0.7
    with pytest.raises(ValueError):
        HypoParams(1.5)
    with pytest.raises(ValueError):
        HypoParams(0.5, sigma_override=2.0)


@pytest.mark.parametrize("beta", [1.0, 0.1, 1e-3])
def test_initial_functional(sine, beta):
    g = Grid(128)
    f0 = make_initial("random_band", {"seed": 1}, g)
    led = eval_functional(f0, sine, 1e-3, HypoParams(beta))
    s = HypoParams(beta).sigma
    assert led.phi_total == pytest.approx(np.exp(2 * s) * norm2(g.dy, f0.values), rel=1e-13)
    assert led.c_alpha == led.c_beta == led.c_gamma == 0.0


def test_constant_field(sine):
    g = Grid(64)
    f = ScalarField(g, np.full(64, 0.3 + 0.1j), 25.0)
    led = eval_functional(f, sine, 1e-2, HypoParams(0.5))
    assert led.c_alpha == 0.0 and abs(led.c_beta) < 1e-15 * led.c0
    assert check_equivalence(f, sine, 1e-2, HypoParams(0.5)) == pytest.approx(1.0, abs=1e-14)


def test_functional_decreases(sine):
    nu = 1e-3
    cfg = SolveConfig(nu=nu, profile=sine, t_end=nu ** -0.5, stride=10)
    g = Grid(cfg.resolve().n)
    f0 = make_initial("fourier_mode", {"m": 1}, g)
    traj = solve(cfg, f0)
    p = HypoParams(0.5)
    assert eval_functional(traj.field(-1), sine, nu, p).phi_total < eval_functional(f0, sine, nu, p).phi_total


def test_equivalence_random_fields(sine, rng):
    nu = 1e-3
    g = Grid(128)
    fields = random_fields(np.random.default_rng(11), 1000, g.n)
    ratios = []
    for beta in (1.0, 0.5, 0.01):
        for v in fields[:334] if beta != 1.0 else fields:
            ratios.append(check_equivalence(ScalarField(g, v, 0.5 * nu ** -0.5), sine, nu,
                                            HypoParams(beta)))
    assert 0.5 <= min(ratios) and max(ratios) <= 1.5


def test_equivalence_real_fields(sine):
    g = Grid(128)
    for v in random_fields(np.random.default_rng(4), 50, g.n).real:
        r = check_equivalence(ScalarField(g, v.astype(complex), 20.0), sine, 1e-3, HypoParams(1.0))
        assert 0.5 <= r <= 1.5


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-5, -1), st.floats(0, 2000), st.floats(1e-4, 1.0))
def test_phi_dominates_weighted_norm(sine, seed, lognu, t, beta):
    nu = 10.0 ** lognu
    g = Grid(128)
    v = random_fields(np.random.default_rng(seed), 1, g.n)[0]
    led = eval_functional(ScalarField(g, v, t), sine, nu, HypoParams(beta))
    assert led.phi_total >= led.c0 >= 0
    assert led.c_alpha >= 0 and led.c_gamma >= 0
    assert led.phi_total == pytest.approx(led.c0 + led.c_alpha + led.c_beta + led.c_gamma, rel=1e-14)
    assert abs(led.c_beta) <= 0.5 * (led.c_alpha + led.c_gamma) * (1 + 1e-12) + 1e-300


def test_nonfinite(sine):
    g = Grid(32)
    v = np.ones(32, dtype=complex)
    v[3] = np.nan
    with pytest.raises(NonFinite):
        eval_functional(ScalarField(g, v, 1.0), sine, 1e-2, HypoParams(0.5))


def test_lemma_bounds_beta_001(sine, random_traj):
    audit = audit_gronwall(random_traj, sine, 1e-3, HypoParams(0.01))
    assert audit.term_pass
    assert all(l.passed for l in audit.ledgers if l.passed is not None)
    assert len(audit.audited_times) > 0.9 * len(random_traj)


def test_decay_not_required_before_cap(sine, random_traj):
    audit = audit_gronwall(random_traj, sine, 1e-3, HypoParams(0.5))
    assert audit.decay_pass and audit.delta_cert > 0 and audit.delta_fit > 0
    # Phi grows somewhere before nu^(-1/2) yet the verdict is unaffected
    t, phi = audit.times, audit.phi
    early = t < 1e-3 ** -0.5
    assert np.any(np.diff(phi[early]) > 0)


def test_heat_L2_term(zero):
    nu = 1e-2
    cfg = SolveConfig(nu=nu, profile=zero, t_end=20.0, dt=0.01, stride=5)
    traj = solve(cfg, make_initial("random_band", {"seed": 0}, Grid(cfg.resolve().n)))
    p = HypoParams(0.5)
    audit = audit_gronwall(traj, zero, nu, p)
    assert audit.term_pass
    W02 = np.exp(2 * p.sigma)
    for i in (10, 50, 150):
        led = audit.ledgers[i]
        fy = np.fft.ifft(1j * traj.grid.m * np.fft.fft(traj.values[i]))
        exact = -2 * nu * W02 * norm2(traj.grid.dy, fy)
        assert led.lemma_lhs["L2"] == pytest.approx(exact, rel=1e-3)  # O(h^2) centred difference
        assert led.lemma_lhs["L2"] < led.lemma_rhs["L2"] < 0


def test_fd_matches_exact_rates(sine, random_traj):
    nu = 1e-3
    p = HypoParams(0.5)
    audit = audit_gronwall(random_traj, sine, nu, p)
    t = audit.times
    tc = nu ** -0.5
    h = t[1] - t[0]
    checked = 0
    for i in range(1, len(t) - 1):
        if t[i] < tc + 2 * h:
            continue
        exact = component_rates(random_traj.field(i), sine, nu, p)
        for k, v in exact.items():
            fd = audit.ledgers[i].lemma_lhs[k]
            scale = max(abs(v), 1e-12 * random_traj.norms[0] ** 2)
            assert abs(fd - v) <= 1e-3 * scale
        checked += 1
    assert checked > 100


def test_envelope_along_trajectory(sine, random_traj):
    nu = 1e-3
    audit = audit_gronwall(random_traj, sine, nu, HypoParams(0.5))
    bound = np.e ** 3 * random_traj.norms[0] ** 2 * np.exp(-audit.delta_fit * np.sqrt(nu) * audit.times)
    assert np.all(audit.phi <= bound)


def test_stride_too_coarse(sine):
    cfg = SolveConfig(nu=1e-2, profile=sine, t_end=20.0, stride=11)
    traj = solve(cfg, make_initial("constant", {}, Grid(cfg.resolve().n)))
    with pytest.raises(StrideTooCoarse):
        audit_gronwall(traj, sine, 1e-2, HypoParams(0.5))


def test_negative_phi_rejected(sine, random_traj):
    ledgers = functional_series(random_traj, HypoParams(0.5))
    ledgers[5].phi_total = -1.0
    with pytest.raises(NegativePhi):
        audit_gronwall(random_traj, sine, 1e-3, HypoParams(0.5), ledgers=ledgers)


def test_ledger_csv(sine, random_traj):
    text = audit_gronwall(random_traj, sine, 1e-3, HypoParams(0.5)).to_csv()
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == list(LEDGER_COLUMNS)
    assert rows[0] == ["t", "phi", "c0", "c_alpha", "c_beta", "c_gamma", "lhs_L2", "rhs_L2",
                       "lhs_a", "rhs_a", "lhs_b", "rhs_b", "lhs_g", "rhs_g", "pass"]
    assert len(rows) == len(random_traj) + 1
    assert rows[5][-1] in ("true", "false")


def test_closed_form_beta():
    # second bracket is linear in sqrt(beta): 3/8 = r (64 + 74 + 20 + 17)
    assert closed_form_beta(1.0, 1.0) == pytest.approx((3 / 1400) ** 2, rel=1e-12)
    assert closed_form_beta(0.0, 1.0) == pytest.approx((3 / 672) ** 2, rel=1e-12)
    assert 0 < closed_form_beta(2.0, 3.0) < closed_form_beta(1.0, 1.0) < closed_form_beta(0.0, 1.0) < 1


def test_calibration(sine):
    cal = calibrate_beta(sine, [1e-2], [("random_band", {"seed": 0}), ("critical_bump", {})])
    assert cal.beta_star >= cal.closed_form
    assert cal.beta_star < 1.0
    assert cal.verdicts[cal.beta_star]
