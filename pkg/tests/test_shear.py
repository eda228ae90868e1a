import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shearmix.errors import DegenerateCritical, NoCriticalPoints, NonPeriodic, ProfileError
from shearmix.shear import (distance_to_critical, eval_derivatives, find_critical_points,
                            make_profile, periodic_distance, profile_from_name,
                            write_profile_table)


def test_sine_critical_points(sine):
    ys = sine.critical_y
    assert np.allclose(ys, [np.pi / 2, 3 * np.pi / 2], atol=1e-14)
    assert sine.norm_U2 == pytest.approx(1.0, abs=1e-6)
    assert [c for _, c in sine.critical_points] == pytest.approx([1.0, 1.0], abs=1e-14)


def test_cosine_critical_points():
    p = profile_from_name("cosine")
    assert np.allclose(p.critical_y, [0.0, np.pi], atol=1e-14)


def test_table_sin2_critical_points():
    y = 2 * np.pi * np.arange(64) / 64
    p = make_profile("table", {"y": y, "u": np.sin(2 * y)})
    # oracle: sign changes of 2cos(2y) on 10^4 samples
    s = np.linspace(0, 2 * np.pi, 10_000, endpoint=False)
    g = 2 * np.cos(2 * s)
    brute = s[np.flatnonzero(np.sign(g) != np.sign(np.roll(g, -1)))]
    assert p.n_critical == 4
    assert np.allclose(p.critical_y, np.pi / 4 + np.arange(4) * np.pi / 2, atol=1e-12)
    assert np.allclose(p.critical_y, brute, atol=2 * np.pi / 10_000)


@pytest.mark.parametrize("y, expected", [
    (0.0, (0.0, 1.0, 0.0)),
    (np.pi / 2, (1.0, 0.0, -1.0)),
])
def test_sine_derivatives(sine, y, expected):
    assert np.allclose(eval_derivatives(sine, [y]), np.array(expected)[:, None], atol=1e-15)


def test_sin2_derivatives(sin2):
    r2 = np.sqrt(2)
    got = np.array(eval_derivatives(sin2, [np.pi / 8]))[:, 0]
    assert np.allclose(got, [r2 / 2, r2, -2 * r2], atol=1e-14)


def test_table_derivatives_match_analytic():
    y = 2 * np.pi * np.arange(32) / 32
    p = make_profile("table", {"y": y, "u": np.sin(2 * y) + 0.3 * np.cos(5 * y)})
    s = np.linspace(0, 2 * np.pi, 97)
    u, du, d2u = eval_derivatives(p, s)
    assert np.allclose(u, np.sin(2 * s) + 0.3 * np.cos(5 * s), atol=1e-12)
    assert np.allclose(du, 2 * np.cos(2 * s) - 1.5 * np.sin(5 * s), atol=1e-11)
    assert np.allclose(d2u, -4 * np.sin(2 * s) - 7.5 * np.cos(5 * s), atol=1e-10)


@pytest.mark.parametrize("y, expected", [
    (np.pi / 2, 0.0),
    (0.0, np.pi / 2),
    (2 * np.pi - 0.1, 1.4707963267948966),
])
def test_distance_to_critical(sine, y, expected):
    assert float(distance_to_critical(sine, y)) == pytest.approx(expected, abs=1e-12)


def test_distance_brute_force(sine):
    y = np.linspace(0, 2 * np.pi, 301)
    brute = np.min([np.abs(y[:, None] - c + 2 * np.pi * k)
                    for c in (np.pi / 2, 3 * np.pi / 2) for k in (-1, 0, 1)], axis=0).min(axis=1)
    assert np.allclose(distance_to_critical(sine, y), brute, atol=1e-12)


def test_abs_du_equals_abs_cos(sine):
    for n in (16, 128, 1024):
        y = 2 * np.pi * np.arange(n) / n
        assert np.max(np.abs(np.abs(sine.du(y)) - np.abs(np.cos(y)))) == 0.0


angles = st.floats(-20, 20, allow_nan=False)


@given(angles, angles, angles)
def test_periodic_distance_metric(a, b, c):
    assert periodic_distance(a, b) == pytest.approx(periodic_distance(b, a), abs=1e-12)
    assert periodic_distance(a, c) <= periodic_distance(a, b) + periodic_distance(b, c) + 1e-12
    assert 0.0 <= periodic_distance(a, b) <= np.pi + 1e-12


def test_critical_points_deterministic():
    a = make_profile("polytrig", {"sin": {1: 1.0, 3: 0.2}, "cos": {2: 0.4}})
    b = make_profile("polytrig", {"sin": {1: 1.0, 3: 0.2}, "cos": {2: 0.4}})
    assert a.critical_points == b.critical_points


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 2.0), st.integers(1, 4), st.floats(0, 2 * np.pi))
def test_critical_points_are_roots(amp, m, phase):
    p = make_profile("polytrig", {"sin": {m: amp * np.cos(phase)}, "cos": {m: amp * np.sin(phase)}})
    assert p.n_critical == 2 * m
    assert np.max(np.abs(p.du(p.critical_y))) < 1e-12 * amp * m


def test_degenerate_critical_rejected():
    # U = sin^3-like: cos(y)^3 has U' = -3cos^2 sin, degenerate at pi/2
    with pytest.raises(DegenerateCritical):
        make_profile("polytrig", {"cos": {1: 0.75, 3: 0.25}})


def test_constant_profile_has_no_critical_points(zero):
    assert zero.n_critical == 0
    with pytest.raises(NoCriticalPoints):
        distance_to_critical(zero, 0.0)


def test_nonperiodic_table_rejected():
    y = np.linspace(0, 2 * np.pi, 33)
    with pytest.raises(NonPeriodic):
        make_profile("table", {"y": y, "u": y / 10})


def test_closed_table_accepted(tmp_path):
    y = np.linspace(0, 2 * np.pi, 33)
    path = tmp_path / "u.csv"
    write_profile_table(path, y, np.sin(y))
    p = profile_from_name(f"table:{path}")
    assert np.allclose(p.critical_y, [np.pi / 2, 3 * np.pi / 2], atol=1e-12)
    assert p.norm_U2 == pytest.approx(1.0, abs=1e-6)


def test_bad_inputs():
    with pytest.raises(ProfileError):
        make_profile("bogus")
    with pytest.raises(ProfileError):
        profile_from_name("nope")
    with pytest.raises(ProfileError):
        make_profile("table", {"y": [0, 1, 3, 4], "u": [0, 1, 2, 3]})
    with pytest.raises(ProfileError):
        make_profile("polytrig", {"sin": {0: 1.0}})


def test_find_critical_points_flat():
    assert find_critical_points(lambda y: np.zeros_like(y), lambda y: np.zeros_like(y)) == ()
