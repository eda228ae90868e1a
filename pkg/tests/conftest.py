import numpy as np
import pytest

from shearmix.shear import make_profile, profile_from_name


@pytest.fixture(scope="session")
def sine():
    return profile_from_name("sine")


@pytest.fixture(scope="session")
def sin2():
    return profile_from_name("sin2")


@pytest.fixture(scope="session")
def zero():
    return profile_from_name("zero")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240601)


def random_fields(rng, count, n, m_max=12):
    """Complex band-limited fields of random amplitude profile."""
    y = 2 * np.pi * np.arange(n) / n
    modes = np.arange(-m_max, m_max + 1)
    basis = np.exp(1j * np.multiply.outer(y, modes))
    decay = 1.0 / (1.0 + np.abs(modes)) ** rng.uniform(0.0, 2.0, size=(count, 1))
    coef = (rng.standard_normal((count, len(modes))) + 1j * rng.standard_normal((count, len(modes))))
    return (coef * decay) @ basis.T


__all__ = ["random_fields", "make_profile"]


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
