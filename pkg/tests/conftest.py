import numpy as np
import pytest

from lorentz_orbits.trajectory import TWO_PI, spectral_derivative

ACCEPTANCE_LINES: list[str] = []


def random_smooth(rng, n, modes=4, scale=0.3):
    t = TWO_PI * np.arange(n) / n
    j = np.arange(1, modes + 1)
    c = rng.normal(size=(2, modes, 3)) * scale / j[None, :, None]
    return np.cos(np.outer(t, j)) @ c[0] + np.sin(np.outer(t, j)) @ c[1] + rng.normal(size=3) * scale


def random_feasible(rng, n, modes=4, max_speed=None):
    """Smooth random trajectory rescaled about its mean to a sup speed in (0.05, 0.95)."""
    x = random_smooth(rng, n, modes)
    target = rng.uniform(0.05, 0.95) if max_speed is None else max_speed
    v = np.max(np.linalg.norm(spectral_derivative(x), axis=1))
    mean = x.mean(axis=0)
    return mean + (x - mean) * (target / v)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
