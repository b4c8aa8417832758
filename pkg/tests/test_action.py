import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_feasible
from lorentz_orbits.action import (
    ActionFunctional,
    action,
    default_probes,
    f_star,
    f_star_derivative,
    psi_star,
    vi_residual,
)
from lorentz_orbits.potentials import make_arctan_potential, make_sine_magnetic, make_zero_magnetic
from lorentz_orbits.trajectory import TWO_PI, PeriodicTrajectory, feasible, shift
from lorentz_orbits.verify import circular_orbit_radius

seeds = st.integers(0, 2**32 - 1)
V5 = make_arctan_potential(5.0)
SINE = make_sine_magnetic(0.1)


def circle(rho, n=64):
    t = TWO_PI * np.arange(n) / n
    return np.stack([rho * np.cos(t), rho * np.sin(t), 0 * t], axis=1)


@pytest.mark.parametrize("rho", [0.1, 0.5, 0.9])
def test_circle_closed_forms(rho):
    lam = 3.0
    q = circle(rho)
    V = make_arctan_potential(lam)
    assert psi_star(q) == pytest.approx(TWO_PI * (1 - math.sqrt(1 - rho * rho)), rel=1e-13)
    assert f_star(q, V, make_zero_magnetic()) == pytest.approx(-TWO_PI * math.atan(lam * rho**2), rel=1e-13)


def test_infeasible_is_infinite():
    q = circle(1.2)
    assert psi_star(q) == math.inf
    br = action(q, V5, SINE)
    assert br.total == math.inf and not br.feasible and br.speed_margin < 0


def test_origin():
    q = np.zeros((32, 3))
    br = action(q, V5, SINE)
    assert (br.psi, br.f, br.total) == (0.0, 0.0, 0.0)
    assert vi_residual(q, V5, make_zero_magnetic()) == 0.0


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_psi_nonnegative_and_shift_invariant(seed):
    rng = np.random.default_rng(seed)
    q = random_feasible(rng, 64)
    k = int(rng.integers(64))
    assert psi_star(q) >= 0
    af = ActionFunctional(V5, SINE)
    assert af.value(shift(q, k * TWO_PI / 64).nodes) == pytest.approx(af.value(q), abs=1e-13)


@pytest.mark.parametrize("W", [make_zero_magnetic(), SINE])
def test_gradient_matches_differences(W):
    rng = np.random.default_rng(1)
    q = random_feasible(rng, 32, max_speed=0.7)
    af = ActionFunctional(V5, W)
    g = af.gradient(q)
    for _ in range(5):
        d = rng.normal(size=q.shape)
        e = 1e-6
        fd = (af.value(q + e * d) - af.value(q - e * d)) / (2 * e)
        assert fd == pytest.approx(float(np.sum(g * d)), rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("W", [make_zero_magnetic(), SINE])
def test_hessian_matches_gradient_differences(W):
    rng = np.random.default_rng(2)
    q = random_feasible(rng, 16, max_speed=0.6)
    af = ActionFunctional(V5, W)
    H = af.hessian(q)
    assert np.allclose(H, H.T, atol=1e-10)
    d = rng.normal(size=q.shape)
    e = 1e-6
    fd = (af.gradient(q + e * d) - af.gradient(q - e * d)) / (2 * e)
    assert np.allclose(H @ d.ravel(), fd.ravel(), atol=1e-6)


def test_f_star_derivative_matches_differences():
    rng = np.random.default_rng(3)
    q = random_feasible(rng, 32)
    p = rng.normal(size=q.shape)
    e = 1e-6
    fd = (f_star(q + e * p, V5, SINE) - f_star(q - e * p, V5, SINE)) / (2 * e)
    assert f_star_derivative(q, p, V5, SINE) == pytest.approx(fd, rel=1e-7)
    with pytest.raises(ValueError):
        f_star_derivative(q, p[:16], V5, SINE)


def test_default_probes_are_feasible():
    q = circle(0.99)
    probes = default_probes(q)
    assert len(probes) == 2 * 2 * (3 + 3 * 2 * 3 + 8)
    assert all(feasible(p) for p in probes)


def test_vi_residual_small_at_orbit_and_large_elsewhere():
    lam = 50.0
    rho = circular_orbit_radius(lam)
    V = make_arctan_potential(lam)
    W = make_zero_magnetic()
    assert vi_residual(circle(rho, 128), V, W) <= 1e-12
    assert vi_residual(circle(0.8 * rho, 128), V, W) > 1e-2


def test_vi_residual_requires_probes():
    with pytest.raises(ValueError):
        vi_residual(circle(0.3), V5, SINE, probes=[])


def test_trajectory_objects_accepted():
    q = PeriodicTrajectory(circle(0.3))
    assert psi_star(q) == psi_star(q.nodes)
