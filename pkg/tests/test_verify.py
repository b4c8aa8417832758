import math

import numpy as np
import pytest

from conftest import random_feasible
from lorentz_orbits.bm_solver import phi
from lorentz_orbits.potentials import make_arctan_potential, make_sine_magnetic, make_zero_magnetic
from lorentz_orbits.trajectory import TWO_PI
from lorentz_orbits.verify import (
    NoCircularOrbit,
    circular_orbit_radius,
    energy,
    integrate_lfe,
    ode_residual,
    radius_balance,
    shooting_defect,
)

V50 = make_arctan_potential(50.0)
W0 = make_zero_magnetic()


def circle(rho, n=256, j=1):
    t = TWO_PI * np.arange(n) / n
    return np.stack([rho * np.cos(j * t), rho * np.sin(j * t), 0 * t], axis=1)


def test_radius_root():
    rho = circular_orbit_radius(50.0)
    assert abs(radius_balance(50.0, rho)) <= 1e-12
    rho2 = circular_orbit_radius(50.0, 2)
    assert 0 < rho2 < 0.5 and abs(radius_balance(50.0, rho2, 2)) <= 1e-10


def test_radius_round_trip_through_quadratic():
    # 1/sqrt(0.75) = 2 lam / (1 + lam^2/16)  <=>  (c/16) lam^2 - 2 lam + c = 0
    c = 1 / math.sqrt(0.75)
    disc = math.sqrt(4 - 4 * c * c / 16)
    for lam in ((2 - disc) / (c / 8), (2 + disc) / (c / 8)):
        assert circular_orbit_radius(lam) == pytest.approx(0.5, abs=1e-12)


def test_no_orbit_below_crossing():
    with pytest.raises(NoCircularOrbit):
        circular_orbit_radius(0.4)
    assert radius_balance(0.4, 1e-6) > 0  # sign(F(0+)) = sign(j^2 - 2 lam)
    assert radius_balance(0.6, 1e-6) < 0


def test_origin_is_equilibrium():
    tr = integrate_lfe(np.zeros(3), np.zeros(3), V50, make_sine_magnetic(0.1), steps=64)
    assert np.all(tr.q == 0) and np.all(tr.p == 0)


def test_circular_data_returns():
    rho = circular_orbit_radius(50.0)
    tr = integrate_lfe([rho, 0, 0], phi(np.array([0, rho, 0])), V50, W0, steps=4096)
    assert np.linalg.norm(tr.q[-1] - tr.q[0]) + np.linalg.norm(tr.p[-1] - tr.p[0]) <= 1e-6


def test_energy_conserved_at_fourth_order():
    q0 = np.array([0.3, 0.0, 0.1])
    p0 = np.array([0.0, 0.5, 0.1])
    drift = []
    for steps in (1024, 2048):
        tr = integrate_lfe(q0, p0, V50, W0, steps=steps)
        e = energy(tr, V50)
        drift.append(abs(e[-1] - e[0]))
    assert drift[1] <= 1e-9
    assert drift[0] / drift[1] >= 14  # at least fourth order


def test_time_reversible():
    q0 = np.array([0.3, 0.0, 0.1])
    p0 = np.array([0.0, 0.5, 0.1])
    err = []
    for steps in (1024, 2048):
        fwd = integrate_lfe(q0, p0, V50, W0, steps=steps)
        back = integrate_lfe(fwd.q[-1], -fwd.p[-1], V50, W0, steps=steps)
        err.append(np.linalg.norm(back.q[-1] - q0) + np.linalg.norm(back.p[-1] + p0))
    assert err[1] <= 1e-7
    assert err[0] / err[1] >= 14


def test_integrator_validates_steps():
    with pytest.raises(ValueError):
        integrate_lfe(np.zeros(3), np.zeros(3), V50, W0, steps=0)


def test_residuals_on_exact_circle():
    rho = circular_orbit_radius(50.0)
    q = circle(rho)
    assert ode_residual(q, V50, W0) <= 1e-10
    assert shooting_defect(q, V50, W0, 2048) <= 1e-8
    assert ode_residual(np.zeros((32, 3)), V50, W0) == 0.0


def test_residual_flags_non_solutions():
    q = random_feasible(np.random.default_rng(0), 256, max_speed=0.6)
    assert ode_residual(q, V50, W0) > 0.1
    with pytest.raises(ValueError):
        ode_residual(circle(1.5), V50, W0)
