"""Independent checks of candidate orbits from the ODE side."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .bm_solver import phi, phi_inv
from .potentials import ElectricPotential, MagneticPotential, lorentz_force
from .trajectory import TWO_PI, as_nodes, spectral_derivative


@dataclass(frozen=True)
class OdeTrack:
    """Samples of (t, q, p) with p = phi(q') the relativistic momentum."""

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray

    @property
    def velocity(self) -> np.ndarray:
        return phi_inv(self.p)


def integrate_lfe(q0, p0, V: ElectricPotential, W: MagneticPotential, steps: int = 4096,
                  t_end: float = TWO_PI) -> OdeTrack:
    """Classical RK4 for q' = phi_inv(p), p' = E(q) + phi_inv(p) x B(q)."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    dt = t_end / steps
    y = np.concatenate([np.asarray(q0, dtype=float), np.asarray(p0, dtype=float)])

    def rhs(y):
        v = phi_inv(y[3:])
        return np.concatenate([v, lorentz_force(V, W, y[:3], v)])

    out = np.empty((steps + 1, 6))
    out[0] = y
    for i in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = y
    return OdeTrack(dt * np.arange(steps + 1), out[:, :3], out[:, 3:])


def energy(track: OdeTrack, V: ElectricPotential) -> np.ndarray:
    """sqrt(1 + |p|^2) + V(q), conserved when W = 0."""
    return np.sqrt(1 + np.sum(track.p**2, axis=1)) + V.value(track.q)


def momentum_defect(q, force: np.ndarray) -> float:
    """max_i |(phi(q'))'(t_i) - force_i| with spectral differentiation of the momenta."""
    x = as_nodes(q)
    v = spectral_derivative(x)
    if np.max(np.sum(v * v, axis=1)) >= 1.0:
        raise ValueError("trajectory is not strictly feasible")
    dp = spectral_derivative(phi(v))
    return float(np.max(np.linalg.norm(dp - force, axis=1)))


def ode_residual(q, V: ElectricPotential, W: MagneticPotential) -> float:
    """Nodewise defect of the Lorentz force equation."""
    x = as_nodes(q)
    v = spectral_derivative(x)
    if np.max(np.sum(v * v, axis=1)) >= 1.0:
        raise ValueError("trajectory is not strictly feasible")
    return momentum_defect(x, lorentz_force(V, W, x, v))


def shooting_defect(q, V: ElectricPotential, W: MagneticPotential, steps: int = 8192) -> float:
    """|q(2pi) - q(0)| + |p(2pi) - p(0)| integrating from the first node of q."""
    x = as_nodes(q)
    q0 = x[0]
    p0 = phi(spectral_derivative(x)[0])
    track = integrate_lfe(q0, p0, V, W, steps)
    return float(np.linalg.norm(track.q[-1] - q0) + np.linalg.norm(track.p[-1] - p0))


class NoCircularOrbit(ValueError):
    pass


def circular_orbit_radius(lam: float, j: int = 1) -> float:
    """Radius of q(t) = rho (cos jt, sin jt, 0) solving the equation for
    V = arctan(lam |q|^2), W = 0:  j^2 / sqrt(1 - j^2 rho^2) = 2 lam / (1 + lam^2 rho^4).

    The left side increases and the right side decreases on (0, 1/j), so a
    root exists (and is unique) iff 2 lam > j^2.
    """
    if lam <= 0 or j < 1:
        raise ValueError("need lam > 0 and j >= 1")

    def F(rho):
        return j * j / math.sqrt(1 - (j * rho) ** 2) - 2 * lam / (1 + lam**2 * rho**4)

    if not 2 * lam > j * j:
        raise NoCircularOrbit(f"no circular orbit for lam={lam}, j={j}: balance curve does not cross")
    hi = 1.0 / j
    # step inside the singular endpoint until F changes sign
    b = hi * (1 - 1e-3)
    while F(b) <= 0:
        b = hi - 0.5 * (hi - b)
    return brentq(F, 0.0, b, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)


def radius_balance(lam: float, rho: float, j: int = 1) -> float:
    return j * j / math.sqrt(1 - (j * rho) ** 2) - 2 * lam / (1 + lam**2 * rho**4)
