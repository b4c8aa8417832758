"""Recover the circular orbit of the radial arctan well by proximal descent.

For V(q) = arctan(lam |q|^2) and no magnetic field the equation of motion has
circular solutions whose radius solves a scalar balance equation.  We start
from a deformed circle, let the proximal-point map and the Newton polish do
their work, and compare against the scalar root.
"""
import numpy as np

from lorentz_orbits.moreau import alpha_bound
from lorentz_orbits.orbit_search import descend
from lorentz_orbits.potentials import make_arctan_potential, make_zero_magnetic
from lorentz_orbits.trajectory import TWO_PI, PeriodicTrajectory
from lorentz_orbits.verify import circular_orbit_radius

lam = 50.0
V = make_arctan_potential(lam)
W = make_zero_magnetic()
budget = alpha_bound(V, W)
print(f"alpha = {budget.alpha:g}, epsilon = {budget.epsilon:g}")

rho = circular_orbit_radius(lam)
n = 256
t = TWO_PI * np.arange(n) / n
start = np.stack([rho * np.cos(t) + 0.03 * np.cos(2 * t), rho * np.sin(t), 0.02 * np.sin(3 * t)], axis=1)

res = descend(PeriodicTrajectory(start), V, W, budget)
print(f"status: {res.status} {res.reason}")
for e in res.trace:
    print(f"  {e['kind']:6s} I* = {e['action']: .10f}  |grad I_eps| = {e['grad_norm']:.3e}")

x = res.q.nodes
radii = np.linalg.norm(x - x.mean(axis=0), axis=1)
print(f"radius from the balance equation: {rho:.15f}")
print(f"radius of the descended orbit:    {radii.mean():.15f} (spread {np.ptp(radii):.1e})")
if res.orbit is not None:
    o = res.orbit
    print(f"level {o.level:.10f}, ode residual {o.ode_res:.2e}, shooting defect {o.shooting_defect:.2e}")
