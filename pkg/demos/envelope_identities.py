"""Check the regularised action on random trajectories.

Each line shows the envelope sandwich, the value identity at the proximal
point, the subgradient inclusion, a finite-difference test of the envelope
gradient and invariance under time shifts.
"""
import numpy as np

from lorentz_orbits.moreau import alpha_bound, check_el_properties
from lorentz_orbits.potentials import make_arctan_potential, make_sine_magnetic
from lorentz_orbits.trajectory import TWO_PI, project_feasible

V = make_arctan_potential(5.0)
W = make_sine_magnetic(0.1)
budget = alpha_bound(V, W)
rng = np.random.default_rng(0)
n = 128
t = TWO_PI * np.arange(n) / n

for trial in range(5):
    c = rng.normal(size=(2, 3, 3)) * 0.2
    j = np.arange(1, 4)
    q = project_feasible(np.cos(np.outer(t, j)) @ c[0] + np.sin(np.outer(t, j)) @ c[1], 0.05)
    rep = check_el_properties(q, V, W, budget, seed=trial)
    cells = "  ".join(f"{k}={v:.1e}" for k, v in rep.values.items())
    print(f"trial {trial}: {'ok  ' if rep.passed else 'FAIL'} {cells}")

# a sloppy inner solve is caught by the subgradient test, not by the value identity
rep = check_el_properties(q, V, W, budget, inner_tol=1e-2, method="gradient")
print(f"inner_tol=1e-2: failed checks {rep.failed}, value identity = {rep.values['value_identity']:.1e}")
