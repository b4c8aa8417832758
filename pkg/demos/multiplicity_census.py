"""Multi-start census of negative-level orbits for m = 1.

The three plane circles mirror the index of the sphere in Z_1; random points
of the same sphere add further starts.  Orbits are counted modulo time
shifts only, so spatially rotated copies of the circle count separately.
"""
import logging

from lorentz_orbits.orbit_search import multi_start, verify_negativity
from lorentz_orbits.potentials import make_arctan_potential, make_zero_magnetic

logging.basicConfig(level=logging.INFO, format="%(message)s")

V = make_arctan_potential(50.0)
W = make_zero_magnetic()
found = multi_start(1, V, W, r=0.5, extra_random_starts=3, seed=42)
print(f"{len(found)} verified orbits; metadata: {found.metadata}")
for o in found.orbits:
    print(f"  level {o.level:.8f}  radius {o.mean_radius:.8f}  start {o.start_tag}")

neg = verify_negativity(1, 0.5, V, W, samples=500)
print(f"boundary levels: max {neg.max_level:.4f} vs omega {neg.omega:.4f}, violations {neg.violations}/500")
