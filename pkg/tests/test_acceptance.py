"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line
that the terminal summary prints at the end of the run."""
import json
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_feasible
from lorentz_orbits.action import ActionFunctional
from lorentz_orbits.bm_solver import solve_subproblem
from lorentz_orbits.cli import run
from lorentz_orbits.moreau import ProxSolver, alpha_bound, check_el_properties, lower_action_bound
from lorentz_orbits.orbit_search import descend, estimate_lambda_m, verify_negativity
from lorentz_orbits.potentials import make_arctan_potential, make_sine_magnetic, make_zero_magnetic
from lorentz_orbits.trajectory import (
    TWO_PI,
    PeriodicTrajectory,
    ZmDisk,
    h1_inner,
    h1_norm,
    orbit_distance,
    read_trajectory_csv,
    shift,
    wirtinger_gap,
)
from lorentz_orbits.verify import circular_orbit_radius, ode_residual, shooting_defect


def record(k, ok, detail):
    ACCEPTANCE_LINES.append(f"CRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


# ---------------------------------------------------------------------------
# 1, 2: subproblem


def test_criterion_01_subproblem_oracle():
    a = 0.5
    t0 = time.perf_counter()
    residuals = {}
    for n in (128, 256, 512, 1024):
        t = TWO_PI * np.arange(n) / n
        f = np.stack([a * np.cos(t), 0 * t, 0 * t], axis=1)
        sol = solve_subproblem(f)
        residuals[n] = sol.ode_residual
        if n == 512:
            sol512 = sol
            vel = sol.q.velocity[:, 0]
            exact = a * np.sin(t) / np.sqrt(1 + a * a * np.sin(t) ** 2)
            qerr = float(np.max(np.abs(vel - exact)))
    elapsed = time.perf_counter() - t0
    orders = [math.log2(residuals[n] / residuals[2 * n]) for n in (128, 256, 512)]
    ok = (sol512.newton_iterations <= 20 and residuals[512] <= 1e-3
          and all(1.8 <= p <= 2.2 for p in orders) and qerr <= 1e-4 and elapsed < 1.0)
    record(1, ok, f"newton={sol512.newton_iterations} res512={residuals[512]:.3e} "
                  f"orders={[round(p, 3) for p in orders]} q'err={qerr:.2e} time={elapsed:.3f}s")
    assert ok


def test_criterion_02_uniqueness():
    rng = np.random.default_rng(2)
    n = 256
    t = TWO_PI * np.arange(n) / n
    worst = 0.0
    for _ in range(20):
        j = np.arange(1, 5)
        c = rng.normal(size=(2, 4, 3))
        f = np.cos(np.outer(t, j)) @ c[0] + np.sin(np.outer(t, j)) @ c[1] + rng.normal(size=3)
        q1 = solve_subproblem(f, p0_start=np.zeros(3)).q.nodes
        q2 = solve_subproblem(f, p0_start=np.full(3, 5.0)).q.nodes
        worst = max(worst, float(np.max(np.linalg.norm(q1 - q2, axis=1))))
    ok = worst <= 1e-8
    record(2, ok, f"max C-distance over 20 forcings = {worst:.2e}")
    assert ok


# ---------------------------------------------------------------------------
# 3-6: envelope identities on the random battery


@pytest.fixture(scope="module")
def battery():
    V = make_arctan_potential(5.0)
    W = make_sine_magnetic(0.1)
    budget = alpha_bound(V, W)
    rng = np.random.default_rng(3)
    qs = [random_feasible(rng, 128) for _ in range(100)]
    return V, W, budget, qs


def test_criterion_03_envelope_sandwich(battery):
    V, W, budget, qs = battery
    solver = ProxSolver(V, W, budget, inner_tol=1e-10)
    af = ActionFunctional(V, W)
    lo = lower_action_bound(V, W)
    worst_lo = worst_hi = -math.inf
    for q in qs:
        st = solver.solve(q)
        worst_lo = max(worst_lo, lo - 1e-6 - st.i_eps)
        worst_hi = max(worst_hi, st.i_eps - af.value(q) - 1e-6)
    ok = worst_lo <= 0 and worst_hi <= 0
    record(3, ok, f"max(lower - I_eps) = {worst_lo + 1e-6:.3e}, max(I_eps - I*) = {worst_hi + 1e-6:.3e}")
    assert ok


def test_criterion_04_value_identity(battery):
    V, W, budget, qs = battery
    worst = 0.0
    for q in qs:
        rep = check_el_properties(q, V, W, budget, tol=1e-5, inner_tol=1e-10, shifts=(), probes=[])
        worst = max(worst, rep.values["value_identity"])
    ok = worst <= 1e-5
    record(4, ok, f"max value-identity defect over 100 q = {worst:.3e}")
    assert ok


def test_criterion_05_envelope_gradient(battery):
    V, W, budget, qs = battery
    solver = ProxSolver(V, W, budget, inner_tol=1e-12)
    rng = np.random.default_rng(5)
    t = TWO_PI * np.arange(128) / 128
    worst = 0.0
    step = 1e-4
    for q in qs[:20]:
        j = np.arange(1, 4)
        c = rng.normal(size=(2, 3, 3))
        d = np.cos(np.outer(t, j)) @ c[0] + np.sin(np.outer(t, j)) @ c[1] + rng.normal(size=3)
        d /= h1_norm(d)
        st = solver.solve(q)
        plus = solver.solve(q + step * d, start=st.gamma)
        minus = solver.solve(q - step * d, start=st.gamma)
        fd = (plus.i_eps - minus.i_eps) / (2 * step)
        an = h1_inner(st.grad, d)
        worst = max(worst, abs(fd - an) / max(abs(an), 1e-8))
    ok = worst <= 1e-4
    record(5, ok, f"max relative FD error over 20 (q, d) = {worst:.3e}")
    assert ok


def test_criterion_06_invariance(battery):
    V, W, budget, qs = battery
    solver = ProxSolver(V, W, budget, inner_tol=1e-10)
    rng = np.random.default_rng(6)
    worst = 0.0
    for q in qs[:10]:
        base = solver.solve(q)
        for k in rng.choice(np.arange(1, 128), size=10, replace=False):
            th = k * TWO_PI / 128
            st = solver.solve(shift(q, th))
            worst = max(worst, abs(st.i_eps - base.i_eps))
    ok = worst <= 1e-6
    record(6, ok, f"max |I_eps(shift q) - I_eps(q)| = {worst:.3e}")
    assert ok


# ---------------------------------------------------------------------------
# 7, 8: Z_m geometry and boundary levels


def test_criterion_07_wirtinger():
    rng = np.random.default_rng(7)
    worst = math.inf
    for m in (1, 2, 3):
        disk = ZmDisk(m, 0.5)
        for _ in range(1000):
            worst = min(worst, wirtinger_gap(disk.random_element(rng, 128), m))
    ok = worst >= -1e-10
    record(7, ok, f"min Wirtinger gap over 3000 samples = {worst:.3e}")
    assert ok


def test_criterion_08_boundary_negativity():
    W = make_zero_magnetic()
    lam_hat = estimate_lambda_m(1, 0.5, make_arctan_potential(1.0), W)
    lam = 2 * lam_hat
    rep = verify_negativity(1, 0.5, make_arctan_potential(lam), W, samples=1000, seed=8)
    control = verify_negativity(1, 0.5, make_arctan_potential(0.05), W, samples=1000, seed=8)
    ok = rep.passed and rep.omega == pytest.approx(-math.pi**2) and not control.passed
    record(8, ok, f"lambda=2*Lambda_hat={lam:.4g}: violations={rep.violations}/1000, worst margin={rep.margin:.4f}; "
                  f"control lambda=0.05 violations={control.violations}/1000")
    assert not control.passed
    assert rep.passed


# ---------------------------------------------------------------------------
# 9, 11: descent to a verified orbit


def perturbed_circle(rho, n=256, seed=1, amount=0.1):
    t = TWO_PI * np.arange(n) / n
    rng = np.random.default_rng(seed)
    base = np.stack([rho * np.cos(t), rho * np.sin(t), 0 * t], axis=1)
    pert = np.zeros((n, 3))
    for j in range(4):
        c = rng.normal(size=(2, 2))
        pert[:, :2] += np.outer(np.cos(j * t), c[0]) + np.outer(np.sin(j * t), c[1])
    pert *= amount * rho / np.max(np.linalg.norm(pert, axis=1))
    return PeriodicTrajectory(base + pert)


def _gates(res, V, W):
    o = res.orbit
    q = res.q
    shoot = shooting_defect(q, V, W, 8192)
    return {
        "grad": res.state is not None and o is not None and o.grad_norm <= 1e-7,
        "ode": ode_residual(q, V, W) <= 1e-6,
        "shooting": shoot <= 1e-5,
        "level": ActionFunctional(V, W).value(q.nodes) < 0,
    }, shoot


def test_criterion_09_circular_orbit():
    V = make_arctan_potential(50.0)
    W = make_zero_magnetic()
    rho = circular_orbit_radius(50.0, 1)
    t0 = time.perf_counter()
    res = descend(perturbed_circle(rho), V, W, alpha_bound(V, W), start_tag={"kind": "perturbed"})
    elapsed = time.perf_counter() - t0
    assert res.ok, res.reason
    x = res.q.nodes
    radii = np.linalg.norm(x - x.mean(axis=0), axis=1)
    rad_err = float(np.max(np.abs(radii - rho)))
    gates, shoot = _gates(res, V, W)
    ok = all(gates.values()) and rad_err <= 1e-4 and elapsed < 60
    record(9, ok, f"grad={res.orbit.grad_norm:.2e} radius err={rad_err:.2e} ode={res.orbit.ode_res:.2e} "
                  f"shoot={shoot:.2e} level={res.orbit.level:.6f} time={elapsed:.1f}s")
    assert ok


def test_criterion_11_magnetic_robustness():
    V = make_arctan_potential(50.0)
    W = make_sine_magnetic(0.05)
    rho = circular_orbit_radius(50.0, 1)
    res = descend(perturbed_circle(rho), V, W, alpha_bound(V, W), start_tag={"kind": "perturbed"})
    assert res.ok, res.reason
    gates, shoot = _gates(res, V, W)
    ok = all(gates.values())
    record(11, ok, f"grad={res.orbit.grad_norm:.2e} ode={res.orbit.ode_res:.2e} shoot={shoot:.2e} "
                   f"level={res.orbit.level:.6f}")
    assert ok


# ---------------------------------------------------------------------------
# 10, 12: multi-start census through the CLI, run twice


SOLVE_ARGS = ["solve", "--m", "1", "--lambda", "50", "--magnetic", "none", "--r", "0.5",
              "--starts", "12", "--seed", "42", "--nodes", "256"]


@pytest.fixture(scope="module")
def census(tmp_path_factory):
    out = tmp_path_factory.mktemp("census_a")
    t0 = time.perf_counter()
    code = run(SOLVE_ARGS + ["--out", str(out)])
    return out, code, time.perf_counter() - t0


def test_criterion_10_multiplicity(census):
    out, code, elapsed = census
    rep = json.loads((out / "report.json").read_text())
    orbits = rep["result"]["orbits"]
    V = make_arctan_potential(50.0)
    W = make_zero_magnetic()
    qs = [read_trajectory_csv(out / o["csv"]) for o in orbits]
    gate_ok = all(
        o["grad_norm"] <= 1e-7 and o["ode_residual"] <= 1e-6 and o["shooting_defect"] <= 1e-5 and o["level"] < 0
        and ode_residual(q, V, W) <= 1e-6
        for o, q in zip(orbits, qs)
    )
    sep = min((orbit_distance(qs[i], qs[j]) for i in range(len(qs)) for j in range(len(qs)) if i != j),
              default=math.inf)
    ok = code == 0 and len(orbits) >= 3 and gate_ok and sep > 1e-2 and elapsed < 600
    record(10, ok, f"verified distinct orbits={len(orbits)} min pairwise distance={sep:.3e} "
                   f"gates={'ok' if gate_ok else 'failed'} time={elapsed:.1f}s")
    assert ok


def test_criterion_12_determinism(census, tmp_path):
    out, _, _ = census
    code = run(SOLVE_ARGS + ["--out", str(tmp_path)])
    a = (out / "report.json").read_bytes()
    b = (tmp_path / "report.json").read_bytes()
    csv_same = all((out / p.name).read_bytes() == p.read_bytes() for p in tmp_path.glob("orbit_*.csv"))
    ok = code == 0 and a == b and csv_same
    record(12, ok, f"report.json byte-identical={a == b} ({len(a)} bytes), orbit CSVs identical={csv_same}")
    assert ok
