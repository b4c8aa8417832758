"""Multi-start search for critical orbits of I* at negative levels.

Each start is driven by the proximal-point map q <- gamma(q), which decreases
I* by at least eps^-1 ||q - gamma(q)||^2 per step.  Near a critical point that
map contracts slowly, so once the envelope gradient is small the iterate is
polished by Newton's method on grad I* = 0 (pseudo-inverse over the
symmetry directions).  A candidate is promoted only after the full battery:
envelope gradient, variational-inequality residual, ODE residual, shooting
defect, negative level and exclusion of constant trajectories.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .action import ActionFunctional, default_probes, vi_residual
from .moreau import ConvexityBudget, ProxSolver, RegularizationState, alpha_bound
from .potentials import ElectricPotential, MagneticPotential
from .trajectory import (
    TWO_PI,
    PLANES,
    PeriodicTrajectory,
    ZmDisk,
    as_nodes,
    gamma_m_constant,
    is_fixed_point,
    orbit_distance,
    riesz_map,
    shift,
    spectral_derivative,
    zm_boundary_point,
)
from .verify import ode_residual, shooting_defect

log = logging.getLogger(__name__)


@dataclass
class CriticalOrbit:
    representative: PeriodicTrajectory
    level: float
    grad_norm: float
    vi_res: float
    ode_res: float
    shooting_defect: float
    start_tag: dict
    minimal_period_divisor: int

    @property
    def mean_radius(self) -> float:
        x = self.representative.nodes
        return float(np.mean(np.linalg.norm(x - x.mean(axis=0), axis=1)))

    def record(self) -> dict:
        q = self.representative
        return {
            "start_tag": dict(self.start_tag),
            "level": float(self.level),
            "grad_norm": float(self.grad_norm),
            "vi_residual": float(self.vi_res),
            "ode_residual": float(self.ode_res),
            "shooting_defect": float(self.shooting_defect),
            "minimal_period_divisor": int(self.minimal_period_divisor),
            "mean_radius": self.mean_radius,
            "sup_speed": q.sup_speed,
            "mean": [float(c) for c in q.mean],
        }


@dataclass
class DescentResult:
    status: str  # "converged", "rejected" or "failed"
    reason: str
    q: PeriodicTrajectory
    trace: list
    orbit: CriticalOrbit | None = None
    state: RegularizationState | None = None
    mean_unbounded: bool = False

    @property
    def ok(self) -> bool:
        return self.orbit is not None


@dataclass(frozen=True)
class Tolerances:
    crit: float = 1e-7
    inner: float = 1e-10
    ode: float = 1e-6
    shooting: float = 1e-5
    shooting_steps: int = 8192
    fixed_point: float = 1e-8


def grad_bound(state: RegularizationState, budget: ConvexityBudget) -> float:
    """Upper bound on the exact envelope gradient norm given the inner residual."""
    slack = state.inner_residual / (1 - budget.epsilon * budget.alpha)
    return state.grad_norm + slack


def minimal_period_divisor(q, m: int, tol: float = 1e-8) -> int:
    """Largest n in 2..m+1 with shift(q, 2 pi / n) = q (to tol), else 1."""
    x = as_nodes(q)
    best = 1
    for n in range(2, m + 2):
        if np.max(np.linalg.norm(shift(x, TWO_PI / n).nodes - x, axis=1)) <= tol:
            best = n
    return best


def _grad_norm_star(af: ActionFunctional, x: np.ndarray):
    g = af.gradient(x)
    return math.sqrt(max(float(np.sum(g * riesz_map(g))), 0.0)), g


def newton_polish(x, af: ActionFunctional, tol: float = 1e-13, max_iter: int = 25, rcond: float = 1e-9):
    """Newton on grad I* = 0 with an eigen-pseudo-inverse; merit is the H^1
    norm of the gradient.  Returns (nodes, residual)."""
    x = np.array(as_nodes(x), dtype=float)
    r, g = _grad_norm_star(af, x)
    for _ in range(max_iter):
        if r <= tol:
            break
        w, U = np.linalg.eigh(af.hessian(x))
        keep = np.abs(w) > rcond * np.max(np.abs(w))
        step = -(U[:, keep] @ ((U[:, keep].T @ g.ravel()) / w[keep])).reshape(x.shape)
        t = 1.0
        accepted = False
        while t > 1e-6:
            trial = x + t * step
            v = spectral_derivative(trial)
            if np.max(np.sum(v * v, axis=1)) < 1.0:
                r2, g2 = _grad_norm_star(af, trial)
                if r2 < r:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            break
        x, r, g = trial, r2, g2
    return x, r


def verify_candidate(q, V, W, budget, tol: Tolerances = Tolerances(), start_tag=None, m: int = 1,
                     state: RegularizationState | None = None):
    """Run every promotion gate; returns (orbit or None, list of failure reasons)."""
    x = as_nodes(q)
    traj = q if isinstance(q, PeriodicTrajectory) else PeriodicTrajectory(x)
    reasons = []
    af = ActionFunctional(V, W)
    level = af.value(x)
    if state is None:
        state = ProxSolver(V, W, budget, inner_tol=tol.inner).solve(traj)
    gnorm = grad_bound(state, budget)
    if is_fixed_point(x, tol.fixed_point):
        reasons.append("converged to Fix(S^1)")
    if not level < 0:
        reasons.append(f"level {level:.6g} is not negative")
    if gnorm > tol.crit:
        reasons.append(f"envelope gradient {gnorm:.3e} > {tol.crit:g}")
    if state.cap_active:
        reasons.append("speed cap active at the prox point")
    if reasons and "converged to Fix(S^1)" in reasons:
        return None, reasons
    vi = vi_residual(x, V, W, default_probes(x), extra_probes=[state.gamma])
    if vi > tol.crit:
        reasons.append(f"VI residual {vi:.3e} > {tol.crit:g}")
    try:
        ode = ode_residual(x, V, W)
    except ValueError:
        ode = math.inf
    if ode > tol.ode:
        reasons.append(f"ODE residual {ode:.3e} > {tol.ode:g}")
    shoot = shooting_defect(x, V, W, tol.shooting_steps) if math.isfinite(ode) else math.inf
    if shoot > tol.shooting:
        reasons.append(f"shooting defect {shoot:.3e} > {tol.shooting:g}")
    orbit = CriticalOrbit(traj, level, gnorm, vi, ode, shoot, dict(start_tag or {}),
                          minimal_period_divisor(x, m))
    return (None if reasons else orbit), reasons


def descend(q0, V: ElectricPotential, W: MagneticPotential, budget: ConvexityBudget | None = None,
            tol: Tolerances = Tolerances(), max_iters: int = 300, polish: bool = True,
            polish_threshold: float = 1.0, polish_every: int = 10, mean_bound: float = 1e3,
            start_tag=None, m: int = 1, verify: bool = True) -> DescentResult:
    """Proximal-point descent from a feasible q0, then verification."""
    budget = alpha_bound(V, W) if budget is None else budget
    q = q0 if isinstance(q0, PeriodicTrajectory) else PeriodicTrajectory(q0)
    if q.sup_speed > 1:
        raise ValueError("descend needs a feasible starting trajectory")
    solver = ProxSolver(V, W, budget, inner_tol=tol.inner)
    af = ActionFunctional(V, W)
    trace = []
    last_polish = None
    state = solver.solve(q)
    converged = False
    mean_unbounded = False
    for k in range(max_iters + 1):
        trace.append({"kind": "prox", "action": state.action_gamma, "i_eps": state.i_eps,
                      "grad_norm": state.grad_norm, "mean_norm": float(np.linalg.norm(q.mean))})
        if grad_bound(state, budget) <= tol.crit:
            converged = True
            break
        if np.linalg.norm(q.mean) > mean_bound:
            mean_unbounded = True
            break
        if k == max_iters:
            break
        if polish and state.grad_norm <= polish_threshold and (
            last_polish is None or k - last_polish >= polish_every
        ):
            last_polish = k
            x, r = newton_polish(state.gamma.nodes, af)
            if r <= 1e-12:
                cand = PeriodicTrajectory(x)
                cstate = solver.solve(cand)
                if not cstate.cap_active and grad_bound(cstate, budget) <= tol.crit:
                    q, state = cand, cstate
                    trace.append({"kind": "polish", "action": cstate.action_gamma, "i_eps": cstate.i_eps,
                                  "grad_norm": cstate.grad_norm, "mean_norm": float(np.linalg.norm(q.mean))})
                    converged = True
                    break
        q = state.gamma
        state = solver.solve(q)

    if mean_unbounded:
        return DescentResult("failed", "trajectory means grow without bound", q, trace, None, state, True)
    if not converged:
        return DescentResult("failed", f"no convergence within {max_iters} proximal steps "
                             f"(grad {state.grad_norm:.3e})", q, trace, None, state)
    if not verify:
        return DescentResult("converged", "", q, trace, None, state)
    orbit, reasons = verify_candidate(q, V, W, budget, tol, start_tag, m, state)
    if orbit is None:
        return DescentResult("rejected", "; ".join(reasons), q, trace, None, state)
    return DescentResult("converged", "", q, trace, orbit, state)


def monotone_violation(trace) -> float:
    """Largest increase of I* between consecutive proximal steps (polish excluded)."""
    worst = -math.inf
    prev = None
    for e in trace:
        if e["kind"] != "prox":
            prev = None
            continue
        if prev is not None:
            worst = max(worst, e["action"] - prev)
        prev = e["action"]
    return worst


# ---------------------------------------------------------------------------
# level estimates on the boundary of D in Z_m


def omega_level(V: ElectricPotential, W: MagneticPotential) -> float:
    return -TWO_PI * (V.l_star + W.c0)


def estimate_lambda_m(m: int, r: float, V: ElectricPotential, W: MagneticPotential) -> float:
    """Threshold on the quadratic-floor coefficient above which
    (m^2 - lam) ||q||_L2^2 + 2 pi c0 < omega on the boundary of D, using
    ||q||_L2^2 >= gamma_m^2 r^2 there."""
    g = gamma_m_constant(m)
    return m * m + (V.l_star + 2 * W.c0) / (g * g * r * r)


def lambda_thresholds(m: int, r: float, V: ElectricPotential, W: MagneticPotential) -> dict:
    """Both readings of the embedding-constant chain: squared (used) and linear."""
    g = gamma_m_constant(m)
    return {
        "squared": estimate_lambda_m(m, r, V, W),
        "linear": m * m + (V.l_star + 2 * W.c0) / (g * r * r),
        "gamma_m": g,
    }


@dataclass
class NegativityReport:
    m: int
    r: float
    samples: int
    omega: float
    max_level: float
    violations: int
    lambda_floor: float
    lambda_hat: float
    r0: float

    @property
    def margin(self) -> float:
        return self.omega - self.max_level

    @property
    def passed(self) -> bool:
        return self.violations == 0

    @property
    def preconditions(self) -> dict:
        return {"floor_at_least_lambda_hat": self.lambda_floor >= self.lambda_hat,
                "r_below_min_r0_1": self.r < min(self.r0, 1.0)}

    def record(self) -> dict:
        return {"m": self.m, "r": self.r, "samples": self.samples, "omega": self.omega,
                "max_level": self.max_level, "margin": self.margin, "violations": self.violations,
                "lambda_floor": self.lambda_floor, "lambda_hat": self.lambda_hat, "r0": self.r0,
                "preconditions": self.preconditions}


def verify_negativity(m: int, r: float, V: ElectricPotential, W: MagneticPotential, samples: int = 1000,
                      seed: int = 0, n: int = 256) -> NegativityReport:
    """Sample the boundary of D and count points with I*(q) >= omega."""
    disk = ZmDisk(m, r)
    rng = np.random.default_rng(seed)
    af = ActionFunctional(V, W)
    omega = omega_level(V, W)
    levels = np.array([af.value(disk.sample_boundary(rng, n).nodes) for _ in range(samples)])
    lam_floor, r0 = V.quadratic_floor
    lam_hat = estimate_lambda_m(m, r, V, W)
    if lam_floor < lam_hat:
        log.warning("quadratic floor %.4g is below the threshold %.4g", lam_floor, lam_hat)
    return NegativityReport(m, r, samples, omega, float(levels.max()), int(np.sum(levels >= omega)),
                            lam_floor, lam_hat, r0)


# ---------------------------------------------------------------------------
# multi-start census


@dataclass
class OrbitSet:
    orbits: list
    metadata: dict
    failures: list = field(default_factory=list)

    def __len__(self):
        return len(self.orbits)

    def record(self) -> dict:
        return {"metadata": self.metadata, "orbits": [o.record() for o in self.orbits],
                "failures": self.failures}


def _tag_key(tag: dict):
    return tuple(sorted((k, str(v)) for k, v in tag.items()))


def dedup(orbits, sep_tol: float = 1e-2) -> list:
    """Keep the lowest-level representative of each S^1-orbit."""
    kept = []
    for o in sorted(orbits, key=lambda o: (o.level, _tag_key(o.start_tag))):
        if all(orbit_distance(k.representative, o.representative) > sep_tol for k in kept):
            kept.append(o)
    return kept


def start_pool(m: int, r: float, extra_random_starts: int, seed: int, n: int = 256):
    """3m circles (plane x mode) followed by random points of the boundary of D."""
    pool = []
    for plane in PLANES:
        for j in range(1, m + 1):
            pool.append(({"kind": "plane", "plane": plane, "j": j}, zm_boundary_point(m, r, plane, j, n)))
    disk = ZmDisk(m, r)
    seeds = np.random.SeedSequence(seed).spawn(extra_random_starts)
    for i, ss in enumerate(seeds):
        pool.append(({"kind": "random", "index": i, "seed": seed}, disk.sample_boundary(np.random.default_rng(ss), n)))
    return pool


def multi_start(m: int, V: ElectricPotential, W: MagneticPotential, r: float = 0.5,
                extra_random_starts: int = 9, seed: int = 42, n: int = 256,
                budget: ConvexityBudget | None = None, tol: Tolerances = Tolerances(),
                sep_tol: float = 1e-2, max_iters: int = 300) -> OrbitSet:
    budget = alpha_bound(V, W) if budget is None else budget
    lam_hat = estimate_lambda_m(m, r, V, W)
    if V.quadratic_floor[0] < lam_hat:
        log.warning("lambda floor %.4g below the estimated threshold %.4g; multiplicity is not guaranteed",
                    V.quadratic_floor[0], lam_hat)
    found = []
    failures = []
    for tag, q0 in start_pool(m, r, extra_random_starts, seed, n):
        res = descend(q0, V, W, budget, tol, max_iters=max_iters, start_tag=tag, m=m)
        if res.ok:
            found.append(res.orbit)
        else:
            failures.append({"start_tag": tag, "status": res.status, "reason": res.reason})
        log.info("start %s: %s %s", tag, res.status, res.reason)
    orbits = dedup(found, sep_tol)
    meta = {
        "m": m,
        "lambda": V.params.get("lambda"),
        "lambda_floor": V.quadratic_floor[0],
        "r": r,
        "nodes": n,
        "dim_Zm": 6 * m,
        "index_boundary": 3 * m,
        "lambda_hat": lam_hat,
        "lambda_thresholds": lambda_thresholds(m, r, V, W),
        "omega": omega_level(V, W),
        "epsilon": budget.epsilon,
        "alpha": budget.alpha,
        "starts": 3 * m + extra_random_starts,
        "verified_before_dedup": len(found),
        "seed": seed,
        "sep_tol": sep_tol,
    }
    return OrbitSet(orbits, meta, failures)
