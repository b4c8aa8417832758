"""The relativistic action I* = Psi* + F* on discrete periodic trajectories.

Psi*(q) = int (1 - sqrt(1 - |q'|^2)), +inf when |q'| > 1 somewhere.
F*(q)   = int (q' . W(q) - V(q)).

Both are evaluated with nodal velocities (spectral) and the trapezoid rule,
so a grid shift by a multiple of h permutes the summands and leaves every
value unchanged.  Gradients here are Euclidean gradients with respect to the
node array; ``trajectory.riesz_map`` turns them into H^1 representers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .potentials import ElectricPotential, MagneticPotential, script_E
from .trajectory import (
    TWO_PI,
    PeriodicTrajectory,
    as_nodes,
    differentiation_matrix,
    h1_norm,
    project_feasible,
    spectral_derivative,
)


@dataclass(frozen=True)
class ActionBreakdown:
    psi: float
    f: float
    total: float
    speed_margin: float  # 1 - sup|q'|; negative when infeasible

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.psi)


class ActionFunctional:
    """I* for fixed potentials, with derivatives up to second order."""

    def __init__(self, V: ElectricPotential, W: MagneticPotential):
        self.V = V
        self.W = W

    # -- values ---------------------------------------------------------

    def psi(self, x: np.ndarray, v: np.ndarray | None = None) -> float:
        v = spectral_derivative(x) if v is None else v
        s2 = np.sum(v * v, axis=1)
        if np.max(s2) > 1.0:
            return math.inf
        h = TWO_PI / x.shape[0]
        # 1 - sqrt(1 - s^2) written without cancellation
        return float(h * np.sum(s2 / (1 + np.sqrt(1 - s2))))

    def f(self, x: np.ndarray, v: np.ndarray | None = None) -> float:
        v = spectral_derivative(x) if v is None else v
        h = TWO_PI / x.shape[0]
        return float(h * (np.sum(v * self.W.value(x)) - np.sum(self.V.value(x))))

    def value(self, x: np.ndarray) -> float:
        v = spectral_derivative(x)
        p = self.psi(x, v)
        return p if math.isinf(p) else p + self.f(x, v)

    # -- first derivatives ---------------------------------------------

    def grad_psi(self, x: np.ndarray) -> np.ndarray:
        v = spectral_derivative(x)
        mom = v / np.sqrt(1 - np.sum(v * v, axis=1, keepdims=True))
        h = TWO_PI / x.shape[0]
        # D is antisymmetric, so D^T applied to the momenta is -D
        return -h * spectral_derivative(mom)

    def grad_f(self, x: np.ndarray) -> np.ndarray:
        v = spectral_derivative(x)
        h = TWO_PI / x.shape[0]
        return h * (script_E(self.W, x, v) - self.V.gradient(x) - spectral_derivative(self.W.value(x)))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.grad_psi(x) + self.grad_f(x)

    # -- second derivatives (dense, node-major ordering 3*i + k) --------

    def hess_psi(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        h = TWO_PI / n
        D = differentiation_matrix(n)
        v = D @ x
        s = np.sqrt(1 - np.sum(v * v, axis=1))
        B = np.eye(3) / s[:, None, None] + v[:, :, None] * v[:, None, :] / (s**3)[:, None, None]
        # H[(i,k),(j,l)] = h sum_n D[n,i] B[n,k,l] D[n,j]
        M = B[:, :, None, :] * D[:, None, :, None]  # (n, k, j, l)
        H = D.T @ M.reshape(n, -1)
        return h * H.reshape(3 * n, 3 * n)

    def hess_f(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        h = TWO_PI / n
        D = differentiation_matrix(n)
        v = D @ x
        J = self.W.jacobian(x)
        S = self.W.second_derivative(x)
        # block (j, n) = D[n, j] J(x_n): derivative of sum_i (Dx)_i . W(x_i)
        M1 = (D.T[:, :, None, None] * J[None, :, :, :]).transpose(0, 2, 1, 3).reshape(3 * n, 3 * n)
        H = M1 + M1.T
        local = np.einsum("nl,nlkp->nkp", v, S) - self.V.hessian_at(x)
        idx = np.arange(n)
        Hb = H.reshape(n, 3, n, 3)
        Hb[idx, :, idx, :] += local
        return h * H

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return self.hess_psi(x) + self.hess_f(x)


# ---------------------------------------------------------------------------
# public functional API on trajectories


def psi_star(q) -> float:
    x = as_nodes(q)
    v = spectral_derivative(x)
    s2 = np.sum(v * v, axis=1)
    if np.max(s2) > 1.0:
        return math.inf
    return float(TWO_PI / x.shape[0] * np.sum(s2 / (1 + np.sqrt(1 - s2))))


def f_star(q, V: ElectricPotential, W: MagneticPotential) -> float:
    return ActionFunctional(V, W).f(as_nodes(q))


def f_star_derivative(q, phi, V: ElectricPotential, W: MagneticPotential) -> float:
    """F*'(q)[phi] = int (E(q, q') - grad V(q)) . phi + W(q) . phi'."""
    x, p = as_nodes(q), as_nodes(phi)
    if x.shape != p.shape:
        raise ValueError("q and phi must share the node grid")
    v = spectral_derivative(x)
    h = TWO_PI / x.shape[0]
    return float(h * (np.sum((script_E(W, x, v) - V.gradient(x)) * p) + np.sum(W.value(x) * spectral_derivative(p))))


def action(q, V: ElectricPotential, W: MagneticPotential) -> ActionBreakdown:
    x = as_nodes(q)
    v = spectral_derivative(x)
    speed = float(np.max(np.linalg.norm(v, axis=1)))
    af = ActionFunctional(V, W)
    p = af.psi(x, v)
    f = af.f(x, v)
    return ActionBreakdown(p, f, p + f, 1.0 - speed)


def default_probes(
    q,
    max_mode: int = 3,
    scales=(1e-3, 1e-1),
    random_count: int = 8,
    seed: int = 0,
) -> list[PeriodicTrajectory]:
    """Axis-aligned Fourier directions 0..max_mode and random low-mode
    perturbations, each at +/- every scale, pulled back into D(Psi*)."""
    x = as_nodes(q)
    n = x.shape[0]
    t = TWO_PI * np.arange(n) / n
    dirs = []
    for j in range(max_mode + 1):
        shapes = [np.ones(n)] if j == 0 else [np.cos(j * t), np.sin(j * t)]
        for shp in shapes:
            for k in range(3):
                d = np.zeros((n, 3))
                d[:, k] = shp
                dirs.append(d)
    rng = np.random.default_rng(seed)
    for _ in range(random_count):
        c = rng.normal(size=(2, max_mode, 3))
        j = np.arange(1, max_mode + 1)
        d = np.cos(np.outer(t, j)) @ c[0] + np.sin(np.outer(t, j)) @ c[1] + rng.normal(size=3)
        dirs.append(d / np.max(np.abs(d)))
    probes = []
    for d in dirs:
        for s in scales:
            for sign in (1.0, -1.0):
                probes.append(project_feasible(x + sign * s * d))
    return probes


def vi_residual(q, V: ElectricPotential, W: MagneticPotential, probes=None, extra_probes=()) -> float:
    """Largest normalised violation of the variational inequality

        Psi*(phi) - Psi*(q) + F*'(q)[phi - q] >= 0

    over a finite probe set; 0 means no probe certifies non-criticality.
    """
    x = as_nodes(q)
    if probes is None:
        probes = default_probes(x)
    probes = list(probes) + list(extra_probes)
    if not probes:
        raise ValueError("probe set is empty")
    psi_q = psi_star(x)
    if math.isinf(psi_q):
        return math.inf
    g = ActionFunctional(V, W).grad_f(x)
    worst = 0.0
    for phi in probes:
        p = as_nodes(phi)
        d = p - x
        nd = h1_norm(d)
        if nd == 0.0:
            continue
        psi_p = psi_star(p)
        if math.isinf(psi_p):
            continue
        viol = psi_q - psi_p - float(np.sum(g * d))
        worst = max(worst, viol / nd)
    return worst
