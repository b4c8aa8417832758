"""The periodic problem (phi(q'))' = mean(q) + f with phi(v) = v / sqrt(1 - |v|^2).

Integrating over a period forces mean(q) = -mean(f).  Writing
phi(q') = P0 + F with F' = mean(q) + f reduces the boundary value problem to
the three-dimensional equation

    G(P0) = mean_t phi_inv(P0 + F(t)) = 0,

whose Jacobian mean_t Dphi_inv is symmetric positive definite: G is the
gradient of the strictly convex P0 -> mean_t sqrt(1 + |P0 + F|^2), so the root
is unique and damped Newton finds it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .trajectory import (
    TWO_PI,
    PeriodicTrajectory,
    as_nodes,
    h1_norm,
    spectral_antiderivative,
)


class SubproblemNotConverged(RuntimeError):
    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def phi(v):
    v = np.asarray(v, dtype=float)
    s2 = np.sum(v * v, axis=-1, keepdims=True)
    if np.any(s2 >= 1.0):
        raise ValueError("phi is defined only for |v| < 1")
    return v / np.sqrt(1 - s2)


def phi_inv(p):
    p = np.asarray(p, dtype=float)
    return p / np.sqrt(1 + np.sum(p * p, axis=-1, keepdims=True))


def dphi_inv(p):
    """Jacobian (I - p p^T / (1 + |p|^2)) / sqrt(1 + |p|^2)."""
    p = np.asarray(p, dtype=float)
    w = 1 + np.sum(p * p, axis=-1)[..., None, None]
    return (np.eye(3) - p[..., :, None] * p[..., None, :] / w) / np.sqrt(w)


@dataclass(frozen=True)
class SubproblemSolution:
    q: PeriodicTrajectory
    momentum_offset: np.ndarray
    mean_check: float
    ode_residual: float
    newton_iterations: int
    reduced_residual: float


def solve_subproblem(f, tol: float = 1e-12, p0_start=None, max_iter: int = 100) -> SubproblemSolution:
    fn = as_nodes(f)
    c = -fn.mean(axis=0)
    F = spectral_antiderivative(fn)
    P = np.zeros(3) if p0_start is None else np.asarray(p0_start, dtype=float).copy()

    def G(P):
        return phi_inv(P + F).mean(axis=0)

    g = G(P)
    res = float(np.linalg.norm(g))
    it = 0
    while res > tol:
        if it >= max_iter:
            raise SubproblemNotConverged(
                f"Newton on the momentum offset stalled at |G|={res:.3e} after {it} iterations", res, it
            )
        Jm = dphi_inv(P + F).mean(axis=0)
        step = -np.linalg.solve(Jm, g)
        t = 1.0
        while True:
            trial = P + t * step
            gt = G(trial)
            rt = float(np.linalg.norm(gt))
            if rt < res or t < 1e-12:
                break
            t *= 0.5
        if rt >= res:
            raise SubproblemNotConverged(f"line search failed at |G|={res:.3e}", res, it)
        P, g, res = trial, gt, rt
        it += 1

    v = phi_inv(P + F)
    # v has mean G(P) ~ 0; the antiderivative only sees its non-constant part
    q = PeriodicTrajectory(spectral_antiderivative(v) + c)
    return SubproblemSolution(
        q=q,
        momentum_offset=P,
        mean_check=float(np.linalg.norm(q.mean + fn.mean(axis=0))),
        ode_residual=subproblem_residual(q, fn),
        newton_iterations=it,
        reduced_residual=res,
    )


def subproblem_residual(q, f) -> float:
    """max_i |(p_{i+1/2} - p_{i-1/2}) / h - mean(q) - f_i| with element momenta
    p_{i+1/2} = phi((q_{i+1} - q_i) / h)."""
    x = as_nodes(q)
    fn = as_nodes(f)
    n = x.shape[0]
    h = TWO_PI / n
    d = (np.roll(x, -1, axis=0) - x) / h
    if np.max(np.sum(d * d, axis=1)) >= 1.0:
        raise ValueError("subproblem_residual needs chord speeds below 1")
    p = phi(d)
    dp = (p - np.roll(p, 1, axis=0)) / h
    return float(np.max(np.linalg.norm(dp - x.mean(axis=0) - fn, axis=1)))


def subproblem_vi_residual(q, f, probes) -> float:
    """Normalised violation of the variational inequality characterising q_f:

        Psi*(phi) - Psi*(q) + 2 pi mean(q) . (mean(phi) - mean(q)) + int f . (phi - q) >= 0.
    """
    from .action import psi_star

    x = as_nodes(q)
    fn = as_nodes(f)
    h = TWO_PI / x.shape[0]
    psi_q = psi_star(x)
    qbar = x.mean(axis=0)
    worst = 0.0
    for ph in probes:
        p = as_nodes(ph)
        d = p - x
        nd = h1_norm(d)
        psi_p = psi_star(p)
        if nd == 0.0 or math.isinf(psi_p):
            continue
        lin = TWO_PI * float(qbar @ d.mean(axis=0)) + h * float(np.sum(fn * d))
        worst = max(worst, (psi_q - psi_p - lin) / nd)
    return worst
