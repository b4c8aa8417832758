"""Electric and magnetic potentials, the Lorentz force and sampled consistency checks.

All potentials are autonomous and vectorised: points are arrays whose last
axis has length 3.  Jacobians follow the convention ``J[..., l, k] = dW_l/dq_k``
and second derivatives ``S[..., l, k, p] = d^2 W_l / dq_k dq_p``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ElectricPotential:
    """Scalar potential V with the global constants the convexity and level
    estimates consume.

    ``quadratic_floor`` is ``(lam, r0)`` meaning ``V(q) >= lam |q|^2`` for
    ``|q| <= r0``.  ``hessian_bound`` is the sup of the spectral norm of V''.
    """

    value: ArrayFn
    gradient: ArrayFn
    hessian_bound: float
    l_star: float
    quadratic_floor: tuple[float, float]
    hessian: Optional[ArrayFn] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def sup_value(self) -> float:
        # V is positive and tends to l_star; every shipped potential increases radially
        return self.l_star

    def hessian_at(self, q: np.ndarray, step: float = 1e-5) -> np.ndarray:
        """Hessian at ``q``; central differences of the gradient when no closed form."""
        if self.hessian is not None:
            return self.hessian(q)
        q = np.asarray(q, dtype=float)
        out = np.empty(q.shape + (3,))
        for k in range(3):
            e = np.zeros(3)
            e[k] = step
            out[..., :, k] = (self.gradient(q + e) - self.gradient(q - e)) / (2 * step)
        return 0.5 * (out + np.swapaxes(out, -1, -2))


@dataclass(frozen=True)
class MagneticPotential:
    """Vector potential W with bounds c0 = sup|W|, c1 = sup||W'||, c2 = sup||W''||."""

    value: ArrayFn
    jacobian: ArrayFn
    second_derivative: ArrayFn
    c0: float
    c1: float
    c2: float
    name: str = "custom"
    params: dict = field(default_factory=dict)


def lorentz_force(V: ElectricPotential, W: MagneticPotential, q, v, charge_to_mass: float = 1.0):
    """E + v x B with E = -grad V and B = curl W (autonomous fields, c = 1)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    J = W.jacobian(q)
    B = np.stack(
        [
            J[..., 2, 1] - J[..., 1, 2],
            J[..., 0, 2] - J[..., 2, 0],
            J[..., 1, 0] - J[..., 0, 1],
        ],
        axis=-1,
    )
    return charge_to_mass * (-V.gradient(q) + np.cross(v, B))


def script_E(W: MagneticPotential, q, p):
    """Component i is p . dW/dq_i, i.e. J(q)^T p."""
    J = W.jacobian(np.asarray(q, dtype=float))
    return np.einsum("...lk,...l->...k", J, np.asarray(p, dtype=float))


# ---------------------------------------------------------------------------
# built-in potentials


def _arctan_floor_radius(lam: float) -> float:
    # arctan(lam r^2) >= (lam/2) r^2  <=>  arctan(x) >= x/2 with x = lam r^2
    g = lambda r: np.arctan(lam * r * r) - 0.5 * lam * r * r
    hi = 2.0 / np.sqrt(lam)
    lo = 1e-3 * hi
    return brentq(g, lo, hi, xtol=1e-15, rtol=1e-15)


def _radial_hessian_bound(d1: Callable, d2: Callable, r_max: float, samples: int = 20001) -> float:
    """sup over r of max(|f''(r)|, |f'(r)/r|) for a radial profile f."""
    r = np.concatenate([[0.0], np.geomspace(1e-8 * r_max, r_max, samples)])
    return float(np.max(np.maximum(np.abs(d2(r)), np.abs(d1(r)))))


def make_arctan_potential(lam: float) -> ElectricPotential:
    """V(q) = arctan(lam |q|^2); l* = pi/2 and V >= (lam/2)|q|^2 near 0."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    lam = float(lam)

    def value(q):
        q = np.asarray(q, dtype=float)
        return np.arctan(lam * np.sum(q * q, axis=-1))

    def gradient(q):
        q = np.asarray(q, dtype=float)
        s = np.sum(q * q, axis=-1)[..., None]
        return 2 * lam * q / (1 + (lam * s) ** 2)

    def hessian(q):
        q = np.asarray(q, dtype=float)
        s = np.sum(q * q, axis=-1)[..., None, None]
        den = 1 + (lam * s) ** 2
        qq = q[..., :, None] * q[..., None, :]
        return 2 * lam / den * np.eye(3) - 8 * lam**3 * s * qq / den**2

    # radial profile f(r) = arctan(lam r^2): f'/r = 2 lam/(1+x^2), f'' = 2 lam (1-3x^2)/(1+x^2)^2
    d1 = lambda r: 2 * lam / (1 + (lam * r * r) ** 2)
    d2 = lambda r: 2 * lam * (1 - 3 * (lam * r * r) ** 2) / (1 + (lam * r * r) ** 2) ** 2
    h_v = _radial_hessian_bound(d1, d2, r_max=100.0 / np.sqrt(lam))
    return ElectricPotential(
        value=value,
        gradient=gradient,
        hessian=hessian,
        hessian_bound=h_v,
        l_star=np.pi / 2,
        quadratic_floor=(lam / 2, _arctan_floor_radius(lam)),
        name="arctan",
        params={"lambda": lam},
    )


def make_zero_magnetic() -> MagneticPotential:
    def value(q):
        return np.zeros(np.shape(q))

    def jacobian(q):
        return np.zeros(np.shape(q) + (3,))

    def second(q):
        return np.zeros(np.shape(q) + (3, 3))

    return MagneticPotential(value, jacobian, second, 0.0, 0.0, 0.0, name="none")


def make_sine_magnetic(kappa: float) -> MagneticPotential:
    """W(q) = kappa (sin q2, sin q3, sin q1)."""
    kappa = float(kappa)

    def value(q):
        q = np.asarray(q, dtype=float)
        return kappa * np.sin(q[..., [1, 2, 0]])

    def jacobian(q):
        q = np.asarray(q, dtype=float)
        c = np.cos(q)
        J = np.zeros(q.shape + (3,))
        J[..., 0, 1] = kappa * c[..., 1]
        J[..., 1, 2] = kappa * c[..., 2]
        J[..., 2, 0] = kappa * c[..., 0]
        return J

    def second(q):
        q = np.asarray(q, dtype=float)
        s = np.sin(q)
        S = np.zeros(q.shape + (3, 3))
        S[..., 0, 1, 1] = -kappa * s[..., 1]
        S[..., 1, 2, 2] = -kappa * s[..., 2]
        S[..., 2, 0, 0] = -kappa * s[..., 0]
        return S

    a = abs(kappa)
    # |W| <= kappa sqrt(3); J is kappa times a scaled permutation; |W''[u,v]|^2 <= kappa^2 sum u_k^2 v_k^2
    return MagneticPotential(
        value, jacobian, second, c0=a * np.sqrt(3), c1=a, c2=a, name="sine", params={"kappa": kappa}
    )


def electric_by_name(name: str, **params) -> ElectricPotential:
    if name == "arctan":
        return make_arctan_potential(params["lambda"])
    raise ValueError(f"unknown electric potential {name!r}")


def magnetic_by_name(name: str, **params) -> MagneticPotential:
    if name == "none":
        return make_zero_magnetic()
    if name == "sine":
        return make_sine_magnetic(params["kappa"])
    raise ValueError(f"unknown magnetic potential {name!r}")


# ---------------------------------------------------------------------------
# sampled consistency checks


@dataclass
class ConsistencyReport:
    violations: dict
    tolerances: dict

    @property
    def failed(self) -> list[str]:
        return [k for k, v in self.violations.items() if v > self.tolerances[k]]

    @property
    def passed(self) -> bool:
        return not self.failed


def _ball(rng, n, radius):
    x = rng.normal(size=(n, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * radius * rng.uniform(size=(n, 1)) ** (1 / 3)


def _fd_gradient(f, q, step):
    cols = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = step
        cols.append((f(q + e) - f(q - e)) / (2 * step))
    return np.stack(cols, axis=-1)


def _bilinear_norm(S, rng, directions: int = 256):
    """Lower estimate of sup |S[u, v]| over unit u, v, per sample.

    Uses sup_w sigma_max(sum_l w_l S_l) over random unit w plus the axes.
    """
    w = rng.normal(size=(directions, 3))
    w = np.concatenate([np.eye(3), w / np.linalg.norm(w, axis=1, keepdims=True)])
    M = np.einsum("dl,nlkp->ndkp", w, S)
    return np.max(np.linalg.norm(M, ord=2, axis=(2, 3)), axis=1)


def check_consistency(
    V: ElectricPotential,
    W: MagneticPotential,
    sample_count: int = 100,
    seed: int = 7,
    radius: float = 10.0,
    far_radius: float = 100.0,
    far_tol: float = 1e-3,
    fd_step: float = 1e-4,
    fd_rtol: float = 1e-5,
) -> ConsistencyReport:
    """Falsification checks of the declared potential data on random samples.

    Violations are measured as (observed excess) so that a check passes when
    its entry is <= the matching tolerance.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    pts = _ball(rng, sample_count, radius)
    v = {}
    tol = {}

    zero = np.zeros(3)
    v["origin"] = float(abs(V.value(zero)) + np.linalg.norm(V.gradient(zero)))
    tol["origin"] = 1e-14

    v["positivity"] = float(max(0.0, -np.min(V.value(pts[np.linalg.norm(pts, axis=1) > 0]))))
    tol["positivity"] = 0.0

    lam, r0 = V.quadratic_floor
    near = _ball(rng, sample_count, r0)
    v["quadratic_floor"] = float(max(0.0, np.max(lam * np.sum(near**2, axis=1) - V.value(near))))
    tol["quadratic_floor"] = 1e-12

    shell = rng.normal(size=(sample_count, 3))
    shell *= (far_radius * rng.uniform(1, 2, size=(sample_count, 1))) / np.linalg.norm(
        shell, axis=1, keepdims=True
    )
    v["far_field"] = float(np.max(np.abs(V.value(shell) - V.l_star)))
    tol["far_field"] = far_tol

    g = V.gradient(pts)
    fd = np.stack([_fd_gradient(V.value, p, fd_step) for p in pts])
    v["gradient_fd"] = float(np.max(np.linalg.norm(fd - g, axis=1) / np.maximum(1.0, np.linalg.norm(g, axis=1))))
    tol["gradient_fd"] = fd_rtol

    # curvature peaks near the well, so include the small-radius samples
    hess = np.stack([V.hessian_at(p) for p in np.concatenate([pts, near, [zero]])])
    v["hessian_bound"] = float(max(0.0, np.max(np.linalg.norm(hess, ord=2, axis=(1, 2))) - V.hessian_bound))
    tol["hessian_bound"] = 1e-9

    w = W.value(pts)
    J = W.jacobian(pts)
    S = W.second_derivative(pts)
    v["W_bound"] = float(max(0.0, np.max(np.linalg.norm(w, axis=1)) - W.c0))
    v["Wprime_bound"] = float(max(0.0, np.max(np.linalg.norm(J, ord=2, axis=(1, 2))) - W.c1))
    v["Wsecond_bound"] = float(max(0.0, np.max(_bilinear_norm(S, rng)) - W.c2))
    for k in ("W_bound", "Wprime_bound", "Wsecond_bound"):
        tol[k] = 1e-12

    Jfd = np.stack([_fd_gradient(W.value, p, fd_step) for p in pts])
    v["jacobian_fd"] = float(np.max(np.linalg.norm(Jfd - J, axis=(1, 2)) / np.maximum(1.0, np.linalg.norm(J, axis=(1, 2)))))
    tol["jacobian_fd"] = fd_rtol
    return ConsistencyReport(v, tol)
