"""Discrete 2*pi-periodic curves in R^3.

A trajectory is stored by its values at the nodes t_i = 2*pi*i/N.  Velocities
are the derivative of the trigonometric interpolant through the nodes
(spectral differentiation with the Nyquist mode dropped), so band-limited
curves are differentiated exactly and the differentiation matrix is real and
antisymmetric.  Integrals over a period use the trapezoid rule on the nodes,
which is spectrally accurate for smooth periodic integrands.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

TWO_PI = 2 * np.pi
PLANES = {"xy": (0, 1), "yz": (1, 2), "zx": (2, 0)}


def _wavenumbers(n: int) -> np.ndarray:
    k = np.arange(n // 2 + 1, dtype=float)
    if n % 2 == 0:
        k[-1] = 0.0  # Nyquist mode has no real derivative
    return k


def spectral_derivative(values: np.ndarray) -> np.ndarray:
    """d/dt of the trigonometric interpolant, sampled at the nodes (axis 0)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    c = np.fft.rfft(values, axis=0)
    k = _wavenumbers(n).reshape((-1,) + (1,) * (values.ndim - 1))
    return np.fft.irfft(1j * k * c, n=n, axis=0)


def spectral_antiderivative(values: np.ndarray) -> np.ndarray:
    """Zero-mean periodic antiderivative of the non-constant part of ``values``."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    c = np.fft.rfft(values, axis=0)
    k = _wavenumbers(n)
    inv = np.zeros_like(k, dtype=complex)
    inv[k > 0] = 1.0 / (1j * k[k > 0])
    inv = inv.reshape((-1,) + (1,) * (values.ndim - 1))
    return np.fft.irfft(inv * c, n=n, axis=0)


@lru_cache(maxsize=16)
def differentiation_matrix(n: int) -> np.ndarray:
    D = spectral_derivative(np.eye(n))
    D = 0.5 * (D - D.T)  # exact antisymmetry, removes roundoff
    D.setflags(write=False)
    return D


def as_nodes(q) -> np.ndarray:
    if isinstance(q, PeriodicTrajectory):
        return q.nodes
    arr = np.asarray(q, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) array of nodes, got shape {arr.shape}")
    return arr


class PeriodicTrajectory:
    """Immutable nodal representation of a 2*pi-periodic curve in R^3."""

    def __init__(self, nodes):
        arr = np.array(nodes, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 2:
            raise ValueError(f"nodes must have shape (N, 3) with N >= 2, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("nodes must be finite")
        arr.setflags(write=False)
        self.nodes = arr

    @classmethod
    def from_function(cls, fn, n: int = 256) -> "PeriodicTrajectory":
        """Sample ``fn(t)``, which may return shape (N, 3) or (3, N)."""
        t = TWO_PI * np.arange(n) / n
        vals = np.asarray(fn(t), dtype=float)
        if vals.shape == (3, n) and n != 3:
            vals = vals.T
        return cls(vals)

    @classmethod
    def constant(cls, c, n: int = 256) -> "PeriodicTrajectory":
        return cls(np.tile(np.asarray(c, dtype=float), (n, 1)))

    @property
    def node_count(self) -> int:
        return self.nodes.shape[0]

    @property
    def h(self) -> float:
        return TWO_PI / self.node_count

    @property
    def times(self) -> np.ndarray:
        return TWO_PI * np.arange(self.node_count) / self.node_count

    @cached_property
    def velocity(self) -> np.ndarray:
        v = spectral_derivative(self.nodes)
        v.setflags(write=False)
        return v

    @cached_property
    def mean(self) -> np.ndarray:
        return self.nodes.mean(axis=0)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.nodes, axis=1)))

    @property
    def sup_speed(self) -> float:
        return float(np.max(np.linalg.norm(self.velocity, axis=1)))

    @property
    def norm_1inf(self) -> float:
        return self.sup_norm + self.sup_speed

    def __len__(self):
        return self.node_count

    def __repr__(self):
        return f"PeriodicTrajectory(N={self.node_count}, sup_speed={self.sup_speed:.4g})"

    def __add__(self, other):
        other = other.nodes if isinstance(other, PeriodicTrajectory) else other
        return PeriodicTrajectory(self.nodes + other)

    def __sub__(self, other):
        other = other.nodes if isinstance(other, PeriodicTrajectory) else other
        return PeriodicTrajectory(self.nodes - other)

    def __mul__(self, s):
        return PeriodicTrajectory(self.nodes * s)

    __rmul__ = __mul__


def _check_same_grid(q, r):
    if q.shape[0] != r.shape[0]:
        raise ValueError(f"node counts differ: {q.shape[0]} vs {r.shape[0]}")


def h1_inner(q, r) -> float:
    """(q|r)_{1,2} = int q.r + q'.r' by the trapezoid rule."""
    q, r = as_nodes(q), as_nodes(r)
    _check_same_grid(q, r)
    h = TWO_PI / q.shape[0]
    return float(h * (np.sum(q * r) + np.sum(spectral_derivative(q) * spectral_derivative(r))))


def h1_norm(q) -> float:
    return math.sqrt(max(h1_inner(q, q), 0.0))


def l2_norm(q) -> float:
    q = as_nodes(q)
    return float(np.sqrt(TWO_PI / q.shape[0] * np.sum(q * q)))


def riesz_map(g: np.ndarray) -> np.ndarray:
    """Solve h (I - D^2) x = g, i.e. turn a Euclidean gradient into its H^1 representer."""
    n = g.shape[0]
    h = TWO_PI / n
    k = _wavenumbers(n)
    c = np.fft.rfft(g, axis=0) / (h * (1 + k**2))[:, None]
    return np.fft.irfft(c, n=n, axis=0)


def sup_speed(q) -> float:
    return float(np.max(np.linalg.norm(spectral_derivative(as_nodes(q)), axis=1)))


def feasible(q, slack: float = 0.0) -> bool:
    if not 0 <= slack < 1:
        raise ValueError("slack must lie in [0, 1)")
    return sup_speed(q) <= 1 - slack


def project_feasible(q, slack: float = 0.0) -> PeriodicTrajectory:
    """Shrink q about its mean by the largest s in (0, 1] that makes it feasible."""
    if not 0 <= slack < 1:
        raise ValueError("slack must lie in [0, 1)")
    nodes = as_nodes(q)
    speed = sup_speed(nodes)
    if speed <= 1 - slack:
        return q if isinstance(q, PeriodicTrajectory) else PeriodicTrajectory(nodes)
    s = (1 - slack) / speed
    m = nodes.mean(axis=0)
    out = m + s * (nodes - m)
    # guard the last ulp so feasibility holds exactly
    while sup_speed(out) > 1 - slack:
        s = np.nextafter(s, 0)
        out = m + s * (nodes - m)
    return PeriodicTrajectory(out)


def _fourier_shift(nodes: np.ndarray, theta: float) -> np.ndarray:
    n = nodes.shape[0]
    c = np.fft.rfft(nodes, axis=0)
    k = np.arange(n // 2 + 1)
    phase = np.exp(1j * k * theta)
    if n % 2 == 0:
        phase[-1] = np.cos(k[-1] * theta)
    return np.fft.irfft(c * phase[:, None], n=n, axis=0)


def shift(q, theta: float) -> PeriodicTrajectory:
    """(L(theta) q)(t) = q(t + theta).

    Grid multiples of h are exact index rolls; other shifts go through the
    Fourier interpolant.
    """
    nodes = as_nodes(q)
    n = nodes.shape[0]
    theta = float(theta) % TWO_PI
    steps = theta * n / TWO_PI
    k = round(steps)
    if abs(steps - k) < 1e-9:
        return PeriodicTrajectory(np.roll(nodes, -(k % n), axis=0))
    return PeriodicTrajectory(_fourier_shift(nodes, theta))


def _sup_dist(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(a - b, axis=1)))


def orbit_distance(q, r, tol: float = 1e-6) -> float:
    """C-norm distance from r to the S^1-orbit of q.

    Brute force over the N grid shifts, then golden-section refinement on
    the neighbouring interval until it is shorter than ``tol``.
    """
    qn, rn = as_nodes(q), as_nodes(r)
    _check_same_grid(qn, rn)
    n = qn.shape[0]
    h = TWO_PI / n
    grid = np.array([_sup_dist(np.roll(qn, -k, axis=0), rn) for k in range(n)])
    k = int(np.argmin(grid))
    best = grid[k]
    c = np.fft.rfft(qn, axis=0)
    kk = np.arange(n // 2 + 1)

    def f(theta):
        phase = np.exp(1j * kk * theta)
        if n % 2 == 0:
            phase[-1] = np.cos(kk[-1] * theta)
        return _sup_dist(np.fft.irfft(c * phase[:, None], n=n, axis=0), rn)

    invphi = (math.sqrt(5) - 1) / 2
    a, b = k * h - h, k * h + h
    x1, x2 = b - invphi * (b - a), a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
    return float(min(best, f1, f2))


def is_fixed_point(q, tol: float) -> bool:
    nodes = as_nodes(q)
    return _sup_dist(nodes, nodes.mean(axis=0)) <= tol


# ---------------------------------------------------------------------------
# Fourier view and the subspaces Z_m


@dataclass(frozen=True)
class FourierTrajectory:
    """q(t) = a0 + sum_j cos(jt) a_j + sin(jt) b_j, j = 1..M."""

    a0: np.ndarray
    a: np.ndarray  # (M, 3)
    b: np.ndarray  # (M, 3)

    @property
    def mode_count(self) -> int:
        return self.a.shape[0]

    @classmethod
    def from_trajectory(cls, q, mode_count: int) -> "FourierTrajectory":
        nodes = as_nodes(q)
        n = nodes.shape[0]
        if not 0 <= mode_count < n / 2:
            raise ValueError("mode_count must satisfy M < N/2")
        c = np.fft.rfft(nodes, axis=0) / n
        return cls(c[0].real.copy(), 2 * c[1 : mode_count + 1].real, -2 * c[1 : mode_count + 1].imag)

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        j = np.arange(1, self.mode_count + 1)
        ang = np.multiply.outer(t, j)
        return self.a0 + np.cos(ang) @ self.a + np.sin(ang) @ self.b

    def to_trajectory(self, n: int = 256) -> PeriodicTrajectory:
        return PeriodicTrajectory(self.evaluate(TWO_PI * np.arange(n) / n))


@dataclass(frozen=True)
class ZmDisk:
    """Ball of radius r in Z_m (zero-mean trigonometric polynomials of degree <= m)
    for the norm ||q||_inf + ||q'||_inf."""

    m: int
    r: float

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be a positive integer")
        if not 0 < self.r < 1:
            raise ValueError("radius must lie in (0, 1)")

    @property
    def dim(self) -> int:
        return 6 * self.m

    @property
    def index_of_boundary(self) -> int:
        return 3 * self.m

    def random_element(self, rng, n: int = 256) -> PeriodicTrajectory:
        coeffs = rng.normal(size=(2, self.m, 3))
        return FourierTrajectory(np.zeros(3), coeffs[0], coeffs[1]).to_trajectory(n)

    def sample_boundary(self, rng, n: int = 256) -> PeriodicTrajectory:
        q = self.random_element(rng, n)
        return q * (self.r / q.norm_1inf)


def zm_boundary_point(m: int, r: float, plane: str = "xy", j: int = 1, n: int = 256) -> PeriodicTrajectory:
    """Circle rho (cos jt e_a + sin jt e_b) in a coordinate plane with ||q||_{1,inf} = r."""
    if plane not in PLANES:
        raise ValueError(f"plane must be one of {sorted(PLANES)}, got {plane!r}")
    if not 1 <= j <= m:
        raise ValueError(f"mode j={j} outside 1..{m}")
    if not 0 < r < 1:
        raise ValueError("radius must lie in (0, 1)")
    a, b = PLANES[plane]
    rho = r / (1 + j)
    t = TWO_PI * np.arange(n) / n
    nodes = np.zeros((n, 3))
    nodes[:, a] = rho * np.cos(j * t)
    nodes[:, b] = rho * np.sin(j * t)
    return PeriodicTrajectory(nodes)


def wirtinger_gap(q, m: int) -> float:
    """m^2 ||q||_L2^2 - ||q'||_L2^2 (nonnegative on Z_m)."""
    nodes = as_nodes(q)
    h = TWO_PI / nodes.shape[0]
    return float(m * m * h * np.sum(nodes**2) - h * np.sum(spectral_derivative(nodes) ** 2))


def gamma_m_constant(m: int, r: float | None = None) -> float:
    """Certified lower bound for inf ||q||_L2 / ||q||_{1,inf} over Z_m.

    From |a cos jt + b sin jt| <= sqrt(|a|^2+|b|^2), Cauchy-Schwarz and
    ||q||_L2^2 = pi sum_j (|a_j|^2 + |b_j|^2):
    ||q||_inf <= sqrt(m/pi) ||q||_L2 and ||q'||_inf <= sqrt(sum j^2 / pi) ||q||_L2.
    The ratio is 0-homogeneous, so ``r`` does not enter.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    s2 = m * (m + 1) * (2 * m + 1) / 6
    return math.sqrt(math.pi) / (math.sqrt(m) + math.sqrt(s2))


def _ratio(x: np.ndarray, m: int, t: np.ndarray) -> float:
    c = x.reshape(2, m, 3)
    j = np.arange(1, m + 1)
    ang = np.multiply.outer(t, j)
    q = np.cos(ang) @ c[0] + np.sin(ang) @ c[1]
    dq = (-np.sin(ang) * j) @ c[0] + (np.cos(ang) * j) @ c[1]
    l2 = math.sqrt(math.pi * float(np.sum(x * x)))
    return l2 / (np.max(np.linalg.norm(q, axis=1)) + np.max(np.linalg.norm(dq, axis=1)))


@dataclass(frozen=True)
class GammaSearch:
    m: int
    certified: float
    attained: float
    minimizer: np.ndarray


def gamma_m_search(m: int, starts: int = 16, seed: int = 0, resolution: int = 2048) -> GammaSearch:
    """Multi-start numerical minimisation of the L2 / (1,inf) ratio on Z_m.

    The attained value bounds gamma_m from above; ``certified`` bounds it from
    below.  Their gap measures how conservative the certified constant is.
    """
    rng = np.random.default_rng(seed)
    t = TWO_PI * np.arange(resolution) / resolution
    best = None
    for _ in range(starts):
        x0 = rng.normal(size=6 * m)
        res = minimize(lambda x: _ratio(x / np.linalg.norm(x), m, t), x0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000 * m})
        res = minimize(lambda x: _ratio(x / np.linalg.norm(x), m, t), res.x, method="Powell",
                       options={"xtol": 1e-10, "ftol": 1e-13})
        if best is None or res.fun < best.fun:
            best = res
    x = best.x / np.linalg.norm(best.x)
    return GammaSearch(m, gamma_m_constant(m), float(best.fun), x.reshape(2, m, 3))


# ---------------------------------------------------------------------------
# CSV interchange


def write_trajectory_csv(path, q, columns=("q1", "q2", "q3")) -> None:
    nodes = as_nodes(q)
    n = nodes.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *columns])
        for i in range(n):
            w.writerow([repr(float(TWO_PI * i / n))] + [repr(float(x)) for x in nodes[i]])


def read_trajectory_csv(path) -> PeriodicTrajectory:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], [r for r in rows[1:] if r]
    if len(header) != 4 or header[0].strip() != "t":
        raise ValueError(f"{path}: expected header t,<x1>,<x2>,<x3>, got {header}")
    data = np.array([[float(x) for x in r] for r in body])
    n = data.shape[0]
    expected = TWO_PI * np.arange(n) / n
    if not np.allclose(data[:, 0], expected, atol=1e-9):
        raise ValueError(f"{path}: t column must be the uniform grid 2*pi*i/N on [0, 2*pi)")
    return PeriodicTrajectory(data[:, 1:])
