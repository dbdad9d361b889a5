"""Agents moving in the field of signed, massive vanishing-point charges.

Each center ``V_j`` carries a mass ``m_j > 0`` and a sign ``s_j`` (+1
attractive, -1 repulsive). With softening ``eps`` and displacement
``d_j = V_j - q`` the dynamics are

    q'' = sum_j s_j m_j d_j / (|d_j|^2 + eps^2)^(3/2)
    H   = |p|^2 / 2 - sum_j s_j m_j / (|d_j|^2 + eps^2)^(1/2)

so that Hamilton's equations for ``H`` reproduce the acceleration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CollinearError, InfiniteMassError, InvalidInputError, SingularityError
from .geometry import wedge2
from .phase_space import METHODS, Hamiltonian, PhasePoint, PhaseTrajectory, integrate

ATTRACTIVE = 1
REPULSIVE = -1


@dataclass(frozen=True, eq=False)
class ChargeCenter:
    position: np.ndarray
    mass: float = 1.0
    sign: int = ATTRACTIVE

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(2)
        if not np.all(np.isfinite(pos)):
            raise InvalidInputError("center position must be finite")
        if not (math.isfinite(self.mass) and self.mass > 0):
            raise InvalidInputError(f"center mass must be positive, got {self.mass}")
        if self.sign not in (ATTRACTIVE, REPULSIVE):
            raise InvalidInputError(f"sign must be +1 or -1, got {self.sign}")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "mass", float(self.mass))
        object.__setattr__(self, "sign", int(self.sign))


@dataclass(frozen=True, eq=False)
class ChargeSystem:
    centers: tuple[ChargeCenter, ...] = ()
    softening: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "centers", tuple(self.centers))
        if not (math.isfinite(self.softening) and self.softening >= 0):
            raise InvalidInputError("softening must be a nonnegative real")
        pos = np.array([c.position for c in self.centers]).reshape(-1, 2)
        charges = np.array([c.sign * c.mass for c in self.centers], dtype=float)
        pos.flags.writeable = False
        charges.flags.writeable = False
        object.__setattr__(self, "_positions", pos)
        object.__setattr__(self, "_charges", charges)

    @property
    def positions(self) -> np.ndarray:
        return self._positions

    @property
    def charges(self) -> np.ndarray:
        """Signed masses ``s_j m_j``."""
        return self._charges

    def scaled(self, lam: float) -> ChargeSystem:
        return ChargeSystem(
            tuple(ChargeCenter(c.position, c.mass * lam, c.sign) for c in self.centers), self.softening
        )

    def flipped(self) -> ChargeSystem:
        return ChargeSystem(
            tuple(ChargeCenter(c.position, c.mass, -c.sign) for c in self.centers), self.softening
        )

    @classmethod
    def from_triangle(cls, V1, V2, V3, signs=(1, 1, 1), softening: float = 0.0) -> ChargeSystem:
        _, masses = orthocenter_masses(V1, V2, V3)
        return cls(tuple(ChargeCenter(v, m, s) for v, m, s in zip((V1, V2, V3), masses, signs)), softening)


def orthocenter_masses(V1, V2, V3) -> tuple[np.ndarray, np.ndarray]:
    """Orthocenter of the triangle and masses ``1 / |V_j - orthocenter|``."""
    V = np.array([V1, V2, V3], dtype=float).reshape(3, 2)
    area = 0.5 * abs(wedge2(V[1] - V[0], V[2] - V[0]))
    if not area > 1e-9:
        raise CollinearError(f"triangle is degenerate (area {area:.3g} px^2)")
    # altitudes through V1 and V2: (H - V1).(V2 - V3) = 0, (H - V2).(V1 - V3) = 0
    A = np.array([V[1] - V[2], V[0] - V[2]])
    rhs = np.array([A[0] @ V[0], A[1] @ V[1]])
    H = np.linalg.solve(A, rhs)
    dist = np.linalg.norm(V - H, axis=1)
    scale = max(1.0, float(np.max(np.abs(V))))
    for j, d in enumerate(dist):
        if d <= 1e-9 * scale:
            raise InfiniteMassError(j + 1, f"vertex {j + 1} coincides with the orthocenter (right angle)")
    return H, 1.0 / dist


def _displacements(q, system: ChargeSystem) -> tuple[np.ndarray, np.ndarray]:
    """``d_j = V_j - q`` and softened distances; q may be ``(2,)`` or ``(N, 2)``."""
    q = np.asarray(q, dtype=float)
    d = system.positions - q[..., None, :]
    r2 = np.einsum("...i,...i->...", d, d) + system.softening**2
    if system.centers and np.any(r2 == 0):
        raise SingularityError("agent sits on a center with zero softening")
    return d, np.sqrt(r2)


def acceleration(q, system: ChargeSystem) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if not system.centers:
        return np.zeros_like(q)
    if q.ndim == 1:
        # single agent: plain array ops, this is the integrator's hot path
        d = system.positions - q
        r2 = (d * d).sum(axis=1) + system.softening**2
        if not r2.all():
            raise SingularityError("agent sits on a center with zero softening")
        return (system.charges / (r2 * np.sqrt(r2))) @ d
    d, r = _displacements(q, system)
    return np.einsum("...j,...ji->...i", system.charges / r**3, d)


def potential(q, system: ChargeSystem):
    """Potential part of the signed Hamiltonian; vectorized over leading axes."""
    q = np.asarray(q, dtype=float)
    if not system.centers:
        return np.zeros(q.shape[:-1]) if q.ndim > 1 else 0.0
    _, r = _displacements(q, system)
    out = -np.sum(system.charges / r, axis=-1)
    return out if q.ndim > 1 else float(out)


def _potential_hessian(q, system: ChargeSystem) -> np.ndarray:
    hess = np.zeros((2, 2))
    if not system.centers:
        return hess
    d, r = _displacements(q, system)
    for c, dj, rj in zip(system.charges, d, r):
        hess += c * (np.eye(2) / rj**3 - 3.0 * np.outer(dj, dj) / rj**5)
    return hess


def signed_hamiltonian(system: ChargeSystem) -> Hamiltonian:
    """Separable Hamiltonian with analytic gradient and Hessian."""

    def func(q, p):
        return 0.5 * float(p @ p) + potential(q, system)

    def grad(q, p):
        return np.concatenate([-acceleration(q, system), p])

    def hess(q, p):
        out = np.zeros((4, 4))
        out[:2, :2] = _potential_hessian(q, system)
        out[2:, 2:] = np.eye(2)
        return out

    return Hamiltonian(
        2, func, grad, hess, separable=True, name="signed",
        dq=lambda q: -acceleration(q, system), dp=lambda p: p,
    )


def energy(z, system: ChargeSystem) -> float:
    z = z if isinstance(z, PhasePoint) else PhasePoint.from_array(z)
    return signed_hamiltonian(system)(z)


@dataclass
class SimulationResult:
    trajectory: PhaseTrajectory
    energy: np.ndarray
    energy_drift: float
    warnings: list[str] = field(default_factory=list)

    def __iter__(self):
        # unpack as (trajectory, energy_drift)
        return iter((self.trajectory, self.energy_drift))


def trajectory_energy(traj: PhaseTrajectory, system: ChargeSystem) -> np.ndarray:
    return 0.5 * np.einsum("ij,ij->i", traj.p, traj.p) + potential(traj.q, system)


def close_encounters(traj: PhaseTrajectory, system: ChargeSystem) -> list[str]:
    eps = system.softening
    if eps == 0 or not system.centers:
        return []
    out = []
    d = np.linalg.norm(system.positions[None, :, :] - traj.q[:, None, :], axis=2)
    for j in range(len(system.centers)):
        hits = np.flatnonzero(d[:, j] < 10 * eps)
        if hits.size:
            out.append(
                f"close encounter with center {j + 1}: {hits.size} steps within 10*eps "
                f"(first at step {int(hits[0])}, min distance {d[hits, j].min():.3g} px)"
            )
    return out


def simulate(
    system: ChargeSystem,
    z0: PhasePoint,
    dt: float,
    n: int,
    method: str = "leapfrog",
) -> SimulationResult:
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    if method not in METHODS:
        raise InvalidInputError(f"unknown method {method!r}")
    traj = integrate(signed_hamiltonian(system), z0, dt, n, method)
    e = trajectory_energy(traj, system)
    drift = float(np.max(np.abs(e - e[0])))
    return SimulationResult(traj, e, drift, close_encounters(traj, system))


def time_reversal_residual(system: ChargeSystem, z0: PhasePoint, dt: float, n: int, method: str = "leapfrog") -> float:
    """Max-norm distance from ``z0`` after ``n`` steps forward and ``n`` back."""
    H = signed_hamiltonian(system)
    fwd = integrate(H, z0, dt, n, method)
    back = integrate(H, fwd[n], -dt, n, method)
    return float(np.max(np.abs(back[n].z - z0.z)))


def m_expression_terms(z, system: ChargeSystem) -> tuple[float, float, float]:
    """The three printed terms of the two-center expression, evaluated verbatim.

    ``a ^ b - c`` is read as ``a ^ (b - c)`` (the only type-consistent
    parse), the ambiguous sign on each mass term is ``-s_j`` as in the
    Hamiltonian, and the third term vanishes identically as printed.
    """
    z = z if isinstance(z, PhasePoint) else PhasePoint.from_array(z)
    if len(system.centers) not in (2, 3):
        raise InvalidInputError("the expression needs centers V1, V2 (and optionally a fixed V3)")
    sub = ChargeSystem(system.centers[:2], system.softening)
    d, r = _displacements(z.q, sub)
    q1, q2 = d
    c1, c2 = sub.charges
    p = z.p
    t1 = wedge2(q1, p) * wedge2(q2, p)
    t2 = -c1 / r[0] * wedge2(q1, q1 - q2) * wedge2(q2, q1 - q2)
    t3 = -c2 / r[1] * wedge2(q1, q2 - q2) * wedge2(q1, q2 - q1)
    return float(t1), float(t2), float(t3)


def evaluate_m_expression(z, system: ChargeSystem) -> float:
    t1, t2, t3 = m_expression_terms(z, system)
    out = t1 + t2 + t3
    if not math.isfinite(out):
        raise SingularityError("expression is not finite at this point")
    return out


def circular_orbit_state(mass: float = 1.0, radius: float = 1.0) -> PhasePoint:
    """Initial state for the circular orbit around a unit attractive center at the origin."""
    return PhasePoint([radius, 0.0], [0.0, math.sqrt(mass / radius)])


def make_system(positions: Sequence, masses=None, signs=None, softening: float = 0.0) -> ChargeSystem:
    positions = [np.asarray(v, dtype=float) for v in positions]
    masses = [1.0] * len(positions) if masses is None else list(masses)
    signs = [ATTRACTIVE] * len(positions) if signs is None else list(signs)
    if not len(positions) == len(masses) == len(signs):
        raise InvalidInputError("positions, masses and signs differ in length")
    return ChargeSystem(tuple(ChargeCenter(v, m, s) for v, m, s in zip(positions, masses, signs)), softening)
