"""Canonical symplectic mechanics on a 2m-dimensional phase space.

Conventions (fixed throughout the package)::

    z = (q_1..q_m, p_1..p_m)
    J = [[0, I], [-I, 0]]
    X_H = J grad H = (dH/dp, -dH/dq)
    {F, G} = sum_i dF/dq_i dG/dp_i - dF/dp_i dG/dq_i = grad F . J grad G

so that {q_i, p_j} = delta_ij and dF/dt = {F, H} along the flow of X_H.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import (
    ConvergenceError,
    InvalidDimensionError,
    InvalidInputError,
    InvalidMethodError,
    MissingDataError,
    NumericError,
)

METHODS = ("leapfrog", "implicit-midpoint")
MIDPOINT_TOL = 1e-12
MIDPOINT_MAXITER = 100


@dataclass(frozen=True, eq=False)
class PhasePoint:
    """Position/momentum pair ``(q, p)``."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float)).copy()
        p = np.atleast_1d(np.asarray(self.p, dtype=float)).copy()
        if q.ndim != 1 or p.ndim != 1 or q.shape != p.shape:
            raise InvalidDimensionError(f"q and p must be equal-length vectors, got {q.shape} and {p.shape}")
        if q.size == 0:
            raise InvalidDimensionError("phase space dimension m must be >= 1")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise InvalidInputError("phase point has non-finite entries")
        q.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def m(self) -> int:
        return self.q.size

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_array(cls, z) -> PhasePoint:
        z = np.asarray(z, dtype=float)
        if z.ndim != 1 or z.size % 2 or z.size == 0:
            raise InvalidDimensionError(f"flat phase vector must have even length >= 2, got {z.shape}")
        m = z.size // 2
        return cls(z[:m], z[m:])


def canonical_j(m: int) -> np.ndarray:
    """Return the 2m x 2m block matrix ``[[0, I], [-I, 0]]``."""
    if int(m) != m or m < 1:
        raise InvalidDimensionError(f"m must be a positive integer, got {m!r}")
    m = int(m)
    eye = np.eye(m)
    zero = np.zeros((m, m))
    return np.block([[zero, eye], [-eye, zero]])


def apply_j(g: np.ndarray) -> np.ndarray:
    """``J @ g`` for a flat 2m vector without building J."""
    m = g.shape[-1] // 2
    return np.concatenate([g[..., m:], -g[..., :m]], axis=-1)


def diff_step(z: np.ndarray) -> float:
    return max(1e-6, 1e-8 * float(np.max(np.abs(z))))


def numeric_gradient(f: Callable[[np.ndarray], float], z: np.ndarray, h: float | None = None) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    z = np.asarray(z, dtype=float)
    h = diff_step(z) if h is None else h
    g = np.empty_like(z)
    e = np.zeros_like(z)
    for i in range(z.size):
        e[i] = h
        g[i] = (f(z + e) - f(z - e)) / (2 * h)
        e[i] = 0.0
    return g


def numeric_jacobian(fn: Callable[[np.ndarray], np.ndarray], z: np.ndarray, h: float | None = None) -> np.ndarray:
    """Central-difference Jacobian ``D fn(z)`` with rows indexing outputs."""
    z = np.asarray(z, dtype=float)
    h = diff_step(z) if h is None else h
    cols = []
    e = np.zeros_like(z)
    for i in range(z.size):
        e[i] = h
        cols.append((np.asarray(fn(z + e)) - np.asarray(fn(z - e))) / (2 * h))
        e[i] = 0.0
    return np.stack(cols, axis=-1)


def numeric_hessian(f: Callable[[np.ndarray], float], z: np.ndarray) -> np.ndarray:
    # Second differences need a larger step (roughly eps**0.25) to keep roundoff small.
    z = np.asarray(z, dtype=float)
    h = max(1e-4, 1e-4 * float(np.max(np.abs(z))))
    n = z.size
    hess = np.empty((n, n))
    f0 = f(z)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        hess[i, i] = (f(z + ei) - 2 * f0 + f(z - ei)) / h**2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            v = (f(z + ei + ej) - f(z + ei - ej) - f(z - ei + ej) + f(z - ei - ej)) / (4 * h * h)
            hess[i, j] = hess[j, i] = v
    return hess


class Hamiltonian:
    """Scalar observable on phase space.

    Parameters
    ----------
    m : int
        Number of degrees of freedom.
    func : callable
        ``func(q, p) -> float``.
    grad : callable, optional
        ``grad(q, p) -> array of length 2m`` ordered ``(dH/dq, dH/dp)``.
        Central differences are used when omitted.
    hessian : callable, optional
        ``hessian(q, p) -> (2m, 2m) array``.
    separable : bool
        True when ``H = T(p) + V(q)``; required by the leapfrog integrator.
    dq, dp : callable, optional
        For separable H, ``dq(q) = dV/dq`` and ``dp(p) = dT/dp``. Leapfrog
        uses them instead of the full gradient when both are given.
    """

    def __init__(
        self,
        m: int,
        func: Callable[[np.ndarray, np.ndarray], float],
        grad: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
        hessian: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
        separable: bool = False,
        name: str = "H",
        dq: Callable[[np.ndarray], np.ndarray] | None = None,
        dp: Callable[[np.ndarray], np.ndarray] | None = None,
    ):
        if int(m) != m or m < 1:
            raise InvalidDimensionError(f"m must be a positive integer, got {m!r}")
        self.m = int(m)
        self.func = func
        self._grad = grad
        self._hessian = hessian
        self.separable = separable
        self.name = name
        self.dq = dq
        self.dp = dp

    def __repr__(self):
        return f"Hamiltonian({self.name!r}, m={self.m})"

    @property
    def has_analytic_gradient(self) -> bool:
        return self._grad is not None

    def _split(self, z) -> tuple[np.ndarray, np.ndarray]:
        if isinstance(z, PhasePoint):
            q, p = z.q, z.p
        else:
            z = np.asarray(z, dtype=float)
            q, p = z[: z.size // 2], z[z.size // 2 :]
        if q.size != self.m or p.size != self.m:
            raise InvalidDimensionError(f"{self.name} has arity {self.m}, got point with m={q.size}")
        return q, p

    def flat(self, z: np.ndarray) -> float:
        m = self.m
        return float(self.func(z[:m], z[m:]))

    def __call__(self, z) -> float:
        q, p = self._split(z)
        return float(self.func(q, p))

    def gradient(self, z) -> np.ndarray:
        q, p = self._split(z)
        if self._grad is not None:
            g = np.asarray(self._grad(q, p), dtype=float)
        else:
            g = numeric_gradient(self.flat, np.concatenate([q, p]))
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient of {self.name}")
        return g

    def numeric_gradient(self, z, h: float | None = None) -> np.ndarray:
        q, p = self._split(z)
        return numeric_gradient(self.flat, np.concatenate([q, p]), h)

    def hessian(self, z) -> np.ndarray:
        q, p = self._split(z)
        if self._hessian is not None:
            return np.asarray(self._hessian(q, p), dtype=float)
        flat = np.concatenate([q, p])
        if self._grad is not None:
            m = self.m
            jac = numeric_jacobian(lambda w: self._grad(w[:m], w[m:]), flat)
            return 0.5 * (jac + jac.T)
        return numeric_hessian(self.flat, flat)


def check_gradient(H: Hamiltonian, z, h: float = 1e-4) -> bool:
    """True when the analytic gradient agrees with central differences.

    Tolerance is ``10 h**2`` relative to ``max(1, |grad|_inf)``. The default
    step is larger than the differentiation step so that ``10 h**2`` sits
    above double-precision roundoff.
    """
    analytic = H.gradient(z)
    numeric = H.numeric_gradient(z, h)
    scale = max(1.0, float(np.max(np.abs(analytic))))
    return bool(np.max(np.abs(analytic - numeric)) <= 10 * h * h * scale)


# -- built-in Hamiltonians -------------------------------------------------


def harmonic(m: int = 1, stiffness: float = 1.0, mass: float = 1.0) -> Hamiltonian:
    """``H = |p|^2 / (2 mass) + stiffness |q|^2 / 2``."""

    def func(q, p):
        return 0.5 * (p @ p) / mass + 0.5 * stiffness * (q @ q)

    def grad(q, p):
        return np.concatenate([stiffness * q, p / mass])

    def hess(q, p):
        return np.diag(np.r_[np.full(m, stiffness), np.full(m, 1.0 / mass)])

    return Hamiltonian(m, func, grad, hess, separable=True, name="harmonic")


def free_particle(m: int = 1, mass: float = 1.0) -> Hamiltonian:
    def func(q, p):
        return 0.5 * (p @ p) / mass

    def grad(q, p):
        return np.concatenate([np.zeros(m), p / mass])

    def hess(q, p):
        return np.diag(np.r_[np.zeros(m), np.full(m, 1.0 / mass)])

    return Hamiltonian(m, func, grad, hess, separable=True, name="free")


def zero(m: int = 1) -> Hamiltonian:
    return Hamiltonian(
        m,
        lambda q, p: 0.0,
        lambda q, p: np.zeros(2 * m),
        lambda q, p: np.zeros((2 * m, 2 * m)),
        separable=True,
        name="zero",
    )


def quadratic(S) -> Hamiltonian:
    """``H = z^T S z / 2`` for a symmetric 2m x 2m matrix S."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] % 2:
        raise InvalidDimensionError(f"S must be square with even size, got {S.shape}")
    S = 0.5 * (S + S.T)
    m = S.shape[0] // 2
    sep = not np.any(S[:m, m:])
    return Hamiltonian(
        m,
        lambda q, p: 0.5 * np.r_[q, p] @ S @ np.r_[q, p],
        lambda q, p: S @ np.r_[q, p],
        lambda q, p: S,
        separable=sep,
        name="quadratic",
    )


def coordinate(m: int, index: int, momentum: bool = False) -> Hamiltonian:
    """The coordinate function ``q_index`` (or ``p_index``) as an observable."""
    k = index + (m if momentum else 0)
    e = np.zeros(2 * m)
    e[k] = 1.0
    name = f"{'p' if momentum else 'q'}{index + 1}"
    if momentum:
        return Hamiltonian(m, lambda q, p: p[index], lambda q, p: e, lambda q, p: np.zeros((2 * m, 2 * m)), name=name)
    return Hamiltonian(m, lambda q, p: q[index], lambda q, p: e, lambda q, p: np.zeros((2 * m, 2 * m)), name=name)


# -- brackets and fields ---------------------------------------------------


def symplectic_gradient(H: Hamiltonian, z) -> np.ndarray:
    """``J @ grad H(z)``."""
    return apply_j(H.gradient(z))


def poisson_bracket(F: Hamiltonian, G: Hamiltonian, z) -> float:
    if F.m != G.m:
        raise InvalidInputError(f"arity mismatch: {F.m} vs {G.m}")
    gf = F.gradient(z)
    gg = G.gradient(z)
    return float(gf @ apply_j(gg))


def observable_rate(F: Hamiltonian, H: Hamiltonian, z) -> float:
    """Time derivative of F along the flow of H, ``{F, H}``."""
    return poisson_bracket(F, H, z)


def bracket_observable(F: Hamiltonian, G: Hamiltonian) -> Hamiltonian:
    """``{F, G}`` as an observable, so brackets can be nested.

    Its gradient is ``Hess F . J grad G - Hess G . J grad F``, which avoids
    differencing an already differenced quantity.
    """
    if F.m != G.m:
        raise InvalidInputError(f"arity mismatch: {F.m} vs {G.m}")
    m = F.m

    def func(q, p):
        return poisson_bracket(F, G, np.r_[q, p])

    def grad(q, p):
        z = np.r_[q, p]
        return F.hessian(z) @ apply_j(G.gradient(z)) - G.hessian(z) @ apply_j(F.gradient(z))

    return Hamiltonian(m, func, grad, name=f"{{{F.name},{G.name}}}")


def hamiltonian_field(H: Hamiltonian) -> Callable[[PhasePoint | np.ndarray], np.ndarray]:
    """Return ``z -> (dH/dp, -dH/dq)``."""

    def field(z):
        g = H.gradient(z)
        m = H.m
        return np.concatenate([g[m:], -g[:m]])

    return field


# -- integration -----------------------------------------------------------


@dataclass
class PhaseTrajectory:
    """Sampled trajectory; ``q`` and ``p`` are ``(n_states, m)`` arrays."""

    dt: float
    q: np.ndarray
    p: np.ndarray
    r: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.atleast_2d(np.asarray(self.q, dtype=float))
        self.p = np.atleast_2d(np.asarray(self.p, dtype=float))
        if self.q.shape != self.p.shape or self.q.shape[0] < 1:
            raise InvalidDimensionError("trajectory needs >= 1 state with matching q/p shapes")
        if self.r is not None:
            self.r = np.atleast_2d(np.asarray(self.r, dtype=float))
            if self.r.shape != self.q.shape:
                raise InvalidDimensionError("r must match q in shape")
        if not self.dt > 0:
            raise InvalidInputError("dt must be positive")

    @classmethod
    def from_states(cls, dt: float, states: Sequence[PhasePoint], r=None) -> PhaseTrajectory:
        ms = {s.m for s in states}
        if len(ms) > 1:
            raise InvalidDimensionError("states do not share m")
        return cls(dt, np.array([s.q for s in states]), np.array([s.p for s in states]), r)

    def __len__(self) -> int:
        return self.q.shape[0]

    def __getitem__(self, k: int) -> PhasePoint:
        return PhasePoint(self.q[k], self.p[k])

    def __iter__(self) -> Iterator[PhasePoint]:
        return (self[k] for k in range(len(self)))

    @property
    def m(self) -> int:
        return self.q.shape[1]

    @property
    def states(self) -> list[PhasePoint]:
        return list(self)

    @property
    def z(self) -> np.ndarray:
        return np.hstack([self.q, self.p])

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self))


def _midpoint_step(field, z: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """One implicit-midpoint step. Returns the new state and the midpoint."""
    znew = z + dt * field(z)
    tol = MIDPOINT_TOL * max(1.0, float(np.max(np.abs(z))))
    for _ in range(MIDPOINT_MAXITER):
        mid = 0.5 * (z + znew)
        try:
            znext = z + dt * field(mid)
        except NumericError as exc:
            raise ConvergenceError("implicit midpoint iteration diverged") from exc
        if not np.all(np.isfinite(znext)):
            raise ConvergenceError("implicit midpoint iteration diverged")
        delta = float(np.max(np.abs(znext - znew)))
        znew = znext
        if delta <= tol:
            return znew, 0.5 * (z + znew)
    raise ConvergenceError(f"implicit midpoint did not converge in {MIDPOINT_MAXITER} iterations (last change {delta:.3e})")


def _check_method(H: Hamiltonian, method: str):
    if method not in METHODS:
        raise InvalidMethodError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "leapfrog" and not H.separable:
        raise InvalidMethodError(f"leapfrog requires a separable Hamiltonian; {H.name} is not marked separable")


def integrate(
    H: Hamiltonian,
    z0: PhasePoint,
    dt: float,
    n: int,
    method: str = "implicit-midpoint",
) -> PhaseTrajectory:
    """Integrate Hamilton's equations for ``n`` steps of size ``dt``.

    ``dt`` may be negative to run the flow backwards (useful for reversibility
    checks); the returned trajectory then records ``|dt|``. The returned
    trajectory carries ``r = dp/dt`` evaluated at every state.
    """
    _check_method(H, method)
    if dt == 0 or not np.isfinite(dt):
        raise InvalidInputError("dt must be nonzero and finite")
    if n < 0:
        raise InvalidInputError("n must be >= 0")
    if z0.m != H.m:
        raise InvalidDimensionError(f"{H.name} has arity {H.m}, z0 has m={z0.m}")
    m = H.m
    q = np.empty((n + 1, m))
    p = np.empty((n + 1, m))
    r = np.empty((n + 1, m))
    q[0], p[0] = z0.q, z0.p
    grad = H.gradient
    if method == "leapfrog":
        qk, pk = z0.q.copy(), z0.p.copy()
        if H.dq is not None and H.dp is not None:
            dV, dT = H.dq, H.dp
        else:
            dV = lambda x: grad(np.concatenate([x, pk]))[:m]  # noqa: E731
            dT = lambda y: grad(np.concatenate([qk, y]))[m:]  # noqa: E731
        force = -dV(qk)
        r[0] = force
        half = 0.5 * dt
        for k in range(n):
            ph = pk + half * force
            qk = qk + dt * dT(ph)
            force = -dV(qk)
            pk = ph + half * force
            q[k + 1], p[k + 1], r[k + 1] = qk, pk, force
    else:
        field = hamiltonian_field(H)
        zk = z0.z
        r[0] = field(zk)[m:]
        for k in range(n):
            zk, _ = _midpoint_step(field, zk, dt)
            q[k + 1], p[k + 1] = zk[:m], zk[m:]
            r[k + 1] = field(zk)[m:]
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
        raise NumericError("integration produced non-finite states")
    return PhaseTrajectory(abs(dt), q, p, r)


def contact_residuals(traj: PhaseTrajectory, second: bool = True) -> tuple[np.ndarray, np.ndarray | None]:
    """Trapezoidal residuals of ``dq - p dt`` and ``dp - r dt``.

    Returns arrays of shape ``(n_states - 1, m)``. The second series is None
    when ``second`` is False.
    """
    if len(traj) < 2:
        raise InvalidInputError("contact residuals need at least 2 states")
    dt = traj.dt
    res_q = np.diff(traj.q, axis=0) - 0.5 * (traj.p[1:] + traj.p[:-1]) * dt
    if not second:
        return res_q, None
    if traj.r is None:
        raise MissingDataError("trajectory has no r (accelerations); cannot form dp - r dt")
    res_p = np.diff(traj.p, axis=0) - 0.5 * (traj.r[1:] + traj.r[:-1]) * dt
    return res_q, res_p


def _tangent_drift(field, jacobian, z0: np.ndarray, dt: float, n: int) -> float:
    dim = z0.size
    eye = np.eye(dim)
    phi = eye.copy()
    z = z0.copy()
    for _ in range(n):
        z, mid = _midpoint_step(field, z, dt)
        a = 0.5 * dt * jacobian(mid)
        phi = np.linalg.solve(eye - a, (eye + a) @ phi)
    return float(abs(np.linalg.det(phi)) - 1.0)


def liouville_check(
    H: Hamiltonian,
    z0: PhasePoint,
    dt: float,
    n: int,
    method: str = "implicit-midpoint",
) -> float:
    """Phase-volume drift ``|det D(flow_n)| - 1`` of the discrete flow.

    The tangent map is propagated with the exact linearisation of each
    integrator step (no neighbouring-trajectory differencing).
    """
    _check_method(H, method)
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    m = H.m
    jmat = canonical_j(m)

    def jac(z):
        hess = H.hessian(z)
        return jmat @ (0.5 * (hess + hess.T))

    if method == "implicit-midpoint":
        return _tangent_drift(hamiltonian_field(H), jac, z0.z, dt, n)

    eye = np.eye(m)
    zero_block = np.zeros((m, m))
    qk, pk = z0.q.copy(), z0.p.copy()
    phi = np.eye(2 * m)
    half = 0.5 * dt
    for _ in range(n):
        hqq = H.hessian(np.r_[qk, pk])[:m, :m]
        kick1 = np.block([[eye, zero_block], [-half * hqq, eye]])
        ph = pk - half * H.gradient(np.r_[qk, pk])[:m]
        hpp = H.hessian(np.r_[qk, ph])[m:, m:]
        drift = np.block([[eye, dt * hpp], [zero_block, eye]])
        qk = qk + dt * H.gradient(np.r_[qk, ph])[m:]
        hqq = H.hessian(np.r_[qk, ph])[:m, :m]
        kick2 = np.block([[eye, zero_block], [-half * hqq, eye]])
        pk = ph - half * H.gradient(np.r_[qk, ph])[:m]
        phi = kick2 @ drift @ kick1 @ phi
    return float(abs(np.linalg.det(phi)) - 1.0)


def field_volume_drift(
    field: Callable[[np.ndarray], np.ndarray],
    z0,
    dt: float,
    n: int,
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None,
) -> float:
    """Volume drift for an arbitrary (possibly dissipative) phase-space field.

    Uses implicit midpoint with the same tangent propagation as
    :func:`liouville_check`; the Jacobian defaults to central differences.
    """
    z0 = z0.z if isinstance(z0, PhasePoint) else np.asarray(z0, dtype=float)
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    jac = jacobian or (lambda z: numeric_jacobian(field, z))
    return _tangent_drift(field, jac, z0, dt, n)
