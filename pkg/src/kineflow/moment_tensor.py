"""Second-moment tensors, moment maps of lifted linear actions, small Lie algebras.

Moment maps use the cotangent-lift pairing ``mu_X(q, p) = p . (X q)``:
translations give linear momentum, rotations give angular momentum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import AmbiguousAxisError, InvalidDimensionError, InvalidInputError
from .phase_space import PhasePoint, canonical_j

RANK_TOL = 1e-9
ALGEBRAS = ("so2", "so3", "sl", "sp")
ACTIONS = ("translation", "rotation", "linear")


@dataclass(frozen=True)
class GradientSample:
    Ix: float
    Iy: float
    It: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.Ix, self.Iy, self.It)):
            raise InvalidInputError("gradient sample has non-finite entries")

    @property
    def g(self) -> np.ndarray:
        return np.array([self.Ix, self.Iy, self.It], dtype=float)


def jacobi_eigh(S, tol: float = 1e-15, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and eigenvectors (columns) of a symmetric matrix.

    Cyclic Jacobi rotations. Each eigenvector is signed so that its
    largest-magnitude component is positive, which makes the output
    deterministic.
    """
    A = np.array(S, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    scale = max(np.max(np.abs(A)) if A.size else 0.0, np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q], rot[q, p] = s, -s
                A = rot.T @ A @ rot
                A[p, q] = A[q, p] = 0.0
                V = V @ rot
    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    for k in range(n):
        j = int(np.argmax(np.abs(V[:, k])))
        if V[j, k] < 0:
            V[:, k] = -V[:, k]
    return w, V


@dataclass
class SymmetricTensorReport:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    rank: int
    tolerance: float
    third_moment: np.ndarray | None = None

    @property
    def nonzero_eigenvalues(self) -> np.ndarray:
        cut = self.tolerance * max(1.0, float(self.eigenvalues[0]) if self.eigenvalues.size else 1.0)
        return self.eigenvalues[self.eigenvalues > cut]


def tensor_report(S, tol: float = RANK_TOL, third_moment=None) -> SymmetricTensorReport:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidDimensionError(f"expected a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise InvalidInputError("matrix has non-finite entries")
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(S), initial=0.0)):
        raise InvalidInputError("matrix is not symmetric")
    S = 0.5 * (S + S.T)
    w, V = jacobi_eigh(S)
    lam_max = float(w[0]) if w.size else 0.0
    rank = int(np.sum(w > tol * max(1.0, lam_max)))
    return SymmetricTensorReport(S, w, V, rank, tol, third_moment)


def _gradient_array(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        G = np.asarray(samples, dtype=float).reshape(-1, 3)
    else:
        G = np.array([s.g if isinstance(s, GradientSample) else s for s in samples], dtype=float).reshape(-1, 3)
    if len(G) == 0:
        raise InvalidInputError("need at least one gradient sample")
    if not np.all(np.isfinite(G)):
        raise InvalidInputError("gradient samples must be finite")
    return G


def motion_structure_tensor(samples, tol: float = RANK_TOL, third_order: bool = False) -> SymmetricTensorReport:
    """Mean outer product of ``(Ix, Iy, It)``; optionally the raw third moment too."""
    G = _gradient_array(samples)
    S = G.T @ G / len(G)
    third = np.einsum("ni,nj,nk->ijk", G, G, G) / len(G) if third_order else None
    return tensor_report(S, tol, third)


def _finite_matrix(Jm) -> np.ndarray:
    Jm = np.atleast_2d(np.asarray(Jm, dtype=float))
    if Jm.ndim != 2:
        raise InvalidDimensionError("Jacobian must be a matrix")
    if not np.all(np.isfinite(Jm)):
        raise InvalidInputError("Jacobian has non-finite entries")
    return Jm


def anticipation(Jm, tol: float = RANK_TOL) -> SymmetricTensorReport:
    """``J^T J`` (q x q for a p x q Jacobian)."""
    Jm = _finite_matrix(Jm)
    return tensor_report(Jm.T @ Jm, tol)


def compensation(Jm, tol: float = RANK_TOL) -> SymmetricTensorReport:
    """``J J^T`` (p x p)."""
    Jm = _finite_matrix(Jm)
    return tensor_report(Jm @ Jm.T, tol)


# -- moment maps -------------------------------------------------------------


def _qp(z) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(z, PhasePoint):
        return z.q, z.p
    z = np.asarray(z, dtype=float)
    return z[: z.size // 2], z[z.size // 2 :]


def moment_map(action: str, z, generator=None):
    """Momentum of a cotangent-lifted linear action at ``z``.

    ``translation`` returns ``p``; ``rotation`` returns ``q ^ p`` (scalar)
    for m=2 and ``q x p`` for m=3; ``linear`` returns ``p . (X q)`` for the
    m x m generator ``X``.
    """
    q, p = _qp(z)
    m = q.size
    if action == "translation":
        return p.copy()
    if action == "rotation":
        if m == 2:
            return float(q[0] * p[1] - q[1] * p[0])
        if m == 3:
            return np.cross(q, p)
        raise InvalidInputError(f"rotation action needs m in (2, 3), got m={m}")
    if action == "linear":
        if generator is None:
            raise InvalidInputError("linear action needs a generator matrix")
        X = np.asarray(generator.matrix if isinstance(generator, LieAlgebraElement) else generator, dtype=float)
        if X.shape != (m, m):
            raise InvalidInputError(f"generator shape {X.shape} does not match m={m}")
        return float(p @ (X @ q))
    raise InvalidInputError(f"unknown action {action!r}; expected one of {ACTIONS}")


def random_rotations(n: int, seed: int = 0) -> np.ndarray:
    """``n`` rotation matrices from uniformly sampled unit quaternions."""
    rng = np.random.default_rng(seed)
    quat = rng.normal(size=(n, 4))
    quat /= np.linalg.norm(quat, axis=1, keepdims=True)
    w, x, y, z = quat.T
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], axis=-1),
            np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], axis=-1),
            np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], axis=-1),
        ],
        axis=1,
    )


def equivariance_check(rotations: Iterable, z) -> float:
    """Max of ``|mu(g q, g p) - g mu(q, p)|`` over the given SO(3) elements."""
    q, p = _qp(z)
    if q.size != 3:
        raise InvalidInputError("equivariance check needs m = 3")
    mu = moment_map("rotation", z)
    worst = 0.0
    for g in rotations:
        g = np.asarray(g, dtype=float)
        lhs = moment_map("rotation", np.concatenate([g @ q, g @ p]))
        worst = max(worst, float(np.max(np.abs(lhs - g @ mu))))
    return worst


# -- Lie algebras ------------------------------------------------------------


def _check_square(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidDimensionError(f"expected a square matrix, got shape {M.shape}")
    return M


def _algebra_shape_ok(algebra: str, n: int) -> bool:
    return {"so2": n == 2, "so3": n == 3, "sl": n >= 1, "sp": n >= 2 and n % 2 == 0}[algebra]


@dataclass(frozen=True, eq=False)
class LieAlgebraElement:
    algebra: str
    matrix: np.ndarray

    def __post_init__(self):
        if self.algebra not in ALGEBRAS:
            raise InvalidInputError(f"unknown algebra {self.algebra!r}; expected one of {ALGEBRAS}")
        M = _check_square(self.matrix)
        n = M.shape[0]
        if not _algebra_shape_ok(self.algebra, n):
            raise InvalidDimensionError(f"{self.algebra} does not admit {n}x{n} matrices")
        if self.algebra.startswith("so"):
            bad = np.max(np.abs(M + M.T))
        elif self.algebra == "sl":
            bad = abs(np.trace(M))
        else:
            JX = canonical_j(n // 2) @ M
            bad = np.max(np.abs(JX - JX.T))
        if bad > 1e-12:
            raise InvalidInputError(f"matrix is not in {self.algebra} (defect {bad:.3g})")
        M = M.copy()
        M.flags.writeable = False
        object.__setattr__(self, "matrix", M)

    @classmethod
    def so3(cls, omega) -> LieAlgebraElement:
        return cls("so3", hat(omega))

    @classmethod
    def so2(cls, theta: float) -> LieAlgebraElement:
        return cls("so2", np.array([[0.0, -theta], [theta, 0.0]]))

    def vee(self) -> np.ndarray:
        if self.algebra == "so3":
            M = self.matrix
            return np.array([M[2, 1], M[0, 2], M[1, 0]])
        if self.algebra == "so2":
            return np.array([self.matrix[1, 0]])
        raise InvalidInputError("vee is defined for so2/so3 only")


def hat(omega) -> np.ndarray:
    x, y, z = np.asarray(omega, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def lie_exp(X: LieAlgebraElement) -> np.ndarray:
    """Rotation matrix ``exp(X)`` for so2/so3 (Rodrigues)."""
    if X.algebra == "so2":
        th = X.matrix[1, 0]
        c, s = math.cos(th), math.sin(th)
        return np.array([[c, -s], [s, c]])
    if X.algebra != "so3":
        raise InvalidInputError("lie_exp supports so2 and so3")
    K = X.matrix
    th = float(np.linalg.norm(X.vee()))
    if th < 1e-8:
        a, b = 1.0 - th * th / 6.0, 0.5 - th * th / 24.0
    else:
        a, b = math.sin(th) / th, (1.0 - math.cos(th)) / (th * th)
    return np.eye(3) + a * K + b * (K @ K)


def lie_log(R) -> LieAlgebraElement:
    R = _check_square(R)
    n = R.shape[0]
    if n not in (2, 3):
        raise InvalidDimensionError("lie_log supports 2x2 and 3x3 rotations")
    if np.max(np.abs(R.T @ R - np.eye(n))) > 1e-9 or np.linalg.det(R) <= 0:
        raise InvalidInputError("matrix is not a proper rotation")
    tr = float(np.trace(R))
    if n == 2:
        if not tr > -2.0 + 1e-9:
            raise AmbiguousAxisError("rotation angle is pi; sign of the generator is ambiguous")
        return LieAlgebraElement.so2(math.atan2(R[1, 0], R[0, 0]))
    if not tr > -1.0 + 1e-9:
        raise AmbiguousAxisError("rotation angle is pi; axis is ambiguous")
    th = math.acos(min(1.0, max(-1.0, 0.5 * (tr - 1.0))))
    coef = 0.5 + th * th / 12.0 if th < 1e-6 else th / (2.0 * math.sin(th))
    W = coef * (R - R.T)
    return LieAlgebraElement("so3", 0.5 * (W - W.T))


def project(algebra: str, M) -> LieAlgebraElement:
    """Frobenius-nearest element of the algebra."""
    M = _check_square(M)
    n = M.shape[0]
    if algebra not in ALGEBRAS:
        raise InvalidInputError(f"unknown algebra {algebra!r}; expected one of {ALGEBRAS}")
    if not _algebra_shape_ok(algebra, n):
        raise InvalidDimensionError(f"{algebra} does not admit {n}x{n} matrices")
    if algebra.startswith("so"):
        P = 0.5 * (M - M.T)
    elif algebra == "sl":
        P = M - np.trace(M) / n * np.eye(n)
    else:
        J = canonical_j(n // 2)
        JM = J @ M
        P = J.T @ (0.5 * (JM + JM.T))
    return LieAlgebraElement(algebra, P)


def nonzero_spectra(Jm, tol: float = RANK_TOL) -> tuple[np.ndarray, np.ndarray]:
    return anticipation(Jm, tol).nonzero_eigenvalues, compensation(Jm, tol).nonzero_eigenvalues


def spectra_agree(Jm, tol: float = 1e-9) -> bool:
    a, c = nonzero_spectra(Jm)
    return a.shape == c.shape and bool(np.all(np.abs(a - c) <= tol * max(1.0, float(a[0]) if a.size else 1.0)))

