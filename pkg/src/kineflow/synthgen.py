"""Synthetic ground truth: pinhole projection of rigidly translating point clouds.

World-to-camera convention: ``X_c = R @ X + t``; image point
``f * (X_c[0] / X_c[2], X_c[1] / X_c[2]) + pp``. Flow is the exact two-frame
displacement ``project(X at k+1) - project(X at k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CheiralityError, InvalidInputError, PartialSequenceError
from .flow_analysis import FlowField

MIN_DEPTH = 1e-6


def noise_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator; streams are platform independent."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True, eq=False)
class CameraPose:
    R: np.ndarray
    t: np.ndarray
    f: float = 500.0
    pp: np.ndarray = field(default_factory=lambda: np.array([320.0, 240.0]))

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float).reshape(3, 3)
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-12 or np.linalg.det(R) < 0:
            raise InvalidInputError("R must be a proper rotation")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float).reshape(3))
        object.__setattr__(self, "pp", np.asarray(self.pp, dtype=float).reshape(2))
        if not self.f > 0:
            raise InvalidInputError("focal length must be positive")

    @classmethod
    def identity(cls, f: float = 500.0, pp=(320.0, 240.0)) -> CameraPose:
        return cls(np.eye(3), np.zeros(3), f, np.asarray(pp, dtype=float))

    def moved(self, dt) -> CameraPose:
        return CameraPose(self.R, self.t + np.asarray(dt, dtype=float), self.f, self.pp)


def to_camera(pose: CameraPose, X) -> np.ndarray:
    return np.asarray(X, dtype=float) @ pose.R.T + pose.t


def project_points(pose: CameraPose, X) -> np.ndarray:
    """Project an ``(N, 3)`` array; raises CheiralityError for points behind the camera."""
    Xc = to_camera(pose, np.atleast_2d(X))
    depth = Xc[:, 2]
    bad = np.flatnonzero(depth <= MIN_DEPTH)
    if bad.size:
        raise CheiralityError(f"point {int(bad[0])} is behind the camera (depth {depth[bad[0]]:.3g})")
    return pose.f * Xc[:, :2] / depth[:, None] + pose.pp


def project(pose: CameraPose, X) -> np.ndarray:
    return project_points(pose, np.asarray(X, dtype=float).reshape(1, 3))[0]


@dataclass(frozen=True, eq=False)
class SceneBody:
    points: np.ndarray
    velocity: np.ndarray
    label: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        vel = np.asarray(self.velocity, dtype=float).reshape(3)
        if len(pts) < 4:
            raise InvalidInputError("a body needs at least 4 points")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(vel))):
            raise InvalidInputError("body has non-finite entries")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "velocity", vel)


@dataclass
class BodyTruth:
    """Vanishing point of one body's relative translation in one frame.

    ``point`` is set for a finite vanishing point, ``theta`` (direction of
    image motion, radians) when the translation is parallel to the image
    plane. Both are None when the camera rotates between frames.
    """

    point: np.ndarray | None
    theta: float | None
    centroid: np.ndarray


@dataclass
class GroundTruth:
    labels: list[np.ndarray]
    bodies: list[dict[int, BodyTruth]]


def translation_vanishing_point(pose: CameraPose, d) -> tuple[np.ndarray | None, float | None]:
    d = np.asarray(d, dtype=float)
    if abs(d[2]) > 1e-12 * max(1.0, float(np.max(np.abs(d)))):
        return pose.f * d[:2] / d[2] + pose.pp, None
    return None, math.atan2(d[1], d[0])


def generate_sequence(
    bodies: Sequence[SceneBody],
    poses: Sequence[CameraPose],
    frames: int,
) -> tuple[list[FlowField], GroundTruth]:
    """Flow fields for frames ``0..frames-1``; needs ``frames + 1`` poses."""
    if frames < 1:
        raise InvalidInputError("frames must be >= 1")
    if len(poses) < frames + 1:
        raise InvalidInputError(f"need {frames + 1} poses for {frames} flow frames, got {len(poses)}")
    fields, labels, truths = [], [], []
    for k in range(frames):
        xs, vs, ls = [], [], []
        truth = {}
        for body in bodies:
            now = body.points + k * body.velocity
            try:
                x0 = project_points(poses[k], now)
                x1 = project_points(poses[k + 1], now + body.velocity)
            except CheiralityError as exc:
                raise PartialSequenceError(k, f"frame {k}, body {body.label}: {exc}") from None
            xs.append(x0)
            vs.append(x1 - x0)
            ls.append(np.full(len(x0), body.label))
            if np.allclose(poses[k].R, poses[k + 1].R, atol=0, rtol=0):
                d = poses[k].R @ body.velocity + poses[k + 1].t - poses[k].t
                point, theta = translation_vanishing_point(poses[k], d)
            else:
                point = theta = None
            truth[body.label] = BodyTruth(point, theta, x0.mean(axis=0))
        fields.append(FlowField(k, np.vstack(xs), np.vstack(vs)))
        labels.append(np.concatenate(ls))
        truths.append(truth)
    return fields, GroundTruth(labels, truths)


def add_noise(field: FlowField, sigma: float, seed: int) -> FlowField:
    """Isotropic Gaussian noise on velocities only; deterministic per seed."""
    if sigma < 0:
        raise InvalidInputError("sigma must be >= 0")
    if sigma == 0:
        return field.with_velocities(field.v.copy())
    noise = noise_rng(seed).normal(0.0, sigma, size=field.v.shape)
    return field.with_velocities(field.v + noise)


# -- built-in scenarios ----------------------------------------------------

SCENARIOS = ("forward-dolly", "two-bodies", "parallel-pan")


def _cloud(rng: np.random.Generator, center, half_extent, n: int) -> np.ndarray:
    return np.asarray(center, dtype=float) + rng.uniform(-1, 1, (n, 3)) * np.asarray(half_extent, dtype=float)


def forward_dolly(frames: int = 10, n_points: int = 200, seed: int = 0, speed: float = 1.0):
    """Static cloud, camera moving along its optical axis (focus of expansion at pp).

    The nearest points start at depth 20, so at most 19 frames stay visible
    at the default speed.
    """
    rng = noise_rng(seed)
    pts = _cloud(rng, (0, 0, 30), (8, 6, 10), n_points)
    base = CameraPose.identity()
    poses = [base.moved((0, 0, -speed * k)) for k in range(frames + 1)]
    return [SceneBody(pts, np.zeros(3), 0)], poses


def two_bodies(
    frames: int = 10,
    n_points: int = 200,
    seed: int = 0,
    separation_px: float = 1.0,
    approach: float = 0.02,
):
    """Two clouds side by side with opposite lateral motion, both approaching.

    ``separation_px`` is the image-speed difference between the bodies at
    the reference depth (px/frame).
    """
    rng = noise_rng(seed)
    base = CameraPose.identity()
    depth = 25.0
    u = 0.5 * separation_px * depth / base.f
    half = n_points // 2
    left = SceneBody(_cloud(rng, (-4, 0, depth), (2.5, 3, 2), half), (u, 0, -approach), 0)
    right = SceneBody(_cloud(rng, (4, 0, depth), (2.5, 3, 2), n_points - half), (-u, 0, -approach), 1)
    return [left, right], [base] * (frames + 1)


def parallel_pan(frames: int = 10, n_points: int = 200, seed: int = 0, speed: float = 0.2):
    """Static cloud, camera translating sideways (parallel pencil)."""
    rng = noise_rng(seed)
    pts = _cloud(rng, (0, 0, 30), (8, 6, 10), n_points)
    base = CameraPose.identity()
    poses = [base.moved((-speed * k, 0, 0)) for k in range(frames + 1)]
    return [SceneBody(pts, np.zeros(3), 0)], poses


def scenario(name: str, frames: int = 10, n_points: int = 200, seed: int = 0, noise: float = 0.0, **kw):
    """Generate a built-in scenario; noise for frame k is seeded with ``seed * 1000003 + k``."""
    makers = {"forward-dolly": forward_dolly, "two-bodies": two_bodies, "parallel-pan": parallel_pan}
    if name not in makers:
        raise InvalidInputError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")
    bodies, poses = makers[name](frames=frames, n_points=n_points, seed=seed, **kw)
    fields, truth = generate_sequence(bodies, poses, frames)
    if noise > 0:
        fields = [add_noise(f, noise, seed * 1_000_003 + k) for k, f in enumerate(fields)]
    return fields, truth
