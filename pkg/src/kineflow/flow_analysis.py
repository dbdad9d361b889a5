"""Sparse image-flow analysis.

Pipeline per frame: cluster samples in normalised (x, v) space, drop
velocity outliers against each cluster's affine fit, estimate a pencil
(vanishing point and its type) per cluster, then build a convex-hull region
carrying Newtonian invariants (momenta, kinetic energy) weighted by the log
area ratio against the matching region of the previous frame.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from . import geometry
from .errors import (
    AmbiguousTrackError,
    DegenerateHullError,
    InvalidInputError,
    NoMotionError,
    RankDeficientError,
)
from .phase_space import apply_j, numeric_gradient

SPEED_FLOOR = 1e-3
COND_THRESHOLD = 1e6
CLASSIFY_TOL = 1e-6
BACKGROUND_THRESHOLD = 1e-6


# -- data ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FlowSample:
    x: np.ndarray
    v: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(2)
        v = np.asarray(self.v, dtype=float).reshape(2)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v)) and math.isfinite(self.weight)):
            raise InvalidInputError("flow sample has non-finite entries")
        if self.weight < 0:
            raise InvalidInputError("sample weight must be >= 0")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "weight", float(self.weight))


class FlowField:
    """Timestamped set of sparse flow samples, stored column-wise.

    ``x`` and ``v`` are ``(N, 2)`` arrays (px and px/frame), ``w`` the
    nonnegative sample weights.
    """

    def __init__(self, t: int, x, v, w=None, check_unique: bool = True):
        self.t = int(t)
        self.x = np.asarray(x, dtype=float).reshape(-1, 2)
        self.v = np.asarray(v, dtype=float).reshape(-1, 2)
        n = len(self.x)
        self.w = np.ones(n) if w is None else np.asarray(w, dtype=float).reshape(-1)
        if self.v.shape != self.x.shape or self.w.shape != (n,):
            raise InvalidInputError("x, v and w must describe the same number of samples")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.v)) and np.all(np.isfinite(self.w))):
            raise InvalidInputError("flow field has non-finite entries")
        if np.any(self.w < 0):
            raise InvalidInputError("sample weights must be >= 0")
        if check_unique:
            _check_unique(self.x)
        for a in (self.x, self.v, self.w):
            a.flags.writeable = False

    @classmethod
    def from_samples(cls, t: int, samples: Sequence[FlowSample]) -> FlowField:
        if not samples:
            return cls(t, np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0))
        return cls(t, [s.x for s in samples], [s.v for s in samples], [s.weight for s in samples])

    def __len__(self) -> int:
        return len(self.x)

    @property
    def samples(self) -> list[FlowSample]:
        return [FlowSample(x, v, w) for x, v, w in zip(self.x, self.v, self.w)]

    def subset(self, members) -> FlowField:
        members = np.asarray(members, dtype=int)
        return FlowField(self.t, self.x[members], self.v[members], self.w[members], check_unique=False)

    def with_velocities(self, v) -> FlowField:
        return FlowField(self.t, self.x, v, self.w, check_unique=False)


def _check_unique(x: np.ndarray, tol: float = 1e-9):
    order = np.lexsort((x[:, 1], x[:, 0]))
    xs = x[order]
    for i in range(len(xs) - 1):
        j = i + 1
        while j < len(xs) and xs[j, 0] - xs[i, 0] <= tol:
            if abs(xs[j, 1] - xs[i, 1]) <= tol:
                raise InvalidInputError(f"duplicate sample position {xs[i].tolist()}")
            j += 1


def _as_field(samples) -> FlowField:
    if isinstance(samples, FlowField):
        return samples
    return FlowField.from_samples(0, list(samples))


def _require_nonempty(field: FlowField):
    if len(field) == 0:
        raise InvalidInputError("flow field has no samples")


# -- affine fit and first-order invariants ---------------------------------


class AffineFit(NamedTuple):
    A: np.ndarray
    b: np.ndarray
    rms: float


def fit_affine_field(samples) -> AffineFit:
    """Weighted least-squares fit ``v ~ A x + b``."""
    f = _as_field(samples)
    if len(f) < 3:
        raise RankDeficientError("affine fit needs at least 3 samples")
    x, v, w = f.x, f.v, f.w
    centred = x - x.mean(axis=0)
    sv = np.linalg.svd(centred * np.sqrt(w)[:, None], compute_uv=False)
    if sv[-1] <= 1e-9 * max(1.0, sv[0]):
        raise RankDeficientError("sample positions are collinear or weights degenerate")
    design = np.hstack([x, np.ones((len(f), 1))])
    sw = np.sqrt(w)[:, None]
    coef, *_ = np.linalg.lstsq(design * sw, v * sw, rcond=None)
    A = coef[:2].T
    b = coef[2]
    resid = v - (x @ A.T + b)
    rms = math.sqrt(float(np.sum(w * np.sum(resid**2, axis=1))) / float(np.sum(w)))
    return AffineFit(A, b, rms)


class FirstOrderInvariants(NamedTuple):
    div: float
    curl: float
    def_magnitude: float
    def_angle: float  # 2*mu, radians


def first_order_invariants(A) -> FirstOrderInvariants:
    """Divergence, curl and deformation of ``A = [[u_x, u_y], [v_x, v_y]]``."""
    (ux, uy), (vx, vy) = np.asarray(A, dtype=float)
    c2, s2 = ux - vy, uy + vx
    return FirstOrderInvariants(ux + vy, -(uy - vx), math.hypot(c2, s2), math.atan2(s2, c2))


# -- pencils ---------------------------------------------------------------


class PencilKind(str, enum.Enum):
    SOURCE = "source"
    SINK = "sink"
    SADDLE = "saddle"
    PARALLEL = "parallel"
    ROTATIONAL = "rotational"


@dataclass(frozen=True, eq=False)
class LinePencil:
    """Flow lines through a common vanishing point.

    ``vp`` is a unit homogeneous 3-vector: ``(x, y, 1)`` normalised for a
    finite point, ``(cos theta, sin theta, 0)`` for a parallel pencil.
    ``fit_residual`` is the rms line-to-point distance in px for finite
    points and the rms sine of the angular spread for parallel pencils.
    """

    members: np.ndarray
    vp: np.ndarray
    kind: PencilKind
    fit_residual: float
    theta: float | None = None

    @property
    def point(self) -> np.ndarray | None:
        if self.vp[2] == 0:
            return None
        return self.vp[:2] / self.vp[2]


def classify_pencil(A, tol: float = CLASSIFY_TOL) -> PencilKind:
    """Topological type of the linear field ``v = A x``.

    A zero eigenvalue (within tol) next to a nonzero one is classed by the
    sign of the nonzero one.
    """
    A = np.asarray(A, dtype=float)
    if np.linalg.norm(A) <= tol:
        return PencilKind.PARALLEL
    ev = np.linalg.eigvals(A)
    if np.max(np.abs(ev.imag)) > tol:
        return PencilKind.ROTATIONAL
    lo, hi = np.sort(ev.real)
    if lo > tol:
        return PencilKind.SOURCE
    if hi < -tol:
        return PencilKind.SINK
    if hi > tol and lo < -tol:
        return PencilKind.SADDLE
    if hi > tol:
        return PencilKind.SOURCE
    if lo < -tol:
        return PencilKind.SINK
    return PencilKind.PARALLEL


def _axial_mean(angles: np.ndarray, w: np.ndarray) -> float:
    theta = 0.5 * math.atan2(float(np.sum(w * np.sin(2 * angles))), float(np.sum(w * np.cos(2 * angles))))
    theta %= math.pi
    return 0.0 if theta >= math.pi else theta


def estimate_vanishing_point(
    samples,
    members=None,
    speed_floor: float = SPEED_FLOOR,
    cond_threshold: float = COND_THRESHOLD,
    classify_tol: float = CLASSIFY_TOL,
) -> LinePencil:
    """Least-squares common point of the flow lines ``x_i + s v_i``.

    Minimises ``sum_i w_i dist(c, line_i)^2``. When the normal matrix is too
    ill-conditioned the lines are treated as parallel and the pencil carries
    the weighted axial mean direction instead.
    """
    f = _as_field(samples)
    members = np.arange(len(f)) if members is None else np.asarray(members, dtype=int)
    x, v, w = f.x[members], f.v[members], f.w[members]
    speed = np.linalg.norm(v, axis=1)
    moving = (speed > speed_floor) & (w > 0)
    if not np.any(moving):
        raise NoMotionError("all samples are below the speed floor")
    x, v, w, speed = x[moving], v[moving], w[moving], speed[moving]
    normals = np.stack([-v[:, 1], v[:, 0]], axis=1) / speed[:, None]
    nn = normals[:, :, None] * normals[:, None, :]
    normal_matrix = np.sum(w[:, None, None] * nn, axis=0)
    cond = np.linalg.cond(normal_matrix)
    if len(x) < 2 or not np.isfinite(cond) or cond > cond_threshold:
        theta = _axial_mean(np.arctan2(v[:, 1], v[:, 0]), w)
        spread = np.sin(np.arctan2(v[:, 1], v[:, 0]) - theta)
        resid = math.sqrt(float(np.sum(w * spread**2) / np.sum(w)))
        vp = np.array([math.cos(theta), math.sin(theta), 0.0])
        return LinePencil(members, vp, PencilKind.PARALLEL, resid, theta)
    rhs = np.sum(w[:, None] * np.einsum("nij,nj->ni", nn, x), axis=0)
    c = np.linalg.solve(normal_matrix, rhs)
    dist = np.einsum("ni,ni->n", normals, c - x)
    resid = math.sqrt(float(np.sum(w * dist**2) / np.sum(w)))
    kind = None
    try:
        kind = classify_pencil(fit_affine_field(f.subset(members[moving])).A, classify_tol)
    except RankDeficientError:
        pass
    if kind in (None, PencilKind.PARALLEL):
        # radial sign: flow pointing away from c is a source
        outward = float(np.sum(w * np.einsum("ni,ni->n", x - c, v)))
        kind = PencilKind.SOURCE if outward >= 0 else PencilKind.SINK
    h = np.array([c[0], c[1], 1.0])
    return LinePencil(members, h / np.linalg.norm(h), kind, resid)


# -- clustering ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Clustering:
    """K-means result. ``centers`` are in original (x, v) units."""

    labels: np.ndarray
    centers: np.ndarray
    wcss: float
    sigma_x: float
    sigma_v: float
    iterations: int

    @property
    def k(self) -> int:
        return len(self.centers)

    def members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.labels == j)

    @property
    def clusters(self) -> list[np.ndarray]:
        return [self.members(j) for j in range(self.k)]


def _pooled_std(a: np.ndarray) -> float:
    s = float(np.sqrt(np.mean(np.var(a, axis=0))))
    return s if s > 0 else 1.0


def _kmeans_pp(feats: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(feats)
    chosen = [int(rng.integers(n))]
    d2 = np.sum((feats - feats[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = float(np.sum(d2))
        if total <= 0:
            # all remaining samples coincide with a chosen center: lowest unused index
            idx = next(i for i in range(n) if i not in chosen)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((feats - feats[idx]) ** 2, axis=1))
    return feats[chosen].copy()


def _lloyd(feats, w, centers, max_iter, tol):
    for it in range(1, max_iter + 1):
        d2 = np.sum((feats[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = np.argmin(d2, axis=1)  # ties -> lowest cluster index
        new = centers.copy()
        for j in range(len(centers)):
            sel = labels == j
            if not np.any(sel):
                continue
            wj = w[sel]
            new[j] = np.average(feats[sel], axis=0, weights=wj) if np.sum(wj) > 0 else feats[sel].mean(axis=0)
        shift = float(np.max(np.abs(new - centers)))
        centers = new
        if shift < tol:
            break
    d2 = np.sum((feats[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    labels = np.argmin(d2, axis=1)
    wcss = float(np.sum(w * d2[np.arange(len(feats)), labels]))
    return labels, centers, wcss, it


def kinematic_cluster(
    field: FlowField,
    k: int,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-6,
    n_init: int = 4,
) -> Clustering:
    """K-means (Lloyd) on the 4-vectors ``(x / sigma_x, v / sigma_v)``.

    ``sigma_x`` and ``sigma_v`` are pooled per-field standard deviations.
    ``n_init`` k-means++ restarts are drawn from one seeded generator and
    the lowest weighted WCSS wins, so results are deterministic per seed.
    """
    _require_nonempty(field)
    if int(k) != k or k < 1:
        raise InvalidInputError(f"k must be a positive integer, got {k!r}")
    if k > len(field):
        raise InvalidInputError(f"k={k} exceeds the sample count {len(field)}")
    sx, sv = _pooled_std(field.x), _pooled_std(field.v)
    feats = np.hstack([field.x / sx, field.v / sv])
    w = field.w if np.sum(field.w) > 0 else np.ones(len(field))
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        run = _lloyd(feats, w, _kmeans_pp(feats, k, rng), max_iter, tol)
        if best is None or run[2] < best[2]:
            best = run
    labels, centers, wcss, iters = best
    scale = np.array([sx, sx, sv, sv])
    return Clustering(labels, centers * scale, wcss, sx, sv, iters)


def elbow_scan(field: FlowField, kmax: int = 8, seed: int = 0) -> list[tuple[int, float]]:
    """WCSS for k = 1..kmax (capped at the sample count). No k is chosen."""
    return [(k, kinematic_cluster(field, k, seed).wcss) for k in range(1, min(kmax, len(field)) + 1)]


def remove_outliers(members, field: FlowField, nsigma: float = 3.0, max_passes: int = 10) -> np.ndarray:
    """Drop members whose velocity deviates from the cluster's affine fit.

    A sample is dropped when its residual exceeds ``nsigma * rms``; the fit is
    repeated until nothing changes. Never returns fewer than 3 members: a
    pass that would go below that floor is not applied.
    """
    members = np.asarray(members, dtype=int)
    if len(members) == 0:
        raise InvalidInputError("cluster is empty")
    for _ in range(max_passes):
        if len(members) <= 3:
            break
        sub = field.subset(members)
        try:
            fit = fit_affine_field(sub)
        except RankDeficientError:
            break
        resid = np.linalg.norm(sub.v - (sub.x @ fit.A.T + fit.b), axis=1)
        slack = 1e-9 * (1.0 + float(np.max(np.abs(sub.v))))
        keep = resid <= nsigma * fit.rms + slack
        if np.all(keep) or np.count_nonzero(keep) < 3:
            break
        members = members[keep]
    return members


# -- regions ---------------------------------------------------------------


def region_invariants(w: float, g, v) -> tuple[np.ndarray, float, float]:
    """Linear momentum ``w v``, angular momentum ``w (g ^ v)``, energy ``w |v|^2 / 2``.

    The single formula source for every region invariant in the package.
    """
    g = np.asarray(g, dtype=float)
    v = np.asarray(v, dtype=float)
    return w * v, w * float(geometry.wedge2(g, v)), 0.5 * w * float(v @ v)


@dataclass(frozen=True, eq=False)
class KinematicRegion:
    id: int
    members: np.ndarray
    hull: np.ndarray
    centroid: np.ndarray
    area: float
    orientation: int
    velocity: np.ndarray
    weight: float
    linear_momentum: np.ndarray
    angular_momentum: float
    kinetic_energy: float


def build_region(
    members,
    field: FlowField,
    prev: KinematicRegion | None = None,
    region_id: int = 0,
    background_threshold: float = BACKGROUND_THRESHOLD,
) -> KinematicRegion:
    """Convex-hull region with log-area weight ``w = ln(A_t / A_prev)``.

    ``w`` is 0 without a previous region and when ``|w|`` falls below the
    background threshold.
    """
    members = np.asarray(members, dtype=int)
    pts = field.x[members]
    try:
        hull = geometry.convex_hull(pts)
    except DegenerateHullError as exc:
        raise DegenerateHullError(f"region {region_id}: {exc}") from None
    signed = geometry.polygon_area(hull)
    area = abs(signed)
    centroid = geometry.polygon_centroid(hull)
    wts = field.w[members]
    vel = np.average(field.v[members], axis=0, weights=wts) if np.sum(wts) > 0 else field.v[members].mean(axis=0)
    weight = 0.0
    if prev is not None:
        weight = math.log(area / prev.area)
        if abs(weight) < background_threshold:
            weight = 0.0
    lin, ang, ke = region_invariants(weight, centroid, vel)
    return KinematicRegion(region_id, members, hull, centroid, area, 1 if signed > 0 else -1, vel, weight, lin, ang, ke)


def apparent_kinetic_energy(field: FlowField) -> float:
    """``sum_i w_i |v_i|^2 / 2``."""
    _require_nonempty(field)
    return 0.5 * float(np.sum(field.w * np.sum(field.v**2, axis=1)))


def total_energy(regions: Sequence[KinematicRegion], heights: Sequence[float]) -> tuple[float, float, float]:
    """``(E_pot, E_kin, E_total)`` with ``E_pot = sum w_i h_i`` (no gravitational constant)."""
    if len(regions) != len(heights):
        raise InvalidInputError(f"{len(regions)} regions but {len(heights)} heights")
    if not regions:
        return 0.0, 0.0, 0.0
    w = np.array([r.weight for r in regions])
    h = np.asarray(heights, dtype=float)
    v2 = np.array([float(r.velocity @ r.velocity) for r in regions])
    e_pot = float(np.sum(w * h))
    e_kin = 0.5 * float(np.sum(w * v2))
    return e_pot, e_kin, e_pot + e_kin


def relative_speeds(p, s_b: float) -> np.ndarray:
    """Speeds relative to the background speed ``s_b``."""
    if s_b == 0:
        raise ZeroDivisionError("background speed is zero; re-segment the background")
    return np.asarray(p, dtype=float) / s_b


# -- tracking --------------------------------------------------------------


def match_regions(
    prev: Sequence[KinematicRegion],
    current: Sequence[KinematicRegion],
    ambiguity_px: float = 1.0,
    area_ratio: tuple[float, float] = (0.5, 2.0),
) -> list[int | None]:
    """For each current region, the index of its match in ``prev`` (or None).

    Candidates are previous regions whose area ratio lies within the gate;
    the nearest centroid wins. Two candidates within ``ambiguity_px`` of the
    best distance raise AmbiguousTrackError.
    """
    out: list[int | None] = []
    for r in current:
        cands = [
            (float(np.linalg.norm(r.centroid - p.centroid)), i)
            for i, p in enumerate(prev)
            if area_ratio[0] <= r.area / p.area <= area_ratio[1]
        ]
        if not cands:
            out.append(None)
            continue
        cands.sort()
        if len(cands) > 1 and cands[1][0] - cands[0][0] <= ambiguity_px:
            raise AmbiguousTrackError(
                f"region {r.id} at {r.centroid.tolist()} has two candidates within {ambiguity_px} px"
            )
        out.append(cands[0][1])
    return out


class CubicKinematics(NamedTuple):
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray


def cubic_kinematics(positions) -> CubicKinematics:
    """Position, velocity and acceleration per frame from cubic interpolation.

    Each frame uses the cubic through the 4 consecutive knots in which it
    sits as an interior knot where possible (window ``[i-1, i+2]``, clamped
    at the ends). Frames are one time unit apart. The cubic passes through
    all 4 knots and reproduces any cubic trajectory exactly.
    """
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    if n < 4:
        raise InvalidInputError(f"need at least 4 positions, got {n}")
    vel = np.empty_like(pos)
    acc = np.empty_like(pos)
    for i in range(n):
        start = min(max(i - 1, 0), n - 4)
        p0, p1, p2, p3 = pos[start : start + 4]
        s = float(i - start)
        # Newton form on knots 0,1,2,3
        d1 = p1 - p0
        d2 = (p2 - 2 * p1 + p0) / 2
        d3 = (p3 - 3 * p2 + 3 * p1 - p0) / 6
        # P(s) = p0 + d1 s + d2 s(s-1) + d3 s(s-1)(s-2)
        vel[i] = d1 + d2 * (2 * s - 1) + d3 * (3 * s * s - 6 * s + 2)
        acc[i] = 2 * d2 + d3 * (6 * s - 6)
    return CubicKinematics(pos.copy(), vel, acc)


@dataclass(frozen=True, eq=False)
class CentroidTrack:
    region_ids: list[int]
    kinematics: CubicKinematics


def track_centroids(frames: Sequence[Sequence[KinematicRegion]], **match_opts) -> list[CentroidTrack]:
    """Follow regions through consecutive frames and fit cubic kinematics.

    Tracks start at the regions of the first frame. Only tracks spanning at
    least 4 consecutive frames are returned.
    """
    if len(frames) < 4:
        raise InvalidInputError(f"tracking needs at least 4 frames, got {len(frames)}")
    tracks = [[(0, i)] for i in range(len(frames[0]))]
    alive = {i: i for i in range(len(frames[0]))}  # index in current frame -> track
    for t in range(1, len(frames)):
        matches = match_regions(frames[t - 1], frames[t], **match_opts)
        nxt = {}
        for cur, prev_idx in enumerate(matches):
            if prev_idx is not None and prev_idx in alive:
                tr = alive[prev_idx]
                if tr in nxt.values():
                    raise AmbiguousTrackError(f"two regions in frame {t} continue the same track")
                tracks[tr].append((t, cur))
                nxt[cur] = tr
        alive = nxt
    out = []
    for tr in tracks:
        if len(tr) >= 4:
            cents = [frames[t][i].centroid for t, i in tr]
            out.append(CentroidTrack([frames[t][i].id for t, i in tr], cubic_kinematics(cents)))
    return out


# -- lifted intensity ------------------------------------------------------


class LiftedGradient(NamedTuple):
    gradient: np.ndarray
    symplectic: np.ndarray
    is_critical: bool


def lifted_intensity_gradient(G: Callable[[np.ndarray], float], z, tol: float = 1e-8) -> LiftedGradient:
    """Gradient and symplectic gradient of ``G(q1, q2, p1, p2)`` at z."""
    z = np.asarray(z, dtype=float)
    if z.shape != (4,):
        raise InvalidInputError(f"phase point must have shape (4,), got {z.shape}")
    g = numeric_gradient(lambda w: float(G(w)), z)
    sg = apply_j(g)
    return LiftedGradient(g, sg, bool(np.linalg.norm(sg) <= tol))


# -- per-frame pipeline ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class ClusterResult:
    id: int
    members: np.ndarray
    center: np.ndarray
    pencil: LinePencil | None
    region: KinematicRegion | None
    invariants: FirstOrderInvariants | None
    notes: list[str] = field(default_factory=list)


def analyze_frame(
    field: FlowField,
    k: int = 1,
    nsigma: float = 3.0,
    seed: int = 0,
    prev_regions: Sequence[KinematicRegion] | None = None,
    speed_floor: float = SPEED_FLOOR,
    cond_threshold: float = COND_THRESHOLD,
    classify_tol: float = CLASSIFY_TOL,
) -> tuple[Clustering, list[ClusterResult]]:
    """Cluster, clean, and describe one flow field."""
    clustering = kinematic_cluster(field, k, seed)
    provisional: list[tuple[int, np.ndarray, np.ndarray, LinePencil | None, FirstOrderInvariants | None, list[str]]] = []
    regions: list[KinematicRegion | None] = []
    for j in range(clustering.k):
        notes: list[str] = []
        members = clustering.members(j)
        if len(members) == 0:
            notes.append("empty cluster")
            provisional.append((j, members, clustering.centers[j], None, None, notes))
            regions.append(None)
            continue
        members = remove_outliers(members, field, nsigma)
        pencil = inv = None
        try:
            pencil = estimate_vanishing_point(field, members, speed_floor, cond_threshold, classify_tol)
        except NoMotionError as exc:
            notes.append(str(exc))
        try:
            inv = first_order_invariants(fit_affine_field(field.subset(members)).A)
        except RankDeficientError as exc:
            notes.append(str(exc))
        region = None
        try:
            region = build_region(members, field, None, j)
        except DegenerateHullError as exc:
            notes.append(str(exc))
        provisional.append((j, members, clustering.centers[j], pencil, inv, notes))
        regions.append(region)
    if prev_regions:
        built = [r for r in regions if r is not None]
        matches = iter(match_regions(prev_regions, built))
        for j, r in enumerate(regions):
            if r is None:
                continue
            m = next(matches)
            if m is not None:
                regions[j] = build_region(r.members, field, prev_regions[m], r.id)
    results = [
        ClusterResult(j, members, center, pencil, regions[j], inv, notes)
        for (j, members, center, pencil, inv, notes) in provisional
    ]
    return clustering, results
