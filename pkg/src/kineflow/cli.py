"""Command line entry point: ``kineflow {synth,cluster,simulate,tensor}``.

Exit codes: 0 ok, 2 usage, 3 bad input, 4 domain failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import flow_analysis as fa
from . import io
from . import moment_tensor as mt
from . import synthgen as sg
from . import vp_dynamics as vd
from .errors import AmbiguousTrackError, InvalidInputError, KineflowError
from .phase_space import METHODS, PhasePoint

CONFIG_ENV = "KINEFLOW_CONFIG"


@dataclass
class Config:
    k: int = 2
    nsigma: float = 3.0
    speed_floor: float = fa.SPEED_FLOOR
    cond_threshold: float = fa.COND_THRESHOLD
    classify_tol: float = fa.CLASSIFY_TOL
    rank_tol: float = mt.RANK_TOL
    softening: float = 0.0
    dt: float = 1e-3
    steps: int = 100_000
    seed: int = 0
    frames: int = 10
    n_points: int = 200
    noise: float = 0.0

    def validate(self) -> Config:
        positive = ("k", "nsigma", "speed_floor", "cond_threshold", "classify_tol", "rank_tol", "dt", "frames")
        for name in positive:
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"config {name} must be positive, got {getattr(self, name)}")
        for name in ("softening", "noise", "steps", "seed"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"config {name} must be nonnegative, got {getattr(self, name)}")
        if self.n_points < 8:
            raise InvalidInputError("config n_points must be >= 8")
        return self

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(Config)}


def _coerce(name: str, value: Any, where: str):
    kind = _FIELD_TYPES[name]
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise InvalidInputError(f"{where}.{name}: expected an integer")
        return value
    return io.real(value, f"{where}.{name}")


def load_config_file(path) -> dict:
    obj = io.load_json(path)
    if not isinstance(obj, dict):
        raise InvalidInputError(f"{path}: config must be a JSON object")
    out = {}
    for key, value in obj.items():
        if key == "schema":
            io.check_schema(obj, str(path))
            continue
        if key not in _FIELD_TYPES:
            raise InvalidInputError(f"{path}.{key}: unknown config key")
        out[key] = _coerce(key, value, str(path))
    return out


def resolve_config(args: argparse.Namespace) -> Config:
    """Defaults, then the config file, then explicit flags."""
    values: dict[str, Any] = {}
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV)
    if path:
        values.update(load_config_file(path))
    for name in _FIELD_TYPES:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    return Config(**values).validate()


# -- serialization helpers ---------------------------------------------------


def _report(rep: mt.SymmetricTensorReport) -> dict:
    out = {
        "matrix": rep.matrix,
        "eigenvalues": rep.eigenvalues,
        "rank": rep.rank,
        "tolerance": rep.tolerance,
    }
    if rep.third_moment is not None:
        out["third_moment"] = rep.third_moment
    return out


def _pencil(p: fa.LinePencil | None):
    if p is None:
        return None
    point = p.point
    return {
        "kind": p.kind.value,
        "vp": p.vp,
        "point": None if point is None else point,
        "theta": p.theta,
        "fit_residual": p.fit_residual,
    }


def _region(r: fa.KinematicRegion | None):
    if r is None:
        return None
    return {
        "hull": r.hull,
        "centroid": r.centroid,
        "area": r.area,
        "orientation": r.orientation,
        "velocity": r.velocity,
        "weight": r.weight,
        "linear_momentum": r.linear_momentum,
        "angular_momentum": r.angular_momentum,
        "kinetic_energy": r.kinetic_energy,
    }


def _invariants(inv):
    return None if inv is None else dict(inv._asdict())


# -- synth -------------------------------------------------------------------


def _scenario_from_json(path: str, cfg: Config):
    obj = io.load_json(path)
    io.check_schema(obj, path)
    bodies_raw = obj.get("bodies")
    if not isinstance(bodies_raw, list) or not bodies_raw:
        raise InvalidInputError(f"{path}.bodies: expected a non-empty list")
    bodies = []
    for i, b in enumerate(bodies_raw):
        where = f"{path}.bodies[{i}]"
        if not isinstance(b, dict):
            raise InvalidInputError(f"{where}: expected an object")
        pts = b.get("points")
        if not isinstance(pts, list):
            raise InvalidInputError(f"{where}.points: expected a list")
        points = [io.vector(p, 3, f"{where}.points[{j}]") for j, p in enumerate(pts)]
        vel = io.vector(b.get("velocity", [0, 0, 0]), 3, f"{where}.velocity")
        label = io.integer(b.get("label", i), f"{where}.label")
        bodies.append(sg.SceneBody(np.array(points).reshape(-1, 3), vel, label))
    cam = obj.get("camera", {})
    if not isinstance(cam, dict):
        raise InvalidInputError(f"{path}.camera: expected an object")
    f = io.real(cam.get("f", 500.0), f"{path}.camera.f")
    pp = io.vector(cam.get("pp", [320.0, 240.0]), 2, f"{path}.camera.pp")
    cv = np.array(io.vector(cam.get("velocity", [0, 0, 0]), 3, f"{path}.camera.velocity"))
    base = sg.CameraPose(np.eye(3), np.zeros(3), f, pp)
    # camera moving by cv per frame is the world moving by -cv in camera coordinates
    poses = [base.moved(-k * cv) for k in range(cfg.frames + 1)]
    fields, truth = sg.generate_sequence(bodies, poses, cfg.frames)
    if cfg.noise > 0:
        fields = [sg.add_noise(fl, cfg.noise, cfg.seed * 1_000_003 + k) for k, fl in enumerate(fields)]
    return fields, truth


def cmd_synth(args, parser) -> int:
    cfg = resolve_config(args)
    name = args.scenario
    if name in sg.SCENARIOS:
        fields, truth = sg.scenario(name, cfg.frames, cfg.n_points, cfg.seed, cfg.noise)
    elif name.endswith(".json") and Path(name).exists():
        fields, truth = _scenario_from_json(name, cfg)
    else:
        parser.error(f"unknown scenario {name!r}; built-ins are {', '.join(sg.SCENARIOS)} or a scenario .json file")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for fl in fields:
        io.write_json(out / f"flow_{fl.t:04d}.json", io.flow_to_dict(fl))
    frames = []
    for k, (labels, bodies) in enumerate(zip(truth.labels, truth.bodies)):
        frames.append(
            {
                "t": k,
                "labels": labels,
                "bodies": [
                    {"label": lab, "vp": bt.point, "theta": bt.theta, "centroid": bt.centroid}
                    for lab, bt in sorted(bodies.items())
                ],
            }
        )
    io.write_json(
        out / "ground_truth.json",
        {"schema": io.SCHEMA, "scenario": name, "config": cfg.as_dict(), "frames": frames},
    )
    print(f"wrote {len(fields)} flow files and ground_truth.json to {out}")
    return 0


# -- cluster -----------------------------------------------------------------


def _analyze(field, cfg: Config, prev):
    opts = dict(
        k=cfg.k,
        nsigma=cfg.nsigma,
        seed=cfg.seed,
        speed_floor=cfg.speed_floor,
        cond_threshold=cfg.cond_threshold,
        classify_tol=cfg.classify_tol,
    )
    try:
        return fa.analyze_frame(field, prev_regions=prev, **opts), None
    except AmbiguousTrackError as exc:
        return fa.analyze_frame(field, prev_regions=None, **opts), f"no temporal weights: {exc}"


def cmd_cluster(args, parser) -> int:
    cfg = resolve_config(args)
    fields = [io.read_flow(p) for p in args.flows]
    frames, region_frames = [], []
    prev = None
    for idx, field in enumerate(fields):
        (clustering, results), note = _analyze(field, cfg, prev)
        regions = [r.region for r in results if r.region is not None]
        frame = {
            "t": field.t,
            "source": str(args.flows[idx]),
            "labels": clustering.labels,
            "wcss": clustering.wcss,
            "apparent_kinetic_energy": fa.apparent_kinetic_energy(field),
            "clusters": [
                {
                    "id": r.id,
                    "size": int(len(r.members)),
                    "members": r.members,
                    "center": r.center,
                    "pencil": _pencil(r.pencil),
                    "invariants": _invariants(r.invariants),
                    "region": _region(r.region),
                    "notes": r.notes,
                }
                for r in results
            ],
        }
        if note:
            frame["notes"] = [note]
        frames.append(frame)
        region_frames.append(regions)
        prev = regions
        if args.svg:
            svg_path = Path(args.svg)
            if len(fields) > 1:
                svg_path = svg_path.with_name(f"{svg_path.stem}_{idx:04d}{svg_path.suffix or '.svg'}")
            io.atomic_write(
                svg_path,
                io.svg_overlay(
                    field,
                    clustering.labels,
                    [None if r.region is None else r.region.hull for r in results],
                    [None if r.pencil is None else r.pencil.point for r in results],
                ),
            )
    out: dict[str, Any] = {"schema": io.SCHEMA, "config": cfg.as_dict(), "frames": frames}
    if len(fields) >= 4:
        try:
            tracks = fa.track_centroids(region_frames)
            out["tracks"] = [
                {
                    "region_ids": tr.region_ids,
                    "position": tr.kinematics.position,
                    "velocity": tr.kinematics.velocity,
                    "acceleration": tr.kinematics.acceleration,
                }
                for tr in tracks
            ]
        except KineflowError as exc:
            out["tracks_error"] = str(exc)
    _emit(out, args.out)
    return 0


# -- simulate ----------------------------------------------------------------


def _floats(text: str, n: tuple[int, ...], what: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise InvalidInputError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    if len(vals) not in n:
        raise InvalidInputError(f"{what}: expected {' or '.join(map(str, n))} values, got {len(vals)}")
    return vals


def _charges_from_json(path: str):
    obj = io.load_json(path)
    io.check_schema(obj, path)
    raw = obj.get("centers")
    if not isinstance(raw, list):
        raise InvalidInputError(f"{path}.centers: expected a list")
    centers = []
    for i, c in enumerate(raw):
        where = f"{path}.centers[{i}]"
        if not isinstance(c, dict):
            raise InvalidInputError(f"{where}: expected an object")
        pos = io.vector(c.get("position"), 2, f"{where}.position")
        mass = io.real(c.get("mass", 1.0), f"{where}.mass")
        sign = io.integer(c.get("sign", 1), f"{where}.sign")
        try:
            centers.append(vd.ChargeCenter(pos, mass, sign))
        except InvalidInputError as exc:
            raise InvalidInputError(f"{where}: {exc}") from None
    extra = {}
    for key in ("q0", "p0"):
        if key in obj:
            extra[key] = io.vector(obj[key], 2, f"{path}.{key}")
    if "softening" in obj:
        extra["softening"] = io.real(obj["softening"], f"{path}.softening")
    return centers, extra


def cmd_simulate(args, parser) -> int:
    cfg = resolve_config(args)
    q0, p0 = [1.0, 0.0], [0.0, 1.0]
    sources = sum(bool(x) for x in (args.preset, args.center, args.triangle, args.charges))
    if sources != 1:
        parser.error("give exactly one of --preset, --center, --triangle, --charges")
    if args.preset:
        centers = [vd.ChargeCenter((0.0, 0.0), 1.0, vd.ATTRACTIVE)]
    elif args.center:
        centers = []
        for text in args.center:
            vals = _floats(text, (2, 3, 4), "--center")
            mass = vals[2] if len(vals) > 2 else 1.0
            sign = int(vals[3]) if len(vals) > 3 else vd.ATTRACTIVE
            centers.append(vd.ChargeCenter(vals[:2], mass, sign))
    elif args.triangle:
        v = _floats(args.triangle, (6,), "--triangle")
        centers = list(vd.ChargeSystem.from_triangle(v[0:2], v[2:4], v[4:6]).centers)
    else:
        centers, extra = _charges_from_json(args.charges)
        q0 = extra.get("q0", q0)
        p0 = extra.get("p0", p0)
        if "softening" in extra and args.softening is None:
            cfg = dataclasses.replace(cfg, softening=extra["softening"]).validate()
    if args.q0:
        q0 = _floats(args.q0, (2,), "--q0")
    if args.p0:
        p0 = _floats(args.p0, (2,), "--p0")
    system = vd.ChargeSystem(tuple(centers), cfg.softening)
    if args.repulsive:
        system = system.flipped()
    z0 = PhasePoint(q0, p0)
    res = vd.simulate(system, z0, cfg.dt, cfg.steps, args.method)
    reversal = vd.time_reversal_residual(system, z0, cfg.dt, cfg.steps, args.method)
    traj = res.trajectory
    rows = np.column_stack([traj.times, traj.q, traj.p, res.energy])
    io.atomic_write(args.out, io.format_csv(["t", "q1", "q2", "p1", "p2", "H"], rows))
    report: dict[str, Any] = {
        "schema": io.SCHEMA,
        "config": cfg.as_dict(),
        "method": args.method,
        "centers": [{"position": c.position, "mass": c.mass, "sign": c.sign} for c in system.centers],
        "initial_energy": res.energy[0],
        "energy_drift": res.energy_drift,
        "time_reversal_residual": reversal,
        "final_state": {"q": traj.q[-1], "p": traj.p[-1]},
        "warnings": res.warnings,
        "trajectory": str(args.out),
    }
    if len(system.centers) in (2, 3):
        report["m_expression"] = {
            "initial": vd.evaluate_m_expression(traj[0], system),
            "final": vd.evaluate_m_expression(traj[len(traj) - 1], system),
        }
    _emit(report, args.report)
    return 0


# -- tensor ------------------------------------------------------------------


def cmd_tensor(args, parser) -> int:
    if not (args.gradients or args.jacobian):
        parser.error("give --gradients and/or --jacobian")
    cfg = resolve_config(args)
    out: dict[str, Any] = {"schema": io.SCHEMA, "config": cfg.as_dict()}
    if args.gradients:
        G = io.read_numeric_csv(args.gradients, ("Ix", "Iy", "It"))
        if len(G) == 0:
            raise InvalidInputError(f"{args.gradients}: no gradient rows")
        out["motion_structure_tensor"] = _report(mt.motion_structure_tensor(G, cfg.rank_tol, args.third_order))
    if args.jacobian:
        obj = io.load_json(args.jacobian)
        io.check_schema(obj, args.jacobian)
        Jm = io.matrix(obj.get("jacobian"), f"{args.jacobian}.jacobian")
        out["anticipation"] = _report(mt.anticipation(Jm, cfg.rank_tol))
        out["compensation"] = _report(mt.compensation(Jm, cfg.rank_tol))
    _emit(out, args.out)
    return 0


def _emit(obj: dict, path) -> None:
    if path and path != "-":
        io.write_json(path, obj)
    else:
        sys.stdout.write(io.dumps(obj))


# -- parser ------------------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser, names: tuple[str, ...]):
    kinds = {"int": int, "float": float}
    for name in names:
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=kinds[_FIELD_TYPES[name]], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kineflow", description="Kinematic flow analysis and vanishing-point dynamics.")
    parser.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic flow fields with ground truth")
    p.add_argument("scenario", help=f"one of {', '.join(sg.SCENARIOS)} or a scenario .json file")
    p.add_argument("--out", default="flows", help="output directory (created if missing)")
    _add_config_flags(p, ("frames", "n_points", "noise", "seed"))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("cluster", help="cluster flow fields into kinematic regions")
    p.add_argument("flows", nargs="+", help="flow JSON files, in frame order")
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.add_argument("--svg", help="SVG overlay path")
    _add_config_flags(p, ("k", "nsigma", "seed", "speed_floor", "cond_threshold", "classify_tol"))
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("simulate", help="integrate an agent around signed charges")
    p.add_argument("--preset", choices=["circular-orbit"])
    p.add_argument("--center", action="append", metavar="X,Y[,M[,S]]", help="charge center (repeatable); S is 1 or -1")
    p.add_argument("--triangle", metavar="X1,Y1,X2,Y2,X3,Y3", help="three centers with orthocenter masses")
    p.add_argument("--charges", metavar="JSON", help="charge specification file")
    p.add_argument("--q0", metavar="X,Y")
    p.add_argument("--p0", metavar="PX,PY")
    p.add_argument("--repulsive", action="store_true", help="flip the sign of every charge")
    p.add_argument("--method", choices=METHODS, default="leapfrog")
    p.add_argument("--out", default="trajectory.csv", help="trajectory CSV path")
    p.add_argument("--report", help="report JSON path (default: stdout)")
    _add_config_flags(p, ("dt", "steps", "softening", "seed"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tensor", help="structure tensor and Jacobian Gram reports")
    p.add_argument("--gradients", metavar="CSV", help="rows of Ix,Iy,It")
    p.add_argument("--jacobian", metavar="JSON", help='{"schema": "kineflow/1", "jacobian": [[...], ...]}')
    p.add_argument("--third-order", action="store_true", help="include the raw third moment")
    p.add_argument("--out", help="report JSON path (default: stdout)")
    _add_config_flags(p, ("rank_tol", "seed"))
    p.set_defaults(func=cmd_tensor)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except KineflowError as exc:
        print(f"kineflow: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ZeroDivisionError as exc:
        print(f"kineflow: error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
