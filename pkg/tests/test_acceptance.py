"""Acceptance checks, one per criterion.

Each check returns ``(passed, detail)`` and prints a single PASS/FAIL line.
Run ``pytest tests/test_acceptance.py -v`` or ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import hashlib
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from kineflow import exterior as ex
from kineflow import flow_analysis as fa
from kineflow import moment_tensor as mt
from kineflow import phase_space as ps
from kineflow import synthgen as sg
from kineflow import vp_dynamics as vd


def _poly(rng, n, degree=2):
    terms = []
    for _ in range(4):
        exps = np.zeros(n, dtype=int)
        for _ in range(rng.integers(0, degree + 1)):
            exps[rng.integers(n)] += 1
        terms.append((float(rng.uniform(-1, 1)), exps))
    return lambda x: sum(c * np.prod(x**e) for c, e in terms)


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def canonical_relations():
    def run():
        rng = np.random.default_rng(1)
        worst = 0.0
        for m in (1, 2, 3):
            qs = [ps.coordinate(m, i) for i in range(m)]
            pvs = [ps.coordinate(m, i, momentum=True) for i in range(m)]
            for _ in range(100):
                z = rng.uniform(-10, 10, 2 * m)
                for i in range(m):
                    for j in range(m):
                        worst = max(
                            worst,
                            abs(ps.poisson_bracket(qs[i], pvs[j], z) - (i == j)),
                            abs(ps.poisson_bracket(qs[i], qs[j], z)),
                            abs(ps.poisson_bracket(pvs[i], pvs[j], z)),
                        )
        return worst

    worst, secs = _timed(run)
    return worst <= 1e-9 and secs < 1.0, f"max bracket error {worst:.2e}, {secs:.2f}s"


def energy_and_volume():
    def run():
        H = ps.harmonic(1)
        z0 = ps.PhasePoint([1.0], [0.0])
        traj = ps.integrate(H, z0, 0.01, 10_000)
        e = 0.5 * (traj.q[:, 0] ** 2 + traj.p[:, 0] ** 2)
        dH = float(np.max(np.abs(e - e[0])))
        dV = abs(ps.liouville_check(H, z0, 0.01, 10_000))
        return dH, dV

    (dH, dV), secs = _timed(run)
    return dH <= 1e-8 and dV <= 1e-8 and secs < 5.0, f"|dH| {dH:.2e}, volume drift {dV:.2e}, {secs:.2f}s"


def cartan_identity():
    def run():
        rng = np.random.default_rng(3)
        worst_lie = worst_dd = 0.0
        for trial in range(20):
            n = 2 + trial % 2
            polys = [_poly(rng, n) for _ in range(n)]
            X = ex.VectorField(n, lambda x, polys=polys: np.array([f(x) for f in polys]))
            k = int(rng.integers(0, n + 1))
            cps = [_poly(rng, n) for _ in ex.multi_indices(n, k)]
            a = ex.FormField(n, k, lambda x, cps=cps: np.array([f(x) for f in cps]))
            x = rng.uniform(-1, 1, n)
            diff = ex.lie_derivative_cartan(X, a)(x) - ex.lie_derivative_flow(X, a, 1e-3)(x)
            worst_lie = max(worst_lie, float(np.max(np.abs(diff), initial=0.0)))
            if k <= n - 2:
                dd = ex.exterior_derivative(ex.exterior_derivative(a))(x)
                worst_dd = max(worst_dd, float(np.max(np.abs(dd), initial=0.0)))
        return worst_lie, worst_dd

    (lie, dd), secs = _timed(run)
    return lie <= 5e-3 and dd <= 1e-4 and secs < 10.0, f"|L_cartan - L_flow| {lie:.2e}, |dd| {dd:.2e}, {secs:.2f}s"


def vanishing_point_recovery():
    def run():
        noisy, truth = sg.scenario("forward-dolly", frames=1, n_points=200, seed=0, noise=0.1)
        clean, _ = sg.scenario("forward-dolly", frames=1, n_points=200, seed=0)
        pp = truth.bodies[0][0].point
        pn = fa.estimate_vanishing_point(noisy[0])
        pc = fa.estimate_vanishing_point(clean[0])
        return (
            float(np.linalg.norm(pn.point - pp)),
            pn.kind,
            float(np.linalg.norm(pc.point - pp)),
        )

    (err, kind, err0), secs = _timed(run)
    ok = err <= 2.0 and kind == fa.PencilKind.SOURCE and err0 <= 1e-6 and secs < 1.0
    return ok, f"noisy error {err:.3f} px ({kind.value}), noiseless {err0:.1e} px, {secs:.2f}s"


def segmentation_oracle():
    def run():
        worst = 1.0
        for seed in range(10):
            fields, truth = sg.scenario("two-bodies", frames=1, n_points=200, seed=seed, noise=0.1, separation_px=1.0)
            labels = fa.kinematic_cluster(fields[0], 2, seed=seed).labels
            same = float(np.mean(labels == truth.labels[0]))
            worst = min(worst, max(same, 1.0 - same))
        return worst

    worst, secs = _timed(run)
    return worst >= 0.99 and secs < 5.0, f"min agreement {worst:.3f} over 10 seeds, {secs:.2f}s"


def region_invariants():
    rng = np.random.default_rng(6)
    field = fa.FlowField(0, rng.uniform(0, 300, (40, 2)), rng.normal(0, 2, (40, 2)))
    members = np.arange(40)
    prev = fa.build_region(members, field)
    same = fa.build_region(members, field, prev)
    zero_ok = (
        same.weight == 0.0
        and np.all(same.linear_momentum == 0.0)
        and same.angular_momentum == 0.0
        and same.kinetic_energy == 0.0
    )
    grown = fa.build_region(members, field, fa.build_region(members[:25], field))
    lin, ang, ke = fa.region_invariants(grown.weight, grown.centroid, grown.velocity)
    exact = lin.tobytes() == grown.linear_momentum.tobytes() and ang == grown.angular_momentum and ke == grown.kinetic_energy
    return bool(zero_ok and exact and grown.weight != 0), f"w=0 momenta zero: {bool(zero_ok)}, recompute bit-exact: {exact}"


def vp_dynamics():
    def run():
        system = vd.make_system([(0.0, 0.0)])
        z0 = vd.circular_orbit_state()
        res = vd.simulate(system, z0, 1e-3, 100_000)
        r = np.linalg.norm(res.trajectory.q, axis=1)
        excursion = float(np.max(np.abs(r - 1.0)))
        back = vd.time_reversal_residual(system, z0, 1e-3, 100_000)
        return res.energy_drift, excursion, back

    (drift, exc, back), secs = _timed(run)
    ok = drift <= 1e-6 and exc <= 1e-3 and back <= 1e-9 and secs < 10.0
    return ok, f"drift {drift:.2e}, radius excursion {exc:.2e}, reversal {back:.2e}, {secs:.2f}s"


def moment_map_conservation():
    rng = np.random.default_rng(8)
    worst = 0.0
    for m in (2, 3):
        for _ in range(5):
            z0 = ps.PhasePoint(rng.normal(size=m), rng.normal(size=m))
            traj = ps.integrate(ps.free_particle(m), z0, 0.01, 1000, "leapfrog")
            mu0 = [np.atleast_1d(mt.moment_map(a, z0)) for a in ("translation", "rotation")]
            for z in traj:
                for a, ref in zip(("translation", "rotation"), mu0):
                    worst = max(worst, float(np.max(np.abs(np.atleast_1d(mt.moment_map(a, z)) - ref))))
    z = ps.PhasePoint(rng.normal(size=3), rng.normal(size=3))
    equi = mt.equivariance_check(mt.random_rotations(100, seed=9), z)
    return worst <= 1e-8 and equi <= 1e-10, f"moment drift {worst:.2e}, SO(3) equivariance {equi:.2e}"


def tensor_spectra():
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(100):
        a, c = mt.nonzero_spectra(rng.normal(size=(3, 4)))
        if a.shape != c.shape:
            return False, "nonzero spectra differ in size"
        worst = max(worst, float(np.max(np.abs(a - c))))
    min_eig = min(
        float(mt.motion_structure_tensor(rng.normal(0, 5, (int(rng.integers(1, 30)), 3))).eigenvalues[-1])
        for _ in range(100)
    )
    return worst <= 1e-9 and min_eig >= -1e-12, f"spectrum mismatch {worst:.2e}, min eigenvalue {min_eig:.2e}"


def first_order_identities():
    g = np.arange(5) * 10.0
    x = np.array([(a, b) for a in g for b in g])
    cases = [
        (np.eye(2), (2.0, 0.0, 0.0)),
        (np.array([[0.0, -1.0], [1.0, 0.0]]), (0.0, 2.0, 0.0)),
        (np.diag([1.0, -1.0]), (0.0, 0.0, 2.0)),
    ]
    worst = 0.0
    for A, expected in cases:
        fit = fa.fit_affine_field(fa.FlowField(0, x, x @ A.T))
        inv = fa.first_order_invariants(fit.A)
        worst = max(worst, float(np.max(np.abs(np.array(inv[:3]) - expected))))
    return worst <= 1e-12, f"max deviation {worst:.2e}"


def _cli(args, cwd):
    proc = subprocess.run([sys.executable, "-m", "kineflow", *map(str, args)], cwd=cwd, capture_output=True)
    if proc.returncode != 0:
        raise RuntimeError(proc.stderr.decode())


def _digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def cli_determinism():
    digests = []
    with tempfile.TemporaryDirectory() as tmp:
        for run in ("a", "b"):
            d = Path(tmp) / run
            d.mkdir()
            _cli(["synth", "two-bodies", "--frames", 2, "--noise", 0.1, "--seed", 7, "--out", "flows"], d)
            _cli(["cluster", "flows/flow_0000.json", "flows/flow_0001.json", "--k", 2, "--seed", 7, "--out", "c.json", "--svg", "o.svg"], d)
            _cli(["simulate", "--preset", "circular-orbit", "--steps", 2000, "--seed", 7, "--out", "t.csv", "--report", "r.json"], d)
            (d / "g.csv").write_text("Ix,Iy,It\n1,0,0\n0,1,0.5\n")
            _cli(["tensor", "--gradients", "g.csv", "--seed", 7, "--out", "m.json"], d)
            digests.append(_digest(d))
    return digests[0] == digests[1], f"run digests {digests[0][:12]} / {digests[1][:12]}"


CRITERIA = [
    ("1 canonical relations", canonical_relations),
    ("2 energy and phase volume", energy_and_volume),
    ("3 Cartan vs flow Lie derivative", cartan_identity),
    ("4 vanishing-point recovery", vanishing_point_recovery),
    ("5 segmentation oracle", segmentation_oracle),
    ("6 region invariants", region_invariants),
    ("7 vanishing-point dynamics", vp_dynamics),
    ("8 moment-map conservation", moment_map_conservation),
    ("9 tensor spectra", tensor_spectra),
    ("10 div/curl/def identities", first_order_identities),
    ("11 CLI determinism", cli_determinism),
]


def _report(name, fn):
    passed, detail = fn()
    line = f"{'PASS' if passed else 'FAIL'}  criterion {name}: {detail}"
    return passed, line


@pytest.mark.parametrize("name,fn", CRITERIA, ids=[c[0].split()[0] for c in CRITERIA])
def test_criterion(name, fn, capsys):
    passed, line = _report(name, fn)
    with capsys.disabled():
        print("\n" + line)
    assert passed, line


if __name__ == "__main__":
    results = [_report(name, fn) for name, fn in CRITERIA]
    for _, line in results:
        print(line)
    sys.exit(0 if all(p for p, _ in results) else 1)
