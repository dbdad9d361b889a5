import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kineflow import vp_dynamics as vd
from kineflow.errors import CollinearError, InfiniteMassError, InvalidInputError, SingularityError
from kineflow.phase_space import PhasePoint, hamiltonian_field, liouville_check

finite = st.floats(-50, 50, allow_nan=False)


class TestOrthocenter:
    def test_scalene(self):
        H, m = vd.orthocenter_masses((0, 0), (6, 0), (2, 4))
        np.testing.assert_allclose(H, [2, 2], atol=1e-12)
        np.testing.assert_allclose(m, [1 / math.sqrt(8), 1 / math.sqrt(20), 0.5], rtol=1e-12)

    def test_brute_force_altitudes(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            V = rng.uniform(-100, 100, (3, 2))
            H, _ = vd.orthocenter_masses(*V)
            for i in range(3):
                j, k = [x for x in range(3) if x != i]
                assert abs((H - V[i]) @ (V[j] - V[k])) <= 1e-8 * np.linalg.norm(V[j] - V[k]) * max(1, np.linalg.norm(H - V[i]))

    def test_equilateral(self):
        V = np.array([[0, 0], [2, 0], [1, math.sqrt(3)]])
        H, m = vd.orthocenter_masses(*V)
        np.testing.assert_allclose(H, V.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(m, m[0], rtol=1e-12)

    def test_right_triangle(self):
        with pytest.raises(InfiniteMassError) as exc:
            vd.orthocenter_masses((0, 0), (4, 0), (0, 3))
        assert exc.value.vertex == 1
        with pytest.raises(InfiniteMassError) as exc:
            vd.orthocenter_masses((4, 0), (0, 0), (0, 3))
        assert exc.value.vertex == 2

    def test_collinear(self):
        with pytest.raises(CollinearError):
            vd.orthocenter_masses((0, 0), (1, 1), (2, 2))

    def test_from_triangle(self):
        s = vd.ChargeSystem.from_triangle((0, 0), (6, 0), (2, 4), signs=(1, -1, 1))
        np.testing.assert_allclose(s.charges, [1 / math.sqrt(8), -1 / math.sqrt(20), 0.5], rtol=1e-12)


class TestChargeTypes:
    def test_bad_mass(self):
        with pytest.raises(InvalidInputError):
            vd.ChargeCenter((0, 0), 0.0)

    def test_bad_sign(self):
        with pytest.raises(InvalidInputError):
            vd.ChargeCenter((0, 0), 1.0, 2)

    def test_bad_softening(self):
        with pytest.raises(InvalidInputError):
            vd.ChargeSystem((), -1.0)


class TestAcceleration:
    def test_single_center(self):
        np.testing.assert_array_equal(vd.acceleration([1, 0], vd.make_system([(0, 0)])), [-1, 0])

    def test_symmetric_pair(self):
        s = vd.make_system([(-1, 0), (1, 0)], [2.0, 2.0])
        a = vd.acceleration([0, 3], s)
        assert a[0] == 0
        assert a[1] < 0

    def test_sign_flip(self):
        s = vd.make_system([(-1, 2), (3, 0.5)], [1.0, 0.3], [1, -1])
        q = np.array([0.2, -0.7])
        np.testing.assert_array_equal(vd.acceleration(q, s.flipped()), -vd.acceleration(q, s))

    def test_singularity(self):
        with pytest.raises(SingularityError):
            vd.acceleration([0, 0], vd.make_system([(0, 0)]))
        vd.acceleration([0, 0], vd.make_system([(0, 0)], softening=1.0))

    def test_vectorized_matches_single(self):
        s = vd.make_system([(-1, 2), (3, 0.5), (0, 9)], [1.0, 0.3, 2.0], [1, -1, 1], softening=0.5)
        Q = np.random.default_rng(1).normal(size=(7, 2))
        np.testing.assert_allclose(vd.acceleration(Q, s), [vd.acceleration(q, s) for q in Q], rtol=1e-14)

    def test_no_centers(self):
        np.testing.assert_array_equal(vd.acceleration([3, 4], vd.ChargeSystem()), [0, 0])


class TestHamiltonian:
    def test_free(self):
        assert vd.energy(PhasePoint([5, 5], [3, 4]), vd.ChargeSystem()) == 12.5

    def test_attractive(self):
        assert vd.energy(PhasePoint([1, 0], [0, 1]), vd.make_system([(0, 0)])) == -0.5

    def test_repulsive(self):
        assert vd.energy(PhasePoint([1, 0], [0, 1]), vd.make_system([(0, 0)], signs=[-1])) == 1.5

    @settings(max_examples=50, deadline=None)
    @given(finite, finite, finite, finite)
    def test_consistency_with_field(self, q1, q2, p1, p2):
        s = vd.make_system([(-1, 2), (3, 0.5), (0, -4)], [1.0, 0.3, 2.0], [1, -1, 1], softening=0.5)
        z = np.array([q1, q2, p1, p2])
        field = hamiltonian_field(vd.signed_hamiltonian(s))(z)
        np.testing.assert_allclose(field[:2], z[2:], atol=1e-8)
        np.testing.assert_allclose(field[2:], vd.acceleration(z[:2], s), atol=1e-8)

    def test_gradient_matches_finite_differences(self):
        s = vd.make_system([(-1, 2), (3, 0.5)], [1.0, 0.3], [1, -1], softening=0.5)
        H = vd.signed_hamiltonian(s)
        rng = np.random.default_rng(2)
        for _ in range(10):
            z = rng.normal(0, 3, 4)
            np.testing.assert_allclose(H.gradient(z), H.numeric_gradient(z), atol=1e-6)

    def test_analytic_hessian(self):
        from kineflow.phase_space import numeric_jacobian

        s = vd.make_system([(-1, 2), (3, 0.5)], [1.0, 0.3], [1, -1], softening=0.2)
        H = vd.signed_hamiltonian(s)
        z = np.array([0.4, -0.3, 1.0, 2.0])
        np.testing.assert_allclose(H.hessian(z), numeric_jacobian(H.gradient, z), atol=1e-6)

    @settings(max_examples=50, deadline=None)
    @given(finite, finite)
    def test_sign_symmetry(self, q1, q2):
        s = vd.make_system([(-1, 2), (3, 0.5)], [1.0, 0.3], [1, -1], softening=0.1)
        q = np.array([q1, q2])
        assert vd.potential(q, s.flipped()) == -vd.potential(q, s)

    def test_phase_volume(self):
        s = vd.make_system([(0, 0)])
        z0 = vd.circular_orbit_state()
        assert abs(liouville_check(vd.signed_hamiltonian(s), z0, 1e-2, 200, "leapfrog")) <= 1e-8


class TestSimulate:
    def test_circular_orbit(self):
        s = vd.make_system([(0, 0)])
        res = vd.simulate(s, vd.circular_orbit_state(), 1e-3, 100_000)
        assert res.energy_drift <= 1e-6
        r = np.linalg.norm(res.trajectory.q, axis=1)
        assert 0.999 <= r.min() and r.max() <= 1.001
        assert res.warnings == []

    def test_unpacks_as_pair(self):
        traj, drift = vd.simulate(vd.ChargeSystem(), PhasePoint([0, 0], [1, 2]), 0.1, 10)
        assert drift == 0
        np.testing.assert_allclose(traj.q[-1], [1, 2], atol=1e-14)
        np.testing.assert_allclose(traj.q[:, 1], 2 * traj.q[:, 0], atol=1e-14)

    def test_repulsive_head_on(self):
        s = vd.make_system([(0, 0)], signs=[-1])
        res = vd.simulate(s, PhasePoint([-5, 0], [1.0, 0]), 1e-3, 20_000)
        d = np.linalg.norm(res.trajectory.q, axis=1)
        assert d.min() > 0.9  # barrier at 1/(E) = 1 / (0.5 - 0.2)
        assert np.all(np.diff(d[-1000:]) > 0)
        assert res.energy_drift <= 1e-6

    def test_close_encounter_warning(self):
        s = vd.make_system([(0, 0)], softening=0.1)
        res = vd.simulate(s, PhasePoint([-3, 0.05], [1.0, 0]), 1e-3, 5000)
        assert res.warnings and "center 1" in res.warnings[0]

    def test_bad_dt(self):
        with pytest.raises(InvalidInputError):
            vd.simulate(vd.ChargeSystem(), PhasePoint([0, 0], [1, 0]), 0.0, 1)

    def test_midpoint_cross_check(self):
        s = vd.make_system([(0, 0)])
        a = vd.simulate(s, vd.circular_orbit_state(), 1e-3, 500)
        b = vd.simulate(s, vd.circular_orbit_state(), 1e-3, 500, method="implicit-midpoint")
        np.testing.assert_allclose(a.trajectory.q, b.trajectory.q, atol=1e-6)

    def test_time_reversal(self):
        s = vd.make_system([(0, 0), (3, 1)], [1.0, 0.2], [1, -1], softening=0.3)
        assert vd.time_reversal_residual(s, PhasePoint([1, 0], [0, 0.9]), 1e-3, 10_000) <= 1e-9

    @pytest.mark.parametrize("lam", [0.25, 4.0, 9.0])
    def test_kepler_scaling(self, lam):
        s = vd.make_system([(0, 0)], [1.0])
        z0 = PhasePoint([1, 0], [0, 0.8])
        base = vd.simulate(s, z0, 1e-3, 2000).trajectory
        scaled = vd.simulate(s.scaled(lam), PhasePoint([1, 0], [0, 0.8 * math.sqrt(lam)]), 1e-3 / math.sqrt(lam), 2000).trajectory
        assert np.max(np.abs(scaled.q - base.q)) <= 1e-8


# input for the frozen characterization value below
M_SYSTEM = dict(positions=[(-3, 1), (4, 2), (0, 50)], masses=[0.7, 1.3, 0.2], signs=[1, -1, 1])
M_STATE = PhasePoint([0.5, -1.0], [0.3, 0.8])
M_FROZEN = -59.639892455123125


class TestMExpression:
    def test_static_symmetric(self):
        s = vd.make_system([(-2, 0), (2, 0)])
        t1, _, t3 = vd.m_expression_terms(PhasePoint([0, 1], [0, 0]), s)
        assert t1 == 0 and t3 == 0

    def test_regression(self):
        s = vd.make_system(**M_SYSTEM)
        assert vd.evaluate_m_expression(M_STATE, s) == pytest.approx(M_FROZEN, rel=1e-14)

    def test_hand_oracle(self):
        q, p = M_STATE.q, M_STATE.p
        a = np.array([-3, 1]) - q
        b = np.array([4, 2]) - q
        w = lambda u, v: u[0] * v[1] - u[1] * v[0]  # noqa: E731
        expected = w(a, p) * w(b, p) - 0.7 / np.hypot(*a) * w(a, a - b) * w(b, a - b)
        assert vd.evaluate_m_expression(M_STATE, vd.make_system(**M_SYSTEM)) == pytest.approx(expected, rel=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(finite, finite, finite, finite)
    def test_finite(self, q1, q2, p1, p2):
        s = vd.make_system([(-3, 1), (4, 2)], softening=0.1)
        assert math.isfinite(vd.evaluate_m_expression(PhasePoint([q1, q2], [p1, p2]), s))

    def test_singular(self):
        with pytest.raises(SingularityError):
            vd.evaluate_m_expression(PhasePoint([-3, 1], [0, 0]), vd.make_system(**M_SYSTEM))

    def test_needs_two_centers(self):
        with pytest.raises(InvalidInputError):
            vd.evaluate_m_expression(M_STATE, vd.make_system([(0, 0)]))
