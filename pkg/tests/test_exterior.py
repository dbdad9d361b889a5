import numpy as np
import pytest

from kineflow.errors import DegreeError, InvalidDimensionError, InvalidInputError
from kineflow.exterior import (
    FormField,
    VectorField,
    contract,
    exterior_derivative,
    lie_bracket,
    lie_derivative_cartan,
    lie_derivative_flow,
    multi_indices,
    wedge,
)


def random_poly(rng, n, degree=2):
    """Random polynomial R^n -> R with coefficients in [-1, 1]."""
    terms = []
    for _ in range(4):
        exps = np.zeros(n, dtype=int)
        for _ in range(rng.integers(0, degree + 1)):
            exps[rng.integers(n)] += 1
        terms.append((float(rng.uniform(-1, 1)), exps))
    return lambda x: sum(c * np.prod(x**e) for c, e in terms)


def random_form(rng, n, k, degree=2):
    polys = [random_poly(rng, n, degree) for _ in multi_indices(n, k)]
    return FormField(n, k, lambda x: np.array([f(x) for f in polys]))


def random_linear_field(rng, n):
    return VectorField.linear(rng.uniform(-1, 1, (n, n)), rng.uniform(-1, 1, n))


X_AXIS = VectorField.constant([1.0, 0.0])
ROTATION = VectorField(2, lambda x: np.array([-x[1], x[0]]))


class TestFormField:
    def test_basis_lexicographic(self):
        assert multi_indices(3, 2) == ((0, 1), (0, 2), (1, 2))

    def test_coefficient_length_enforced(self):
        bad = FormField(3, 1, lambda x: np.zeros(2))
        with pytest.raises(InvalidDimensionError):
            bad(np.zeros(3))

    def test_degree_range(self):
        with pytest.raises(DegreeError):
            FormField(2, 3, lambda x: np.zeros(1))

    def test_dimension_cap(self):
        with pytest.raises(InvalidDimensionError):
            FormField(7, 1, lambda x: np.zeros(7))

    def test_from_terms_sorts_with_sign(self):
        f = FormField.from_terms(2, 2, {(1, 0): 3.0})
        np.testing.assert_array_equal(f(np.zeros(2)), [-3.0])


class TestWedge:
    def test_area_form(self):
        dx = FormField.from_terms(2, 1, {(0,): 1.0})
        dy = FormField.from_terms(2, 1, {(1,): 1.0})
        np.testing.assert_array_equal(wedge(dx, dy)(np.zeros(2)), [1.0])

    def test_self_wedge_vanishes(self):
        rng = np.random.default_rng(0)
        a = random_form(rng, 3, 1)
        np.testing.assert_allclose(wedge(a, a)(rng.normal(size=3)), 0, atol=1e-15)

    def test_symbolic_example(self):
        # (x dy) ^ (y dx) = xy dy^dx = -xy dx^dy; at (2, 3) -> -6
        a = FormField.from_terms(2, 1, {(1,): lambda x: x[0]})
        b = FormField.from_terms(2, 1, {(0,): lambda x: x[1]})
        np.testing.assert_allclose(wedge(a, b)(np.array([2.0, 3.0])), [-6.0])

    @pytest.mark.parametrize("k,l", [(1, 1), (1, 2), (2, 2), (0, 3), (1, 3)])
    def test_graded_commutative(self, k, l):
        rng = np.random.default_rng(k * 10 + l)
        n = 4
        a, b = random_form(rng, n, k), random_form(rng, n, l)
        x = rng.normal(size=n)
        np.testing.assert_allclose(wedge(a, b)(x), (-1) ** (k * l) * wedge(b, a)(x), atol=1e-12)

    def test_bilinear(self):
        rng = np.random.default_rng(4)
        a1, a2, b = random_form(rng, 3, 1), random_form(rng, 3, 1), random_form(rng, 3, 2)
        x = rng.normal(size=3)
        np.testing.assert_allclose(wedge(2.0 * a1 + a2, b)(x), 2 * wedge(a1, b)(x) + wedge(a2, b)(x), atol=1e-12)

    def test_associative(self):
        rng = np.random.default_rng(9)
        a, b, c = (random_form(rng, 4, 1) for _ in range(3))
        x = rng.normal(size=4)
        np.testing.assert_allclose(wedge(wedge(a, b), c)(x), wedge(a, wedge(b, c))(x), atol=1e-12)

    def test_overflow(self):
        with pytest.raises(DegreeError):
            wedge(FormField.zero(2, 2), FormField.zero(2, 1))


class TestExteriorDerivative:
    def test_product_rule(self):
        f = FormField.scalar(2, lambda x: x[0] * x[1])
        np.testing.assert_allclose(exterior_derivative(f)(np.array([2.0, -3.0])), [-3.0, 2.0], atol=1e-9)

    def test_rotation_one_form(self):
        a = FormField(2, 1, lambda x: np.array([-x[1], x[0]]))
        np.testing.assert_allclose(exterior_derivative(a)(np.array([0.3, 0.7])), [2.0], atol=1e-9)

    def test_symplectic_and_contact(self):
        # coordinates (q, p): d(dq^dp) = 0 is degree overflow on R^2, so check on R^4
        omega = FormField.from_terms(4, 2, {(0, 2): 1.0, (1, 3): 1.0})
        np.testing.assert_allclose(exterior_derivative(omega)(np.ones(4)), 0, atol=1e-12)
        alpha = FormField.from_terms(2, 1, {(0,): lambda x: x[1]})  # p dq
        # d(p dq) = dp^dq = -dq^dp, i.e. omega = -d alpha
        np.testing.assert_allclose(exterior_derivative(alpha)(np.array([0.5, 2.0])), [-1.0], atol=1e-9)

    def test_top_degree_overflow(self):
        with pytest.raises(DegreeError):
            exterior_derivative(FormField.zero(2, 2))

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_d_squared_zero(self, n):
        rng = np.random.default_rng(n)
        for k in range(n - 1):
            a = random_form(rng, n, k, degree=3)
            dda = exterior_derivative(exterior_derivative(a))
            for _ in range(3):
                assert np.max(np.abs(dda(rng.uniform(-1, 1, n)))) <= 1e-4

    def test_leibniz(self):
        rng = np.random.default_rng(12)
        a, b = random_form(rng, 3, 1), random_form(rng, 3, 1)
        x = rng.uniform(-1, 1, 3)
        lhs = exterior_derivative(wedge(a, b))(x)
        rhs = wedge(exterior_derivative(a), b)(x) - wedge(a, exterior_derivative(b))(x)
        np.testing.assert_allclose(lhs, rhs, atol=1e-7)


class TestContract:
    def test_basis(self):
        area = FormField.from_terms(2, 2, {(0, 1): 1.0})
        np.testing.assert_allclose(contract(X_AXIS, area)(np.zeros(2)), [0.0, 1.0])
        dy = FormField.from_terms(2, 1, {(1,): 1.0})
        np.testing.assert_allclose(contract(X_AXIS, dy)(np.zeros(2)), [0.0])

    def test_symbolic_example(self):
        # i_{(y,-x)} dx^dy = y dy + x dx; at (1, 2) -> (1, 2)
        X = VectorField(2, lambda x: np.array([x[1], -x[0]]))
        area = FormField.from_terms(2, 2, {(0, 1): 1.0})
        np.testing.assert_allclose(contract(X, area)(np.array([1.0, 2.0])), [1.0, 2.0])

    def test_underflow(self):
        with pytest.raises(DegreeError):
            contract(X_AXIS, FormField.scalar(2, lambda x: 1.0))

    @pytest.mark.parametrize("k,l", [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3)])
    def test_antiderivation(self, k, l):
        rng = np.random.default_rng(100 + 10 * k + l)
        n = 4
        X = VectorField(n, random_poly_vec(rng, n))
        a, b = random_form(rng, n, k), random_form(rng, n, l)
        for _ in range(5):
            x = rng.uniform(-1, 1, n)
            lhs = contract(X, wedge(a, b))(x)
            rhs = wedge(contract(X, a), b)(x) + (-1) ** k * wedge(a, contract(X, b))(x)
            np.testing.assert_allclose(lhs, rhs, atol=1e-8)

    def test_function_linearity(self):
        rng = np.random.default_rng(8)
        X = random_linear_field(rng, 3)
        a = random_form(rng, 3, 2)
        f = lambda x: 1.0 + x @ x  # noqa: E731
        x = rng.normal(size=3)
        np.testing.assert_allclose(contract(X.scaled(f), a)(x), f(x) * contract(X, a)(x), atol=1e-12)

    def test_twice_vanishes(self):
        rng = np.random.default_rng(3)
        X = random_linear_field(rng, 3)
        a = random_form(rng, 3, 3)
        np.testing.assert_allclose(contract(X, contract(X, a))(rng.normal(size=3)), 0, atol=1e-12)


def random_poly_vec(rng, n):
    polys = [random_poly(rng, n) for _ in range(n)]
    return lambda x: np.array([f(x) for f in polys])


def lie_one_form_oracle(X, a, x):
    """Component formula (L_X a)_i = X^j d_j a_i + a_j d_i X^j, independent of Cartan."""
    n = a.n
    h = 1e-6
    da = np.stack([(a(x + h * e) - a(x - h * e)) / (2 * h) for e in np.eye(n)], axis=1)
    return da @ X(x) + X.jacobian(x).T @ a(x)


class TestLieDerivative:
    def test_translation_of_y_dx(self):
        a = FormField.from_terms(2, 1, {(0,): lambda x: x[1]})
        np.testing.assert_allclose(lie_derivative_cartan(X_AXIS, a)(np.array([0.4, -1.1])), [0, 0], atol=1e-9)

    def test_directional_derivative(self):
        f = FormField.scalar(2, lambda x: x[0] ** 2)
        x = np.array([1.5, 0.2])
        np.testing.assert_allclose(lie_derivative_cartan(X_AXIS, f)(x), [3.0], atol=1e-8)

    def test_rotation_preserves_area(self):
        area = FormField.from_terms(2, 2, {(0, 1): 1.0})
        np.testing.assert_allclose(lie_derivative_cartan(ROTATION, area)(np.array([0.3, 0.9])), [0.0], atol=1e-9)

    def test_matches_component_formula(self):
        rng = np.random.default_rng(21)
        for n in (2, 3):
            X = VectorField(n, random_poly_vec(rng, n))
            a = random_form(rng, n, 1)
            x = rng.uniform(-1, 1, n)
            np.testing.assert_allclose(lie_derivative_cartan(X, a)(x), lie_one_form_oracle(X, a, x), atol=1e-6)

    def test_degree_zero_is_contracted_differential(self):
        rng = np.random.default_rng(1)
        X = random_linear_field(rng, 3)
        f = FormField.scalar(3, random_poly(rng, 3))
        x = rng.normal(size=3)
        np.testing.assert_array_equal(lie_derivative_cartan(X, f)(x), contract(X, exterior_derivative(f))(x))

    def test_flow_zero_field(self):
        rng = np.random.default_rng(2)
        a = random_form(rng, 3, 2)
        zero = VectorField.constant(np.zeros(3))
        np.testing.assert_allclose(lie_derivative_flow(zero, a, 1e-3)(rng.normal(size=3)), 0, atol=1e-9)

    def test_flow_translation_of_x_dx(self):
        a = FormField.from_terms(2, 1, {(0,): lambda x: x[0]})
        c = lie_derivative_flow(X_AXIS, a, 1e-3)(np.array([0.5, 0.5]))
        assert c[0] == pytest.approx(1.0, abs=1e-2)
        assert c[1] == pytest.approx(0.0, abs=1e-9)

    def test_flow_vs_cartan_random_one_forms(self):
        rng = np.random.default_rng(33)
        for _ in range(5):
            X = random_linear_field(rng, 2)
            a = random_form(rng, 2, 1)
            x = rng.uniform(-1, 1, 2)
            diff = lie_derivative_cartan(X, a)(x) - lie_derivative_flow(X, a, 1e-3)(x)
            assert np.max(np.abs(diff)) <= 5e-3

    def test_flow_converges_first_order(self):
        rng = np.random.default_rng(5)
        X = random_linear_field(rng, 3)
        a = random_form(rng, 3, 2)
        x = rng.uniform(-1, 1, 3)
        exact = lie_derivative_cartan(X, a)(x)
        e1 = np.max(np.abs(lie_derivative_flow(X, a, 1e-2)(x) - exact))
        e2 = np.max(np.abs(lie_derivative_flow(X, a, 1e-3)(x) - exact))
        assert e2 < e1 / 5

    def test_flow_step_range(self):
        with pytest.raises(InvalidInputError):
            lie_derivative_flow(X_AXIS, FormField.zero(2, 1), 0.1)


class TestLieBracket:
    def test_coordinate_fields_commute(self):
        Y = VectorField.constant([0.0, 1.0])
        np.testing.assert_allclose(lie_bracket(X_AXIS, Y)(np.array([1.0, 2.0])), [0, 0])

    def test_rotation_with_translation(self):
        np.testing.assert_allclose(lie_bracket(ROTATION, X_AXIS)(np.array([0.7, -0.2])), [0, -1], atol=1e-9)

    def test_antisymmetry(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            X, Y = random_linear_field(rng, 3), random_linear_field(rng, 3)
            x = rng.normal(size=3)
            np.testing.assert_allclose(lie_bracket(X, Y)(x), -lie_bracket(Y, X)(x), atol=1e-8)

    def test_linear_fields_commutator(self):
        # for v = A x: [X, Y] = (B A - A B) x
        rng = np.random.default_rng(7)
        A, B = rng.normal(size=(2, 3, 3))
        x = rng.normal(size=3)
        got = lie_bracket(VectorField.linear(A), VectorField.linear(B))(x)
        np.testing.assert_allclose(got, (B @ A - A @ B) @ x, atol=1e-8)

    def test_jacobi_linear(self):
        rng = np.random.default_rng(8)
        X, Y, Z = (random_linear_field(rng, 3) for _ in range(3))
        x = rng.uniform(-1, 1, 3)
        total = (
            lie_bracket(X, lie_bracket(Y, Z))(x)
            + lie_bracket(Y, lie_bracket(Z, X))(x)
            + lie_bracket(Z, lie_bracket(X, Y))(x)
        )
        assert np.max(np.abs(total)) <= 1e-6

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidDimensionError):
            lie_bracket(X_AXIS, VectorField.constant([1.0, 0.0, 0.0]))
