"""
Tests for vector-field evaluation and Lie brackets against
finite-difference commutator oracles.
"""

import unittest
import sys
import os

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from ensemble_pmp.dynamics import (Field, FieldPair, eval_rhs, first_bracket, jacobian_fd,
                                   lie_bracket, nested_bracket_fields, nested_brackets)
from ensemble_pmp.ensemble import ParamSample, midpoint_sample
from ensemble_pmp.errors import DimensionError
from ensemble_pmp.models import double_integrator, lq_toy, singular_toy, sit_problem


def random_sit_states(rng, count):
    """Interior SIT states: positive populations, A below the carrying capacity."""
    return np.column_stack([
        rng.uniform(1e3, 1.9e4, count),
        rng.uniform(1e3, 2e4, count),
        rng.uniform(1e3, 2e4, count),
        rng.uniform(0.0, 1e5, count),
        rng.uniform(0.0, 1e6, count),
    ])


def bracket_oracle(a, b, x, omega):
    """[a, b] = b' a - a' b with both Jacobians from central differences."""
    ja = jacobian_fd(a, x, omega)
    jb = jacobian_fd(b, x, omega)
    return jb @ a(x, omega) - ja @ b(x, omega)


def relative_error(value, reference):
    scale = max(np.linalg.norm(reference), 1e-300)
    return np.linalg.norm(value - reference) / scale


class TestLinearFields(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(0)
        self.A = rng.normal(size=(3, 3))
        self.B = rng.normal(size=(3, 3))
        A, B = self.A, self.B
        self.f = Field(lambda x, p: x @ A.T, lambda x, p: np.broadcast_to(A, x.shape + (3,)))
        self.g = Field(lambda x, p: x @ B.T, lambda x, p: np.broadcast_to(B, x.shape + (3,)))
        self.x = rng.normal(size=3)

    def test_bracket_of_linear_fields_is_commutator(self):
        expected = (self.B @ self.A - self.A @ self.B) @ self.x
        np.testing.assert_allclose(lie_bracket(self.f, self.g, self.x, {}), expected,
                                   rtol=1e-12, atol=1e-12)

    def test_antisymmetry(self):
        ab = lie_bracket(self.f, self.g, self.x, {})
        ba = lie_bracket(self.g, self.f, self.x, {})
        np.testing.assert_allclose(ab + ba, 0.0, atol=1e-12 * np.linalg.norm(ab))

    def test_self_bracket_vanishes(self):
        np.testing.assert_allclose(lie_bracket(self.f, self.f, self.x, {}), 0.0, atol=1e-12)

    def test_dimension_mismatch(self):
        bad = Field(lambda x, p: np.zeros(2), lambda x, p: np.zeros((2, 2)))
        with self.assertRaises(DimensionError):
            lie_bracket(self.f, bad, self.x, {})


class TestSITBrackets(unittest.TestCase):

    def setUp(self):
        self.spec = sit_problem()
        self.fields = self.spec.fields
        self.omega = midpoint_sample(self.spec.distributions).values
        self.states = random_sit_states(np.random.default_rng(7), 100)

    def test_first_bracket_matches_oracle(self):
        f0, f1 = self.fields.f0, self.fields.f1
        for x in self.states:
            value = first_bracket(self.fields, x, self.omega)
            self.assertLess(relative_error(value, bracket_oracle(f0, f1, x, self.omega)), 1e-4)

    def test_antisymmetry(self):
        drift, control = self.fields.drift, self.fields.control
        for x in self.states[:20]:
            ab = lie_bracket(drift, control, x, self.omega)
            ba = lie_bracket(control, drift, x, self.omega)
            self.assertLessEqual(np.linalg.norm(ab + ba), 1e-12 * np.linalg.norm(ab))

    def test_nested_brackets_match_oracle(self):
        fields, omega = self.fields, self.omega

        def inner(x, p):
            return first_bracket(fields, x, p)

        for x in self.states:
            ad0, ad1 = nested_brackets(fields, x, omega)
            self.assertLess(relative_error(ad0, bracket_oracle(fields.f0, inner, x, omega)), 1e-4)
            self.assertLess(relative_error(ad1, bracket_oracle(fields.f1, inner, x, omega)), 1e-4)

    def test_analytic_and_fd_second_derivatives_agree(self):
        analytic = self.fields
        numeric = FieldPair(state_dim=5, f0=analytic.f0, f1=analytic.f1,
                            jac_f0=analytic.jac_f0, jac_f1=analytic.jac_f1)
        for x in self.states[:20]:
            a0, a1 = nested_brackets(analytic, x, self.omega)
            n0, n1 = nested_brackets(numeric, x, self.omega)
            self.assertLess(relative_error(n0, a0), 1e-4)
            self.assertLess(relative_error(n1, a1), 1e-4)

    def test_batched_matches_single(self):
        batch = nested_brackets(self.fields, self.states[:10], self.omega)
        for i, x in enumerate(self.states[:10]):
            single = nested_brackets(self.fields, x, self.omega)
            for got, ref in zip((batch[0][i], batch[1][i]), single):
                np.testing.assert_allclose(got, ref, rtol=0, atol=1e-12 * np.abs(ref).max())

    def test_bilinearity(self):
        drift, control = self.spec.fields.drift, self.spec.fields.control
        quad = Field(lambda x, p: x ** 2 / 1e4, lambda x, p: np.diag(2.0 * x / 1e4))
        lam = -3.5

        def combine(a, b):
            return Field(lambda x, p: a.func(x, p) + lam * b.func(x, p),
                         lambda x, p: a.jac(x, p) + lam * b.jac(x, p))

        mixed = combine(drift, quad)
        for x in self.states[:20]:
            first = lie_bracket(drift, control, x, self.omega)
            second = lam * lie_bracket(quad, control, x, self.omega)
            scale = max(np.abs(first).max(), np.abs(second).max())
            np.testing.assert_allclose(lie_bracket(mixed, control, x, self.omega), first + second,
                                       rtol=0, atol=1e-10 * scale)
            first = lie_bracket(quad, drift, x, self.omega)
            cancelled = abs(lam) * np.abs(quad.jacobian(x, self.omega) @ quad(x, self.omega)).max()
            np.testing.assert_allclose(lie_bracket(quad, mixed, x, self.omega), first,
                                       rtol=0, atol=1e-10 * max(np.abs(first).max(), cancelled))

    def test_bracket_evaluators(self):
        ad0, ad1 = nested_bracket_fields(self.fields)
        x = self.states[0]
        np.testing.assert_array_equal(ad0(x, self.omega), nested_brackets(self.fields, x, self.omega)[0])
        np.testing.assert_array_equal(ad1(x, self.omega), nested_brackets(self.fields, x, self.omega)[1])


class TestToyBrackets(unittest.TestCase):

    def test_double_integrator_denominator_vanishes(self):
        spec = double_integrator()
        rng = np.random.default_rng(1)
        for x in rng.normal(size=(100, 2)):
            ad0, ad1 = nested_brackets(spec.fields, x, {"m": 1.0})
            np.testing.assert_allclose(ad1, 0.0, atol=1e-14)

    def test_singular_toy_brackets(self):
        """[f0,[f0,f1]] = 0 and [f1,[f0,f1]] = (0, -2q)."""
        spec = singular_toy()
        rng = np.random.default_rng(2)
        for x in rng.normal(size=(100, 2)):
            ad0, ad1 = nested_brackets(spec.fields, x, {"q": 1.5})
            np.testing.assert_allclose(ad0, 0.0, atol=1e-12)
            np.testing.assert_allclose(ad1, [0.0, -3.0], atol=1e-12)

    def test_toy_brackets_match_oracle(self):
        rng = np.random.default_rng(3)
        for spec, omega in ((singular_toy(), {"q": 1.0}), (double_integrator(), {"m": 2.0})):
            fields = spec.fields

            def inner(x, p, fields=fields):
                return first_bracket(fields, x, p)

            for x in rng.uniform(0.5, 2.0, size=(100, 2)):
                ad0, ad1 = nested_brackets(fields, x, omega)
                ref0 = bracket_oracle(fields.f0, inner, x, omega)
                ref1 = bracket_oracle(fields.f1, inner, x, omega)
                np.testing.assert_allclose(ad0, ref0, atol=1e-4 * max(1.0, np.linalg.norm(ref0)))
                np.testing.assert_allclose(ad1, ref1, atol=1e-4 * max(1.0, np.linalg.norm(ref1)))


class TestEvalRhs(unittest.TestCase):

    def test_linear_toy(self):
        spec = lq_toy({"b": 2.0})
        out = eval_rhs(spec.fields, np.array([3.0]), 0.5, ParamSample({"a": -1.0}, 1.0))
        np.testing.assert_allclose(out, [-3.0 + 1.0])

    def test_sit_at_initial_state(self):
        """Drift and control at x0 written out by hand for the midpoint parameters."""
        spec = sit_problem()
        omega = midpoint_sample(spec.distributions)
        nu, mu_A, mu_F, mu_M, mu_S = (omega[name] for name in ("nu", "mu_A", "mu_F", "mu_M", "mu_S"))
        A, F, M, Ms = 19941.0, 14956.0, 12962.0, 0.0
        u = 1000.0
        expected = [
            6.66 * M * F / (M + 0.91 * Ms) * (1.0 - A / 20000.0) - (mu_A + nu) * A,
            0.5 * nu * A - mu_F * F,
            0.5 * nu * A - mu_M * M,
            -mu_S * Ms + u,
            0.15 * u,
        ]
        out = eval_rhs(spec.fields, spec.x0, u, omega)
        np.testing.assert_allclose(out, expected, rtol=1e-10)

    def test_wrong_state_dimension(self):
        spec = sit_problem()
        omega = midpoint_sample(spec.distributions)
        with self.assertRaises(DimensionError):
            eval_rhs(spec.fields, np.ones(4), 0.0, omega)


if __name__ == '__main__':
    unittest.main()
