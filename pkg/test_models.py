"""
Tests for the built-in problems: SIT defaults, overrides, derivatives and
the population invariants along simulated trajectories.
"""

import unittest
import sys
import os

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from ensemble_pmp.dynamics import jacobian_derivative_fd, jacobian_fd
from ensemble_pmp.ensemble import ParamDistribution, midpoint_sample, sample_ensemble
from ensemble_pmp.errors import ConfigError, IntegrationAbort, ModelDomainError
from ensemble_pmp.integrate import ControlGrid, TimeGrid, forward_sweep
from ensemble_pmp.models import (MODELS, SIT_STATES, build_problem, lq_ensemble, lq_toy,
                                 sit_problem)
from test_dynamics import random_sit_states


class TestSITModel(unittest.TestCase):

    def setUp(self):
        self.spec = sit_problem()
        self.omega = midpoint_sample(self.spec.distributions).values

    def test_defaults(self):
        spec = self.spec
        self.assertEqual(spec.T, 90.0)
        self.assertEqual((spec.u_min, spec.u_max), (0.0, 2.0e5))
        np.testing.assert_array_equal(spec.x0, [19941.0, 14956.0, 12962.0, 0.0, 0.0])
        self.assertEqual(spec.fields.state_names, SIT_STATES)
        self.assertEqual(spec.parameter_names, ("nu", "mu_A", "mu_F", "mu_M", "mu_S"))

    def test_override_c2(self):
        spec = sit_problem({"c2": 100})
        self.assertEqual(spec.params["c2"], 100.0)
        self.assertEqual(spec.params["alpha"], 6.66)
        x = np.array([1.0, 2.0, 3.0, 0.0, 5.0])
        self.assertAlmostEqual(float(spec.cost(x, self.omega)), 5.0 + 100.0 * 5.0)

    def test_unknown_override(self):
        with self.assertRaises(ConfigError) as ctx:
            sit_problem({"c3": 1.0})
        self.assertEqual(ctx.exception.field, "params.c3")

    def test_invalid_fixed_parameter(self):
        with self.assertRaises(ConfigError):
            sit_problem({"k": 0.0})

    def test_jacobian_matches_fd(self):
        fields = self.spec.fields
        for x in random_sit_states(np.random.default_rng(5), 100):
            analytic = fields.jac_f0(x, self.omega)
            numeric = jacobian_fd(fields.f0, x, self.omega)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-6,
                                       atol=1e-8 * np.abs(analytic).max())

    def test_second_derivative_matches_fd(self):
        fields = self.spec.fields
        for x in random_sit_states(np.random.default_rng(6), 30):
            analytic = fields.hess_f0(x, self.omega)
            numeric = jacobian_derivative_fd(fields.jac_f0, x, self.omega)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-5,
                                       atol=1e-8 * np.abs(analytic).max())

    def test_cost_gradient(self):
        x = random_sit_states(np.random.default_rng(8), 1)[0]
        grad = self.spec.cost_gradient(x, self.omega)
        numeric = np.empty(5)
        for j, e in enumerate(np.eye(5)):
            numeric[j] = (self.spec.cost(x + e, self.omega) - self.spec.cost(x - e, self.omega)) / 2.0
        np.testing.assert_allclose(grad, numeric, rtol=1e-6, atol=1e-6)

    def test_denominator_domain(self):
        x = np.array([100.0, 100.0, 0.0, 0.0, 0.0])
        with self.assertRaises(ModelDomainError):
            self.spec.fields.f0(x, self.omega)


class TestSITTrajectories(unittest.TestCase):
    """States stay non-negative with A below the carrying capacity."""

    def setUp(self):
        self.spec = sit_problem()
        self.ensemble = sample_ensemble(self.spec.distributions, 5, seed=2)
        self.grid = TimeGrid.for_problem(self.spec, 900)

    def check_invariants(self, states):
        self.assertTrue(np.all(np.isfinite(states)))
        self.assertTrue(np.all(states[..., :4] >= 0.0))
        self.assertTrue(np.all(states[..., 0] <= self.spec.params["k"]))

    def test_no_release(self):
        states, _ = forward_sweep(self.spec, ControlGrid.constant(self.grid, 0.0), self.ensemble)
        self.check_invariants(states)

    def test_maximal_release(self):
        u = ControlGrid.constant(self.grid, self.spec.u_max)
        states, _ = forward_sweep(self.spec, u, self.ensemble)
        self.check_invariants(states)
        # releases lower the wild population below the uncontrolled run
        free, _ = forward_sweep(self.spec, ControlGrid.constant(self.grid, 0.0), self.ensemble)
        self.assertTrue(np.all(states[-1, :, 1] < free[-1, :, 1]))

    def test_extinct_males_abort_integration(self):
        spec = sit_problem({"M0": 0.0, "Ms0": 0.0})
        with self.assertRaises(IntegrationAbort):
            forward_sweep(spec, ControlGrid.constant(self.grid, 0.0), self.ensemble)


class TestRegistry(unittest.TestCase):

    def test_every_model_builds(self):
        for name in MODELS:
            spec = build_problem(name)
            self.assertEqual(spec.name, name)
            self.assertLess(spec.u_min, spec.u_max)

    def test_unknown_model(self):
        with self.assertRaises(ConfigError) as ctx:
            build_problem("lotka_volterra")
        self.assertEqual(ctx.exception.field, "model")

    def test_missing_parameter_law(self):
        with self.assertRaises(ConfigError):
            lq_toy(distributions=[ParamDistribution.point("b", 1.0)])

    def test_lq_ensemble_law(self):
        spec = lq_ensemble()
        self.assertEqual(spec.distributions[0].support, (-0.5, 0.5))


if __name__ == '__main__':
    unittest.main()
