"""
Tests for parameter laws, ensemble sampling and expectations.
"""

import unittest
import sys
import os

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from ensemble_pmp.ensemble import (Ensemble, ParamDistribution, ParamSample, derive_seed,
                                   expectation, leading_samples, midpoint_sample, point_ensemble,
                                   sample_ensemble)
from ensemble_pmp.errors import DimensionError, DistributionError
from ensemble_pmp.models import SIT_DISTRIBUTIONS


class TestParamDistribution(unittest.TestCase):

    def test_uniform_needs_ordered_bounds(self):
        with self.assertRaises(DistributionError) as ctx:
            ParamDistribution.uniform("nu", 0.11, 0.09)
        self.assertIn("nu", str(ctx.exception))
        self.assertEqual(ctx.exception.parameter, "nu")

    def test_unknown_law(self):
        with self.assertRaises(DistributionError):
            ParamDistribution(name="mu_A", law="normal", lo=0.0, hi=1.0)

    def test_from_dict(self):
        law = ParamDistribution.from_dict({"name": "a", "lo": -0.5, "hi": 0.5})
        self.assertEqual(law.support, (-0.5, 0.5))
        point = ParamDistribution.from_dict({"name": "m", "value": 2.0})
        self.assertEqual(point.law, "point")
        self.assertEqual(point.midpoint, 2.0)
        self.assertEqual(ParamDistribution.from_dict(law.to_dict()), law)


class TestSampling(unittest.TestCase):

    def setUp(self):
        self.laws = SIT_DISTRIBUTIONS

    def test_draws_within_support(self):
        ens = sample_ensemble(self.laws, 200, seed=3)
        values = ens.stacked()
        for law in self.laws:
            lo, hi = law.support
            self.assertTrue(np.all(values[law.name] >= lo))
            self.assertTrue(np.all(values[law.name] <= hi))

    def test_closed_interval_over_many_draws(self):
        law = ParamDistribution.uniform("nu", 0.09, 0.11)
        values = sample_ensemble([law], 10 ** 5, seed=8).stacked()["nu"]
        self.assertEqual(values.size, 10 ** 5)
        self.assertGreaterEqual(values.min(), 0.09)
        self.assertLessEqual(values.max(), 0.11)

    def test_sample_mean_approaches_law_mean(self):
        law = ParamDistribution.uniform("nu", 0.09, 0.11)
        ens = sample_ensemble([law], 1000, seed=13)
        self.assertLess(abs(expectation(ens.stacked()["nu"], ens) - 0.1), 0.002)

    def test_weights_sum_to_one(self):
        for k in (1, 3, 7, 26, 49):
            ens = sample_ensemble(self.laws, k, seed=11)
            self.assertEqual(ens.size, k)
            self.assertLessEqual(abs(ens.weights.sum() - 1.0), 1e-12)

    def test_same_seed_same_ensemble(self):
        a = sample_ensemble(self.laws, 26, seed=42)
        b = sample_ensemble(self.laws, 26, seed=42)
        self.assertEqual(a, b)
        c = sample_ensemble(self.laws, 26, seed=43)
        self.assertNotEqual(a.stacked()["nu"].tolist(), c.stacked()["nu"].tolist())

    def test_point_mass_samples_are_identical(self):
        ens = sample_ensemble([ParamDistribution.point("a", 0.25)], 4, seed=0)
        self.assertTrue(all(s["a"] == 0.25 for s in ens))

    def test_invalid_requests(self):
        with self.assertRaises(DistributionError):
            sample_ensemble(self.laws, 0, seed=1)
        with self.assertRaises(DistributionError):
            sample_ensemble([], 3, seed=1)
        with self.assertRaises(DistributionError):
            sample_ensemble(self.laws, 3, seed=-1)

    def test_derive_seed_is_pure(self):
        self.assertEqual(derive_seed(1, 5), derive_seed(1, 5))
        self.assertNotEqual(derive_seed(1, 5), derive_seed(1, 6))
        self.assertNotEqual(derive_seed(1, 5), derive_seed(2, 5))
        self.assertGreaterEqual(derive_seed(0, 0), 0)


class TestLeadingSamples(unittest.TestCase):

    def setUp(self):
        self.pool = sample_ensemble(SIT_DISTRIBUTIONS, 12, seed=21)

    def test_sizes_are_nested(self):
        small, large = leading_samples(self.pool, 4), leading_samples(self.pool, 9)
        for name in self.pool.names:
            np.testing.assert_array_equal(small.stacked()[name], large.stacked()[name][:4])
        self.assertLessEqual(abs(small.weights.sum() - 1.0), 1e-12)
        np.testing.assert_allclose(large.weights, 1.0 / 9)
        self.assertEqual(small.seed, self.pool.seed)

    def test_full_size_is_the_pool(self):
        full = leading_samples(self.pool, 12)
        self.assertEqual(full.samples, self.pool.samples)

    def test_size_out_of_range(self):
        for k in (0, 13):
            with self.assertRaises(DistributionError):
                leading_samples(self.pool, k)


class TestExpectation(unittest.TestCase):

    def test_weighted_average(self):
        ens = sample_ensemble([ParamDistribution.uniform("a", 0.0, 1.0)], 4, seed=0)
        self.assertAlmostEqual(expectation([1.0, 2.0, 3.0, 4.0], ens), 2.5)

    def test_linearity(self):
        ens = sample_ensemble(SIT_DISTRIBUTIONS, 9, seed=4)
        rng = np.random.default_rng(1)
        x, y = rng.normal(size=9), rng.normal(size=9)
        a, b = 2.5, -0.75
        self.assertAlmostEqual(expectation(a * x + b * y, ens),
                               a * expectation(x, ens) + b * expectation(y, ens), places=12)
        self.assertAlmostEqual(expectation(np.full(9, 3.0), ens), 3.0, places=12)

    def test_length_mismatch(self):
        ens = point_ensemble({"a": 1.0})
        with self.assertRaises(DimensionError):
            expectation([1.0, 2.0], ens)

    def test_ensemble_rejects_bad_weights(self):
        samples = (ParamSample({"a": 1.0}, 0.5), ParamSample({"a": 2.0}, 0.4))
        with self.assertRaises(DistributionError):
            Ensemble(samples)

    def test_midpoint_sample(self):
        mid = midpoint_sample(SIT_DISTRIBUTIONS)
        self.assertAlmostEqual(mid["nu"], 0.10)
        self.assertEqual(mid.weight, 1.0)


if __name__ == '__main__':
    unittest.main()
