"""
Quick tests for the shared helpers.
These tests run in well under a second.
"""

import unittest
import sys
import os

import numpy as np

# Add repo root to path for testing
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from ensemble_pmp.utils import (relative_change, trapezoid_weights, control_l2_norm,
                                format_number, data_status_emoji)


class TestUtils(unittest.TestCase):

    def test_relative_change(self):
        self.assertAlmostEqual(relative_change(2.0, 1.5), 0.25)
        self.assertAlmostEqual(relative_change(-4.0, -3.0), 0.25)
        self.assertEqual(relative_change(0.0, 0.0), 0.0)
        self.assertEqual(relative_change(0.0, 1.0), float("inf"))

    def test_trapezoid_weights(self):
        w = trapezoid_weights(5, 0.25)
        np.testing.assert_allclose(w, [0.125, 0.25, 0.25, 0.25, 0.125])
        self.assertAlmostEqual(w.sum(), 1.0)

    def test_control_l2_norm(self):
        """Constant 1 on [0, 1] has unit L2 norm; t on [0, 1] is close to 1/sqrt(3)."""
        self.assertAlmostEqual(control_l2_norm(np.ones(101), 0.01), 1.0, places=12)
        t = np.linspace(0.0, 1.0, 1001)
        self.assertAlmostEqual(control_l2_norm(t, 0.001), 1.0 / np.sqrt(3.0), places=5)

    def test_format_number(self):
        """Test number formatting."""
        self.assertEqual(format_number(2512), "2,512")
        self.assertEqual(format_number(1000000), "1,000,000")
        self.assertEqual(format_number(0.5), "5.0000e-01")
        self.assertEqual(format_number(float("nan")), "nan")

    def test_data_status_emoji(self):
        """Test status emoji mapping."""
        self.assertEqual(data_status_emoji("PASS"), "✅")
        self.assertEqual(data_status_emoji("WARNING"), "⚠️")
        self.assertEqual(data_status_emoji("FAIL"), "❌")
        self.assertEqual(data_status_emoji("UNKNOWN"), "❓")


if __name__ == '__main__':
    unittest.main()
