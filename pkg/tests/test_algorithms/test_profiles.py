import math
import unittest

import numpy as np

from algorithms.profiles import bump_profile, gaussian_profile
from tests import small_grid


class TestRadialProfiles(unittest.TestCase):
    def assert_derivatives_match(self, profile, radii, eps=1e-5, places=6):
        for r in radii:
            first = (profile(r + eps) - profile(r - eps)) / (2 * eps)
            second = (profile.derivative(r + eps) - profile.derivative(r - eps)) / (2 * eps)
            self.assertAlmostEqual(float(profile.derivative(r)), float(first), places=places)
            self.assertAlmostEqual(float(profile.second_derivative(r)), float(second), places=places)

    def test_gaussian_derivatives(self):
        """Exact derivatives agree with central differences."""
        self.assert_derivatives_match(gaussian_profile(1.5, 0.8), [0.1, 0.7, 1.9])

    def test_bump_derivatives_and_support(self):
        bump = bump_profile(2.0, 1.5)
        self.assert_derivatives_match(bump, [0.2, 0.9, 1.3])
        self.assertAlmostEqual(float(bump(0.0)), 2.0)
        self.assertEqual(float(bump(1.5)), 0.0)
        self.assertEqual(float(bump(3.0)), 0.0)
        # C1 at the edge of the support
        self.assertAlmostEqual(float(bump.derivative(1.5 - 1e-9)), 0.0, places=6)
        self.assertEqual(bump.breakpoints, (1.5,))

    def test_laplacian_at_origin(self):
        """At r = 0 the radial Laplacian equals dim * u''(0)."""
        profile = gaussian_profile(1.0, 2.0)
        for dim in (1, 3, 5):
            self.assertAlmostEqual(float(profile.laplacian(0.0, dim)), -dim / 4.0)

    def test_laplacian_keeps_shape(self):
        profile = gaussian_profile()
        self.assertEqual(np.shape(profile.laplacian(0.5, 3)), ())
        radii = np.linspace(0.0, 2.0, 7).reshape(7, 1)
        self.assertEqual(profile.laplacian(radii, 3).shape, (7, 1))

    def test_laplacian_of_gaussian(self):
        """Laplacian of exp(-r^2/2) in R^dim is (r^2 - dim) exp(-r^2/2)."""
        profile = gaussian_profile()
        r = np.array([0.3, 1.0, 2.5])
        np.testing.assert_allclose(profile.laplacian(r, 4), (r ** 2 - 4) * np.exp(-r ** 2 / 2), rtol=1e-12)

    def test_scaled_profile(self):
        base = gaussian_profile(1.0, 1.0)
        scaled = base.scaled(amplitude=3.0, length=2.0)
        self.assertAlmostEqual(float(scaled(1.0)), 3.0 * math.exp(-0.125))
        self.assertAlmostEqual(float(scaled.derivative(1.0)), 1.5 * float(base.derivative(0.5)))
        self.assertAlmostEqual(scaled.params["length"], 2.0)
        bump = bump_profile(1.0, 1.0).scaled(length=3.0)
        self.assertAlmostEqual(bump.support, 3.0)
        self.assertEqual(bump.breakpoints, (3.0,))
        with self.assertRaises(ValueError):
            base.scaled(length=0.0)

    def test_invalid_parameters(self):
        with self.assertRaises(ValueError):
            gaussian_profile(1.0, 0.0)
        with self.assertRaises(ValueError):
            bump_profile(1.0, -1.0)

    def test_sampling_on_grid(self):
        spec = small_grid()
        field = gaussian_profile(2.0, 1.0).sample(spec)
        centre = (spec.n_axis // 2,) * 3
        self.assertAlmostEqual(field.values[centre].real, 2.0)
        shifted = gaussian_profile(2.0, 1.0).sample(spec, center=(1.0, 0.0, 0.0))
        self.assertAlmostEqual(shifted.values[centre].real, 2.0 * math.exp(-0.5))


if __name__ == '__main__':
    unittest.main()
