import math
import unittest

import numpy as np

from algorithms.energy import (
    BIHARMONIC,
    AUTO_SPAN,
    EnergyBreakdown,
    ModelParams,
    auto_grid,
    dilate_profile,
    el_residual,
    energy_breakdown,
    f_theta,
    f_theta_derivatives,
    fitted_multiplier,
    gaussian_breakdown,
    gaussian_variational_width,
    modulus_gap,
    multiplier_estimate,
    relative_residual,
    scaling_exponents,
    sign_condition_coo,
)
from algorithms.profiles import gaussian_profile
from algorithms.spectral import ComplexField, make_grid
from tests import P_SMALL_MASS, gaussian_grid, normalized_gaussian


class TestModelParams(unittest.TestCase):
    def test_exponent_range(self):
        for p in (2.0, 10.0 / 3.0, 3.5, 1.5):
            with self.assertRaises(ValueError):
                ModelParams(p=p)
        with self.assertRaises(ValueError):
            ModelParams(kind="unknown")

    def test_regimes(self):
        self.assertEqual(ModelParams(p=P_SMALL_MASS).regime, "small-mass")
        self.assertEqual(ModelParams(p=3.2).regime, "large-mass")
        self.assertEqual(ModelParams(p=2.9).regime, "outside-theorem")
        self.assertEqual(ModelParams(kind=BIHARMONIC).regime, "biharmonic")


class TestEnergyBreakdown(unittest.TestCase):
    def test_consistency_checks(self):
        with self.assertRaises(ValueError):
            EnergyBreakdown(1.0, 1.0, -1.0, 5.0, 1.0, P_SMALL_MASS)
        with self.assertRaises(ValueError):
            EnergyBreakdown.from_terms(1.0, 1.0, 0.5, 1.0, P_SMALL_MASS)
        b = EnergyBreakdown.from_terms(1.0, 0.5, -2.0, 1.0, P_SMALL_MASS)
        self.assertAlmostEqual(b.I, -0.5)
        self.assertAlmostEqual(b.scale, 3.5)
        self.assertNotIn("kind", b.to_dict())

    def test_gaussian_on_grid_matches_closed_form(self):
        """A, N and M of a sampled Gaussian agree with the closed form to 1e-6."""
        spec = gaussian_grid()
        for p in (P_SMALL_MASS, 3.2):
            sampled = energy_breakdown(normalized_gaussian(spec, rho=1.0, width=1.0), ModelParams(p=p))
            exact = gaussian_breakdown(1.0, 1.0, p)
            for term in ("A", "N", "M"):
                self.assertAlmostEqual(getattr(sampled, term) / getattr(exact, term), 1.0, places=6)
            self.assertAlmostEqual(sampled.charge, 1.0, places=12)

    def test_phase_and_translation_invariance(self):
        """N and I of e^(i theta) u(. - a) equal those of u for whole-cell a."""
        spec = make_grid(3, 32, 24.0)
        u = normalized_gaussian(spec, rho=0.8, width=1.5)
        u = ComplexField(spec, u.values * np.exp(0.4j * spec.coordinates()[1]))
        params = ModelParams(p=3.2)
        base = energy_breakdown(u, params)
        for shift, theta in (((3, -5, 7), 0.9), ((0, 0, 11), -2.0), ((-4, 2, 0), math.pi)):
            moved = ComplexField(spec, np.exp(1j * theta) * np.roll(u.values, shift, axis=(0, 1, 2)))
            other = energy_breakdown(moved, params)
            self.assertAlmostEqual(other.N / base.N, 1.0, places=12)
            self.assertLess(abs(other.I - base.I), 1e-12 * base.scale)

    def test_requires_schrodinger_poisson_on_3d(self):
        with self.assertRaises(ValueError):
            energy_breakdown(normalized_gaussian(make_grid(1, 32, 8.0)), ModelParams())
        with self.assertRaises(ValueError):
            energy_breakdown(normalized_gaussian(gaussian_grid()), ModelParams(kind=BIHARMONIC))


class TestMultiplier(unittest.TestCase):
    def setUp(self):
        self.params = ModelParams(p=P_SMALL_MASS)
        self.u = normalized_gaussian(make_grid(3, 32, 24.0), rho=0.8, width=1.0)

    def test_estimate_is_pairing_of_equation(self):
        """omega rho^2 = 2A + 4N + pM, and the least-squares fit gives the same value."""
        b = energy_breakdown(self.u, self.params)
        omega = multiplier_estimate(self.u, self.params)
        self.assertAlmostEqual(omega * 0.64, 2 * b.A + 4 * b.N + P_SMALL_MASS * b.M, places=12)
        self.assertAlmostEqual(fitted_multiplier(self.u, self.params) / omega, 1.0, places=10)

    def test_residual_is_orthogonal_at_estimate(self):
        omega = multiplier_estimate(self.u, self.params)
        residual = el_residual(self.u, omega, self.params)
        pairing = np.vdot(self.u.values, residual.values).real
        scale = np.vdot(self.u.values, self.u.values).real * abs(omega)
        self.assertLess(abs(pairing), 1e-10 * scale)
        ratio = relative_residual(self.u, omega, self.params)
        self.assertGreater(ratio, 0.0)
        self.assertLess(ratio, 1.0)


class TestScaling(unittest.TestCase):
    def test_exponents(self):
        self.assertEqual(scaling_exponents(0.0, 3.0), (2.0, 4.0, 3.0))
        a, b, c = scaling_exponents(-2.0, P_SMALL_MASS)
        self.assertAlmostEqual(a, 6.0)
        self.assertAlmostEqual(b, 6.0)
        self.assertAlmostEqual(c, 4 * P_SMALL_MASS - 6)

    def test_dilation_identity_on_self_similar_grids(self):
        """I(u_theta) = theta^2 (I(u) + f(theta, u)) up to round-off."""
        params = ModelParams(p=P_SMALL_MASS)
        profile = gaussian_profile(0.3, 1.0)
        grid = make_grid(3, 32, 24.0)
        base = energy_breakdown(profile.sample(grid), params)
        for beta in (0.0, 0.5, -2.0):
            for theta in (0.8, 1.3):
                moved_grid = grid.scaled(theta ** beta)
                moved = energy_breakdown(dilate_profile(profile, theta, beta).sample(moved_grid), params)
                predicted = theta ** 2 * (base.I + f_theta(theta, base, beta, P_SMALL_MASS))
                self.assertLess(abs(moved.I - predicted), 1e-10 * base.scale)
                self.assertAlmostEqual(moved.charge / (theta * base.charge), 1.0, places=12)

    def test_exponents_measured_for_large_power(self):
        """Each term of a dilated Gaussian scales with its own power of theta."""
        p = 3.2
        params = ModelParams(p=p)
        profile = gaussian_profile(0.5, 1.0)
        grid = make_grid(3, 32, 24.0)
        base = energy_breakdown(profile.sample(grid), params)
        for beta in (0.0, -2.0):
            exponents = scaling_exponents(beta, p)
            for theta in (0.5, 0.8, 1.25, 2.0):
                moved = energy_breakdown(
                    dilate_profile(profile, theta, beta).sample(grid.scaled(theta ** beta)), params)
                for term, expected in zip(("A", "N", "M"), exponents):
                    measured = math.log(getattr(moved, term) / getattr(base, term)) / math.log(theta)
                    self.assertAlmostEqual(measured, expected, delta=1e-6)

    def test_f_vanishes_at_one(self):
        b = gaussian_breakdown(0.5, 2.0, P_SMALL_MASS)
        self.assertEqual(f_theta(1.0, b, 0.0, P_SMALL_MASS), 0.0)
        with self.assertRaises(ValueError):
            f_theta(0.0, b, 0.0, P_SMALL_MASS)
        with self.assertRaises(ValueError):
            dilate_profile(gaussian_profile(), -1.0, 0.0)

    def test_derivatives_match_finite_differences(self):
        b = gaussian_breakdown(0.5, 2.0, 3.2)
        for beta in (0.0, -2.0, 0.7):
            first, second = f_theta_derivatives(b, beta, 3.2)
            eps = 1e-4
            plus, minus = f_theta(1 + eps, b, beta, 3.2), f_theta(1 - eps, b, beta, 3.2)
            self.assertAlmostEqual(first, (plus - minus) / (2 * eps), delta=1e-6 * b.scale)
            self.assertAlmostEqual(second, (plus + minus) / eps ** 2, delta=1e-4 * b.scale)

    def test_closed_forms_of_first_derivative(self):
        b = gaussian_breakdown(0.5, 2.0, 3.2)
        first, _ = f_theta_derivatives(b, 0.0, 3.2)
        self.assertAlmostEqual(first, 2 * b.N + (3.2 - 2) * b.M)
        first, _ = f_theta_derivatives(b, -2.0, 3.2)
        self.assertAlmostEqual(first, 4 * (b.A + b.N) + (4 * 3.2 - 8) * b.M)

    def test_sign_condition(self):
        b = gaussian_breakdown(0.3, 40.0, P_SMALL_MASS)
        expected = 2 * b.N + (2 - P_SMALL_MASS) * (-P_SMALL_MASS * b.M)
        self.assertAlmostEqual(sign_condition_coo(b), expected)
        with self.assertRaises(ValueError):
            sign_condition_coo(gaussian_breakdown(0.3, 1.0, 3.2), 3.2)


class TestModulusGap(unittest.TestCase):
    def test_plane_wave_phase(self):
        """A phase exp(i k x) costs k^2 rho^2 / 2 of kinetic energy and nothing else."""
        spec = gaussian_grid()
        u = normalized_gaussian(spec, rho=1.0)
        k = 2 * math.pi / spec.L
        x = spec.coordinates()[0]
        twisted = ComplexField(spec, u.values * np.exp(1j * k * x))
        params = ModelParams(p=P_SMALL_MASS)
        self.assertAlmostEqual(modulus_gap(twisted, params) / (0.5 * k ** 2), 1.0, places=8)
        self.assertAlmostEqual(modulus_gap(u, params), 0.0, places=12)


class TestGaussianTrial(unittest.TestCase):
    def test_variational_width_is_stationary(self):
        rho, p = 0.3, P_SMALL_MASS
        width = gaussian_variational_width(rho, p)
        eps = 1e-4 * width
        left = gaussian_breakdown(rho, width - eps, p).I
        centre = gaussian_breakdown(rho, width, p).I
        right = gaussian_breakdown(rho, width + eps, p).I
        self.assertLess(centre, 0.0)
        self.assertLessEqual(centre, left)
        self.assertLessEqual(centre, right)

    def test_negative_multiplier_at_small_charge(self):
        b = gaussian_breakdown(0.3, gaussian_variational_width(0.3, P_SMALL_MASS), P_SMALL_MASS)
        omega = (2 * b.A + 4 * b.N + P_SMALL_MASS * b.M) / 0.09
        self.assertLess(omega, 0.0)

    def test_fallback_width_without_negative_energy(self):
        """At large charge with p = 8/3 no Gaussian has negative energy; A + M is minimized instead."""
        rho, p = 5.0, P_SMALL_MASS
        width = gaussian_variational_width(rho, p)
        self.assertTrue(math.isfinite(width) and width > 0)
        self.assertGreater(gaussian_breakdown(rho, width, p).I, 0.0)
        eps = 1e-4 * width

        def local(s):
            b = gaussian_breakdown(rho, s, p)
            return b.A + b.M

        self.assertLessEqual(local(width), local(width - eps))
        self.assertLessEqual(local(width), local(width + eps))

    def test_auto_grid(self):
        width = gaussian_variational_width(0.5, 3.2)
        spec = auto_grid(0.5, 3.2, n_axis=32)
        self.assertEqual(spec.n_axis, 32)
        self.assertAlmostEqual(spec.L, AUTO_SPAN * width)


if __name__ == '__main__':
    unittest.main()
