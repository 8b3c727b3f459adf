import math
import unittest

import numpy as np
from scipy import integrate

from algorithms.hartree import (
    BOUNDARY_MASS_TOL,
    TruncationError,
    boundary_mass_fraction,
    check_truncation,
    coulomb_kernel,
    direct_sum_potential,
    hartree_bound_ratios,
    hartree_energy,
    hartree_potential,
)
from algorithms.spectral import GridError, make_grid
from tests import gaussian_grid, normalized_gaussian, small_grid


def gaussian_hartree(rho: float, width: float) -> float:
    """N of the 3D Gaussian of charge rho and width s: (sqrt(2)/4) pi^(-1/2) rho^4 / s."""
    return math.sqrt(2) / 4 / math.sqrt(math.pi) * rho ** 4 / width


class TestCoulombKernel(unittest.TestCase):
    def test_needs_three_dimensions(self):
        with self.assertRaises(GridError):
            coulomb_kernel(make_grid(2, 16, 8.0))

    def test_zero_mode(self):
        spec = small_grid()
        kernel = coulomb_kernel(spec)
        self.assertAlmostEqual(kernel.ghat.values[0, 0, 0], 2 * math.pi * spec.R ** 2)
        self.assertTrue(np.all(kernel.ghat.values >= 0))

    def test_fft_matches_direct_sum(self):
        """The FFT convolution agrees with real-space summation of the truncated kernel."""
        spec = make_grid(3, 32, 16.0)
        u = normalized_gaussian(spec, rho=1.0, width=1.2)
        every_fourth = np.zeros(spec.shape, dtype=bool)
        every_fourth[::4, ::4, ::4] = True
        targets = every_fourth & (spec.radius() <= 2.0)
        fast = hartree_potential(u, check=False).values.real
        direct = direct_sum_potential(u, targets).values.real
        self.assertEqual(int(targets.sum()), 7)
        np.testing.assert_allclose(direct[targets], fast[targets], rtol=2e-3)
        self.assertTrue(np.all(np.isnan(direct[~targets])))

    def test_symbol_matches_radial_quadrature(self):
        """ghat(k) is the transform of the kernel cut at R, checked against quad."""
        spec = small_grid()
        ghat = coulomb_kernel(spec).ghat.values
        R = spec.R
        for index in [(1, 0, 0), (2, 3, 0), (5, 1, 4)]:
            k = math.sqrt(sum(spec.wavenumbers()[i] ** 2 for i in index))
            value, _ = integrate.quad(lambda r: 4 * math.pi * math.sin(k * r) / k, 0.0, R,
                                      epsabs=0.0, epsrel=1e-12, limit=200)
            self.assertAlmostEqual(ghat[index], value, delta=1e-10 * abs(value) + 1e-12)

    def test_direct_sum_rejects_bad_mask(self):
        spec = small_grid()
        u = normalized_gaussian(spec)
        with self.assertRaises(GridError):
            direct_sum_potential(u, np.ones((4, 4, 4), dtype=bool))


class TestHartreeEnergy(unittest.TestCase):
    def test_gaussian_energy(self):
        """N matches the closed form for a Gaussian well inside R/2."""
        spec = gaussian_grid()
        u = normalized_gaussian(spec, rho=1.0, width=1.0)
        self.assertAlmostEqual(hartree_energy(u) / gaussian_hartree(1.0, 1.0), 1.0, places=6)

    def test_potential_at_centre(self):
        """phi(0) of a Gaussian density of total charge Q and width s is 2Q / (sqrt(pi) s)."""
        spec = gaussian_grid()
        u = normalized_gaussian(spec, rho=1.0, width=1.0)
        phi = hartree_potential(u).values.real
        centre = (spec.n_axis // 2,) * 3
        self.assertAlmostEqual(phi[centre] / (2 / math.sqrt(math.pi)), 1.0, places=6)

    def test_energy_scales_with_fourth_power_of_charge(self):
        spec = gaussian_grid()
        u = normalized_gaussian(spec, rho=1.0)
        self.assertAlmostEqual(hartree_energy(u.scaled(0.5)) / hartree_energy(u), 0.0625, places=12)

    def test_requires_3d_grid(self):
        spec = make_grid(1, 32, 8.0)
        with self.assertRaises(GridError):
            hartree_energy(normalized_gaussian(spec))


class TestTruncation(unittest.TestCase):
    def test_compact_density_passes(self):
        u = normalized_gaussian(gaussian_grid(), width=1.0)
        self.assertLess(boundary_mass_fraction(u), BOUNDARY_MASS_TOL)
        self.assertLess(check_truncation(u, strict=True), BOUNDARY_MASS_TOL)

    def test_wide_density_warns_or_raises(self):
        u = normalized_gaussian(make_grid(3, 32, 16.0), width=3.0)
        self.assertGreater(boundary_mass_fraction(u), BOUNDARY_MASS_TOL)
        with self.assertLogs("algorithms.hartree", level="WARNING"):
            check_truncation(u)
        with self.assertRaises(TruncationError):
            hartree_potential(u, strict=True)

    def test_zero_field(self):
        u = normalized_gaussian(small_grid()).scaled(0.0)
        self.assertEqual(boundary_mass_fraction(u), 0.0)


class TestBoundRatios(unittest.TestCase):
    def test_ratios_are_dilation_invariant(self):
        """All three ratios are unchanged by L2-preserving dilations on self-similar grids."""
        base_grid = make_grid(3, 32, 24.0)
        narrow = hartree_bound_ratios(normalized_gaussian(base_grid, width=1.0))
        wide = hartree_bound_ratios(normalized_gaussian(base_grid.scaled(2.0), width=2.0))
        self.assertEqual(set(narrow), {"l2_l83", "l125", "l2_grad"})
        for key in narrow:
            self.assertGreater(narrow[key], 0)
            self.assertAlmostEqual(wide[key] / narrow[key], 1.0, places=9)


if __name__ == '__main__':
    unittest.main()
