"""
Coulomb potential and Hartree energy on the periodic grid.

The kernel 1/|x| is truncated at R = L/2 before transforming, which makes the
discrete convolution free-space for densities supported in the ball of
radius R/2 around the box centre.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional

import numpy as np

from algorithms.spectral import (
    ComplexField,
    GridError,
    GridSpec,
    SymbolField,
    fftn,
    gradient_power,
    ifftn,
    integrate,
    k_squared_values,
    lp_power,
)

logger = logging.getLogger(__name__)

BOUNDARY_MASS_TOL = 1e-8
IMAG_TOL = 1e-10

# Sum over nonzero m in Z^3 of |m|^-1, by analytic continuation
ZETA_CUBIC_HALF = -2.8372974794806
DIRECT_CHUNK = 16


class TruncationError(ValueError):
    """Density reaches the region where the truncated kernel is no longer free-space."""


@dataclass(frozen=True, eq=False)
class CoulombKernel:
    spec: GridSpec
    ghat: SymbolField

    @property
    def R(self) -> float:
        return self.spec.R


@lru_cache(maxsize=8)
def _kernel_values(spec: GridSpec) -> np.ndarray:
    R = spec.R
    k2 = k_squared_values(spec)
    k = np.sqrt(k2)
    ghat = np.empty_like(k2)
    nonzero = k2 > 0
    ghat[nonzero] = 8 * np.pi * np.sin(0.5 * k[nonzero] * R) ** 2 / k2[nonzero]
    ghat[~nonzero] = 2 * np.pi * R ** 2
    ghat.setflags(write=False)
    return ghat


def coulomb_kernel(spec: GridSpec) -> CoulombKernel:
    """
    Truncated Coulomb symbol 4*pi*(1 - cos(|k| R)) / |k|^2 with value 2*pi*R^2 at k = 0.

    Args:
        spec: Three-dimensional grid

    Returns:
        Immutable CoulombKernel, cached per grid
    """
    if spec.d != 3:
        raise GridError(f"Coulomb kernel is defined on 3D grids only, got d={spec.d}")
    return CoulombKernel(spec, SymbolField(spec, _kernel_values(spec)))


def boundary_mass_fraction(u: ComplexField) -> float:
    """Share of the mass lying outside the ball of radius R/2 around the box centre."""
    density = u.density()
    total = float(np.sum(density))
    if total == 0.0:
        return 0.0
    outside = u.spec.radius() > u.spec.R / 2
    return float(np.sum(density[outside]) / total)


def check_truncation(u: ComplexField, strict: bool = False) -> float:
    fraction = boundary_mass_fraction(u)
    if fraction > BOUNDARY_MASS_TOL:
        message = (
            f"Boundary mass fraction {fraction:.3e} exceeds {BOUNDARY_MASS_TOL:.0e}; "
            f"box L={u.spec.L} is too small for this density"
        )
        if strict:
            raise TruncationError(message)
        logger.warning(message)
    return fraction


def _potential_values(density: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Complex convolution of a density with the truncated kernel, imaginary part kept."""
    return ifftn(_kernel_values(spec) * fftn(density))


def potential_from_density(density: np.ndarray, spec: GridSpec) -> np.ndarray:
    phi = _potential_values(density, spec)
    scale = float(np.max(np.abs(phi))) if phi.size else 0.0
    leak = float(np.max(np.abs(phi.imag))) if phi.size else 0.0
    if scale > 0 and leak > IMAG_TOL * scale:
        raise ValueError(f"Hartree potential has relative imaginary part {leak / scale:.3e}")
    return phi.real


def hartree_potential(u: ComplexField, kernel: Optional[CoulombKernel] = None,
                      strict: bool = False, check: bool = True) -> ComplexField:
    """
    phi_u = |x|^-1 * |u|^2 on the grid.

    Args:
        u: Field on a 3D grid
        kernel: Precomputed kernel for u's grid (built on demand otherwise)
        strict: Raise TruncationError instead of warning on boundary mass
        check: Run the boundary-mass diagnostic

    Returns:
        Real-valued potential stored as a ComplexField
    """
    if kernel is None:
        kernel = coulomb_kernel(u.spec)
    elif kernel.spec != u.spec:
        raise GridError(f"Kernel grid {kernel.spec} does not match field grid {u.spec}")
    if check:
        check_truncation(u, strict)
    return ComplexField(u.spec, potential_from_density(u.density(), u.spec))


def hartree_energy_values(values: np.ndarray, spec: GridSpec) -> float:
    density = np.abs(values) ** 2
    phi = potential_from_density(density, spec)
    return 0.25 * integrate(phi * density, spec)


def hartree_energy(u: ComplexField, strict: bool = False, check: bool = True) -> float:
    """N(u) = 1/4 * integral of phi_u |u|^2."""
    if u.spec.d != 3:
        raise GridError(f"Hartree energy requires a 3D grid, got d={u.spec.d}")
    if check:
        check_truncation(u, strict)
    return hartree_energy_values(u.values, u.spec)


def direct_sum_potential(u: ComplexField, targets: Optional[np.ndarray] = None) -> ComplexField:
    """
    Potential by explicit real-space summation of the truncated kernel
    1/|x - y| for |x - y| <= R, with minimum-image displacements.

    The singular self term is replaced by the lattice correction
    -ZETA_CUBIC_HALF * h^2 * |u(x)|^2, which removes the leading O(h^2) error
    of the punctured sum for smooth densities. O(n^6) work; only practical on
    small grids or with a sparse target mask.

    Args:
        u: Field on a 3D grid
        targets: Boolean mask of grid points to evaluate; every point when None

    Returns:
        Potential as a ComplexField, NaN where targets is False
    """
    spec = u.spec
    if spec.d != 3:
        raise GridError(f"Direct summation runs on 3D grids only, got d={spec.d}")
    density = u.density().ravel()
    points = np.stack([c.ravel() for c in spec.coordinates()], axis=1)
    occupied = density > 0
    sources = points[occupied]
    charges = density[occupied] * spec.cell_volume
    if targets is None:
        wanted = np.arange(spec.size)
    else:
        mask = np.asarray(targets, dtype=bool)
        if mask.shape != spec.shape:
            raise GridError(f"Target mask shape {mask.shape} does not match grid {spec.shape}")
        wanted = np.flatnonzero(mask)
    phi = np.full(spec.size, np.nan)
    for start in range(0, len(wanted), DIRECT_CHUNK):
        chunk = wanted[start:start + DIRECT_CHUNK]
        offsets = points[chunk, None, :] - sources[None, :, :]
        offsets -= spec.L * np.round(offsets / spec.L)
        distance = np.sqrt(np.sum(offsets ** 2, axis=-1))
        inside = (distance > 0) & (distance <= spec.R)
        kernel = np.zeros_like(distance)
        kernel[inside] = 1.0 / distance[inside]
        phi[chunk] = kernel @ charges - ZETA_CUBIC_HALF * spec.h ** 2 * density[chunk]
    return ComplexField(spec, phi.reshape(spec.shape))


def hartree_bound_ratios(u: ComplexField) -> Dict[str, float]:
    """
    Ratios of N(u) to the right-hand sides of the standard Coulomb bounds.

    Bounded ratios over a family of fields confirm the shape of each bound;
    the constants themselves are not known explicitly.
    """
    spec = u.spec
    n_value = hartree_energy(u, check=False)
    l2 = np.sqrt(lp_power(u.values, 2.0, spec))
    l83 = lp_power(u.values, 8.0 / 3.0, spec)
    l125 = lp_power(u.values, 12.0 / 5.0, spec) ** (5.0 / 12.0)
    grad = np.sqrt(max(gradient_power(u.values, spec), 0.0))
    ratios = {}
    for key, denominator in (
        ("l2_l83", l2 ** (4.0 / 3.0) * l83),
        ("l125", l125 ** 4),
        ("l2_grad", l2 ** 3 * grad),
    ):
        ratios[key] = float(n_value / denominator) if denominator > 0 else float("nan")
    return ratios
