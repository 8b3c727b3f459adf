import logging
import math
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Dict, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from algorithms.hartree import check_truncation, potential_from_density
from algorithms.profiles import RadialProfile
from algorithms.spectral import (
    ComplexField,
    GridError,
    GridSpec,
    fftn,
    gradient_power,
    ifftn,
    integrate,
    k_squared_values,
    lp_power,
    make_grid,
)

if TYPE_CHECKING:
    from algorithms.biharmonic import PowerSumNonlinearity

logger = logging.getLogger(__name__)

SCHRODINGER_POISSON = "schrodinger_poisson"
BIHARMONIC = "biharmonic"
MODEL_KINDS = (SCHRODINGER_POISSON, BIHARMONIC)

P_MIN = 2.0
P_MAX = 10.0 / 3.0
P_SMALL_MASS = 8.0 / 3.0
AUTO_SPAN = 40.0


@dataclass(frozen=True)
class ModelParams:
    """
    Model selection.

    Args:
        p: Power of the local term, 2 < p < 10/3 for the Schrodinger-Poisson energy
        kind: schrodinger_poisson or biharmonic
        nonlinearity: Power-sum F for the biharmonic energy (None means F = 0)
    """
    p: float = P_SMALL_MASS
    kind: str = SCHRODINGER_POISSON
    nonlinearity: Optional["PowerSumNonlinearity"] = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"Unknown model kind '{self.kind}', expected one of {MODEL_KINDS}")
        if self.kind == SCHRODINGER_POISSON and not (P_MIN < self.p < P_MAX):
            raise ValueError(
                f"Exponent p={self.p} outside (2, 10/3): the energy is not coercive on the mass sphere"
            )

    @property
    def regime(self) -> str:
        if self.kind == BIHARMONIC:
            return BIHARMONIC
        if math.isclose(self.p, P_SMALL_MASS, rel_tol=0, abs_tol=1e-12):
            return "small-mass"
        if 3.0 < self.p < P_MAX:
            return "large-mass"
        return "outside-theorem"


@dataclass(frozen=True)
class EnergyBreakdown:
    """
    Energy split into kinetic A, Hartree N and power term M (M <= 0 for the
    Schrodinger-Poisson model); I = A + N + M, charge is the L2 norm.
    """
    A: float
    N: float
    M: float
    I: float
    charge: float
    p: float
    kind: str = SCHRODINGER_POISSON

    def __post_init__(self):
        scale = abs(self.A) + abs(self.N) + abs(self.M)
        if abs(self.I - (self.A + self.N + self.M)) > 1e-12 * max(scale, 1e-300):
            raise ValueError(f"Inconsistent breakdown: I={self.I} but A+N+M={self.A + self.N + self.M}")
        if self.kind == SCHRODINGER_POISSON and self.M > 0:
            raise ValueError(f"Power term must be non-positive, got M={self.M}")

    @classmethod
    def from_terms(cls, A: float, N: float, M: float, charge: float, p: float,
                   kind: str = SCHRODINGER_POISSON) -> "EnergyBreakdown":
        return cls(float(A), float(N), float(M), float(A + N + M), float(charge), float(p), kind)

    @property
    def scale(self) -> float:
        return abs(self.A) + abs(self.N) + abs(self.M)

    def to_dict(self) -> Dict[str, float]:
        data = asdict(self)
        data.pop("kind")
        return data


def _sp_terms(values: np.ndarray, spec: GridSpec, p: float) -> Tuple[float, float, float]:
    A = 0.5 * gradient_power(values, spec)
    density = np.abs(values) ** 2
    N = 0.25 * integrate(potential_from_density(density, spec) * density, spec)
    M = -lp_power(values, p, spec) / p
    return A, N, M


def _sp_breakdown(values: np.ndarray, spec: GridSpec, p: float) -> EnergyBreakdown:
    A, N, M = _sp_terms(values, spec, p)
    charge = math.sqrt(lp_power(values, 2.0, spec))
    return EnergyBreakdown.from_terms(A, N, M, charge, p)


def _require_sp(params: ModelParams, spec: GridSpec) -> None:
    if params.kind != SCHRODINGER_POISSON:
        raise ValueError(f"Expected a schrodinger_poisson model, got {params.kind}")
    if spec.d != 3:
        raise GridError(f"Schrodinger-Poisson energy needs a 3D grid, got d={spec.d}")


def energy_breakdown(u: ComplexField, params: ModelParams, strict: bool = False) -> EnergyBreakdown:
    """
    A, N, M and I = A + N + M of a field.

    Args:
        u: Field on a 3D grid
        params: Schrodinger-Poisson model
        strict: Raise on boundary mass instead of warning

    Returns:
        EnergyBreakdown with charge = ||u||_2
    """
    _require_sp(params, u.spec)
    check_truncation(u, strict)
    return _sp_breakdown(u.values, u.spec, params.p)


def _sp_operator_terms(values: np.ndarray, spec: GridSpec, p: float):
    """Kinetic, Hartree and power contributions to the left side of the stationary equation."""
    kinetic = ifftn(k_squared_values(spec) * fftn(values))
    phi = potential_from_density(np.abs(values) ** 2, spec)
    power = np.abs(values) ** (p - 2) * values
    return kinetic, phi * values, power


def el_residual(u: ComplexField, omega: float, params: ModelParams) -> ComplexField:
    """-Laplacian u + phi_u u - |u|^(p-2) u - omega u."""
    _require_sp(params, u.spec)
    kinetic, hartree, power = _sp_operator_terms(u.values, u.spec, params.p)
    return ComplexField(u.spec, kinetic + hartree - power - omega * u.values)


def residual_ratio(terms, spec: GridSpec) -> float:
    """||sum of terms|| divided by the sum of the individual term norms."""
    total = sum(terms)
    numerator = math.sqrt(lp_power(total, 2.0, spec))
    denominator = sum(math.sqrt(lp_power(t, 2.0, spec)) for t in terms)
    return numerator / denominator if denominator > 0 else 0.0


def relative_residual(u: ComplexField, omega: float, params: ModelParams) -> float:
    _require_sp(params, u.spec)
    kinetic, hartree, power = _sp_operator_terms(u.values, u.spec, params.p)
    return residual_ratio([kinetic, hartree, -power, -omega * u.values], u.spec)


def _sp_multiplier(values: np.ndarray, spec: GridSpec, p: float, breakdown: EnergyBreakdown) -> float:
    rho2 = breakdown.charge ** 2
    if rho2 == 0.0:
        raise ValueError("Multiplier undefined for a field of zero charge")
    return (2 * breakdown.A + 4 * breakdown.N + p * breakdown.M) / rho2


def multiplier_estimate(u: ComplexField, params: ModelParams) -> float:
    """omega = (2A + 4N + pM) / rho^2, the stationary equation paired with u."""
    _require_sp(params, u.spec)
    breakdown = _sp_breakdown(u.values, u.spec, params.p)
    return _sp_multiplier(u.values, u.spec, params.p, breakdown)


def fitted_multiplier(u: ComplexField, params: ModelParams) -> float:
    """Least-squares omega minimizing the residual norm; cross-check for multiplier_estimate."""
    _require_sp(params, u.spec)
    kinetic, hartree, power = _sp_operator_terms(u.values, u.spec, params.p)
    lhs = kinetic + hartree - power
    denominator = np.vdot(u.values, u.values).real
    if denominator == 0.0:
        raise ValueError("Multiplier undefined for a field of zero charge")
    return float(np.vdot(u.values, lhs).real / denominator)


def dilate_profile(profile: RadialProfile, theta: float, beta: float) -> RadialProfile:
    """
    u_theta(x) = theta^(1 - 3 beta / 2) u(x / theta^beta); the L2 norm in 3D scales by theta.
    """
    if theta <= 0:
        raise ValueError(f"Dilation factor must be positive, got {theta}")
    return profile.scaled(amplitude=theta ** (1 - 1.5 * beta), length=theta ** beta)


def scaling_exponents(beta: float, p: float) -> Tuple[float, float, float]:
    """Exponents of theta multiplying A, N and M under dilate_profile."""
    return 2 - 2 * beta, 4 - beta, (1 - 1.5 * beta) * p + 3 * beta


def _f_exponents(beta: float, p: float) -> Tuple[float, float, float]:
    a, b, c = scaling_exponents(beta, p)
    return a - 2, b - 2, c - 2


def f_theta(theta: float, breakdown: EnergyBreakdown, beta: float, p: float) -> float:
    """
    f(theta, u) with I(u_theta) = theta^2 (I(u) + f(theta, u)).
    """
    if theta <= 0:
        raise ValueError(f"theta must be positive, got {theta}")
    a, b, c = _f_exponents(beta, p)
    return ((theta ** a - 1) * breakdown.A
            + (theta ** b - 1) * breakdown.N
            + (theta ** c - 1) * breakdown.M)


def f_theta_derivatives(breakdown: EnergyBreakdown, beta: float, p: float) -> Tuple[float, float]:
    """First and second theta-derivatives of f at theta = 1."""
    a, b, c = _f_exponents(beta, p)
    first = a * breakdown.A + b * breakdown.N + c * breakdown.M
    second = a * (a - 1) * breakdown.A + b * (b - 1) * breakdown.N + c * (c - 1) * breakdown.M
    return first, second


def sign_condition_coo(breakdown: EnergyBreakdown, p: float = P_SMALL_MASS) -> float:
    """
    2N + (2 - 8/3) ||u||_{8/3}^{8/3} for the p = 8/3 model.

    The exact slope of f at theta = 1 for beta = 0 is 2N + (p - 2)M, available
    from f_theta_derivatives; the two share their sign whenever M dominates N.
    """
    if not math.isclose(p, P_SMALL_MASS) or not math.isclose(breakdown.p, P_SMALL_MASS):
        raise ValueError(f"Sign condition applies to p = 8/3 only, got p={breakdown.p}")
    lp = -P_SMALL_MASS * breakdown.M
    return 2 * breakdown.N + (2 - P_SMALL_MASS) * lp


def modulus_gap(u: ComplexField, params: ModelParams) -> float:
    """I(u) - I(|u|); equals the phase-gradient energy and is never negative."""
    _require_sp(params, u.spec)
    full = _sp_breakdown(u.values, u.spec, params.p)
    modulus = _sp_breakdown(np.abs(u.values).astype(np.complex128), u.spec, params.p)
    return full.I - modulus.I


def gaussian_breakdown(rho: float, width: float, p: float) -> EnergyBreakdown:
    """
    Closed-form A, N, M of the 3D Gaussian a*exp(-r^2/(2 s^2)) of charge rho.
    """
    if width <= 0:
        raise ValueError(f"Gaussian width must be positive, got {width}")
    A = 0.75 * rho ** 2 / width ** 2
    N = math.sqrt(2) / 4 / math.sqrt(math.pi) * rho ** 4 / width
    M = (-(1 / p) * (2 * math.pi / p) ** 1.5 * math.pi ** (-0.75 * p)
         * rho ** p * width ** (3 - 1.5 * p))
    return EnergyBreakdown.from_terms(A, N, M, rho, p)


def gaussian_variational_width(rho: float, p: float) -> float:
    """
    Width of the Gaussian of charge rho with least energy; when no width gives a
    negative energy, the width minimizing A + M is returned instead.
    """
    if rho <= 0:
        raise ValueError(f"Charge must be positive, got {rho}")
    log_widths = np.linspace(-8.0, 8.0, 1601) * math.log(10.0)

    def total(log_s):
        return gaussian_breakdown(rho, math.exp(log_s), p).I

    def local(log_s):
        b = gaussian_breakdown(rho, math.exp(log_s), p)
        return b.A + b.M

    energies = np.array([total(s) for s in log_widths])
    objective = total if energies.min() < 0 else local
    if objective is local:
        energies = np.array([local(s) for s in log_widths])
    best = int(np.argmin(energies))
    lo = log_widths[max(best - 1, 0)]
    hi = log_widths[min(best + 1, len(log_widths) - 1)]
    refined = minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10})
    return float(math.exp(refined.x))


def auto_grid(rho: float, p: float, n_axis: int = 64, span: float = AUTO_SPAN, d: int = 3) -> GridSpec:
    """Box of edge span * (Gaussian variational width) centred on the origin."""
    width = gaussian_variational_width(rho, p)
    spec = make_grid(d, n_axis, span * width)
    logger.info("Auto box for rho=%g, p=%g: width %.4g, L=%.4g", rho, p, width, spec.L)
    return spec
