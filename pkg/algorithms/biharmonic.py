"""
Fourth-order energy J(u) = 1/2 ||Laplacian u||^2 + integral of F(u).

Two paths share the PowerSumNonlinearity type: radial quadrature for profiles
in any dimension N (where grids are out of reach), and periodic grids with
d <= 3 for minimization and time stepping.
"""
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import integrate
from scipy.optimize import linprog
from scipy.special import gamma

from algorithms.energy import BIHARMONIC, EnergyBreakdown, ModelParams, residual_ratio
from algorithms.groundstate import (
    FlowModel,
    GroundStateResult,
    SolverConfig,
    _finish,
    default_step,
    run_normalized_flow,
    seed_profile,
)
from algorithms.hartree import boundary_mass_fraction
from algorithms.profiles import RadialProfile
from algorithms.spectral import (
    ComplexField,
    GridSpec,
    fftn,
    ifftn,
    integrate as grid_integrate,
    k_squared_values,
    laplacian_power,
    lp_power,
)
from utils.helpers import worker_count

logger = logging.getLogger(__name__)

GAUSS_NODES = 1024
QUAD_EPSREL = 1e-12
_TERM = re.compile(
    r"([+-]?)((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\*?\|s\|\^(\d+\.?\d*|\.\d+)"
)


@dataclass(frozen=True)
class PowerSumNonlinearity:
    """F(s) = sum of c_j |s|^sigma_j with every sigma_j >= 2, so F(0) = 0."""
    terms: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        terms = tuple((float(c), float(sigma)) for c, sigma in self.terms)
        for c, sigma in terms:
            if not (np.isfinite(c) and np.isfinite(sigma)):
                raise ValueError(f"Non-finite term ({c}, {sigma})")
            if sigma < 2:
                raise ValueError(f"Exponents must be >= 2, got {sigma}")
        object.__setattr__(self, "terms", terms)

    def value(self, s) -> np.ndarray:
        a = np.abs(np.asarray(s, dtype=np.float64))
        return sum((c * np.power(a, sigma) for c, sigma in self.terms), np.zeros_like(a))

    def derivative(self, s) -> np.ndarray:
        """F'(s) for s >= 0."""
        a = np.abs(np.asarray(s, dtype=np.float64))
        return sum((c * sigma * np.power(a, sigma - 1) for c, sigma in self.terms), np.zeros_like(a))

    def gauge(self, s) -> np.ndarray:
        """F'(s)/s, continued to s = 0 (zero unless some exponent equals 2)."""
        a = np.abs(np.asarray(s, dtype=np.float64))
        return sum((c * sigma * np.power(a, sigma - 2) for c, sigma in self.terms), np.zeros_like(a))

    @property
    def top_term(self) -> Optional[Tuple[float, float]]:
        if not self.terms:
            return None
        return max(self.terms, key=lambda term: term[1])

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        return " + ".join(f"{c:g}*|s|^{sigma:g}" for c, sigma in self.terms)


def parse_nonlinearity(text: str) -> PowerSumNonlinearity:
    """
    Parse strings such as "-1*|s|^3" or "-0.25*|s|^4 + 0.5*|s|^2".

    "0" or an empty string gives F = 0.
    """
    compact = re.sub(r"\s+", "", text)
    if compact in ("", "0"):
        return PowerSumNonlinearity(())
    terms, position = [], 0
    for match in _TERM.finditer(compact):
        sign, coefficient, exponent = match.groups()
        if match.start() != position or (terms and not sign):
            break
        value = float(coefficient) if coefficient else 1.0
        terms.append((-value if sign == "-" else value, float(exponent)))
        position = match.end()
    if not terms or position != len(compact):
        raise ValueError(f"Cannot parse nonlinearity '{text}'; expected terms like -1*|s|^3")
    return PowerSumNonlinearity(tuple(terms))


def vanishing_range(dim: int) -> Tuple[float, float]:
    """Exponents q for which bounded sequences that vanish go to zero in L^q."""
    if dim > 4:
        return 2.0, 2.0 * dim / (dim - 4)
    return 2.0, math.inf


def check_hypotheses(F: PowerSumNonlinearity, dim: int, s_max: float = 1e3) -> Dict[str, Any]:
    """
    Check the growth and sign hypotheses on F in dimension dim.

    Returns:
        Dict with F1_witness (s0 with F(s0) < 0, or None), F0_holds, F0_margin
        (critical exponent minus leading exponent, inf when the leading term is
        not negative), F0_coefficients fitted on samples, and an Fp note.
    """
    if dim < 1:
        raise ValueError(f"Dimension must be positive, got {dim}")
    samples = np.power(10.0, np.linspace(-3.0, 3.0, 61))
    samples = samples[samples <= s_max]
    values = F.value(samples)

    negative = samples[values < 0]
    witness = None
    if negative.size:
        witness = float(negative[np.argmin(np.abs(np.log(negative)))])

    critical = 2.0 + 4.0 / dim
    top = F.top_term
    if top is not None and top[0] < 0 and top[1] > 2:
        margin = critical - top[1]
    else:
        margin = math.inf
    holds = margin >= 0

    # minimal c1 + c2 >= 0 with F(s) + c1 s^2 + c2 s^critical >= 0 at the samples
    fit = linprog(
        c=[1.0, 1.0],
        A_ub=np.column_stack([-np.ones_like(samples), -np.power(samples, critical - 2)]),
        b_ub=values / samples ** 2,
        bounds=[(0, None), (0, None)],
        method="highs",
    )
    coefficients = tuple(float(c) for c in fit.x) if fit.success else None

    derivative_exponents = sorted({sigma - 1 for _, sigma in F.terms})
    upper = (dim + 4) / (dim - 4) if dim > 4 else math.inf
    report = {
        "F": str(F),
        "dim": dim,
        "F1_witness": witness,
        "F1_value": float(F.value(witness)) if witness is not None else None,
        "F0_holds": bool(holds),
        "F0_margin": margin,
        "F0_coefficients": coefficients,
        "Fp_note": (
            f"F' exponents {derivative_exponents}; growth window (1, {upper:g}]; "
            "reported only, not enforced"
        ),
        "vanishing_range": vanishing_range(dim),
    }
    if not holds:
        logger.info("Lower bound fails for F=%s in dimension %d: leading exponent exceeds %.4g",
                    F, dim, critical)
    return report


def plateau_profile(s0: float, Rn: float) -> RadialProfile:
    """
    s0 on [0, Rn], s0 cos^2((pi/2)(r - Rn)) on [Rn, Rn + 1], zero beyond.
    u and u' are continuous at both seams; u'' jumps at r = Rn.
    """
    if s0 <= 0 or Rn <= 0:
        raise ValueError(f"Plateau needs s0 > 0 and Rn > 0, got s0={s0}, Rn={Rn}")
    s0, Rn = float(s0), float(Rn)
    half_pi = 0.5 * np.pi

    def piecewise(r, inside, ring):
        r = np.asarray(r, dtype=np.float64)
        t = half_pi * (np.clip(r, Rn, Rn + 1.0) - Rn)
        return np.where(r < Rn, inside, np.where(r <= Rn + 1.0, ring(t), 0.0))

    return RadialProfile(
        value=lambda r: piecewise(r, s0, lambda t: s0 * np.cos(t) ** 2),
        first=lambda r: piecewise(r, 0.0, lambda t: -np.pi * s0 * np.cos(t) * np.sin(t)),
        second=lambda r: piecewise(
            r, 0.0, lambda t: 0.5 * np.pi ** 2 * s0 * (np.sin(t) ** 2 - np.cos(t) ** 2)),
        support=Rn + 1.0,
        breakpoints=(Rn, Rn + 1.0),
        name="plateau",
        params={"s0": s0, "Rn": Rn},
    )


def radial_laplacian(profile: RadialProfile, r, dim: int) -> np.ndarray:
    """u'' + (dim - 1) u'/r."""
    return profile.laplacian(r, dim)


def sphere_area(dim: int) -> float:
    """Surface area of the unit sphere in R^dim."""
    return 2 * math.pi ** (dim / 2) / gamma(dim / 2)


def _integration_limit(profile: RadialProfile) -> float:
    if np.isfinite(profile.support):
        return float(profile.support)
    peak = abs(float(profile(0.0))) or 1.0
    limit = 1.0
    while abs(float(profile(limit))) > 1e-20 * peak and limit < 1e12:
        limit *= 2.0
    return limit


def _pieces(profile: RadialProfile) -> List[Tuple[float, float]]:
    limit = _integration_limit(profile)
    cuts = [0.0] + sorted(b for b in profile.breakpoints if 0 < b < limit) + [limit]
    return [(a, b) for a, b in zip(cuts, cuts[1:]) if b > a]


def _integrate_radial(func, pieces: List[Tuple[float, float]], method: str) -> List[float]:
    results = []
    if method == "quad":
        for a, b in pieces:
            value, _ = integrate.quad(lambda x: float(func(x)), a, b,
                                      epsabs=0.0, epsrel=QUAD_EPSREL, limit=500)
            results.append(value)
    elif method == "gauss":
        nodes, weights = np.polynomial.legendre.leggauss(GAUSS_NODES)
        for a, b in pieces:
            r = 0.5 * (b - a) * nodes + 0.5 * (b + a)
            results.append(float(0.5 * (b - a) * np.sum(weights * func(r))))
    else:
        raise ValueError(f"Unknown quadrature method '{method}', expected 'quad' or 'gauss'")
    if not all(np.isfinite(results)):
        raise ValueError("Radial integrand is not integrable")
    return results


def radial_biharmonic_parts(profile: RadialProfile, F: Optional[PowerSumNonlinearity], dim: int,
                            method: str = "quad") -> Dict[str, Any]:
    """
    Radial quadrature of the pieces of J.

    Returns:
        Dict with D2 (the full integral of |Laplacian u|^2), T (integral of F(u)),
        J = D2/2 + T, mass, gradient (integral of |u'|^2) and per-piece J values
    """
    if dim < 2:
        raise ValueError(f"Radial quadrature needs dim >= 2, got {dim}")
    area = sphere_area(dim)
    pieces = _pieces(profile)

    def weight(r):
        return np.power(r, dim - 1)

    def d2(r):
        return profile.laplacian(r, dim) ** 2 * weight(r)

    def potential(r):
        if F is None:
            return np.zeros_like(np.asarray(r, dtype=np.float64))
        return F.value(profile(r)) * weight(r)

    d2_pieces = np.array(_integrate_radial(d2, pieces, method)) * area
    t_pieces = np.array(_integrate_radial(potential, pieces, method)) * area
    mass = area * sum(_integrate_radial(lambda r: profile(r) ** 2 * weight(r), pieces, method))
    gradient = area * sum(_integrate_radial(lambda r: profile.derivative(r) ** 2 * weight(r),
                                            pieces, method))
    D2, T = float(d2_pieces.sum()), float(t_pieces.sum())
    return {
        "D2": D2,
        "T": T,
        "J": 0.5 * D2 + T,
        "mass": float(mass),
        "gradient": float(gradient),
        "pieces": [{"a": a, "b": b, "J": 0.5 * dp + tp}
                   for (a, b), dp, tp in zip(pieces, d2_pieces, t_pieces)],
    }


def radial_biharmonic_energy(profile: RadialProfile, F: Optional[PowerSumNonlinearity], dim: int,
                             method: str = "quad") -> float:
    """J(u) = 1/2 integral |Laplacian u|^2 + integral F(u) for a radial profile in R^dim."""
    return radial_biharmonic_parts(profile, F, dim, method)["J"]


def plateau_interior_energy(s0: float, Rn: float, F: PowerSumNonlinearity, dim: int) -> float:
    """Closed form of the r < Rn contribution: area * F(s0) * Rn^dim / dim."""
    return sphere_area(dim) * float(F.value(s0)) * Rn ** dim / dim


def _growth_exponent(radii: np.ndarray, energies: np.ndarray) -> float:
    """Fit log(-J) = c + q log R + b / R; q is the growth exponent."""
    if len(radii) >= 3:
        design = np.column_stack([np.ones_like(radii), np.log(radii), 1.0 / radii])
        coeffs, *_ = np.linalg.lstsq(design, np.log(-energies), rcond=None)
        return float(coeffs[1])
    if len(radii) == 2:
        return float(np.polyfit(np.log(radii), np.log(-energies), 1)[0])
    return math.nan


def negativity_scan(s0: float, Rn_list: Sequence[float], F: PowerSumNonlinearity, dim: int,
                    method: str = "quad") -> Dict[str, Any]:
    """
    J of the plateau family over Rn, the first Rn where J < 0, and the fitted
    growth exponent of -J over the negative tail.
    """
    radii = np.array(sorted(float(r) for r in Rn_list))
    if radii.size == 0 or radii[0] <= 0:
        raise ValueError(f"Rn values must be positive and non-empty, got {list(Rn_list)}")
    if not np.any(F.value(np.power(10.0, np.linspace(-3, 3, 61))) < 0):
        logger.warning("F=%s is never negative; the plateau energies stay positive", F)

    def energy(Rn):
        return radial_biharmonic_energy(plateau_profile(s0, Rn), F, dim, method)

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        energies = np.array(list(pool.map(energy, radii)))

    table = pd.DataFrame({"Rn": radii, "J": energies})
    negative = energies < 0
    threshold = float(radii[np.argmax(negative)]) if negative.any() else None
    tail = negative & (np.cumsum(~negative[::-1])[::-1] == 0)
    exponent = _growth_exponent(radii[tail], energies[tail]) if tail.any() else math.nan
    if threshold is not None:
        logger.info("Plateau energy negative from Rn=%g on; growth exponent %.4f", threshold, exponent)
    return {
        "table": table,
        "threshold": threshold,
        "growth_exponent": exponent,
        "dim": dim,
        "vanishing_range": vanishing_range(dim),
    }


def dilate_biharmonic(profile: RadialProfile, lam: float, dim: int) -> RadialProfile:
    """u_lam(x) = u(x / lam^(2/dim)); the L2 norm scales by lam."""
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    return profile.scaled(amplitude=1.0, length=lam ** (2.0 / dim))


def biharmonic_scaling_identity(profile: RadialProfile, lam: float, F: Optional[PowerSumNonlinearity],
                                dim: int, method: str = "quad") -> Dict[str, float]:
    """
    Compare J(u_lam) with lam^(2 - 8/dim) D2(u)/2 + lam^2 T(u).

    The gradient seminorm scales with lam^(2 - 4/dim); both exponents are reported.
    The gap J(u_lam) - lam^2 J(u) = (lam^(2 - 8/dim) - lam^2) D2(u) / 2 is negative
    for lam > 1.
    """
    base = radial_biharmonic_parts(profile, F, dim, method)
    scaled = radial_biharmonic_parts(dilate_biharmonic(profile, lam, dim), F, dim, method)
    d2_exponent = 2.0 - 8.0 / dim
    predicted = 0.5 * lam ** d2_exponent * base["D2"] + lam ** 2 * base["T"]
    return {
        "lam": lam,
        "D2_exponent": d2_exponent,
        "gradient_exponent": 2.0 - 4.0 / dim,
        "D2_ratio": scaled["D2"] / base["D2"] if base["D2"] else math.nan,
        "T_ratio": scaled["T"] / base["T"] if base["T"] else math.nan,
        "gradient_ratio": scaled["gradient"] / base["gradient"] if base["gradient"] else math.nan,
        "mass_ratio": math.sqrt(scaled["mass"] / base["mass"]) if base["mass"] else math.nan,
        "J": base["J"],
        "J_scaled": scaled["J"],
        "J_predicted": predicted,
        "identity_error": abs(scaled["J"] - predicted) / max(abs(scaled["J"]), 1e-300),
        "gap": scaled["J"] - lam ** 2 * base["J"],
    }


def _bh_breakdown(values: np.ndarray, spec: GridSpec, F: PowerSumNonlinearity) -> EnergyBreakdown:
    A = 0.5 * laplacian_power(values, spec)
    M = grid_integrate(F.value(np.abs(values)), spec) if F.terms else 0.0
    charge = math.sqrt(lp_power(values, 2.0, spec))
    return EnergyBreakdown.from_terms(A, 0.0, M, charge, math.nan, kind=BIHARMONIC)


def biharmonic_breakdown(u: ComplexField, F: PowerSumNonlinearity) -> EnergyBreakdown:
    """J on the grid, stored as A = ||Laplacian u||^2 / 2, N = 0, M = integral of F(|u|)."""
    return _bh_breakdown(u.values, u.spec, F)


def _bh_multiplier(values: np.ndarray, spec: GridSpec, F: PowerSumNonlinearity,
                   breakdown: EnergyBreakdown) -> float:
    rho2 = breakdown.charge ** 2
    if rho2 == 0.0:
        raise ValueError("Multiplier undefined for a field of zero charge")
    pairing = grid_integrate(F.gauge(np.abs(values)) * np.abs(values) ** 2, spec)
    return -(2 * breakdown.A + pairing) / rho2


def _bh_operator_terms(values: np.ndarray, spec: GridSpec, F: PowerSumNonlinearity):
    kinetic = ifftn(k_squared_values(spec) ** 2 * fftn(values))
    return kinetic, F.gauge(np.abs(values)) * values


def biharmonic_multiplier(u: ComplexField, F: PowerSumNonlinearity) -> float:
    """omega from pairing Laplacian^2 u + F'(|u|) u/|u| = -omega u with u."""
    return _bh_multiplier(u.values, u.spec, F, _bh_breakdown(u.values, u.spec, F))


def biharmonic_residual(u: ComplexField, omega: float, F: PowerSumNonlinearity) -> ComplexField:
    kinetic, local = _bh_operator_terms(u.values, u.spec, F)
    return ComplexField(u.spec, kinetic + local + omega * u.values)


def biharmonic_model(spec: GridSpec, F: PowerSumNonlinearity) -> FlowModel:
    def residual(values, omega):
        kinetic, local = _bh_operator_terms(values, spec, F)
        return residual_ratio([kinetic, local, omega * values], spec)

    return FlowModel(
        spec=spec,
        symbol=k_squared_values(spec) ** 2,
        gradient=lambda values: F.gauge(np.abs(values)) * values,
        breakdown=lambda values: _bh_breakdown(values, spec, F),
        multiplier=lambda values, b: _bh_multiplier(values, spec, F, b),
        residual=residual,
    )


def biharmonic_minimize(config: SolverConfig, F: PowerSumNonlinearity, grid: GridSpec,
                        initial: Optional[ComplexField] = None) -> GroundStateResult:
    """
    Normalized gradient flow for J on a grid of dimension 1 to 3, with |k|^4 in
    the implicit part of each step.
    """
    params = ModelParams(kind=BIHARMONIC, nonlinearity=F)
    if initial is None:
        values = seed_profile(config.seed_profile, config.rho, params, grid).sample(grid).values
        keep_real = True
    else:
        if initial.spec != grid:
            raise ValueError(f"Initial field grid {initial.spec} does not match solver grid {grid}")
        values = initial.values
        keep_real = not np.any(values.imag)
    dt = config.dt_imag if config.dt_imag is not None else default_step(grid)
    outcome = run_normalized_flow(biharmonic_model(grid, F), values, config.rho, dt,
                                  config.tol, config.max_iters, keep_real)
    u = ComplexField(grid, outcome["values"])
    extra = {
        "boundary_mass": boundary_mass_fraction(u),
        "vanishing_range": vanishing_range(grid.d),
        "F": str(F),
    }
    return _finish(outcome, grid, config.rho, config.tol, extra)


def _biharmonic_step_values(values: np.ndarray, dt: float, F: PowerSumNonlinearity,
                            spec: GridSpec) -> np.ndarray:
    half = np.exp(-0.5j * dt * k_squared_values(spec) ** 2)
    psi = ifftn(half * fftn(values))
    if F.terms:
        psi = psi * np.exp(-1j * dt * F.gauge(np.abs(psi)))
    return ifftn(half * fftn(psi))


def biharmonic_strang_step(psi: ComplexField, dt: float, F: PowerSumNonlinearity) -> ComplexField:
    """
    One Strang step of i psi_t = Laplacian^2 psi + F'(|psi|) psi/|psi|.

    The local substep is an exact phase rotation because it leaves |psi| unchanged.
    """
    return ComplexField(psi.spec, _biharmonic_step_values(psi.values, dt, F, psi.spec))
