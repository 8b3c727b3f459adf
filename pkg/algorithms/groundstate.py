import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.interpolate import PchipInterpolator

from algorithms.energy import (
    AUTO_SPAN,
    SCHRODINGER_POISSON,
    EnergyBreakdown,
    ModelParams,
    _sp_breakdown,
    _sp_multiplier,
    _sp_operator_terms,
    auto_grid,
    gaussian_variational_width,
    modulus_gap,
    residual_ratio,
)
from algorithms.hartree import (
    BOUNDARY_MASS_TOL,
    boundary_mass_fraction,
    check_truncation,
    hartree_energy_values,
    potential_from_density,
)
from algorithms.profiles import RadialProfile, bump_profile, gaussian_profile
from algorithms.spectral import (
    ComplexField,
    GridSpec,
    concentration,
    fftn,
    ifftn,
    inner,
    k_squared_values,
    lp_power,
    recenter_mass,
    spectral_quadratic,
)
from utils.helpers import worker_count

logger = logging.getLogger(__name__)

RESTORE_AFTER = 10
MAX_HALVINGS = 30
DESCENT_SLACK = 1e-13

STATUS_CONVERGED = "converged"
STATUS_MAX_ITERS = "max_iters"
STATUS_STALLED = "stalled"
STATUS_NON_BINDING = "non-binding"
STATUS_TRUNCATED = "truncated"

# Entries whose energy says nothing about the free-space problem
UNRELIABLE = (STATUS_NON_BINDING, STATUS_TRUNCATED)


@dataclass(frozen=True)
class SolverConfig:
    """
    Settings of the normalized gradient flow.

    dt_imag=None picks 0.1 * (L / AUTO_SPAN)^2, one tenth of the squared trial width on auto boxes.
    seed_profile is "gaussian", "gaussian:<width>" or "bump:<radius>".
    """
    rho: float
    dt_imag: Optional[float] = None
    tol: float = 1e-6
    max_iters: int = 5000
    seed_profile: str = "gaussian"

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"Target charge rho must be positive, got {self.rho}")
        if self.dt_imag is not None and not self.dt_imag > 0:
            raise ValueError(f"dt_imag must be positive, got {self.dt_imag}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be at least 1, got {self.max_iters}")

    def with_rho(self, rho: float) -> "SolverConfig":
        return SolverConfig(rho, self.dt_imag, self.tol, self.max_iters, self.seed_profile)


@dataclass
class GroundStateResult:
    u: ComplexField
    rho: float
    omega: float
    breakdown: EnergyBreakdown
    residual: float
    iters: int
    converged: bool
    status: str = STATUS_CONVERGED
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    history: List[Dict[str, float]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rho": self.rho,
            "omega": self.omega,
            "residual": self.residual,
            "iters": self.iters,
            "converged": self.converged,
            "status": self.status,
            "breakdown": self.breakdown.to_dict(),
            "grid": self.u.spec.to_dict(),
            "diagnostics": dict(self.diagnostics),
        }

    def history_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.history, columns=["iteration", "I", "residual", "dt"])


@dataclass(frozen=True)
class FlowModel:
    """
    Everything the normalized gradient flow needs to know about an energy.

    symbol: Fourier symbol of the quadratic part (|k|^2 or |k|^4)
    gradient: local/nonlocal part of the first variation, evaluated on grid values
    breakdown: energy of grid values
    multiplier: omega of grid values given their breakdown
    residual: relative residual of grid values for a given omega
    localize: optional whole-cell translation applied to every accepted iterate
    boundary: optional share of mass where the model stops being trustworthy
    """
    spec: GridSpec
    symbol: np.ndarray
    gradient: Callable[[np.ndarray], np.ndarray]
    breakdown: Callable[[np.ndarray], EnergyBreakdown]
    multiplier: Callable[[np.ndarray, EnergyBreakdown], float]
    residual: Callable[[np.ndarray, float], float]
    localize: Optional[Callable[[np.ndarray], np.ndarray]] = None
    boundary: Optional[Callable[[np.ndarray], float]] = None


def schrodinger_poisson_model(spec: GridSpec, params: ModelParams) -> FlowModel:
    p = params.p

    def gradient(values):
        phi = potential_from_density(np.abs(values) ** 2, spec)
        return phi * values - np.abs(values) ** (p - 2) * values

    def residual(values, omega):
        kinetic, hartree, power = _sp_operator_terms(values, spec, p)
        return residual_ratio([kinetic, hartree, -power, -omega * values], spec)

    return FlowModel(
        spec=spec,
        symbol=k_squared_values(spec),
        gradient=gradient,
        breakdown=lambda values: _sp_breakdown(values, spec, p),
        multiplier=lambda values, b: _sp_multiplier(values, spec, p, b),
        residual=residual,
        localize=lambda values: recenter_mass(values, spec),
        boundary=lambda values: boundary_mass_fraction(ComplexField(spec, values)),
    )


def _normalize(values: np.ndarray, rho: float, spec: GridSpec) -> np.ndarray:
    norm = math.sqrt(lp_power(values, 2.0, spec))
    if norm == 0.0:
        raise ValueError("Cannot normalize a zero field onto the mass sphere")
    return values * (rho / norm)


def _tangent_gradient(model: FlowModel, values: np.ndarray, rho: float) -> np.ndarray:
    """
    G(u) - lambda u with lambda = (<S u, u> + <G(u), u>) / rho^2, the multiplier
    of the current iterate. A fixed point of the shifted step is then a solution
    of S u + G(u) = lambda u for every dt.
    """
    spec = model.spec
    nonlinear = model.gradient(values)
    pairing = spectral_quadratic(values, model.symbol, spec) + inner(values, nonlinear, spec).real
    return nonlinear - (pairing / rho ** 2) * values


def run_normalized_flow(model: FlowModel, initial: np.ndarray, rho: float, dt: float,
                        tol: float, max_iters: int, keep_real: bool) -> Dict[str, Any]:
    """
    Semi-implicit normalized gradient flow on the sphere ||u||_2 = rho.

    Each step solves (1 + dt S) u_new = u - dt (G(u) - lambda u) in Fourier
    space, then rescales to charge rho. Steps that raise the energy, or that
    push mass past the model's boundary, are rejected and dt is halved; dt
    returns to its initial value after RESTORE_AFTER accepted steps.
    """
    spec = model.spec
    denominator = 1.0 + dt * model.symbol
    values = _normalize(np.asarray(initial, dtype=np.complex128), rho, spec)
    if keep_real:
        values = values.real.astype(np.complex128)
    if model.localize is not None:
        values = model.localize(values)
    current = model.breakdown(values)
    outside = model.boundary(values) if model.boundary is not None else 0.0
    history = []
    step, accepted_run, iters = dt, 0, 0
    max_kinetic = current.A
    status = STATUS_MAX_ITERS
    omega = model.multiplier(values, current)
    residual = model.residual(values, omega)

    while iters < max_iters:
        if residual <= tol:
            status = STATUS_CONVERGED
            break
        iters += 1
        explicit = fftn(values) - step * fftn(_tangent_gradient(model, values, rho))
        trial = ifftn(explicit / denominator)
        if keep_real:
            trial = trial.real.astype(np.complex128)
        trial = _normalize(trial, rho, spec)
        if model.localize is not None:
            trial = model.localize(trial)
        candidate = model.breakdown(trial)
        descends = candidate.I <= current.I + DESCENT_SLACK * max(current.scale, 1e-300)
        trial_outside = model.boundary(trial) if model.boundary is not None else 0.0
        contained = trial_outside <= max(outside, BOUNDARY_MASS_TOL)
        if descends and contained:
            values, current, outside = trial, candidate, trial_outside
            max_kinetic = max(max_kinetic, current.A)
            accepted_run += 1
            if accepted_run >= RESTORE_AFTER and step < dt:
                step, accepted_run = dt, 0
                denominator = 1.0 + dt * model.symbol
            omega = model.multiplier(values, current)
            residual = model.residual(values, omega)
        else:
            if descends:
                logger.debug("iter %d: step rejected, boundary mass %.3e", iters, trial_outside)
            step *= 0.5
            accepted_run = 0
            denominator = 1.0 + step * model.symbol
            if step < dt * 2.0 ** -MAX_HALVINGS:
                status = STATUS_STALLED
                break
        history.append({"iteration": iters, "I": current.I, "residual": residual, "dt": step})
        if iters % 100 == 0:
            logger.debug("iter %d: I=%.12g residual=%.3e dt=%.3e", iters, current.I, residual, step)
    else:
        if residual <= tol:
            status = STATUS_CONVERGED

    return {
        "values": values,
        "breakdown": current,
        "omega": omega,
        "residual": residual,
        "iters": iters,
        "status": status,
        "history": history,
        "max_kinetic": max_kinetic,
        "final_dt": step,
    }


def default_step(spec: GridSpec) -> float:
    return 0.1 * (spec.L / AUTO_SPAN) ** 2


def seed_profile(descriptor: str, rho: float, params: ModelParams, spec: GridSpec) -> RadialProfile:
    """Radial seed from a descriptor such as 'gaussian', 'gaussian:3.5' or 'bump:4'."""
    name, _, argument = descriptor.partition(":")
    name = name.strip().lower()
    if name == "gaussian":
        if argument:
            width = float(argument)
        elif params.kind == SCHRODINGER_POISSON:
            width = min(gaussian_variational_width(rho, params.p), spec.L / 8)
        else:
            width = spec.L / AUTO_SPAN
        return gaussian_profile(1.0, width)
    if name == "bump":
        radius = float(argument) if argument else spec.L / 8
        return bump_profile(1.0, radius)
    raise ValueError(f"Unknown seed profile '{descriptor}'")


def _finish(outcome: Dict[str, Any], spec: GridSpec, rho: float, tol: float,
            extra: Optional[Dict[str, Any]] = None, truncated: bool = False) -> GroundStateResult:
    u = ComplexField(spec, outcome["values"])
    breakdown = outcome["breakdown"]
    status = outcome["status"]
    if breakdown.I > -tol * breakdown.scale:
        status = STATUS_NON_BINDING
    elif truncated:
        status = STATUS_TRUNCATED
    diagnostics = {
        "concentration": concentration(u, spec.L / 8) / rho ** 2,
        "max_kinetic": outcome["max_kinetic"],
        "coercive": bool(outcome["max_kinetic"] < 10 * max(breakdown.A, 1e-300)),
        "final_dt": outcome["final_dt"],
        "imag_norm": float(math.sqrt(lp_power(u.values.imag, 2.0, spec))),
    }
    if extra:
        diagnostics.update(extra)
    result = GroundStateResult(
        u=u,
        rho=rho,
        omega=float(outcome["omega"]),
        breakdown=breakdown,
        residual=float(outcome["residual"]),
        iters=int(outcome["iters"]),
        converged=status == STATUS_CONVERGED,
        status=status,
        diagnostics=diagnostics,
        history=outcome["history"],
    )
    level = logging.INFO if result.converged else logging.WARNING
    logger.log(level, "rho=%g: %s after %d iterations, I=%.10g omega=%.6g residual=%.2e",
               rho, status, result.iters, breakdown.I, result.omega, result.residual)
    return result


def minimize(config: SolverConfig, params: ModelParams, grid: Optional[GridSpec] = None,
             initial: Optional[ComplexField] = None, strict: bool = False) -> GroundStateResult:
    """
    Minimize the Schrodinger-Poisson energy on the sphere of charge config.rho.

    Args:
        config: Flow settings and target charge
        params: Schrodinger-Poisson model
        grid: 3D grid; an auto box sized from the Gaussian trial width when None
        initial: Starting field (warm start); a radial seed when None
        strict: Raise TruncationError when mass reaches the box boundary

    Returns:
        GroundStateResult; non-convergence is reported through status, not raised
    """
    if params.kind != SCHRODINGER_POISSON:
        raise ValueError(f"minimize handles the schrodinger_poisson model, got {params.kind}")
    spec = grid if grid is not None else auto_grid(config.rho, params.p)
    if initial is None:
        values = seed_profile(config.seed_profile, config.rho, params, spec).sample(spec).values
        keep_real = True
    else:
        if initial.spec != spec:
            raise ValueError(f"Initial field grid {initial.spec} does not match solver grid {spec}")
        values = initial.values
        keep_real = not np.any(values.imag)
    dt = config.dt_imag if config.dt_imag is not None else default_step(spec)
    model = schrodinger_poisson_model(spec, params)
    outcome = run_normalized_flow(model, values, config.rho, dt, config.tol,
                                  config.max_iters, keep_real)
    u = ComplexField(spec, outcome["values"])
    boundary_mass = check_truncation(u, strict)
    extra = {
        "boundary_mass": boundary_mass,
        "modulus_gap": modulus_gap(u, params),
        "regime": params.regime,
    }
    return _finish(outcome, spec, config.rho, config.tol, extra,
                   truncated=boundary_mass > BOUNDARY_MASS_TOL)


def _check_charges(rho_list: Sequence[float]) -> List[float]:
    charges = [float(r) for r in rho_list]
    if not charges:
        raise ValueError("Charge list is empty")
    if any(r <= 0 for r in charges):
        raise ValueError(f"Charges must be positive, got {charges}")
    if any(b <= a for a, b in zip(charges, charges[1:])):
        raise ValueError(f"Charges must be strictly increasing, got {charges}")
    return charges


def _scan_row(result: GroundStateResult) -> Dict[str, Any]:
    b = result.breakdown
    return {
        "rho": result.rho,
        "I": b.I,
        "omega": result.omega,
        "converged": result.converged,
        "residual": result.residual,
        "status": result.status,
        "iters": result.iters,
        "A": b.A,
        "N": b.N,
        "M": b.M,
        "L": result.u.spec.L,
    }


def rho_scan(rho_list: Sequence[float], params: ModelParams, config: SolverConfig,
             grid: Optional[GridSpec] = None, n_axis: int = 64, warm_start: bool = True,
             span: float = AUTO_SPAN) -> pd.DataFrame:
    """
    Ground-state energy curve over a list of charges.

    With a fixed grid each entry reuses it; otherwise every charge gets its own
    auto box with n_axis points, and warm starts carry the previous minimizer
    over by index since auto boxes are self-similar.

    Returns:
        DataFrame with columns rho, I, omega, converged, residual, status, iters, A, N, M, L
    """
    charges = _check_charges(rho_list)

    def grid_for(rho):
        return grid if grid is not None else auto_grid(rho, params.p, n_axis=n_axis, span=span)

    rows = []
    if warm_start:
        previous = None
        for rho in charges:
            spec = grid_for(rho)
            initial = None if previous is None else ComplexField(spec, previous.u.values)
            result = minimize(config.with_rho(rho), params, spec, initial)
            rows.append(_scan_row(result))
            previous = result
    else:
        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            futures = [pool.submit(minimize, config.with_rho(rho), params, grid_for(rho))
                       for rho in charges]
            rows = [_scan_row(f.result()) for f in futures]

    frame = pd.DataFrame(rows)
    frame["negative"] = (frame["I"] < 0) & ~frame["status"].isin(UNRELIABLE)
    flagged = int((~frame["converged"]).sum())
    if flagged:
        logger.warning("%d of %d scan entries did not converge", flagged, len(frame))
    truncated = int((frame["status"] == STATUS_TRUNCATED).sum())
    if truncated:
        logger.warning("%d scan entries reached the box boundary and are excluded from the curve", truncated)
    return frame


def detect_thresholds(frame: pd.DataFrame, params: ModelParams, config: SolverConfig,
                      grid: Optional[GridSpec] = None, n_axis: int = 64,
                      bisection_steps: int = 6, span: float = AUTO_SPAN) -> List[Dict[str, Any]]:
    """
    Charges where the ground-state energy changes sign, refined by bisection.

    Returns:
        One dict per sign change: lower, upper bracket and kind
        ('negative-end' when I becomes non-negative, 'negative-onset' otherwise)
    """
    ordered = _reliable(frame).sort_values("rho").reset_index(drop=True)
    thresholds = []
    for i in range(len(ordered) - 1):
        left, right = ordered.loc[i], ordered.loc[i + 1]
        if bool(left["negative"]) == bool(right["negative"]):
            continue
        lo, hi = float(left["rho"]), float(right["rho"])
        lo_negative = bool(left["negative"])
        refined = True
        for _ in range(bisection_steps):
            mid = math.sqrt(lo * hi)
            spec = grid if grid is not None else auto_grid(mid, params.p, n_axis=n_axis, span=span)
            result = minimize(config.with_rho(mid), params, spec)
            if result.status == STATUS_TRUNCATED:
                logger.warning("Bisection stopped at rho=%g: state reached the box boundary", mid)
                refined = False
                break
            mid_negative = result.breakdown.I < 0 and result.status != STATUS_NON_BINDING
            if mid_negative == lo_negative:
                lo = mid
            else:
                hi = mid
        kind = "negative-end" if lo_negative else "negative-onset"
        logger.info("Sign change (%s) bracketed in [%.6g, %.6g]", kind, lo, hi)
        thresholds.append({"lower": lo, "upper": hi, "kind": kind, "refined": refined})
    return thresholds


def _reliable(frame: pd.DataFrame) -> pd.DataFrame:
    """Drop scan rows whose state reached the box boundary."""
    if "status" not in frame.columns:
        return frame
    return frame[frame["status"] != STATUS_TRUNCATED]


def subadditivity_check(frame: pd.DataFrame, mu_count: int = 20, tol_rel: float = 1e-4) -> pd.DataFrame:
    """
    Compare I_rho with I_mu + I_sqrt(rho^2 - mu^2) for every charge in the
    negative regime, interpolating the curve monotonically in rho^2. Rows with
    status 'truncated' take no part, neither as checked charges nor as curve points.

    Returns:
        One row per (rho, mu) with the margin I_mu + I_comp - I_rho and a violation flag
    """
    ordered = _reliable(frame).sort_values("rho")
    if "negative" not in ordered.columns:
        ordered = ordered.assign(negative=ordered["I"] < 0)
    columns = ["rho", "mu", "complement", "I_rho", "I_mu", "I_complement", "margin", "violation"]
    if ordered.empty:
        return pd.DataFrame(columns=columns)
    squares = np.concatenate([[0.0], ordered["rho"].to_numpy() ** 2])
    energies = np.concatenate([[0.0], ordered["I"].to_numpy()])
    curve = PchipInterpolator(squares, energies)
    rows = []
    for _, entry in ordered[ordered["negative"]].iterrows():
        rho, I_rho = float(entry["rho"]), float(entry["I"])
        for j in range(1, mu_count + 1):
            mu = rho * j / (mu_count + 1)
            complement = math.sqrt(rho ** 2 - mu ** 2)
            I_mu = float(curve(mu ** 2))
            I_comp = float(curve(complement ** 2))
            margin = I_mu + I_comp - I_rho
            rows.append({
                "rho": rho,
                "mu": mu,
                "complement": complement,
                "I_rho": I_rho,
                "I_mu": I_mu,
                "I_complement": I_comp,
                "margin": margin,
                "violation": margin < -tol_rel * abs(I_rho),
            })
    report = pd.DataFrame(rows, columns=columns)
    if len(report):
        logger.info("Subadditivity: %d rows, %d violations, least margin %.3e",
                    len(report), int(report["violation"].sum()), report["margin"].min())
    return report


def _power_term(values: np.ndarray, spec: GridSpec, p: float) -> float:
    return -lp_power(values, p, spec) / p


def splitting_test(profile_v: RadialProfile, profile_w: Optional[RadialProfile],
                   separations: Sequence[float], params: ModelParams, grid: GridSpec) -> Dict[str, Any]:
    """
    Interaction defects of two profiles placed at -s/2 and +s/2 on the first axis.

    For each separation s, delta_N = N(v + w) - N(v) - N(w) and likewise delta_M,
    with v and w sampled at their displaced positions.

    Returns:
        Dict with the per-separation table and fitted decay exponents
    """
    if grid.d != 3:
        raise ValueError(f"Splitting test runs on 3D grids, got d={grid.d}")
    p = params.p
    reach = max(profile_v.support, profile_w.support if profile_w is not None else 0.0)
    rows = []
    for s in sorted(float(x) for x in separations):
        limit = s / 2 + (reach if np.isfinite(reach) else 0.0)
        if limit > grid.R / 2:
            raise ValueError(
                f"Separation {s} places mass beyond R/2={grid.R / 2}; enlarge the box"
            )
        v = profile_v.sample(grid, center=(-s / 2, 0.0, 0.0)).values
        if profile_w is None:
            w = np.zeros_like(v)
        else:
            w = profile_w.sample(grid, center=(s / 2, 0.0, 0.0)).values
        overlap = bool(np.any((np.abs(v) > 0) & (np.abs(w) > 0)))
        if overlap:
            logger.warning("Supports overlap at separation %g", s)
        pair = v + w
        delta_N = (hartree_energy_values(pair, grid) - hartree_energy_values(v, grid)
                   - hartree_energy_values(w, grid))
        delta_M = (_power_term(pair, grid, p) - _power_term(v, grid, p)
                   - _power_term(w, grid, p))
        rows.append({
            "s": s,
            "delta_N": delta_N,
            "delta_M": delta_M,
            "s_delta_N": s * delta_N,
            "mass_v": lp_power(v, 2.0, grid),
            "mass_w": lp_power(w, 2.0, grid),
            "overlap": overlap,
        })
    table = pd.DataFrame(rows)
    report = {"table": table, "N_exponent": float("nan"), "max_abs_delta_M_disjoint": 0.0,
              "s_delta_N_change": float("nan")}
    disjoint = table[~table["overlap"]]
    if len(disjoint):
        report["max_abs_delta_M_disjoint"] = float(disjoint["delta_M"].abs().max())
    positive = disjoint[disjoint["delta_N"] > 0]
    if len(positive) >= 2:
        slope, _ = np.polyfit(np.log(positive["s"]), np.log(positive["delta_N"]), 1)
        report["N_exponent"] = float(slope)
        last, before = positive["s_delta_N"].iloc[-1], positive["s_delta_N"].iloc[-2]
        report["s_delta_N_change"] = float(abs(last - before) / abs(last))
    return report


def rescaling_defect(u: ComplexField, alpha: float, params: ModelParams) -> Dict[str, float]:
    """
    T(alpha u) - alpha^2 T(u) for T = N and T = M. Their sum is
    I(alpha u) - alpha^2 I(u); a negative sum for alpha > 1 is what makes
    splitting mass strictly costly.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    spec = u.spec
    scaled = alpha * u.values
    n_base = hartree_energy_values(u.values, spec)
    m_base = _power_term(u.values, spec, params.p)
    defect = {
        "N": hartree_energy_values(scaled, spec) - alpha ** 2 * n_base,
        "M": _power_term(scaled, spec, params.p) - alpha ** 2 * m_base,
    }
    defect["total"] = defect["N"] + defect["M"]
    return defect
