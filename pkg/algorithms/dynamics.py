import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from algorithms.biharmonic import PowerSumNonlinearity, _bh_breakdown, _biharmonic_step_values
from algorithms.energy import BIHARMONIC, ModelParams, _sp_breakdown
from algorithms.groundstate import GroundStateResult
from algorithms.hartree import potential_from_density
from algorithms.spectral import (
    ComplexField,
    GridError,
    GridSpec,
    fftn,
    gradient_power,
    ifftn,
    k_squared_values,
    lp_power,
    spectral_quadratic,
)
from utils.helpers import worker_count

logger = logging.getLogger(__name__)

CHARGE_DRIFT_LIMIT = 1e-10
TRAJECTORY_COLUMNS = ["t", "charge", "energy", "orbit_distance"]


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    record_stride: int = 10
    strict_conservation: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"Time step must be positive, got {self.dt}")
        if not self.t_end >= self.dt:
            raise ValueError(f"t_end={self.t_end} must be at least one step dt={self.dt}")
        if self.record_stride < 1:
            raise ValueError(f"record_stride must be at least 1, got {self.record_stride}")

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class TrajectoryRecord:
    """Charge is half the squared L2 norm; orbit_distance is NaN without a reference state."""
    t: float
    charge: float
    energy: float
    orbit_distance: float
    com: Tuple[float, ...]


@dataclass
class EvolutionResult:
    records: List[TrajectoryRecord]
    final: ComplexField
    steps: int
    aborted: bool = False
    reason: Optional[str] = None

    def frame(self) -> pd.DataFrame:
        rows = [{"t": r.t, "charge": r.charge, "energy": r.energy,
                 "orbit_distance": r.orbit_distance} for r in self.records]
        return pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS)

    @property
    def charge_drift(self) -> float:
        return _relative_drift([r.charge for r in self.records])

    @property
    def energy_drift(self) -> float:
        return _relative_drift([r.energy for r in self.records])

    @property
    def max_orbit_distance(self) -> float:
        distances = [r.orbit_distance for r in self.records if np.isfinite(r.orbit_distance)]
        return max(distances) if distances else math.nan


def _relative_drift(series: Sequence[float]) -> float:
    if not series:
        return 0.0
    start = series[0]
    deviation = max(abs(x - start) for x in series)
    return deviation / abs(start) if start != 0 else deviation


def _sp_step_values(values: np.ndarray, half: np.ndarray, dt: float, spec: GridSpec,
                    p: float, nonlinear: bool) -> np.ndarray:
    psi = ifftn(half * fftn(values))
    if nonlinear:
        phi = potential_from_density(np.abs(psi) ** 2, spec)
        psi = psi * np.exp(-1j * dt * (phi - np.abs(psi) ** (p - 2)))
    return ifftn(half * fftn(psi))


def strang_step(psi: ComplexField, dt: float, params: ModelParams, nonlinear: bool = True) -> ComplexField:
    """
    One Strang step: half kinetic, full potential phase, half kinetic.

    For the Schrodinger-Poisson model the potential substep multiplies by
    exp(-i dt (phi_psi - |psi|^(p-2))) with phi_psi computed once; it is exact
    because |psi| does not change during it. Biharmonic models are dispatched
    to their own step. nonlinear=False drops the potential substep.
    """
    return ComplexField(psi.spec, _stepper(psi.spec, dt, params, nonlinear)(psi.values))


def _stepper(spec: GridSpec, dt: float, params: ModelParams, nonlinear: bool) -> Callable[[np.ndarray], np.ndarray]:
    if params.kind == BIHARMONIC:
        F = params.nonlinearity if nonlinear and params.nonlinearity else PowerSumNonlinearity(())
        return lambda values: _biharmonic_step_values(values, dt, F, spec)
    if nonlinear and spec.d != 3:
        raise GridError(f"Schrodinger-Poisson dynamics need a 3D grid, got d={spec.d}")
    half = np.exp(-0.5j * dt * k_squared_values(spec))
    return lambda values: _sp_step_values(values, half, dt, spec, params.p, nonlinear)


def _energy_function(spec: GridSpec, params: ModelParams, nonlinear: bool) -> Callable[[np.ndarray], float]:
    if params.kind == BIHARMONIC:
        F = params.nonlinearity if nonlinear and params.nonlinearity else PowerSumNonlinearity(())
        return lambda values: _bh_breakdown(values, spec, F).I
    if not nonlinear:
        return lambda values: 0.5 * gradient_power(values, spec)
    return lambda values: _sp_breakdown(values, spec, params.p).I


def orbit_order(params: ModelParams) -> int:
    return 2 if params.kind == BIHARMONIC else 1


def _center_of_mass(values: np.ndarray, spec: GridSpec) -> Tuple[float, ...]:
    density = np.abs(values) ** 2
    total = float(np.sum(density))
    if total == 0.0:
        return tuple(0.0 for _ in range(spec.d))
    return tuple(float(np.sum(x * density) / total) for x in spec.coordinates())


def evolve(psi0: ComplexField, config: PropagatorConfig, params: ModelParams,
           reference: Optional[ComplexField] = None, nonlinear: bool = True) -> EvolutionResult:
    """
    Integrate the time-dependent equation with repeated Strang steps.

    Args:
        psi0: Initial state
        config: Step size, horizon, recording stride and strict flag
        params: Model (Schrodinger-Poisson or biharmonic)
        reference: Standing-wave profile for orbit distances
        nonlinear: False evolves the free equation

    Returns:
        EvolutionResult; aborted runs keep the last finite state and the reason
    """
    spec = psi0.spec
    if reference is not None and reference.spec != spec:
        raise GridError(f"Reference grid {reference.spec} does not match state grid {spec}")
    step = _stepper(spec, config.dt, params, nonlinear)
    energy = _energy_function(spec, params, nonlinear)
    order = orbit_order(params)

    def record(values, t):
        distance = math.nan
        if reference is not None:
            distance = orbit_distance(ComplexField(spec, values), reference, order)
        return TrajectoryRecord(
            t=t,
            charge=0.5 * lp_power(values, 2.0, spec),
            energy=energy(values),
            orbit_distance=distance,
            com=_center_of_mass(values, spec),
        )

    values = psi0.values
    records = [record(values, 0.0)]
    charge0 = records[0].charge
    total = config.steps
    aborted, reason, done = False, None, 0
    for n in range(1, total + 1):
        candidate = step(values)
        if not np.all(np.isfinite(candidate)):
            aborted, reason = True, f"non-finite state at step {n}"
            logger.error("Evolution aborted: %s", reason)
            break
        values = candidate
        done = n
        if config.strict_conservation:
            charge = 0.5 * lp_power(values, 2.0, spec)
            drift = abs(charge - charge0) / charge0 if charge0 else abs(charge)
            if drift > CHARGE_DRIFT_LIMIT:
                aborted, reason = True, f"charge drift {drift:.3e} at step {n}"
                logger.error("Evolution aborted: %s", reason)
                records.append(record(values, n * config.dt))
                break
        if n % config.record_stride == 0 or n == total:
            records.append(record(values, n * config.dt))

    result = EvolutionResult(records, ComplexField(spec, values), done, aborted, reason)
    logger.info("Evolved %d steps to t=%g: charge drift %.2e, energy drift %.2e",
                done, done * config.dt, result.charge_drift, result.energy_drift)
    return result


def trajectory_frame(result: EvolutionResult) -> pd.DataFrame:
    return result.frame()


def _sobolev_weight(spec: GridSpec, order: int) -> np.ndarray:
    return (1.0 + k_squared_values(spec)) ** order


def orbit_alignment(psi: ComplexField, reference: ComplexField, order: int = 1) -> Dict[str, Any]:
    """
    Closest element of the orbit {e^(i theta) reference(. - a)} over whole-cell a.

    The H^order inner product of psi with every translate comes from one FFT
    correlation; the best phase is the argument of the largest one.
    """
    if psi.spec != reference.spec:
        raise GridError(f"Grids differ: {psi.spec} vs {reference.spec}")
    spec = psi.spec
    weight = _sobolev_weight(spec, order)
    correlation = ifftn(fftn(psi.values) * np.conj(fftn(reference.values)) * weight)
    index = np.unravel_index(int(np.argmax(np.abs(correlation))), correlation.shape)
    theta = float(np.angle(correlation[index]))
    candidate = np.exp(1j * theta) * np.roll(reference.values, index, axis=tuple(range(spec.d)))
    difference = psi.values - candidate
    distance = math.sqrt(max(spectral_quadratic(difference, weight, spec), 0.0))
    return {"distance": distance, "shift": tuple(int(i) for i in index), "theta": theta}


def orbit_distance(psi: ComplexField, reference: ComplexField, order: int = 1) -> float:
    """H^order distance from psi to the grid orbit of reference under phase and translation."""
    return orbit_alignment(psi, reference, order)["distance"]


def orbit_floor(reference: ComplexField) -> float:
    """h * ||grad u||, the resolution limit of restricting translations to whole cells."""
    return reference.spec.h * math.sqrt(max(gradient_power(reference.values, reference.spec), 0.0))


def sobolev_norm(values: np.ndarray, spec: GridSpec, order: int = 1) -> float:
    return math.sqrt(max(spectral_quadratic(values, _sobolev_weight(spec, order), spec), 0.0))


def smooth_perturbation(reference: ComplexField, seed: int = 0, order: int = 1) -> ComplexField:
    """
    Random field with unit H^order norm: complex noise, low-pass filtered to a
    quarter of the grid bandwidth and shaped by |reference| / max |reference|.
    """
    spec = reference.spec
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape)
    cutoff = (np.pi / spec.h) / 4
    smooth = ifftn(fftn(noise) * (k_squared_values(spec) <= cutoff ** 2))
    envelope = np.abs(reference.values)
    peak = float(envelope.max())
    if peak == 0.0:
        raise ValueError("Cannot shape a perturbation on a zero reference field")
    shaped = smooth * (envelope / peak)
    return ComplexField(spec, shaped / sobolev_norm(shaped, spec, order))


def linear_response_slope(deltas: Sequence[float], distances: Sequence[float]) -> float:
    """Least-squares slope of log(distance) against log(delta) over positive pairs."""
    pairs = [(d, m) for d, m in zip(deltas, distances) if d > 0 and m > 0]
    if len(pairs) < 2:
        return math.nan
    x = np.log([d for d, _ in pairs])
    y = np.log([m for _, m in pairs])
    return float(np.polyfit(x, y, 1)[0])


def stability_experiment(ground: GroundStateResult, deltas: Sequence[float], config: PropagatorConfig,
                         params: ModelParams, seed: int = 0) -> Dict[str, Any]:
    """
    Perturb a ground state by delta times a fixed random direction, evolve, and
    track the largest orbit distance.

    Each perturbed state is rescaled back to charge rho; one extra control run
    for the largest delta skips the rescaling.

    Returns:
        Dict with a per-run table, the log-log slope over the rescaled runs and
        the whole-cell translation floor
    """
    u = ground.u
    if not ground.converged:
        logger.warning("Stability experiment started from a non-converged state (%s)", ground.status)
    order = orbit_order(params)
    direction = smooth_perturbation(u, seed, order)
    rho = ground.rho
    spec = u.spec

    def run(delta: float, rescale: bool) -> Dict[str, Any]:
        values = u.values + delta * direction.values
        if rescale:
            values = values * (rho / math.sqrt(lp_power(values, 2.0, spec)))
        start = ComplexField(spec, values)
        result = evolve(start, config, params, reference=u)
        return {
            "delta": float(delta),
            "rescaled": rescale,
            "initial_distance": result.records[0].orbit_distance,
            "max_distance": result.max_orbit_distance,
            "charge_drift": result.charge_drift,
            "energy_drift": result.energy_drift,
            "aborted": result.aborted,
        }

    jobs = [(float(d), True) for d in sorted(deltas)]
    if jobs:
        jobs.append((jobs[-1][0], False))
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        rows = list(pool.map(lambda job: run(*job), jobs))
    table = pd.DataFrame(rows)
    rescaled = table[table["rescaled"]] if len(table) else table
    slope = linear_response_slope(rescaled["delta"], rescaled["max_distance"]) if len(table) else math.nan
    floor = orbit_floor(u)
    logger.info("Stability: slope %.3f over %d perturbations, translation floor %.3e",
                slope, len(rescaled), floor)
    return {"table": table, "slope": slope, "floor": floor, "seed": seed}
