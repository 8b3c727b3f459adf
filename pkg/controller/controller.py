import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from algorithms.biharmonic import (
    biharmonic_minimize,
    biharmonic_scaling_identity,
    check_hypotheses,
    negativity_scan,
    plateau_profile,
)
from algorithms.dynamics import TRAJECTORY_COLUMNS, evolve, orbit_floor, stability_experiment
from algorithms.energy import (
    P_SMALL_MASS,
    ModelParams,
    auto_grid,
    dilate_profile,
    energy_breakdown,
    f_theta,
    gaussian_breakdown,
)
from algorithms.groundstate import (
    STATUS_TRUNCATED,
    GroundStateResult,
    detect_thresholds,
    minimize,
    rescaling_defect,
    rho_scan,
    splitting_test,
    subadditivity_check,
)
from algorithms.hartree import direct_sum_potential, hartree_potential
from algorithms.profiles import bump_profile, gaussian_profile
from algorithms.spectral import (
    ComplexField,
    GridSpec,
    fftn,
    load_snapshot,
    lp_power,
    make_grid,
    save_snapshot,
)
from utils.config import ConfigError, ExperimentConfig, validate
from utils.helpers import config_digest, package_versions, write_csv, write_json

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ["rho", "I", "omega", "converged"]
NEGSCAN_COLUMNS = ["Rn", "J"]

# Fixed boxes for runs with no charge-dependent width
BIHARMONIC_BOX = 24.0
SELFTEST_GAUSSIAN_SPAN = 24.0


class ExperimentController:
    """
    Runs one subcommand for a resolved ExperimentConfig.

    Every run writes into <out>/<command>-<digest>, where the digest covers all
    configuration values except the output directory, so reruns overwrite the
    same folder with identical files.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.report = validate(config)
        self.grids: Dict[str, Dict[str, float]] = {}
        self.run_dir: Optional[Path] = None

    @property
    def run_name(self) -> str:
        settings = {k: v for k, v in self.config.to_dict().items() if k != "out"}
        return f"{self.config.command}-{config_digest(settings)}"

    def prepare_run_dir(self) -> Path:
        self.run_dir = Path(self.config.out) / self.run_name
        self.run_dir.mkdir(parents=True, exist_ok=True)
        return self.run_dir

    def run(self) -> Dict[str, Any]:
        """
        Run the configured subcommand and write result.json and manifest.json.

        Returns:
            Dict with command, run_dir, ok (False when a check failed or a strict
            evolution aborted) and the summary written to result.json
        """
        command = self.config.command
        handlers = {
            "groundstate": self.run_groundstate,
            "scan-rho": self.run_scan,
            "subadd": self.run_subadditivity,
            "split-test": self.run_split_test,
            "evolve": self.run_evolve,
            "stability": self.run_stability,
            "biharm-neg": self.run_biharmonic_negativity,
            "biharm-ground": self.run_biharmonic_ground,
            "biharm-evolve": self.run_biharmonic_evolve,
            "selftest": self.run_selftest,
        }
        if command not in handlers:
            raise ConfigError(f"unknown command '{command}'", field="command")
        run_dir = self.prepare_run_dir()
        logger.info("Running %s into %s (regime %s)", command, run_dir, self.report["regime"])
        summary = handlers[command]()
        ok = bool(summary.pop("ok", True))
        summary["ok"] = ok
        write_json(summary, run_dir / "result.json")
        write_json(self._manifest(), run_dir / "manifest.json")
        if not ok:
            logger.error("%s finished with failures; see %s", command, run_dir / "result.json")
        return {"command": command, "run_dir": str(run_dir), "ok": ok, "summary": summary}

    def _manifest(self) -> Dict[str, Any]:
        return {
            "run": self.run_name,
            "command": self.config.command,
            "config": self.config.to_dict(),
            "regime": self.report["regime"],
            "warnings": self.report["warnings"],
            "grids": self.grids,
            "versions": package_versions(),
        }

    # Grids

    def _record_grid(self, label: str, spec: GridSpec) -> GridSpec:
        self.grids[label] = spec.to_dict()
        return spec

    def sp_grid(self, rho: float) -> GridSpec:
        """Fixed 3D box when L is a number, otherwise the auto box for charge rho."""
        c = self.config
        if c.L == "auto":
            spec = auto_grid(rho, c.p, n_axis=c.n, span=c.span)
        else:
            spec = make_grid(3, c.n, float(c.L))
        return self._record_grid(f"rho={rho:g}", spec)

    def biharmonic_grid(self) -> GridSpec:
        c = self.config
        L = BIHARMONIC_BOX if c.L == "auto" else float(c.L)
        return self._record_grid("biharmonic", make_grid(c.d, c.n, L))

    def split_grid(self) -> GridSpec:
        """Fixed box, or one whose R/2 just holds the widest pair with margin."""
        c = self.config
        if c.L != "auto":
            return self._record_grid("split", make_grid(3, c.n, float(c.L)))
        reach = max(c.separations, default=0.0) / 2 + c.bump_radius
        return self._record_grid("split", make_grid(3, c.n, 4.0 * reach * 1.05))

    def _load_input(self) -> ComplexField:
        if not self.config.input:
            raise ConfigError(f"{self.config.command} needs an input snapshot", field="input")
        path = Path(self.config.input)
        if not path.exists():
            raise ConfigError(f"snapshot {path} does not exist", field="input")
        psi = load_snapshot(path)
        self._record_grid("input", psi.spec)
        return psi

    # Schrodinger-Poisson commands

    def _save_ground_state(self, result: GroundStateResult) -> None:
        save_snapshot(result.u, self.run_dir / "u.ngf")
        row = pd.DataFrame([{"rho": result.rho, "I": result.breakdown.I,
                             "omega": result.omega, "converged": result.converged}])
        write_csv(row, self.run_dir / "curve.csv", CURVE_COLUMNS)
        write_csv(result.history_frame(), self.run_dir / "history.csv")

    def solve_ground_state(self) -> GroundStateResult:
        c = self.config
        grid = self.sp_grid(c.rho)
        return minimize(c.solver_config(), c.model_params(), grid, strict=c.strict)

    def run_groundstate(self) -> Dict[str, Any]:
        result = self.solve_ground_state()
        self._save_ground_state(result)
        summary = result.to_dict()
        summary["rescaling_defect"] = rescaling_defect(result.u, 1.1, self.config.model_params())
        summary["ok"] = result.status != STATUS_TRUNCATED
        return summary

    def _scan(self) -> pd.DataFrame:
        c = self.config
        grid = None if c.L == "auto" else self._record_grid("scan", make_grid(3, c.n, float(c.L)))
        frame = rho_scan(c.rho_list, c.model_params(), c.solver_config(), grid=grid, n_axis=c.n,
                         warm_start=c.warm_start, span=c.span)
        if grid is None:
            self.grids["scan"] = {"mode": "auto", "n_axis": c.n, "span": c.span,
                                  "L_min": float(frame["L"].min()), "L_max": float(frame["L"].max())}
        write_csv(frame, self.run_dir / "curve.csv", CURVE_COLUMNS)
        write_csv(frame, self.run_dir / "scan.csv")
        return frame

    def run_scan(self) -> Dict[str, Any]:
        c = self.config
        frame = self._scan()
        grid = None if c.L == "auto" else make_grid(3, c.n, float(c.L))
        thresholds = detect_thresholds(frame, c.model_params(), c.solver_config(), grid=grid,
                                       n_axis=c.n, span=c.span)
        return {
            "rows": len(frame),
            "converged": int(frame["converged"].sum()),
            "non_converged_rho": [float(r) for r in frame.loc[~frame["converged"], "rho"]],
            "truncated_rho": [float(r) for r in frame.loc[frame["status"] == STATUS_TRUNCATED, "rho"]],
            "negative": int(frame["negative"].sum()),
            "thresholds": thresholds,
        }

    def run_subadditivity(self) -> Dict[str, Any]:
        c = self.config
        if c.input and str(c.input).endswith(".csv"):
            frame = pd.read_csv(c.input)
            missing = {"rho", "I"} - set(frame.columns)
            if missing:
                raise ConfigError(f"curve {c.input} lacks columns {sorted(missing)}", field="input")
            self.grids["curve"] = {"source": str(c.input)}
        else:
            frame = self._scan()
        report = subadditivity_check(frame, mu_count=c.mu_count)
        write_csv(report, self.run_dir / "subadd.csv")
        return {
            "rows": len(report),
            "violations": int(report["violation"].sum()) if len(report) else 0,
            "min_margin": float(report["margin"].min()) if len(report) else math.nan,
            "mu_count": c.mu_count,
        }

    def run_split_test(self) -> Dict[str, Any]:
        c = self.config
        grid = self.split_grid()
        bump = bump_profile(1.0, c.bump_radius)
        report = splitting_test(bump, bump, c.separations, c.model_params(), grid)
        write_csv(report["table"], self.run_dir / "split.csv")
        return {k: v for k, v in report.items() if k != "table"}

    def _evolution_summary(self, result, reference: ComplexField) -> Dict[str, Any]:
        write_csv(result.frame(), self.run_dir / "trajectory.csv", TRAJECTORY_COLUMNS)
        save_snapshot(result.final, self.run_dir / "final.ngf")
        summary = {
            "steps": result.steps,
            "charge_drift": result.charge_drift,
            "energy_drift": result.energy_drift,
            "max_orbit_distance": result.max_orbit_distance,
            "orbit_floor": orbit_floor(reference),
            "aborted": result.aborted,
            "reason": result.reason,
        }
        summary["ok"] = not (result.aborted and self.config.strict)
        return summary

    def run_evolve(self) -> Dict[str, Any]:
        psi0 = self._load_input()
        result = evolve(psi0, self.config.propagator_config(), self.config.model_params(), reference=psi0)
        return self._evolution_summary(result, psi0)

    def run_stability(self) -> Dict[str, Any]:
        c = self.config
        params = c.model_params()
        ground = self.solve_ground_state()
        self._save_ground_state(ground)
        report = stability_experiment(ground, c.deltas, c.propagator_config(), params, seed=c.seed)
        write_csv(report["table"], self.run_dir / "stability.csv")
        table = report["table"]
        aborted = bool(table["aborted"].any()) if len(table) else False
        return {
            "ground_state": ground.to_dict(),
            "slope": report["slope"],
            "floor": report["floor"],
            "seed": report["seed"],
            "aborted": aborted,
            "ok": not (aborted and c.strict),
        }

    # Biharmonic commands

    def run_biharmonic_negativity(self) -> Dict[str, Any]:
        c = self.config
        F = c.nonlinearity()
        hypotheses = check_hypotheses(F, c.N_dim)
        scan = negativity_scan(c.s0, c.Rn, F, c.N_dim, method=c.quadrature)
        write_csv(scan["table"], self.run_dir / "negscan.csv", NEGSCAN_COLUMNS)
        widest = plateau_profile(c.s0, max(c.Rn))
        scaling = [biharmonic_scaling_identity(widest, lam, F, c.N_dim, c.quadrature) for lam in c.lam]
        if scaling:
            write_csv(pd.DataFrame(scaling), self.run_dir / "scaling.csv")
        return {
            "hypotheses": hypotheses,
            "threshold": scan["threshold"],
            "growth_exponent": scan["growth_exponent"],
            "dim": c.N_dim,
            "vanishing_range": scan["vanishing_range"],
            "scaling": scaling,
        }

    def solve_biharmonic_ground_state(self) -> GroundStateResult:
        c = self.config
        return biharmonic_minimize(c.solver_config(), c.nonlinearity(), self.biharmonic_grid())

    def run_biharmonic_ground(self) -> Dict[str, Any]:
        result = self.solve_biharmonic_ground_state()
        self._save_ground_state(result)
        return result.to_dict()

    def run_biharmonic_evolve(self) -> Dict[str, Any]:
        if self.config.input:
            psi0 = self._load_input()
        else:
            ground = self.solve_biharmonic_ground_state()
            self._save_ground_state(ground)
            psi0 = ground.u
        result = evolve(psi0, self.config.propagator_config(), self.config.model_params(), reference=psi0)
        return self._evolution_summary(result, psi0)

    # Oracle checks

    def run_selftest(self) -> Dict[str, Any]:
        checks = run_selftest_checks(self.config.seed)
        frame = pd.DataFrame(checks, columns=["name", "value", "limit", "passed"])
        write_csv(frame, self.run_dir / "selftest.csv")
        for check in checks:
            level = logging.INFO if check["passed"] else logging.ERROR
            logger.log(level, "selftest %s: %.3e (limit %.1e)", check["name"], check["value"], check["limit"])
        return {"checks": checks, "ok": all(check["passed"] for check in checks)}


def _check(name: str, value: float, limit: float) -> Dict[str, Any]:
    return {"name": name, "value": float(value), "limit": limit,
            "passed": bool(np.isfinite(value) and value <= limit)}


def run_selftest_checks(seed: int = 0) -> List[Dict[str, Any]]:
    """Fast oracle checks of the transforms, the Coulomb solver, the energy and the profiles."""
    rng = np.random.default_rng(seed)
    checks = []

    spec = make_grid(3, 16, 8.0)
    values = rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape)
    physical = lp_power(values, 2.0, spec)
    spectral = float(np.sum(np.abs(fftn(values)) ** 2)) * spec.cell_volume / spec.size
    checks.append(_check("parseval", abs(physical - spectral) / physical, 1e-12))

    coulomb = make_grid(3, 32, 16.0)
    compact = gaussian_profile(1.0, 1.2).sample(coulomb)
    targets = np.zeros(coulomb.shape, dtype=bool)
    targets[::4, ::4, ::4] = True
    targets &= coulomb.radius() <= 2.0
    fast = hartree_potential(compact, check=False).values.real[targets]
    direct = direct_sum_potential(compact, targets).values.real[targets]
    checks.append(_check("hartree_direct_sum", float(np.max(np.abs(fast - direct) / np.abs(direct))), 2e-3))

    p, rho, width = P_SMALL_MASS, 1.0, 1.0
    params = ModelParams(p=p)
    grid = make_grid(3, 64, SELFTEST_GAUSSIAN_SPAN * width)
    profile = gaussian_profile(1.0, width)
    trial = profile.sample(grid)
    trial = trial.scaled(rho / math.sqrt(lp_power(trial.values, 2.0, grid)))
    sampled = energy_breakdown(trial, params)
    exact = gaussian_breakdown(rho, width, p)
    for term in ("A", "N", "M"):
        got, want = getattr(sampled, term), getattr(exact, term)
        checks.append(_check(f"gaussian_{term}", abs(got - want) / abs(want), 1e-6))

    theta, beta = 1.3, 0.5
    base = energy_breakdown(profile.sample(grid), params)
    stretched = dilate_profile(profile, theta, beta).sample(grid.scaled(theta ** beta))
    moved = energy_breakdown(stretched, params)
    predicted = theta ** 2 * (base.I + f_theta(theta, base, beta, p))
    checks.append(_check("f_identity", abs(moved.I - predicted) / max(base.scale, 1e-300), 1e-10))

    plateau = plateau_profile(1.0, 5.0)
    eps = 1e-9
    seam = max(
        abs(float(plateau(seam_r - eps)) - float(plateau(seam_r + eps)))
        + abs(float(plateau.derivative(seam_r - eps)) - float(plateau.derivative(seam_r + eps)))
        for seam_r in plateau.breakpoints
    )
    checks.append(_check("plateau_seams", seam, 1e-6))
    return checks
