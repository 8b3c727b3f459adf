import math
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd
import streamlit as st

# (result key, label, format) per command
SUMMARY_FIELDS: Dict[str, List[Tuple[str, str, str]]] = {
    "groundstate": [("omega", "Multiplier omega", "{:.6g}"), ("residual", "Residual", "{:.2e}"),
                    ("iters", "Iterations", "{:d}"), ("status", "Status", "{}")],
    "biharm-ground": [("omega", "Multiplier omega", "{:.6g}"), ("residual", "Residual", "{:.2e}"),
                      ("iters", "Iterations", "{:d}"), ("status", "Status", "{}")],
    "scan-rho": [("rows", "Charges", "{:d}"), ("converged", "Converged", "{:d}"),
                 ("negative", "Negative energies", "{:d}")],
    "subadd": [("rows", "Pairs checked", "{:d}"), ("violations", "Violations", "{:d}"),
               ("min_margin", "Least margin", "{:.3e}")],
    "split-test": [("N_exponent", "Hartree decay exponent", "{:.3f}"),
                   ("max_abs_delta_M_disjoint", "max |delta M|", "{:.2e}"),
                   ("s_delta_N_change", "s delta N change", "{:.2e}")],
    "evolve": [("charge_drift", "Charge drift", "{:.2e}"), ("energy_drift", "Energy drift", "{:.2e}"),
               ("max_orbit_distance", "Max orbit distance", "{:.3e}"), ("steps", "Steps", "{:d}")],
    "biharm-evolve": [("charge_drift", "Charge drift", "{:.2e}"), ("energy_drift", "Energy drift", "{:.2e}"),
                      ("max_orbit_distance", "Max orbit distance", "{:.3e}"), ("steps", "Steps", "{:d}")],
    "stability": [("slope", "Response slope", "{:.3f}"), ("floor", "Translation floor", "{:.2e}"),
                  ("seed", "Seed", "{:d}")],
    "biharm-neg": [("threshold", "First negative Rn", "{:g}"),
                   ("growth_exponent", "Growth exponent", "{:.3f}"), ("dim", "Dimension", "{:d}")],
    "selftest": [("ok", "All checks passed", "{}")],
}


def format_value(value: Any, template: str) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float) and not math.isfinite(value):
        return "n/a"
    try:
        return template.format(value)
    except (TypeError, ValueError):
        return str(value)


def summary_metrics(command: str, result: Optional[Dict[str, Any]]) -> List[Tuple[str, str]]:
    """(label, text) pairs for the headline numbers of one run."""
    if not result:
        return []
    metrics = []
    if "breakdown" in result:
        metrics.append(("Energy I", format_value(result["breakdown"].get("I"), "{:.10g}")))
    for key, label, template in SUMMARY_FIELDS.get(command, []):
        if key in result:
            metrics.append((label, format_value(result[key], template)))
    return metrics


def render_run_summary(run: Dict[str, Any]) -> None:
    """Headline metrics, regime, warnings and configuration of one run."""
    manifest = run["manifest"]
    command = manifest.get("command", "")
    st.subheader(f"{command}: {run['name']}")
    st.caption(f"Regime: {manifest.get('regime', 'unknown')}")
    for warning in manifest.get("warnings", []):
        st.warning(warning)

    result = run.get("result")
    if result is None:
        st.error("This run has no result.json; it was probably interrupted.")
        return
    if not result.get("ok", True):
        st.error("The run reported failures.")

    metrics = summary_metrics(command, result)
    if metrics:
        columns = st.columns(min(len(metrics), 4))
        for i, (label, text) in enumerate(metrics):
            columns[i % len(columns)].metric(label, text)

    with st.expander("Configuration"):
        config = manifest.get("config", {})
        st.dataframe(pd.DataFrame({"key": list(config), "value": [str(v) for v in config.values()]}))
    with st.expander("Grids"):
        st.json(manifest.get("grids", {}))
