from typing import Dict, Optional

import pandas as pd
import plotly.express as px
import plotly.graph_objects as go
import streamlit as st


def curve_figure(curve: pd.DataFrame) -> go.Figure:
    """Ground-state energy against charge; non-converged entries drawn as crosses."""
    frame = curve.assign(converged=curve["converged"].astype(bool))
    fig = px.line(frame, x="rho", y="I", markers=True, title="Ground-state energy",
                  labels={"rho": "charge rho", "I": "I_rho"})
    flagged = frame[~frame["converged"]]
    if len(flagged):
        fig.add_trace(go.Scatter(x=flagged["rho"], y=flagged["I"], mode="markers",
                                 marker={"symbol": "x", "size": 10}, name="not converged"))
    fig.add_hline(y=0.0, line_dash="dot")
    return fig


def trajectory_figure(trajectory: pd.DataFrame) -> go.Figure:
    fig = px.line(trajectory, x="t", y="orbit_distance", title="Distance to the standing-wave orbit",
                  labels={"t": "time", "orbit_distance": "distance"})
    return fig


def conservation_frame(trajectory: pd.DataFrame) -> pd.DataFrame:
    """Relative deviation of charge and energy from their initial values."""
    out = pd.DataFrame({"t": trajectory["t"]})
    for column in ("charge", "energy"):
        start = trajectory[column].iloc[0]
        scale = abs(start) if start != 0 else 1.0
        out[column] = (trajectory[column] - start) / scale
    return out


def negscan_figure(negscan: pd.DataFrame) -> go.Figure:
    fig = px.line(negscan, x="Rn", y="J", markers=True, title="Plateau energy",
                  labels={"Rn": "plateau radius", "J": "J(u)"})
    fig.add_hline(y=0.0, line_dash="dot")
    return fig


def split_figure(split: pd.DataFrame) -> go.Figure:
    fig = px.line(split, x="s", y="s_delta_N", markers=True, title="Hartree interaction times separation",
                  labels={"s": "separation", "s_delta_N": "s * delta N"})
    return fig


def subadd_figure(subadd: pd.DataFrame) -> go.Figure:
    fig = px.scatter(subadd, x="mu", y="margin", color="rho", title="Subadditivity margin",
                     labels={"mu": "split charge mu", "margin": "I_mu + I_complement - I_rho"})
    fig.add_hline(y=0.0, line_dash="dot")
    return fig


def stability_figure(stability: pd.DataFrame) -> go.Figure:
    rescaled = stability[stability["rescaled"].astype(bool)]
    fig = px.line(rescaled, x="delta", y="max_distance", markers=True, log_x=True, log_y=True,
                  title="Largest orbit distance against perturbation size",
                  labels={"delta": "delta", "max_distance": "max distance"})
    return fig


def _table(tables: Dict[str, pd.DataFrame], name: str) -> Optional[pd.DataFrame]:
    frame = tables.get(name)
    if frame is None or frame.empty:
        return None
    return frame


def render_reports(tables: Dict[str, pd.DataFrame]) -> None:
    """One chart per CSV table a run produced; unknown tables are listed raw."""
    if not tables:
        st.info("This run wrote no tables.")
        return

    curve = _table(tables, "curve")
    if curve is not None and len(curve) > 1:
        st.plotly_chart(curve_figure(curve), use_container_width=True)

    trajectory = _table(tables, "trajectory")
    if trajectory is not None:
        col1, col2 = st.columns(2)
        with col1:
            if trajectory["orbit_distance"].notna().any():
                st.plotly_chart(trajectory_figure(trajectory), use_container_width=True)
        with col2:
            drift = conservation_frame(trajectory)
            st.plotly_chart(px.line(drift, x="t", y=["charge", "energy"], title="Relative drift"),
                            use_container_width=True)

    charts = [("negscan", negscan_figure), ("split", split_figure),
              ("subadd", subadd_figure), ("stability", stability_figure)]
    for name, figure in charts:
        frame = _table(tables, name)
        if frame is not None:
            st.plotly_chart(figure(frame), use_container_width=True)

    for name, frame in sorted(tables.items()):
        with st.expander(f"{name}.csv"):
            st.dataframe(frame)
