import sys
from pathlib import Path

import streamlit as st

# Add the project root directory to Python path
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

from components.reports import render_reports
from components.run_summary import render_run_summary
from utils.helpers import list_runs, load_run


def render_sidebar(default_dir: str = "runs"):
    """Output directory picker and run selector; returns the chosen run folder or None."""
    st.sidebar.title("normground")
    out_dir = st.sidebar.text_input("Output directory", value=default_dir)
    runs = list_runs(out_dir)
    if not runs:
        st.sidebar.info(f"No runs found under {out_dir}")
        return None
    names = [run.name for run in runs]
    commands = sorted({name.rsplit("-", 1)[0] for name in names})
    chosen_command = st.sidebar.selectbox("Command", ["all"] + commands)
    if chosen_command != "all":
        runs = [run for run in runs if run.name.rsplit("-", 1)[0] == chosen_command]
    labels = [run.name for run in runs]
    index = st.sidebar.selectbox("Run", range(len(labels)), format_func=lambda i: labels[i])
    return runs[index] if runs else None


def main():
    st.set_page_config(page_title="normground results", layout="wide")
    run_dir = render_sidebar()
    if run_dir is None:
        st.title("normground results")
        st.write("Run a subcommand such as `python main.py groundstate` and point the sidebar at its output directory.")
        return
    try:
        run = load_run(run_dir)
    except (OSError, ValueError) as e:
        st.error(f"Could not load {run_dir}: {e}")
        return
    render_run_summary(run)
    render_reports(run["tables"])


if __name__ == "__main__":
    main()
