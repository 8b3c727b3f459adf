import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

THREADS_ENV = "NORMGROUND_THREADS"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def worker_count() -> int:
    """
    Number of workers for FFTs and thread pools.

    Reads NORMGROUND_THREADS; falls back to the CPU count when unset or invalid.
    """
    default = os.cpu_count() or 1
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning("Ignoring non-integer %s=%r", THREADS_ENV, raw)
        return default
    if value < 1:
        logger.warning("Ignoring non-positive %s=%r", THREADS_ENV, raw)
        return default
    return value


def configure_logging(verbosity: int = 0) -> None:
    """Install a single stream handler; verbosity -1 quiet, 0 info, >=1 debug."""
    if verbosity < 0:
        level = logging.WARNING
    elif verbosity == 0:
        level = logging.INFO
    else:
        level = logging.DEBUG
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(data: Dict[str, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_csv(frame: pd.DataFrame, path: Union[str, Path], columns: Optional[List[str]] = None) -> Path:
    """
    Write a DataFrame so that equal inputs give byte-identical files.

    Booleans are written as 0/1 and floats with 17 significant digits.
    """
    path = Path(path)
    out = frame.copy() if columns is None else frame.loc[:, columns].copy()
    for column in out.columns:
        if out[column].dtype == bool:
            out[column] = out[column].astype(int)
    out.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


def config_digest(data: Dict[str, Any]) -> str:
    """Eight hex digits identifying a configuration."""
    payload = json.dumps(_jsonable(data), sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:8]


def package_versions() -> Dict[str, str]:
    import scipy

    from algorithms import __version__

    return {
        "normground": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


def list_runs(out_dir: Union[str, Path]) -> List[Path]:
    """Run folders (those holding a manifest.json) under an output directory, newest first."""
    out_dir = Path(out_dir)
    if not out_dir.exists():
        return []
    runs = [p for p in out_dir.iterdir() if (p / "manifest.json").exists()]
    return sorted(runs, key=lambda p: p.stat().st_mtime, reverse=True)


def load_run(run_dir: Union[str, Path]) -> Dict[str, Any]:
    """
    Load the artifacts of one run.

    Returns:
        Dict with manifest, result (or None) and one DataFrame per CSV found.
    """
    run_dir = Path(run_dir)
    try:
        manifest = read_json(run_dir / "manifest.json")
    except FileNotFoundError as e:
        raise FileNotFoundError(f"No manifest in run folder {run_dir}") from e
    result_path = run_dir / "result.json"
    run = {
        "name": run_dir.name,
        "manifest": manifest,
        "result": read_json(result_path) if result_path.exists() else None,
        "tables": {},
    }
    for csv_path in sorted(run_dir.glob("*.csv")):
        run["tables"][csv_path.stem] = pd.read_csv(csv_path)
    return run
