import logging
import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pandas as pd

from utils.helpers import (
    THREADS_ENV,
    config_digest,
    configure_logging,
    list_runs,
    load_run,
    package_versions,
    read_json,
    worker_count,
    write_csv,
    write_json,
)


class TestWorkerCount(unittest.TestCase):
    def test_environment_override(self):
        with patch.dict(os.environ, {THREADS_ENV: "3"}):
            self.assertEqual(worker_count(), 3)

    def test_invalid_values_fall_back(self):
        default = os.cpu_count() or 1
        for raw in ("abc", "0", "-2"):
            with patch.dict(os.environ, {THREADS_ENV: raw}):
                with self.assertLogs("utils.helpers", level="WARNING"):
                    self.assertEqual(worker_count(), default)

    def test_unset(self):
        with patch.dict(os.environ, {}, clear=True):
            self.assertEqual(worker_count(), os.cpu_count() or 1)


class TestWriters(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_csv_format(self):
        """Floats get 17 significant digits and booleans become 0/1."""
        frame = pd.DataFrame({"x": [0.1], "flag": [True]})
        path = write_csv(frame, self.dir / "t.csv")
        self.assertEqual(path.read_text(), "x,flag\n0.10000000000000001,1\n")

    def test_csv_column_selection(self):
        frame = pd.DataFrame({"a": [1, 2], "b": [3.5, 4.5], "c": ["x", "y"]})
        path = write_csv(frame, self.dir / "t.csv", columns=["c", "a"])
        self.assertEqual(path.read_text(), "c,a\nx,1\ny,2\n")

    def test_csv_is_reproducible(self):
        frame = pd.DataFrame({"rho": np.linspace(0.1, 1.0, 7), "I": -np.linspace(0.1, 1.0, 7) ** 3})
        first = write_csv(frame, self.dir / "a.csv").read_bytes()
        second = write_csv(frame.copy(), self.dir / "b.csv").read_bytes()
        self.assertEqual(first, second)

    def test_json_conversions(self):
        data = {
            "nan": float("nan"),
            "inf": np.inf,
            "count": np.int64(4),
            "flag": np.bool_(True),
            "array": np.arange(3),
            "tuple": (1.5, 2.5),
            "path": Path("runs/x"),
        }
        loaded = read_json(write_json(data, self.dir / "d.json"))
        self.assertIsNone(loaded["nan"])
        self.assertIsNone(loaded["inf"])
        self.assertEqual(loaded["count"], 4)
        self.assertIs(loaded["flag"], True)
        self.assertEqual(loaded["array"], [0, 1, 2])
        self.assertEqual(loaded["tuple"], [1.5, 2.5])
        self.assertEqual(loaded["path"], str(Path("runs/x")))


class TestDigest(unittest.TestCase):
    def test_digest_is_stable(self):
        digest = config_digest({"rho": 0.3, "p": 8 / 3})
        self.assertEqual(len(digest), 8)
        int(digest, 16)
        self.assertEqual(digest, config_digest({"p": 8 / 3, "rho": 0.3}))
        self.assertNotEqual(digest, config_digest({"rho": 0.31, "p": 8 / 3}))

    def test_versions(self):
        versions = package_versions()
        self.assertEqual(set(versions), {"normground", "numpy", "scipy", "pandas"})


class TestRunFolders(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_only_folders_with_manifest_are_runs(self):
        run = self.dir / "groundstate-1234abcd"
        run.mkdir()
        write_json({"command": "groundstate"}, run / "manifest.json")
        (self.dir / "scratch").mkdir()
        self.assertEqual(list_runs(self.dir), [run])
        self.assertEqual(list_runs(self.dir / "missing"), [])

    def test_load_run(self):
        run = self.dir / "scan-rho-00000000"
        run.mkdir()
        write_json({"command": "scan-rho"}, run / "manifest.json")
        write_csv(pd.DataFrame({"rho": [0.1, 0.2], "I": [-1.0, -2.0]}), run / "curve.csv")
        loaded = load_run(run)
        self.assertEqual(loaded["name"], "scan-rho-00000000")
        self.assertEqual(loaded["manifest"]["command"], "scan-rho")
        self.assertIsNone(loaded["result"])
        self.assertEqual(list(loaded["tables"]), ["curve"])
        self.assertEqual(list(loaded["tables"]["curve"]["I"]), [-1.0, -2.0])

    def test_missing_manifest(self):
        with self.assertRaises(FileNotFoundError):
            load_run(self.dir)


class TestLogging(unittest.TestCase):
    def setUp(self):
        root = logging.getLogger()
        self.saved = (list(root.handlers), root.level)

    def tearDown(self):
        root = logging.getLogger()
        for handler in list(root.handlers):
            root.removeHandler(handler)
        for handler in self.saved[0]:
            root.addHandler(handler)
        root.setLevel(self.saved[1])

    def test_levels_and_single_handler(self):
        for verbosity, level in ((-1, logging.WARNING), (0, logging.INFO), (2, logging.DEBUG)):
            configure_logging(verbosity)
            root = logging.getLogger()
            self.assertEqual(root.level, level)
            self.assertEqual(len(root.handlers), 1)


if __name__ == '__main__':
    unittest.main()
