import io
import logging
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path
from unittest.mock import patch

from UI.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, _attach_dashed_values, _overrides, build_parser, main


class TestCommandLine(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name)
        root = logging.getLogger()
        self.saved = (list(root.handlers), root.level)

    def tearDown(self):
        root = logging.getLogger()
        for handler in list(root.handlers):
            root.removeHandler(handler)
        for handler in self.saved[0]:
            root.addHandler(handler)
        root.setLevel(self.saved[1])
        self.tmp.cleanup()

    def call(self, *argv):
        stdout, stderr = io.StringIO(), io.StringIO()
        with redirect_stdout(stdout), redirect_stderr(stderr):
            code = main(list(argv))
        return code, stdout.getvalue(), stderr.getvalue()

    def test_subcommand_is_required(self):
        code, _, err = self.call()
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("subcommand is required", err)

    def test_invalid_parameters_are_usage_errors(self):
        code, _, err = self.call("groundstate", "--p", "3.5", "--out", str(self.out), "-q")
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("p:", err)

    def test_empty_config_file(self):
        path = self.out / "empty.json5"
        path.write_text("")
        code, _, err = self.call("groundstate", "--config", str(path), "-q")
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("empty", err)

    def test_evolve_without_input(self):
        code, _, err = self.call("evolve", "--out", str(self.out), "-q")
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("input", err)

    def test_selftest_prints_run_folder(self):
        code, out, _ = self.call("selftest", "--out", str(self.out), "-q")
        self.assertEqual(code, EXIT_OK)
        run_dir = Path(out.strip())
        self.assertEqual(run_dir.parent, self.out)
        self.assertTrue((run_dir / "result.json").exists())

    def test_unknown_option(self):
        with self.assertRaises(SystemExit) as ctx:
            self.call("selftest", "--bogus", "1")
        self.assertEqual(ctx.exception.code, 2)

    @patch("UI.cli.ExperimentController")
    def test_runtime_failures(self, mock_controller):
        mock_controller.return_value.run.side_effect = ValueError("diverged")
        code, _, _ = self.call("selftest", "--out", str(self.out), "-q")
        self.assertEqual(code, EXIT_FAILURE)

        mock_controller.return_value.run.side_effect = None
        mock_controller.return_value.run.return_value = {"run_dir": "runs/x", "ok": False}
        code, out, _ = self.call("selftest", "--out", str(self.out), "-q")
        self.assertEqual(code, EXIT_FAILURE)
        self.assertEqual(out.strip(), "runs/x")

    def test_flag_mapping(self):
        args = build_parser().parse_args(
            ["scan-rho", "--rho-list", "0.1,0.2", "--cold-start", "--strict", "--in", "a.csv", "--N", "6"])
        self.assertEqual(args.command, "scan-rho")
        self.assertEqual(_overrides(args), {
            "rho_list": "0.1,0.2",
            "warm_start": False,
            "strict": True,
            "input": "a.csv",
            "N_dim": "6",
        })
        self.assertEqual(_overrides(build_parser().parse_args(["selftest"])), {})

    def test_negative_nonlinearity_value(self):
        """The documented biharmonic example passes a value that starts with a dash."""
        code, out, err = self.call("biharm-neg", "--N", "5", "--s0", "1", "--F", "-1*|s|^3",
                                   "--Rn", "1:40:0.5", "--out", str(self.out), "-q")
        self.assertEqual(code, EXIT_OK, err)
        self.assertTrue((Path(out.strip()) / "negscan.csv").exists())

    def test_dashed_values_are_attached(self):
        argv = ["biharm-neg", "--N", "5", "--s0", "1", "--F", "-1*|s|^3", "--Rn", "1:20:0.5"]
        args = build_parser().parse_args(_attach_dashed_values(argv))
        self.assertEqual(args.F, "-1*|s|^3")
        self.assertEqual(args.Rn, "1:20:0.5")
        self.assertEqual(_attach_dashed_values(["selftest", "--out", "-q"]), ["selftest", "--out", "-q"])
        self.assertEqual(_attach_dashed_values(["x", "--lam", "-0.5"]), ["x", "--lam=-0.5"])


if __name__ == '__main__':
    unittest.main()
