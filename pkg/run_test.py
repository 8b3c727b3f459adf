#!/usr/bin/env python
import os
import sys
import time
import unittest
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent.absolute()
sys.path.append(str(project_root))

RULE = '=' * 70
THIN_RULE = '-' * 70


class CountingTestResult(unittest.TextTestResult):
    """Text result that tallies outcomes and prints a closing summary."""

    def __init__(self, stream, descriptions, verbosity):
        super().__init__(stream, descriptions, verbosity)
        self.tally = {'run': 0, 'passed': 0, 'failed': 0, 'errors': 0, 'skipped': 0}
        self.started = time.time()

    def startTest(self, test):
        self.tally['run'] += 1
        if self.showAll and test._testMethodDoc:
            self.stream.write(f"\n{test.id()}\n  {test._testMethodDoc.strip()}\n")
        super().startTest(test)

    def addSuccess(self, test):
        self.tally['passed'] += 1
        super().addSuccess(test)

    def addFailure(self, test, err):
        self.tally['failed'] += 1
        super().addFailure(test, err)

    def addError(self, test, err):
        self.tally['errors'] += 1
        super().addError(test, err)

    def addSkip(self, test, reason):
        self.tally['skipped'] += 1
        super().addSkip(test, reason)

    def print_summary(self):
        self.stream.write(f"\n{RULE}\nSUMMARY\n{THIN_RULE}\n")
        for key in ('run', 'passed', 'failed', 'errors', 'skipped'):
            self.stream.write(f"{key.capitalize():<8} {self.tally[key]}\n")
        self.stream.write(f"Elapsed  {time.time() - self.started:.2f} s\n{RULE}\n")


class CountingTestRunner(unittest.TextTestRunner):
    resultclass = CountingTestResult

    def run(self, test):
        result = super().run(test)
        result.print_summary()
        return result


def module_name(test_path):
    """'tests/test_algorithms/test_energy.py' -> 'tests.test_algorithms.test_energy'."""
    if test_path.endswith('.py'):
        test_path = test_path[:-3]
    return test_path.replace('/', '.').replace('\\', '.')


def run_test(test_path=None, verbosity=2):
    """
    Run one test module, class or method, or every suite when test_path is None.

    Args:
        test_path: Dotted name or file path, e.g. tests/test_algorithms/test_hartree.py
        verbosity: 0 quiet, 1 dots, 2 one line per test
    """
    runner = CountingTestRunner(verbosity=verbosity)
    if test_path is None:
        from tests.run_tests import run_tests
        return run_tests(runner)
    suite = unittest.TestLoader().loadTestsFromName(module_name(test_path))
    result = runner.run(suite)
    return 0 if result.wasSuccessful() else 1


if __name__ == '__main__':
    args = sys.argv[1:]
    verbosity = 2
    if "-q" in args:
        verbosity = 0
        args.remove("-q")
    if "-v" in args:
        args.remove("-v")
    if "-h" in args or "--help" in args:
        print("Usage: python run_test.py [-q|-v] [test_path]")
        print("  python run_test.py tests.test_algorithms.test_hartree")
        print("  python run_test.py tests/test_controller/test_controller.py")
        print("Set NORMGROUND_SLOW=1 to include the long convergence runs.")
        sys.exit(0)
    if os.environ.get("NORMGROUND_SLOW") != "1":
        print("Long convergence runs are skipped (NORMGROUND_SLOW is not 1)\n")
    sys.exit(run_test(args[0] if args else None, verbosity))
