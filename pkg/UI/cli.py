import argparse
import logging
import re
import sys
from typing import List, Optional

from controller.controller import ExperimentController
from utils.config import COMMANDS, ConfigError, load_config
from utils.helpers import configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# (flag, config key, help)
VALUE_OPTIONS = [
    ("--p", "p", "power of the local term"),
    ("--d", "d", "grid dimension"),
    ("--n", "n", "points per axis (power of two)"),
    ("--L", "L", "box edge length, or 'auto'"),
    ("--span", "span", "auto box edge in trial widths"),
    ("--rho", "rho", "target charge"),
    ("--rho-list", "rho_list", "charges: list, a:b:step or log:a:b:count"),
    ("--dt-imag", "dt_imag", "gradient-flow step"),
    ("--tol", "tol", "relative residual tolerance"),
    ("--max-iters", "max_iters", "gradient-flow iteration cap"),
    ("--seed-profile", "seed_profile", "gaussian, gaussian:<width> or bump:<radius>"),
    ("--mu-count", "mu_count", "split charges per rho in the subadditivity check"),
    ("--dt", "dt", "time step"),
    ("--t-end", "t_end", "evolution horizon"),
    ("--record-stride", "record_stride", "steps between trajectory records"),
    ("--deltas", "deltas", "perturbation sizes"),
    ("--seed", "seed", "random seed"),
    ("--separations", "separations", "pair separations for split-test"),
    ("--bump-radius", "bump_radius", "bump support radius for split-test"),
    ("--N", "N_dim", "space dimension of the radial biharmonic energy"),
    ("--s0", "s0", "plateau height"),
    ("--F", "F", "nonlinearity such as '-1*|s|^3'"),
    ("--Rn", "Rn", "plateau radii such as 1:40:0.5 (list or a:b:step)"),
    ("--lam", "lam", "dilation factors for the scaling identity"),
    ("--quadrature", "quadrature", "quad or gauss"),
    ("--out", "out", "output directory"),
]


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--config", dest="config_path", default=None, help="flat JSON5 config file")
    common.add_argument("--in", "--input", dest="input", default=None, help="input snapshot or curve")
    for flag, key, text in VALUE_OPTIONS:
        common.add_argument(flag, dest=key, default=None, help=text)
    common.add_argument("--strict", dest="strict", action="store_const", const=True, default=None,
                        help="fail on truncation and charge drift")
    common.add_argument("--cold-start", dest="warm_start", action="store_const", const=False,
                        default=None, help="solve every charge of a scan from a fresh seed")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="normground",
        description="Normalized ground states, subadditivity and orbital stability experiments",
        allow_abbrev=False,
    )
    common = _common_options()
    subparsers = parser.add_subparsers(dest="command")
    for command in COMMANDS:
        subparsers.add_parser(command, parents=[common], allow_abbrev=False)
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    keys = [key for _, key, _ in VALUE_OPTIONS] + ["input", "strict", "warm_start"]
    return {key: getattr(args, key) for key in keys if getattr(args, key) is not None}


def _attach_dashed_values(argv: List[str]) -> List[str]:
    """Rewrite '--F -1*|s|^3' as '--F=-1*|s|^3'; argparse reads a leading dash as an option."""
    flags = {flag for flag, _, _ in VALUE_OPTIONS}
    joined, i = [], 0
    while i < len(argv):
        token = argv[i]
        following = argv[i + 1] if i + 1 < len(argv) else ""
        if (token in flags and following.startswith("-") and not following.startswith("--")
                and not re.fullmatch(r"-[vq]+", following)):
            joined.append(f"{token}={following}")
            i += 2
        else:
            joined.append(token)
            i += 1
    return joined


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(_attach_dashed_values(sys.argv[1:] if argv is None else list(argv)))
    if not args.command:
        parser.print_usage(sys.stderr)
        print("normground: error: a subcommand is required", file=sys.stderr)
        return EXIT_USAGE
    configure_logging(-1 if args.quiet else args.verbose)

    try:
        config = load_config(args.config_path, _overrides(args), command=args.command)
        controller = ExperimentController(config)
    except ConfigError as e:
        print(f"normground: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        outcome = controller.run()
    except ConfigError as e:
        print(f"normground: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as e:
        logger.error("%s failed: %s", args.command, e)
        return EXIT_FAILURE

    print(outcome["run_dir"])
    return EXIT_OK if outcome["ok"] else EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
