#!/usr/bin/env python3

"""
__main__.py

Module for command-line execution of the compiler, the simulator and the
experiments.
"""

# Import Python standard libraries
import argparse
import logging
import sys

# Import our library
import resparc
from resparc import harness
from resparc.common import InputError, ResparcError
from resparc.config import INPUT_PATTERNS, load_config, parse_int_list

logger = logging.getLogger("resparc")

# Commands that run on a topology, and the experiment they map to
COMMANDS = {
    "compile": ("single", harness.run_compile),
    "simulate": ("single", harness.run_simulation),
    "cost": ("single", harness.run_single),
    "sweep-mca": ("sweep_mca", harness.sweep_mca),
    "sweep-bits": ("sweep_bits", harness.sweep_bits),
    "event-ablation": ("event_ablation", harness.event_ablation),
}


class _Parser(argparse.ArgumentParser):
    """
    Argument parser whose usage errors exit with the input error status.
    """

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(InputError.exit_code, f"{self.prog}: error: {message}\n")


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected `on` or `off`")
    return value == "on"


def parse_arguments(argv=None):
    """
    Parses arguments and returns a namespace.

    Defaults are specified in code, optionally overridden by a configuration
    file (whose path is provided as an argument itself) and then by the
    command-line parameters; the merge happens in `build_config()`.

    :return: A namespace with all the parameters.
    """

    # Flags shared by all commands
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="Specify config file", metavar="FILE")
    common.add_argument("-o", "--out", default=".", help="Set output directory (default `.`)")
    common.add_argument("--seed", type=str, help="Set the seed of random inputs")
    common.add_argument("--timesteps", type=int, help="Set the number of timesteps")
    common.add_argument(
        "-v", "--verbose", action="count", default=0, help="Increase verbosity (up to -vv)"
    )

    topology = argparse.ArgumentParser(add_help=False)
    topology.add_argument(
        "-t",
        "--topology",
        required=True,
        help="Set the topology JSON file, or a shipped benchmark name (desk_mlp, desk_cnn)",
    )
    topology.add_argument("-w", "--weights", help="Set a sidecar binary weights file")
    topology.add_argument("--inputs", help="Set an input spike train CSV (timestep,neuron_index)")
    topology.add_argument("--input-rate", type=float, help="Set the spike rate of random inputs")
    topology.add_argument(
        "--input-pattern",
        choices=INPUT_PATTERNS,
        help="Spread random inputs uniformly or over a centred box (default uniform)",
    )
    topology.add_argument(
        "--event-driven", type=_on_off, help="Enable zero-check suppression (on|off, default on)"
    )
    topology.add_argument("--sizes", type=parse_int_list, help="Set crossbar sizes, e.g. 32,64,128")
    topology.add_argument("--bits", type=parse_int_list, help="Set device precisions, e.g. 1,2,4,8")
    topology.add_argument("--trace", action="store_true", help="Write a packet trace")

    parser = _Parser(
        prog="resparc", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument("--version", action="version", version=resparc.__version__)
    commands = parser.add_subparsers(dest="command", required=True)

    for name in COMMANDS:
        commands.add_parser(name, parents=[common, topology])

    oracle = commands.add_parser("verify-oracle", parents=[common])
    oracle.add_argument("--cases", type=int, default=60, help="Set the number of random cases")

    return parser.parse_args(argv)


def build_config(args):
    """
    Merges the configuration file and the command-line overrides.
    """

    flags = {
        "run": {
            "timesteps": args.timesteps,
            "seed": args.seed,
            "input_rate": getattr(args, "input_rate", None),
            "input_pattern": getattr(args, "input_pattern", None),
            "event_driven": getattr(args, "event_driven", None),
            "sizes": getattr(args, "sizes", None),
            "bits": getattr(args, "bits", None),
        }
    }
    overrides = {
        section: {key: value for key, value in values.items() if value is not None}
        for section, values in flags.items()
    }

    return load_config(args.config, overrides)


def main(argv=None) -> int:
    """
    Main function for command-line execution.

    :return: The exit status: 0 on success, otherwise the code of the error
        (1 for input errors, 2 for capacity errors, 3 for simulation errors).
    """

    args = parse_arguments(argv)
    logging.basicConfig(
        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
        format="%(levelname)s:%(name)s: %(message)s",
    )

    try:
        config = build_config(args)

        if args.command == "verify-oracle":
            cases = harness.verify_oracle(args.cases, config.run.seed)
            failed = [case for case in cases if not case.equal]
            print("%i/%i cases equal" % (len(cases) - len(failed), len(cases)))
            return 3 if failed else 0

        experiment, function = COMMANDS[args.command]
        spec = harness.RunSpec(
            topology=args.topology,
            config=config,
            weights=args.weights,
            experiment=experiment,
            out_dir=args.out,
            trace=args.trace,
            inputs=args.inputs,
        )
        for kind, path in sorted(function(spec).items()):
            print("%s\t%s" % (kind, path))

    except ResparcError as exc:
        logger.error("%s", exc)
        return exc.exit_code

    return 0


if __name__ == "__main__":
    sys.exit(main())
