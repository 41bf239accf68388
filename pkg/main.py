import argparse
import logging
import sys

from src.commands.commands import CommandHandler
from src.parser.config_parser import ConfigError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG_ERROR = 2

REPORT_TYPES = ["runs", "phase_means", "swap_events", "action_histogram"]


def build_parser():
    parser = argparse.ArgumentParser(prog="elasticity-sim",
                                     description="Multi-dimensional elasticity simulator for edge services.")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="Logging verbosity (default: WARNING)")
    commands = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("scenario1", "Run the five-phase threshold schedule"),
                            ("scenario2", "Run two services contending for one device")):
        scenario = commands.add_parser(name, help=help_text)
        scenario.add_argument("--config", help="YAML scenario file (built-in defaults when omitted)")
        scenario.add_argument("--out", help="Output directory (overrides output.dir)")
        scenario.add_argument("--seed", type=int, help="Base seed; repetitions use seed, seed+1, ...")
        scenario.add_argument("--agent", choices=["lsa", "vpa", "lgbn"], help="Agent for every service")
        scenario.add_argument("--no-gso", action="store_true", help="Disable the global service optimizer")

    summary = commands.add_parser("summarize", help="Aggregate iteration CSVs into a summary CSV")
    summary.add_argument("inputs", nargs="+", help="iterations.csv files or run output directories")
    summary.add_argument("--out", help="Directory for summary.csv (default: current directory)")

    report = commands.add_parser("report", help="Render a report from a run's results database")
    report.add_argument("report_type", choices=REPORT_TYPES)
    report.add_argument("run_id", nargs="?", help="Run id (default: latest run)")
    report.add_argument("--out", help="Run output directory holding results.db (default: results)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    command_handler = CommandHandler()
    try:
        result = command_handler.execute_command(args.command, args)
        print(result)
    except ConfigError as e:
        print(f"Config Error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except ValueError as e:
        print(f"Command Error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except RuntimeError as e:
        print(f"Unexpected Error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
