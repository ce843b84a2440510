from dotenv import load_dotenv
load_dotenv()

from loguru import logger
import sys
from io import StringIO
from pathlib import Path

from configuration_values import ConfigurationValues
from dsl import format_program, parse_program
from errors import DslError
from report import dump_records
from runner import run_source

LOG_BUFFER = StringIO()


def configure_logging(level: str | None = None):
    logger.remove()
    logger.add(sys.stderr, level=level or ConfigurationValues.get_log_level())
    logger.add(LOG_BUFFER, level="DEBUG")


def check(path: str, pretty: bool = False) -> int:
    # parse and resolve only
    text = Path(path).read_text(encoding="utf-8", errors="replace")
    try:
        program = parse_program(text)
    except DslError as e:
        print(f"{path}:{e}", file=sys.stderr)
        return 1
    logger.info(f"{path}: {len(program.statements)} statements")
    if pretty:
        print(format_program(program), end="")
    return 0


def run(path: str, seed: int | None = None, json_path: str | None = None, hex_floats: bool = False) -> int:
    text = Path(path).read_text(encoding="utf-8", errors="replace")
    result = run_source(text, seed=seed, hex_floats=hex_floats)
    stream = dump_records(result.records)
    if json_path:
        Path(json_path).write_text(stream, encoding="utf-8")
        logger.info(f"Wrote {len(result.records)} records to {json_path}")
    else:
        print(stream, end="")
    return result.exit_status


if __name__ == '__main__':
    import argparse

    parser = argparse.ArgumentParser(prog='diffspace', description='Check differential-space scripts')
    parser.add_argument('--log-level', help='stderr log level (default from DIFFSPACE_LOG_LEVEL)')
    parser.add_argument('--debug-log', metavar='FILE', help='Write the full debug log to FILE after the run')
    sub = parser.add_subparsers(dest='command', required=True)

    run_parser = sub.add_parser('run', help='Execute a script and print its JSON report stream')
    run_parser.add_argument('file')
    run_parser.add_argument('--seed', type=int, help='Sampling seed (default from DIFFSPACE_SEED)')
    run_parser.add_argument('--json', metavar='FILE', help='Write the report stream to FILE instead of stdout')
    run_parser.add_argument('--hex-floats', action='store_true', help='Print reals as exact hex strings')

    check_parser = sub.add_parser('check', help='Parse a script without running it')
    check_parser.add_argument('file')
    check_parser.add_argument('--pretty', action='store_true', help='Print the normalised program')
    args = parser.parse_args()

    configure_logging(args.log_level)

    if args.command == 'check':
        status = check(args.file, pretty=args.pretty)
    else:
        status = run(args.file, seed=args.seed, json_path=args.json, hex_floats=args.hex_floats)

    if args.debug_log:
        Path(args.debug_log).write_text(LOG_BUFFER.getvalue(), encoding="utf-8")

    sys.exit(status)
