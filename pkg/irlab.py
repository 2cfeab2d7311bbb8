from dotenv import load_dotenv

load_dotenv()

import argparse
import importlib
import logging
import os
import sys
import typing
from pathlib import Path

import common.utils as utils
from common.const import *
from lab import __version__
from lab.errors import ConfigError, IrlabError

logger = logging.getLogger("irlab")
logger.setLevel(logging.DEBUG)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2
EXIT_FAILED = 3


def configure_logging(verbose: bool = False, log_file: str | None = None):
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    stderr_handler = logging.StreamHandler()
    stderr_handler.setLevel(logging.INFO if verbose else logging.WARNING)
    logger.addHandler(stderr_handler)

    file_handler = logging.FileHandler(
        filename=log_file or METADATA["output"]["log_file"], encoding="utf-8", mode="a"
    )
    file_handler.setFormatter(logging.Formatter("%(asctime)s:%(levelname)s:%(name)s: %(message)s"))
    file_handler.setLevel(logging.INFO)
    logger.addHandler(file_handler)


class Lab:
    """Command registry and argument parser; commands register themselves through ``setup``."""

    def __init__(self):
        self.commands: dict[str, utils.Command] = {}
        self.parser = argparse.ArgumentParser(
            prog="irlab", description="Numerical experiments on the infrared problem of QED."
        )
        self.parser.add_argument("--version", action="version", version=f"irlab {__version__}")
        self.parser.add_argument("--list", action="store_true", help="list the available commands and exit")
        self.subparsers = self.parser.add_subparsers(dest="command", metavar="command")

    def load_extension(self, name: str):
        module = importlib.import_module(name)
        module.setup(self)

    def add_command(self, command: utils.Command):
        if command.name in self.commands:
            raise ValueError(f"Command {command.name} is already registered.")
        self.commands[command.name] = command

        sub = self.subparsers.add_parser(command.name, help=command.help, description=command.help)
        sub.add_argument("--config", required=True, help="path to the YAML run config")
        sub.add_argument("--out", help="output directory (overrides output.directory)")
        sub.add_argument("--threads", type=int, help="worker threads (overrides threads)")
        sub.add_argument("--seed", type=int, help="random seed (overrides seed)")
        sub.add_argument("--svg", action="store_true", help="also write SVG plots")
        sub.add_argument("--force", action="store_true", help="recompute even when the result is cached")
        sub.add_argument("--verbose", action="store_true", help="log progress to stderr")
        command.add_arguments(sub)

    def run(self, argv: typing.Sequence[str] | None = None, cache_dir: Path | None = None) -> int:
        args = self.parser.parse_args(argv)
        if args.list:
            for name, command in sorted(self.commands.items()):
                print(f"{name:<12}{command.help}")
            return EXIT_OK
        if args.command is None:
            self.parser.print_help()
            return EXIT_CONFIG

        configure_logging(args.verbose)
        command = self.commands[args.command]
        try:
            config = utils.load_config(
                args.config,
                {"directory": args.out, "threads": args.threads, "seed": args.seed, "svg": args.svg},
            )
            outcome = command.execute(config, cache_dir or CACHE_DIR, force=args.force)
        except Exception as error:
            return on_command_error(command, error)

        for path in outcome.files:
            logger.info(f"{command.name}: wrote {path}")
        return outcome.exit_code


def on_command_error(command: utils.Command, error: Exception) -> int:
    # expected errors are reported in one line; anything else is logged with
    # its traceback and counts as a total failure
    if isinstance(error, ConfigError):
        logger.error(f"{command.name}: {error}")
        return EXIT_CONFIG
    if isinstance(error, IrlabError):
        logger.error(f"{command.name} failed: {error}")
        return EXIT_FAILED

    logger.exception(f"{command.name} raised an unexpected error.", exc_info=error)
    return EXIT_FAILED


def create_lab() -> Lab:
    lab_app = Lab()
    for ext in utils.get_all_extensions(SRC_PATH):
        lab_app.load_extension(ext)
    return lab_app


def main(argv: typing.Sequence[str] | None = None) -> int:
    cache_dir = Path(os.environ["IRLAB_CACHE_DIR"]) if "IRLAB_CACHE_DIR" in os.environ else None
    return create_lab().run(argv, cache_dir)


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logger.info("Shutting down.")
