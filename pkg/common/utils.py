import argparse
import collections
import concurrent.futures
import csv
import dataclasses
import hashlib
import json
import logging
import math
import platform
import shutil
import time
import typing
from pathlib import Path

import matplotlib
import numpy as np
import pydantic
import scipy
import yaml
from matplotlib.figure import Figure
from rapidfuzz import fuzz, process

import lab
from common.const import *
from common.models import ResultManifest, RunConfig
from lab.errors import ConfigError, IrlabError

__all__ = (
    "file_to_ext",
    "get_all_extensions",
    "load_config",
    "config_hash",
    "format_value",
    "write_csv",
    "write_svg",
    "write_errors",
    "TaskResult",
    "scan_executor",
    "cache_lookup",
    "cache_store",
    "cache_restore",
    "CommandOutcome",
    "Command",
)

logger = logging.getLogger("irlab.utils")

matplotlib.use("Agg")


def file_to_ext(str_path, base_path):
    # changes a file to an import-like string
    str_path = str_path.replace(base_path, "")
    str_path = str_path.replace("/", ".")
    return str_path.replace(".py", "")


def get_all_extensions(str_path, folder="exts"):
    # gets all command modules in a folder, sorted so --help is stable
    ext_files = collections.deque()
    base_path = str_path.replace("\\", "/")
    if base_path[-1] != "/":
        base_path += "/"

    for path in sorted(Path(f"{base_path}{folder}").glob("**/*.py")):
        ext = file_to_ext(path.as_posix(), base_path)
        if not ext.split(".")[-1].startswith("_"):
            ext_files.append(ext)

    return ext_files


def _fields_at(loc: tuple) -> list[str]:
    # field names of the model that owns the last element of a pydantic error location
    model: typing.Any = RunConfig
    for part in loc[:-1]:
        if isinstance(part, int):
            continue
        field = model.model_fields.get(part)
        if field is None:
            return []
        annotation = field.annotation
        while typing.get_origin(annotation) in (list, typing.Union):
            annotation = next(a for a in typing.get_args(annotation) if a is not type(None))
        if not (isinstance(annotation, type) and issubclass(annotation, pydantic.BaseModel)):
            return []
        model = annotation
    return list(model.model_fields)


def load_config(path: str | Path, overrides: dict[str, typing.Any] | None = None) -> RunConfig:
    """Reads a YAML run config and validates it strictly."""
    try:
        with open(path, "r", encoding="utf-8") as file:
            data = yaml.safe_load(file) or {}
    except FileNotFoundError:
        raise ConfigError(f"Config file {path} does not exist.") from None
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"Config file {path} is not valid YAML{where}: {exc.problem}.") from None

    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a mapping of sections.")

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "directory":
            data.setdefault("output", {})["directory"] = value
        elif key == "svg":
            if value:
                formats = data.setdefault("output", {}).setdefault("formats", ["csv"])
                if "svg" not in formats:
                    formats.append("svg")
        else:
            data[key] = value

    try:
        return RunConfig.model_validate(data)
    except pydantic.ValidationError as exc:
        error = exc.errors()[0]
        loc = tuple(error["loc"])
        dotted = ".".join(str(part) for part in loc)
        if error["type"] == "extra_forbidden":
            suggestion = None
            if match := process.extractOne(
                str(loc[-1]), _fields_at(loc), scorer=fuzz.ratio, score_cutoff=75
            ):
                suggestion = match[0]
            hint = f" Did you mean {suggestion}?" if suggestion else ""
            raise ConfigError(f"Unknown config key {dotted}.{hint}", key=dotted, suggestion=suggestion) from None
        raise ConfigError(f"Config key {dotted} is invalid: {error['msg']}.", key=dotted) from None


def config_hash(command: str, config: RunConfig) -> str:
    """SHA-256 of the canonical JSON of everything that can change the output bytes."""
    payload = {
        "command": command,
        "config": config.model_dump(mode="json", exclude={"threads": True, "output": {"directory"}}),
        "version": lab.__version__,
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def format_value(value: typing.Any, digits: int = METADATA["output"]["csv_digits"]) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return format(value, f".{digits}g")
    return str(value)


def write_csv(
    path: Path,
    header: typing.Sequence[str],
    rows: typing.Iterable[typing.Sequence[typing.Any]],
    fit: dict[str, typing.Any] | None = None,
) -> Path:
    """Plain CSV with 17 significant digits; an optional trailing ``fit:`` row."""
    with open(path, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
        if fit:
            footer = ["fit:"]
            for key, value in fit.items():
                footer.extend((key, format_value(value)))
            writer.writerow(footer)
    return path


def write_svg(
    path: Path,
    series: dict[str, tuple[typing.Sequence[float], typing.Sequence[float]]],
    xlabel: str,
    ylabel: str,
    logx: bool = False,
    logy: bool = False,
) -> Path:
    with matplotlib.rc_context({"svg.hashsalt": METADATA["output"]["svg_hashsalt"], "svg.fonttype": "none"}):
        fig = Figure(figsize=(6.0, 4.0))
        ax = fig.add_subplot()
        for label, (x, y) in series.items():
            ax.plot(x, y, marker="o", label=label)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if len(series) > 1:
            ax.legend()
        fig.savefig(path, format="svg", metadata={"Date": None})
    return path


@dataclasses.dataclass(frozen=True)
class TaskResult:
    index: int
    value: typing.Any = None
    error: str | None = None
    error_type: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _run_task(index: int, task: typing.Callable[[], typing.Any]) -> TaskResult:
    try:
        return TaskResult(index, task())
    except IrlabError as exc:
        logger.warning(f"Task {index} failed: {exc}")
        return TaskResult(index, error=str(exc), error_type=type(exc).__name__)
    except Exception as exc:
        logger.exception(f"Task {index} raised unexpectedly.")
        return TaskResult(index, error=str(exc) or repr(exc), error_type=type(exc).__name__)


def scan_executor(tasks: typing.Sequence[typing.Callable[[], typing.Any]], threads: int = 1) -> list[TaskResult]:
    """Runs independent tasks and returns their results in task order.

    A failing task yields a ``TaskResult`` carrying the error instead of a value.
    """
    if threads < 1:
        raise ConfigError(f"Thread count must be positive, got {threads}.", key="threads")
    if threads == 1 or len(tasks) <= 1:
        return [_run_task(i, task) for i, task in enumerate(tasks)]

    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_run_task, i, task) for i, task in enumerate(tasks)]
        return [future.result() for future in futures]


def write_errors(path: Path, command: str, failures: typing.Sequence[tuple[str, TaskResult]]) -> Path:
    return write_csv(
        path,
        ("command", "row", "parameter", "error_type", "message"),
        [(command, r.index, label, r.error_type, r.error) for label, r in failures],
    )


def _versions() -> dict[str, str]:
    return {
        "irlab": lab.__version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def cache_lookup(cache_dir: Path, key: str) -> ResultManifest | None:
    manifest_path = cache_dir / key / METADATA["output"]["manifest_file"]
    if not manifest_path.is_file():
        return None
    with open(manifest_path, "r", encoding="utf-8") as file:
        manifest = ResultManifest.model_validate(yaml.safe_load(file))
    if not all((cache_dir / key / name).is_file() for name in manifest.files):
        logger.warning(f"Cache entry {key[:12]} is incomplete; recomputing.")
        return None
    return manifest


def cache_store(cache_dir: Path, out_dir: Path, manifest: ResultManifest) -> Path:
    entry = cache_dir / manifest.config_hash
    entry.mkdir(parents=True, exist_ok=True)
    for name in manifest.files:
        shutil.copyfile(out_dir / name, entry / name)
    with open(entry / METADATA["output"]["manifest_file"], "w", encoding="utf-8") as file:
        yaml.safe_dump(manifest.model_dump(), file, sort_keys=True)
    return entry


def cache_restore(cache_dir: Path, out_dir: Path, manifest: ResultManifest) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    entry = cache_dir / manifest.config_hash
    restored = []
    for name in manifest.files:
        shutil.copyfile(entry / name, out_dir / name)
        restored.append(out_dir / name)
    return restored


@dataclasses.dataclass
class CommandOutcome:
    files: list[Path]
    rows_ok: int
    rows_failed: int
    cached: bool = False

    @property
    def exit_code(self) -> int:
        if self.rows_failed == 0:
            return 0
        return 1 if self.rows_ok else 3


class Command:
    """Base for sub-commands; creating one registers it with the lab.

    Subclasses set ``name`` and ``help`` and implement ``compute``, which writes
    its files into the output directory and reports them.
    """

    name: typing.ClassVar[str]
    help: typing.ClassVar[str]

    def __init__(self, lab_app):
        self.lab = lab_app
        lab_app.add_command(self)

    def add_arguments(self, parser: argparse.ArgumentParser):
        pass

    def prepare(self, config: RunConfig) -> typing.Any:
        """Builds the lab objects; errors raised here count as configuration errors."""
        return None

    def compute(self, config: RunConfig, prepared: typing.Any, out_dir: Path) -> CommandOutcome:
        raise NotImplementedError

    def wants_svg(self, config: RunConfig) -> bool:
        return "svg" in config.output.formats

    def record_failures(
        self, out_dir: Path, labels: typing.Sequence[str], results: typing.Sequence[TaskResult]
    ) -> list[Path]:
        failures = [(label, r) for label, r in zip(labels, results) if not r.ok]
        if not failures:
            return []
        return [write_errors(out_dir / METADATA["output"]["errors_file"], self.name, failures)]

    def execute(self, config: RunConfig, cache_dir: Path, force: bool = False) -> CommandOutcome:
        try:
            prepared = self.prepare(config)
        except ConfigError:
            raise
        except IrlabError as exc:
            raise ConfigError(f"Config for {self.name} is not usable: {exc}") from exc

        out_dir = Path(config.output.directory)
        key = config_hash(self.name, config)
        if not force and (manifest := cache_lookup(cache_dir, key)):
            logger.info(f"{self.name}: cache hit {key[:12]}, restoring {len(manifest.files)} files.")
            files = cache_restore(cache_dir, out_dir, manifest)
            return CommandOutcome(files, manifest.rows_ok, manifest.rows_failed, cached=True)

        out_dir.mkdir(parents=True, exist_ok=True)
        stale = out_dir / METADATA["output"]["errors_file"]
        if stale.exists():
            stale.unlink()

        start = time.perf_counter()
        outcome = self.compute(config, prepared, out_dir)
        manifest = ResultManifest(
            config_hash=key,
            command=self.name,
            files=[path.name for path in outcome.files],
            rows_ok=outcome.rows_ok,
            rows_failed=outcome.rows_failed,
            wall_clock=time.perf_counter() - start,
            versions=_versions(),
        )
        cache_store(cache_dir, out_dir, manifest)
        logger.info(
            f"{self.name}: {outcome.rows_ok} rows ok, {outcome.rows_failed} failed,"
            f" {manifest.wall_clock:.2f}s, cached as {key[:12]}."
        )
        return outcome
