import os
import typing
from pathlib import Path

import yaml

__all__ = ("SRC_PATH", "OutputTyping", "MetadataTyping", "METADATA", "CACHE_DIR")

# the entry point and the test suite import this from different working
# directories, so resolve the repository root from this file
SRC_PATH = Path(__file__).parent.parent.absolute().as_posix()


class OutputTyping(typing.TypedDict):
    csv_digits: int
    svg_hashsalt: str
    errors_file: str
    manifest_file: str
    log_file: str


class MetadataTyping(typing.TypedDict):
    basis_hard_limit: int
    dense_limit: int
    output: OutputTyping


METADATA_PATH = os.environ.get("IRLAB_METADATA_PATH", f"{SRC_PATH}/metadata.yml")
with open(METADATA_PATH, "r") as file:
    METADATA: MetadataTyping = yaml.safe_load(file)

CACHE_DIR = Path(os.environ.get("IRLAB_CACHE_DIR", Path.home() / ".cache" / "irlab"))
