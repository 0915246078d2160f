"""
Run-directory files: JSON reads, atomic JSON/CSV writes, schema-tagged CSV
reads and the streaming records writer.
"""
import json
import logging
import tempfile
from pathlib import Path
from typing import Optional, Tuple

import pandas as pd

from utils.errors import OutputNotWritableError
from utils.schema import RECORD_COLUMNS, RECORDS_SCHEMA_VERSION, SUMMARY_SCHEMA_VERSION

logger = logging.getLogger(__name__)

SCHEMA_PREFIX = "#schema="


def read_json_file(file_path: Path) -> dict:
    """Parse a UTF-8 JSON document (experiment config or run summary)."""
    text = Path(file_path).read_text(encoding='utf-8')
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        logger.warning(f"Invalid JSON in {file_path}: {e}")
        raise


def _write_atomic(file_path: Path, write) -> None:
    tmp_path = None
    try:
        file_path.parent.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(
            mode='w',
            encoding='utf-8',
            dir=file_path.parent,
            delete=False,
            suffix='.tmp',
            newline='',
        ) as tmp_file:
            tmp_path = Path(tmp_file.name)
            write(tmp_file)
        tmp_path.replace(file_path)
        logger.debug(f"Successfully wrote {file_path}")
    except Exception as e:
        logger.error(f"Failed to write {file_path}: {e}", exc_info=True)
        if tmp_path is not None and tmp_path.exists():
            tmp_path.unlink()
        raise


def write_json_file_atomic(file_path: Path, data) -> None:
    """
    Write JSON to file atomically (using temp file + rename).

    Args:
        file_path: Path where to write the file
        data: JSON-serializable object
    """
    _write_atomic(file_path, lambda f: json.dump(data, f, ensure_ascii=False, indent=2))


def write_text_atomic(file_path: Path, text: str) -> None:
    _write_atomic(file_path, lambda f: f.write(text))


def write_csv_atomic(file_path: Path, frame: pd.DataFrame, schema: str) -> None:
    """Write a DataFrame as CSV with a leading schema line."""
    def write(f):
        f.write(f"{SCHEMA_PREFIX}{schema}\n")
        frame.to_csv(f, index=False, lineterminator="\n")
    _write_atomic(file_path, write)


def read_csv_with_schema(file_path: Path) -> Tuple[pd.DataFrame, Optional[str]]:
    """
    Read a CSV written by this package.

    Returns:
        (frame with floats parsed round-trip exactly, schema version or None)
    """
    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            first = f.readline().strip()
        schema = first[len(SCHEMA_PREFIX):] if first.startswith(SCHEMA_PREFIX) else None
        frame = pd.read_csv(file_path, skiprows=1 if schema else 0, float_precision="round_trip")
        logger.debug(f"Read {len(frame)} rows from {file_path} (schema {schema})")
        return frame, schema
    except FileNotFoundError:
        logger.error(f"CSV file not found: {file_path}")
        raise


def write_summary_csv(file_path: Path, table: pd.DataFrame) -> None:
    write_csv_atomic(file_path, table, SUMMARY_SCHEMA_VERSION)


def read_summary_csv(file_path: Path) -> pd.DataFrame:
    frame, schema = read_csv_with_schema(file_path)
    if schema != SUMMARY_SCHEMA_VERSION:
        logger.warning(f"Unexpected summary schema {schema} in {file_path}")
    return frame


def ensure_writable_dir(directory: Path) -> Path:
    """
    Create the directory if needed and check that files can be written into it.

    Raises:
        OutputNotWritableError: If the directory cannot be created or written
    """
    try:
        directory.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=directory, prefix=".writable", delete=True):
            pass
        return directory
    except OSError as e:
        logger.error(f"Output directory not writable: {directory}: {e}")
        raise OutputNotWritableError(f"output directory not writable: {directory}") from e


class RecordWriter:
    """
    Streams record frames to a CSV file in call order.

    The file is written under a temporary name and moved into place on close,
    so a crashed run never leaves a truncated records file behind.
    """

    def __init__(self, file_path: Path):
        self.file_path = file_path
        self._tmp_path = file_path.with_name(file_path.name + ".partial")
        self._handle = open(self._tmp_path, 'w', encoding='utf-8', newline='')
        self._handle.write(f"{SCHEMA_PREFIX}{RECORDS_SCHEMA_VERSION}\n")
        self._handle.write(",".join(RECORD_COLUMNS) + "\n")
        self.rows_written = 0

    def write(self, frame: pd.DataFrame) -> None:
        """Append rows laid out as records_frame (RECORD_COLUMNS, enum values as strings)."""
        if frame.empty:
            return
        frame[RECORD_COLUMNS].to_csv(self._handle, index=False, header=False, lineterminator="\n")
        self.rows_written += len(frame)

    def close(self) -> None:
        self._handle.close()
        self._tmp_path.replace(self.file_path)
        logger.info(f"Wrote {self.rows_written} records to {self.file_path}")

    def abort(self) -> None:
        self._handle.close()
        if self._tmp_path.exists():
            self._tmp_path.unlink()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self.abort()
        return False
