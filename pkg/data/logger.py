"""
Data Logger

Training-curve logging to CSV with a ring buffer of recent rows, plus the
process-wide logging setup (rich console + line-delimited JSON file).
"""

import csv
import json
import logging
import threading
import time
from pathlib import Path
from typing import Dict, List, Optional

from rich.console import Console
from rich.logging import RichHandler

# Attributes every LogRecord carries; anything else came in through `extra=`.
_RESERVED = set(vars(logging.makeLogRecord({}))) | {'message', 'asctime'}


class JsonLinesFormatter(logging.Formatter):
    """Format each record as one JSON object per line."""

    def format(self, record: logging.LogRecord) -> str:
        payload = {
            'ts': round(record.created, 6),
            'level': record.levelname,
            'logger': record.name,
            'message': record.getMessage(),
        }
        for key, value in vars(record).items():
            if key not in _RESERVED and not key.startswith('_'):
                payload[key] = value
        if record.exc_info:
            payload['exception'] = self.formatException(record.exc_info)
        return json.dumps(payload, default=str)


def setup_logging(level: str = 'INFO', jsonl_path: Optional[Path] = None,
                  console: bool = True) -> logging.Logger:
    """
    Configure root logging for a CLI run.

    Args:
        level: Log level name
        jsonl_path: Optional line-delimited JSON log file (appended)
        console: Install a rich console handler on stderr

    Returns:
        The root logger
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, '_csg_handler', False):
            root.removeHandler(handler)
            handler.close()

    root.setLevel(level.upper())

    if console:
        rich_handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=False)
        rich_handler._csg_handler = True
        root.addHandler(rich_handler)

    if jsonl_path is not None:
        jsonl_path = Path(jsonl_path)
        jsonl_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(jsonl_path, mode='a', encoding='utf-8')
        file_handler.setFormatter(JsonLinesFormatter())
        file_handler._csg_handler = True
        root.addHandler(file_handler)

    return root


class TrainingLogger:
    """
    Training-curve logging to a CSV file with metadata headers.
    """

    def __init__(self):
        self.csv_file: Optional[Path] = None
        self.csv_writer = None
        self.file_handle = None
        self.is_logging = False
        self.lock = threading.Lock()
        self.headers: List[str] = []
        self.sample_count = 0
        self.flush_interval = 100  # Flush every N rows

    def start_logging(self, filepath: Path, headers: List[str], metadata: Dict = None):
        """
        Start logging to CSV file.

        Args:
            filepath: Path to CSV file
            headers: List of column headers
            metadata: Optional metadata written as '# key: value' comments
        """
        with self.lock:
            self.csv_file = Path(filepath)
            self.csv_file.parent.mkdir(parents=True, exist_ok=True)

            self.file_handle = open(self.csv_file, 'w', newline='')

            if metadata:
                for key, value in metadata.items():
                    self.file_handle.write(f"# {key}: {value}\n")

            self.csv_writer = csv.DictWriter(self.file_handle, fieldnames=headers,
                                             extrasaction='ignore')
            self.csv_writer.writeheader()

            self.headers = headers
            self.is_logging = True
            self.sample_count = 0

    def log(self, row: Dict):
        """
        Write one row. Rows are dropped when no file is open.

        Args:
            row: Dictionary keyed by the CSV headers
        """
        with self.lock:
            if self.csv_writer:
                self.csv_writer.writerow(row)
                self.sample_count += 1

                if self.sample_count % self.flush_interval == 0:
                    self.file_handle.flush()

    def stop_logging(self):
        """Stop logging and close file."""
        with self.lock:
            if self.file_handle:
                self.file_handle.flush()
                self.file_handle.close()
                self.file_handle = None
                self.csv_writer = None

            self.is_logging = False
        if self.csv_file is not None:
            logging.getLogger(__name__).debug(
                "Logged %d rows to %s", self.sample_count, self.csv_file)


class StageTimer:
    """Wall-clock timer used for run-manifest timings."""

    def __init__(self):
        self.start = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self.start
