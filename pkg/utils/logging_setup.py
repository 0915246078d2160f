"""
Log routing for simulator runs: stdout, the application log under logs/ and
a run.log inside each output directory.
"""
import logging
import sys
from pathlib import Path
from typing import Optional

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(name)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'
DEFAULT_LOG_FILE = Path(__file__).parent.parent / "logs" / "app.log"


def _formatted(handler: logging.Handler, level: int) -> logging.Handler:
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT))
    return handler


def setup_logging(log_level: str = "INFO", log_file: Optional[Path] = None) -> logging.Logger:
    """
    Send simulator logs at ``log_level`` to stdout and to ``log_file`` (logs/app.log).

    The root logger's previous handlers are replaced; file handlers among them are closed.
    """
    level = getattr(logging, log_level.upper(), logging.INFO)
    root = logging.getLogger()
    root.setLevel(level)
    for handler in list(root.handlers):
        root.removeHandler(handler)
        if isinstance(handler, logging.FileHandler):
            handler.close()

    log_file = log_file or DEFAULT_LOG_FILE
    log_file.parent.mkdir(parents=True, exist_ok=True)
    root.addHandler(_formatted(logging.StreamHandler(sys.stdout), level))
    root.addHandler(_formatted(logging.FileHandler(log_file, encoding='utf-8'), level))
    return root


def attach_run_log(run_dir: Path) -> logging.Handler:
    """
    Mirror all log records of one run into <run_dir>/run.log.

    Returns:
        The handler, to be passed to detach_run_log when the run ends
    """
    run_dir.mkdir(parents=True, exist_ok=True)
    handler = _formatted(logging.FileHandler(run_dir / "run.log", mode='w', encoding='utf-8'), logging.DEBUG)
    logging.getLogger().addHandler(handler)
    return handler


def detach_run_log(handler: logging.Handler) -> None:
    logging.getLogger().removeHandler(handler)
    handler.close()
