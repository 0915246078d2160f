"""
Configuration module for the contract-market simulator.
Loads environment variables and validates the runtime settings.
"""
import os
import sys
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Project root directory
PROJECT_ROOT = Path(__file__).parent

# Paths
OUTPUT_DIR = PROJECT_ROOT / os.getenv("OUTPUT_DIR", "runs")
TEMPLATES_DIR = PROJECT_ROOT / "templates"
LOGS_DIR = PROJECT_ROOT / "logs"
REPORT_TEMPLATE = "report.md.j2"

# Logging
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")

# Simulation
# ASYM_SEED overrides market.master_seed of any config when set.
ASYM_SEED = os.getenv("ASYM_SEED")
WORKERS = os.getenv("WORKERS", "1")

# Ensure required directories exist
LOGS_DIR.mkdir(parents=True, exist_ok=True)


def seed_override():
    """ASYM_SEED as an integer, or None when unset."""
    if ASYM_SEED is None or ASYM_SEED.strip() == "":
        return None
    return int(ASYM_SEED)


def worker_count() -> int:
    return int(WORKERS)


def validate_config():
    """Validate environment settings; exits with the config-constraint code on error."""
    try:
        seed = seed_override()
    except ValueError:
        print(f"ERROR: ASYM_SEED must be an unsigned 64-bit integer, got '{ASYM_SEED}'.")
        sys.exit(6)
    if seed is not None and not 0 <= seed < (1 << 64):
        print(f"ERROR: ASYM_SEED out of range: {seed}")
        sys.exit(6)

    try:
        workers = worker_count()
    except ValueError:
        workers = 0
    if workers < 1:
        print(f"ERROR: WORKERS must be a positive integer, got '{WORKERS}'.")
        sys.exit(6)
