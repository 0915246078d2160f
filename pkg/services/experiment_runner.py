"""
Experiment orchestration: config parsing, replication fan-out and file emission.
"""
import json
import logging
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import pydantic
import scipy
from pydantic import ValidationError

from utils.errors import (
    ConfigConstraintError,
    ConfigNotFoundError,
    InvariantViolation,
    SimulationError,
    UnknownConfigKeyError,
)
from utils.io import (
    RecordWriter,
    ensure_writable_dir,
    read_json_file,
    write_json_file_atomic,
    write_summary_csv,
)
from utils.logging_setup import attach_run_log, detach_run_log
from utils.market import simulate_frame
from utils.metrics import (
    Records,
    classification_accuracy,
    efficiency_ratio,
    present_value,
    records_frame,
    summarize,
    welfare,
)
from utils.schema import (
    SUMMARY_SCHEMA_VERSION,
    ExperimentMode,
    ExperimentSpec,
    MarketConfig,
)

logger = logging.getLogger(__name__)

ACCOUNTING_TOLERANCE = 1e-9


def _error_path(error: dict) -> str:
    return ".".join(str(part) for part in error["loc"]) or "<root>"


def _translate_validation(e: ValidationError, source: str) -> SimulationError:
    errors = e.errors()
    unknown = [_error_path(err) for err in errors if err["type"] == "extra_forbidden"]
    if unknown:
        return UnknownConfigKeyError(f"{source}: unknown config key(s): {', '.join(unknown)}")
    details = "; ".join(f"{_error_path(err)}: {err['msg']}" for err in errors)
    return ConfigConstraintError(f"{source}: {details}")


def build_spec(data: dict, seed_override: Optional[int] = None, source: str = "config") -> ExperimentSpec:
    """
    Validate a config mapping into an ExperimentSpec.

    Raises:
        UnknownConfigKeyError: On keys the schema does not define
        ConfigConstraintError: On values violating a field constraint
    """
    if not isinstance(data, dict):
        raise ConfigConstraintError(f"{source}: top level must be a JSON object")
    if seed_override is not None:
        market = dict(data.get("market") or {})
        market["master_seed"] = seed_override
        data = {**data, "market": market}
    try:
        return ExperimentSpec.model_validate(data)
    except ValidationError as e:
        raise _translate_validation(e, source) from e


def parse_config(path: Path, seed_override: Optional[int] = None) -> ExperimentSpec:
    """
    Parse an experiment config file strictly.

    Args:
        path: JSON config file
        seed_override: Replaces market.master_seed when given (ASYM_SEED / --seed)

    Returns:
        ExperimentSpec with every default resolved

    Raises:
        ConfigNotFoundError: If the file is missing
        UnknownConfigKeyError: On unknown keys
        ConfigConstraintError: On malformed JSON or constraint violations
    """
    path = Path(path)
    if not path.exists():
        raise ConfigNotFoundError(f"config file not found: {path}")
    try:
        data = read_json_file(path)
    except json.JSONDecodeError as e:
        raise ConfigConstraintError(f"{path}: invalid JSON: {e}") from e
    spec = build_spec(data, seed_override, source=str(path))
    logger.info(f"Parsed config {path}: {len(spec.resolved_markets())} point(s), "
                f"structures {[s.value for s in spec.structures]}")
    return spec


def with_sweep(spec: ExperimentSpec, param: str, values: Sequence) -> ExperimentSpec:
    """Replace the spec's sweep axis."""
    data = spec.model_dump(mode="json")
    data["sweep"] = {"param": param, "values": list(values)}
    return build_spec(data, source="sweep")


def check_invariants(records: Records) -> None:
    """
    Per-record accounting checks.

    Raises:
        InvariantViolation: If utilities do not add up to welfare, or a
            non-accepted record carries payoffs
    """
    frame = records_frame(records)
    if frame.empty:
        return
    accepted = frame["accepted"].to_numpy(dtype=bool)
    welfare_values = frame["welfare_contribution"].to_numpy(dtype=float)
    gap = frame["agent_utility"].to_numpy(dtype=float) + frame["principal_profit"].to_numpy(dtype=float) \
        - welfare_values
    broken = accepted & (np.abs(gap) > ACCOUNTING_TOLERANCE * np.maximum(1.0, np.abs(welfare_values)))
    if broken.any():
        k = int(np.flatnonzero(broken)[0])
        r = frame.iloc[k]
        raise InvariantViolation(
            f"accounting identity broken for replication {r['replication']}, cycle {r['cycle']}, "
            f"agent {r['agent_id']}: gap {gap[k]:.3e}"
        )

    payoffs = frame[["wage", "agent_utility", "principal_profit", "welfare_contribution"]].to_numpy(dtype=float)
    leaked = ~accepted & (payoffs != 0.0).any(axis=1)
    if leaked.any():
        r = frame.iloc[int(np.flatnonzero(leaked)[0])]
        raise InvariantViolation(f"non-accepted record with payoffs: agent {r['agent_id']}, cycle {r['cycle']}")

    checked = ["effort", "wage", "agent_utility", "principal_profit", "rent"]
    finite = np.isfinite(frame[checked].to_numpy(dtype=float))
    if not finite.all():
        row, col = (int(i[0]) for i in np.nonzero(~finite))
        r = frame.iloc[row]
        raise InvariantViolation(f"non-finite {checked[col]} for agent {r['agent_id']}, cycle {r['cycle']}")


def _replication_task(args: Tuple[MarketConfig, int]) -> pd.DataFrame:
    config, replication = args
    return simulate_frame(config, replication)


def iter_replications(config: MarketConfig, workers: int = 1) -> Iterator[pd.DataFrame]:
    """
    Yield each replication's records frame in replication order.

    With more than one worker the replications run in a process pool;
    ``map`` keeps results in submission order regardless of completion.
    """
    tasks = [(config, r) for r in range(config.replications)]
    if workers <= 1 or len(tasks) <= 1:
        for task in tasks:
            yield _replication_task(task)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(_replication_task, tasks)


def point_configs(spec: ExperimentSpec) -> List[List[MarketConfig]]:
    """Market configs per sweep point, one per structure, with the run mode applied."""
    points = []
    for market in spec.resolved_markets():
        configs = []
        for structure in spec.structures:
            update = {"structure": structure}
            if spec.mode == ExperimentMode.SINGLE:
                update["cycles"] = 1
            configs.append(market.model_copy(update=update))
        points.append(configs)
    return points


def _json_rows(table: pd.DataFrame) -> list:
    clean = table.astype(object).where(table.notna(), None)
    return clean.to_dict(orient="records")


def _finite_or_none(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


def _headline(frame: pd.DataFrame, config: MarketConfig) -> dict:
    n_reps = max(int(frame["replication"].nunique()), 1) if not frame.empty else 1
    total = welfare(frame)
    arms = {}
    for arm, rows in frame.groupby("arm", sort=True):
        arms[arm] = {
            "welfare_per_replication": welfare(rows) / n_reps,
            "welfare_per_agent": welfare(rows) / (n_reps * config.n_agents),
            "efficiency_ratio": _finite_or_none(efficiency_ratio(rows)),
        }
    accuracy = {arm.value: value for arm, value in classification_accuracy(frame).items()}
    pv = present_value(frame, config.discount)
    return {
        "structure": config.structure.value,
        "welfare_total": total,
        "arms": arms,
        "classification_accuracy": accuracy,
        "present_value": _json_rows(pv),
    }


def run(spec: ExperimentSpec, workers: Optional[int] = None) -> int:
    """
    Execute every sweep point and structure of a spec and write all outputs.

    Writes records.csv (records_<ii>.csv per sweep point), summary.csv,
    summary.json, resolved_config.json, run_metadata.json and run.log into the
    spec's output directory.

    Returns:
        0 on success, otherwise the exit code of the failure
    """
    started = datetime.now(timezone.utc)
    clock = time.perf_counter()
    handler = None
    try:
        out_dir = ensure_writable_dir(Path(spec.output_dir))
        handler = attach_run_log(out_dir)
        n_workers = workers or spec.workers or 1
        write_json_file_atomic(out_dir / "resolved_config.json", spec.model_dump(mode="json"))

        tables = []
        headlines = []
        record_files = []
        for index, configs in enumerate(point_configs(spec)):
            name = "records.csv" if spec.sweep is None else f"records_{index:02d}.csv"
            record_files.append(name)
            frames = []
            with RecordWriter(out_dir / name) as writer:
                for config in configs:
                    logger.info(f"Point {index}: {config.structure.value}, {config.replications} replications, "
                                f"{config.cycles} cycle(s), {config.n_agents} agents")
                    point_frames = []
                    for frame in iter_replications(config, n_workers):
                        check_invariants(frame)
                        writer.write(frame)
                        point_frames.append(frame)
                    point_frame = pd.concat(point_frames, ignore_index=True)
                    headline = _headline(point_frame, config)
                    frames.append(point_frame)
                    if spec.sweep is not None:
                        headline = {"sweep_param": spec.sweep.param,
                                    "sweep_value": spec.sweep.values[index], **headline}
                    headlines.append(headline)

            table = summarize(pd.concat(frames, ignore_index=True))
            if spec.sweep is not None:
                table.insert(0, "sweep_value", spec.sweep.values[index])
                table.insert(0, "sweep_param", spec.sweep.param)
            tables.append(table)

        summary = pd.concat(tables, ignore_index=True)
        write_summary_csv(out_dir / "summary.csv", summary)
        write_json_file_atomic(out_dir / "summary.json", {
            "schema": SUMMARY_SCHEMA_VERSION,
            "rows": _json_rows(summary),
            "experiments": headlines,
        })

        if "md" in spec.report_formats:
            from services.report_builder import write_markdown_report
            write_markdown_report(out_dir)

        finished = datetime.now(timezone.utc)
        write_json_file_atomic(out_dir / "run_metadata.json", {
            "started_at": started.isoformat(),
            "finished_at": finished.isoformat(),
            "duration_seconds": round(time.perf_counter() - clock, 3),
            "record_files": record_files,
            "workers": n_workers,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
            "pydantic": pydantic.VERSION,
        })
        logger.info(f"Run finished in {time.perf_counter() - clock:.1f}s, outputs in {out_dir}")
        return 0

    except SimulationError as e:
        logger.error(f"Run failed: {e}", exc_info=True)
        return e.exit_code
    except OSError as e:
        logger.error(f"Output not writable: {e}", exc_info=True)
        return 2
    finally:
        if handler is not None:
            detach_run_log(handler)
