"""
Aggregation of cycle records into welfare, selection and effort metrics,
significance tests and the summary table.
"""
import logging
import math
from typing import Dict, Iterable, List, NamedTuple, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from utils.econ import ABILITY_ORDER, Ability
from utils.errors import DomainError
from utils.schema import RECORD_COLUMNS, Arm, CycleRecord, MarketStructure

logger = logging.getLogger(__name__)

Records = Union[Sequence[CycleRecord], pd.DataFrame]

STRUCTURE_ORDER = [s.value for s in MarketStructure]
ARM_ORDER = [a.value for a in Arm]
ABILITY_VALUES = [a.value for a in ABILITY_ORDER]
GROUP_KEYS = ["structure", "arm", "ability"]
RECORD_SORT = GROUP_KEYS + ["replication", "cycle", "agent_id"]

SUMMARY_COLUMNS = [
    "structure", "arm", "ability",
    "n_records", "n_accepted", "selection_share", "classification_accuracy",
    "effort_mean", "effort_std",
    "principal_profit_mean", "principal_profit_std",
    "agent_utility_mean", "agent_utility_std",
    "welfare_mean", "welfare_std",
    "rent_mean", "rent_std",
    "effort_gain", "effort_gain_pct", "selection_gain", "welfare_gain",
    "effort_p_value", "welfare_p_value",
]


class WelchResult(NamedTuple):
    t: float
    p: float


class MannKendallResult(NamedTuple):
    s: int
    z: float
    p: float


def records_frame(records: Records) -> pd.DataFrame:
    """Records as a DataFrame with enum columns stored as their string values."""
    if isinstance(records, pd.DataFrame):
        return records
    rows = [r.model_dump(mode="json") for r in records]
    return pd.DataFrame(rows, columns=RECORD_COLUMNS)


def frame_records(frame: pd.DataFrame) -> List[CycleRecord]:
    """Inverse of records_frame."""
    return [CycleRecord.model_validate(row) for row in frame[RECORD_COLUMNS].to_dict(orient="records")]


def _sorted(frame: pd.DataFrame) -> pd.DataFrame:
    # fixed row order makes float sums independent of input order
    if frame.empty:
        return frame
    keyed = frame.assign(
        _s=pd.Categorical(frame["structure"], STRUCTURE_ORDER, ordered=True),
        _a=pd.Categorical(frame["arm"], ARM_ORDER, ordered=True),
        _b=pd.Categorical(frame["ability"], ABILITY_VALUES, ordered=True),
    )
    keyed = keyed.sort_values(["_s", "_a", "_b", "replication", "cycle", "agent_id"], kind="mergesort")
    return keyed.drop(columns=["_s", "_a", "_b"]).reset_index(drop=True)


def _require_arms(frame: pd.DataFrame) -> Tuple[pd.DataFrame, pd.DataFrame]:
    with_ai = frame[frame["arm"] == Arm.WITH_AI.value]
    without_ai = frame[frame["arm"] == Arm.WITHOUT_AI.value]
    if with_ai.empty or without_ai.empty:
        raise DomainError("both arms must be present")
    return with_ai, without_ai


def welfare(records: Records) -> float:
    """Total welfare V − c (net of manipulation cost) over accepted records."""
    frame = records_frame(records)
    if frame.empty:
        return 0.0
    accepted = frame[frame["accepted"]]
    return float(accepted["welfare_contribution"].sum())


def selection_shares(frame: pd.DataFrame) -> Dict[Ability, float]:
    """Accepted-of-class over accepted-total."""
    accepted = frame[frame["accepted"]]
    total = len(accepted)
    return {
        a: (float((accepted["ability"] == a.value).sum()) / total if total else 0.0)
        for a in ABILITY_ORDER
    }


def selection_improvement(records: Records) -> Dict[Ability, float]:
    """Per-class change in selection share, WithAI minus WithoutAI."""
    with_ai, without_ai = _require_arms(records_frame(records))
    ai, control = selection_shares(with_ai), selection_shares(without_ai)
    return {a: ai[a] - control[a] for a in ABILITY_ORDER}


def _class_effort_means(frame: pd.DataFrame) -> Dict[Ability, float]:
    accepted = frame[frame["accepted"]]
    means = accepted.groupby("ability")["effort"].mean()
    return {a: float(means[a.value]) for a in ABILITY_ORDER if a.value in means.index}


def effort_improvement(records: Records) -> Dict[Ability, float]:
    """
    Per-class mean-effort difference WithAI − WithoutAI over accepted records.

    A class missing from one arm is logged and left out.
    """
    with_ai, without_ai = _require_arms(records_frame(records))
    ai, control = _class_effort_means(with_ai), _class_effort_means(without_ai)
    result = {}
    for ability in ABILITY_ORDER:
        if ability not in ai or ability not in control:
            logger.warning(f"Class {ability.value} absent in one arm, excluded from effort improvement")
            continue
        result[ability] = ai[ability] - control[ability]
    return result


def effort_improvement_percent(records: Records) -> Dict[Ability, float]:
    """Effort improvement in percent of the WithoutAI class mean."""
    with_ai, without_ai = _require_arms(records_frame(records))
    control = _class_effort_means(without_ai)
    return {
        a: 100.0 * diff / control[a] if control[a] != 0 else math.nan
        for a, diff in effort_improvement(records).items()
    }


def welfare_gain(records: Records) -> Dict[Ability, float]:
    """Per-class mean welfare contribution per agent-cycle, WithAI − WithoutAI."""
    with_ai, without_ai = _require_arms(records_frame(records))
    ai = with_ai.groupby("ability")["welfare_contribution"].mean()
    control = without_ai.groupby("ability")["welfare_contribution"].mean()
    return {
        a: float(ai[a.value] - control[a.value])
        for a in ABILITY_ORDER if a.value in ai.index and a.value in control.index
    }


def welch_t(sample_a: Iterable[float], sample_b: Iterable[float]) -> WelchResult:
    """
    Welch's unequal-variance t-test, two-sided.

    Raises:
        DomainError: If either sample has fewer than two values
    """
    a = np.asarray(list(sample_a), dtype=float)
    b = np.asarray(list(sample_b), dtype=float)
    if a.size < 2 or b.size < 2:
        raise DomainError("welch_t needs at least two values per sample")
    if a.var(ddof=1) == 0.0 and b.var(ddof=1) == 0.0:
        diff = a.mean() - b.mean()
        if diff == 0.0:
            return WelchResult(0.0, 1.0)
        return WelchResult(math.copysign(math.inf, diff), 0.0)
    result = stats.ttest_ind(a, b, equal_var=False)
    return WelchResult(float(result.statistic), float(min(max(result.pvalue, 0.0), 1.0)))


def mann_kendall(series: Sequence[float]) -> MannKendallResult:
    """
    Mann-Kendall trend test with tie-corrected variance, two-sided p.

    A negative S (and z) indicates a decreasing trend.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 3:
        raise DomainError("mann_kendall needs at least three points")
    s = int(sum(np.sign(x[j] - x[i]) for i in range(n - 1) for j in range(i + 1, n)))
    _, counts = np.unique(x, return_counts=True)
    ties = sum(t * (t - 1) * (2 * t + 5) for t in counts if t > 1)
    variance = (n * (n - 1) * (2 * n + 5) - ties) / 18.0
    if variance <= 0 or s == 0:
        return MannKendallResult(s, 0.0, 1.0)
    z = (s - 1) / math.sqrt(variance) if s > 0 else (s + 1) / math.sqrt(variance)
    return MannKendallResult(s, float(z), float(2.0 * stats.norm.sf(abs(z))))


def mean_ci(values: Iterable[float], level: float = 0.95) -> Tuple[float, float]:
    """Mean and t-based confidence half-width."""
    x = np.asarray(list(values), dtype=float)
    if x.size == 0:
        return math.nan, math.nan
    if x.size == 1:
        return float(x[0]), 0.0
    half = stats.t.ppf(0.5 + level / 2.0, x.size - 1) * x.std(ddof=1) / math.sqrt(x.size)
    return float(x.mean()), float(half)


def classification_accuracy(records: Records) -> Dict[Arm, float]:
    """Share of records whose MAP class equals the true class, per arm."""
    frame = records_frame(records)
    result = {}
    for arm in Arm:
        rows = frame[frame["arm"] == arm.value]
        if not rows.empty:
            result[arm] = float((rows["map_ability"] == rows["ability"]).mean())
    return result


def efficiency_ratio(records: Records) -> float:
    """Realized welfare over first-best welfare of all records."""
    frame = records_frame(records)
    first_best = float(frame["first_best_welfare"].sum()) if not frame.empty else 0.0
    if first_best == 0.0:
        return math.nan
    return float(frame["welfare_contribution"].sum()) / first_best


def present_value(records: Records, discount: float) -> pd.DataFrame:
    """
    Mean per-agent present value Σ δ^t·u_t of utilities and welfare.

    Returns:
        One row per (structure, arm, ability)
    """
    frame = _sorted(records_frame(records))
    if frame.empty:
        return pd.DataFrame(columns=GROUP_KEYS + ["pv_agent_utility", "pv_principal_profit", "pv_welfare"])
    weight = discount ** frame["cycle"].astype(float)
    weighted = frame.assign(
        pv_agent_utility=weight * frame["agent_utility"],
        pv_principal_profit=weight * frame["principal_profit"],
        pv_welfare=weight * frame["welfare_contribution"],
    )
    per_agent = weighted.groupby(GROUP_KEYS + ["replication", "agent_id"], sort=False)[
        ["pv_agent_utility", "pv_principal_profit", "pv_welfare"]
    ].sum()
    return per_agent.groupby(level=GROUP_KEYS, sort=False).mean().reset_index()


def _stat(values: pd.Series) -> Tuple[float, float]:
    if values.empty:
        return math.nan, math.nan
    return float(values.mean()), float(values.std(ddof=0))


def _p_value(a: pd.Series, b: pd.Series) -> float:
    try:
        return welch_t(a, b).p
    except DomainError:
        return math.nan


def summarize(records: Records) -> pd.DataFrame:
    """
    Summary table keyed by (structure, arm, ability).

    Effort, profit, utility and rent statistics use accepted records; welfare
    statistics count every record (non-accepted contribute 0). Improvement and
    p-value columns compare the two arms of the same (structure, ability) and
    repeat on both arm rows. Standard deviations are population (ddof=0).
    """
    frame = _sorted(records_frame(records))
    if frame.empty:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)

    rows: List[dict] = []
    for (structure, arm), arm_frame in frame.groupby(["structure", "arm"], sort=False):
        shares = selection_shares(arm_frame)
        for ability in ABILITY_ORDER:
            group = arm_frame[arm_frame["ability"] == ability.value]
            if group.empty:
                continue
            accepted = group[group["accepted"]]
            effort = _stat(accepted["effort"])
            profit = _stat(accepted["principal_profit"])
            utility = _stat(accepted["agent_utility"])
            welfare_stats = _stat(group["welfare_contribution"])
            rent = _stat(accepted["rent"])
            rows.append({
                "structure": structure, "arm": arm, "ability": ability.value,
                "n_records": int(len(group)), "n_accepted": int(len(accepted)),
                "selection_share": shares[ability],
                "classification_accuracy": float((group["map_ability"] == group["ability"]).mean()),
                "effort_mean": effort[0], "effort_std": effort[1],
                "principal_profit_mean": profit[0], "principal_profit_std": profit[1],
                "agent_utility_mean": utility[0], "agent_utility_std": utility[1],
                "welfare_mean": welfare_stats[0], "welfare_std": welfare_stats[1],
                "rent_mean": rent[0], "rent_std": rent[1],
            })

    table = pd.DataFrame(rows)
    for col in ["effort_gain", "effort_gain_pct", "selection_gain", "welfare_gain",
                "effort_p_value", "welfare_p_value"]:
        table[col] = math.nan

    for (structure, ability), pair in table.groupby(["structure", "ability"], sort=False):
        ai_rows = pair[pair["arm"] == Arm.WITH_AI.value]
        control_rows = pair[pair["arm"] == Arm.WITHOUT_AI.value]
        if ai_rows.empty or control_rows.empty:
            continue
        ai, control = ai_rows.iloc[0], control_rows.iloc[0]
        scope = frame[(frame["structure"] == structure) & (frame["ability"] == ability)]
        ai_scope = scope[scope["arm"] == Arm.WITH_AI.value]
        control_scope = scope[scope["arm"] == Arm.WITHOUT_AI.value]
        effort_gain = ai["effort_mean"] - control["effort_mean"]
        table.loc[pair.index, "effort_gain"] = effort_gain
        table.loc[pair.index, "effort_gain_pct"] = (
            100.0 * effort_gain / control["effort_mean"] if control["effort_mean"] else math.nan
        )
        table.loc[pair.index, "selection_gain"] = ai["selection_share"] - control["selection_share"]
        table.loc[pair.index, "welfare_gain"] = ai["welfare_mean"] - control["welfare_mean"]
        table.loc[pair.index, "effort_p_value"] = _p_value(
            ai_scope.loc[ai_scope["accepted"], "effort"], control_scope.loc[control_scope["accepted"], "effort"]
        )
        table.loc[pair.index, "welfare_p_value"] = _p_value(
            ai_scope["welfare_contribution"], control_scope["welfare_contribution"]
        )

    return table[SUMMARY_COLUMNS].reset_index(drop=True)
