"""
Figures of merit, acceptance checks and trace CSV IO.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.errors import NeverSettles
from src.models import ScenarioEvent
from src.numerics import settling_time

logger = logging.getLogger(__name__)

# Single source of truth for pass/fail; the test suite imports this table.
ACCEPTANCE_THRESHOLDS = {
    "startup_s": 0.1,
    "steady_cycles": 5,
    "event_window_s": 0.010,
    "settling_limit_s": 0.050,
    "settling_band_pct": 2.0,
    "power_step_tolerance": 0.10,
    "pv_power_tolerance": 0.01,
    "window_power_tolerance": 0.10,
    "bus_band": 0.02,
    "sharing_tolerance": 0.05,
    "total_power_tolerance": 0.05,
    "frequency_deviation_limit": 0.002,
    "mppt_efficiency": 0.99,
}

CSV_FLOAT_FORMAT = "%.9g"


def trace_columns(m: int) -> List[str]:
    """CSV column names in declared order for m VSIs"""
    return (
        ["t", "v_dc", "v_pv", "i_pv", "p_pv", "p_bat", "p_dcload"]
        + [f"p_vsi{j}" for j in range(1, m + 1)]
        + ["v_pcc_rms", "f_pcc"]
        + [f"f_bus{j}" for j in range(1, m + 1)]
        + [f"chosen_vectors{j}" for j in range(1, m + 1)]
        + ["pv_switch", "bat_switch"]
    )


def trace_frame(trace, m: Optional[int] = None) -> pd.DataFrame:
    """Trace rows (or an existing frame) as a DataFrame with the declared columns"""
    if isinstance(trace, pd.DataFrame):
        return trace
    if not trace:
        if m is None:
            raise ValueError("the VSI count is required for an empty trace")
        return pd.DataFrame(columns=trace_columns(m))
    m = len(trace[0].p_vsi)
    return pd.DataFrame([row.as_record() for row in trace], columns=trace_columns(m))


def write_trace_csv(trace, path: Union[str, Path], m: Optional[int] = None) -> Path:
    """Write the trace as UTF-8 CSV with LF line endings and 9 significant digits"""
    path = Path(path)
    frame = trace_frame(trace, m)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n",
                     na_rep="nan", encoding="utf-8")
    except OSError as e:
        raise OSError(f"Cannot write trace to {path}: {e}") from e
    logger.info(f"Wrote {len(frame)} trace rows to {path}")
    return path


def read_trace_csv(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, na_values=["nan"])


@dataclass
class MetricReferences:
    """Expected values a scenario is judged against; empty lists skip the related check"""
    v_dc_ref: float = 800.0
    v_pcc_rms_ref: float = 311.0 / math.sqrt(2.0)
    f0: float = 60.0
    betas: List[List[float]] = field(default_factory=list)
    window_powers: List[Dict[str, float]] = field(default_factory=list)
    pv_oracle: List[float] = field(default_factory=list)
    total_pcc: List[float] = field(default_factory=list)
    check_balance: bool = False
    check_settling: bool = False
    check_buses: bool = True
    check_frequency: bool = True
    settle_columns: List[str] = field(default_factory=lambda: ["p_bat", "p_pv", "p_dcload"])


@dataclass
class CriterionResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        mark = "✅" if self.passed else "❌"
        return f"{mark} {self.name}: {'PASS' if self.passed else 'FAIL'} {self.detail}".rstrip()


@dataclass
class SummaryReport:
    scenario: str
    criteria: List[CriterionResult] = field(default_factory=list)
    settling_times: Dict[str, float] = field(default_factory=dict)
    window_means: List[Dict[str, float]] = field(default_factory=list)
    sharing_ratios: List[List[float]] = field(default_factory=list)
    sharing_errors_pct: List[List[float]] = field(default_factory=list)
    max_frequency_deviation_pct: float = 0.0
    max_bus_frequency_deviation_pct: float = 0.0
    max_dc_deviation_pct: float = 0.0
    max_pcc_deviation_pct: float = 0.0
    controller_calls: int = 0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def to_text(self) -> str:
        lines = [f"Scenario: {self.scenario}", "=" * 60]
        lines.append(f"Controller invocations: {self.controller_calls}")
        lines.append(f"Max PCC frequency deviation: {self.max_frequency_deviation_pct:.4f} %")
        lines.append(f"Max local-bus frequency deviation: {self.max_bus_frequency_deviation_pct:.4f} %")
        lines.append(f"Max DC-bus deviation: {self.max_dc_deviation_pct:.4f} %")
        lines.append(f"Max PCC RMS deviation: {self.max_pcc_deviation_pct:.4f} %")
        for w, means in enumerate(self.window_means, start=1):
            powers = ", ".join(f"{k}={v / 1000.0:.3f} kW" for k, v in means.items() if k.startswith("p_"))
            lines.append(f"Window {w}: {powers}")
            if w - 1 < len(self.sharing_ratios) and self.sharing_ratios[w - 1]:
                errors = self.sharing_errors_pct[w - 1] or [math.nan] * len(self.sharing_ratios[w - 1])
                ratios = ", ".join(
                    f"{r:.4f}" + (f" (err {e:+.2f} %)" if math.isfinite(e) else "")
                    for r, e in zip(self.sharing_ratios[w - 1], errors)
                )
                lines.append(f"  sharing ratios p_vsi(j)/p_vsi(j+1): {ratios}")
        for name, value in self.settling_times.items():
            lines.append(f"Settling {name}: {value * 1000.0:.2f} ms")
        lines.append("-" * 60)
        lines.extend(c.line() for c in self.criteria)
        lines.append("-" * 60)
        lines.append(f"Overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def _vsi_count(frame: pd.DataFrame) -> int:
    return sum(1 for c in frame.columns if c.startswith("p_vsi"))


def _window_bounds(t_end: float, events: Sequence[ScenarioEvent], startup: float) -> List[tuple]:
    cuts = [startup] + sorted({e.time for e in events if startup < e.time < t_end}) + [t_end]
    return list(zip(cuts[:-1], cuts[1:]))


def _steady_slice(frame: pd.DataFrame, start: float, end: float, f0: float) -> pd.DataFrame:
    span = ACCEPTANCE_THRESHOLDS["steady_cycles"] / f0
    lo = max(start, end - span)
    return frame[(frame["t"] > lo) & (frame["t"] <= end)]


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator != 0 else math.nan


def _relative_error(actual: float, expected: float) -> float:
    if expected == 0:
        return math.inf if actual != 0 else 0.0
    return abs(actual - expected) / abs(expected)


def compute_metrics(trace, events: Sequence[ScenarioEvent], scenario: str = "custom",
                    references: Optional[MetricReferences] = None,
                    controller_calls: int = 0) -> SummaryReport:
    """Summarise a trace and judge it against the acceptance thresholds"""
    frame = trace_frame(trace)
    if frame.empty:
        raise ValueError("cannot compute metrics of an empty trace")
    refs = references or MetricReferences()
    th = ACCEPTANCE_THRESHOLDS
    m = _vsi_count(frame)
    t = frame["t"].to_numpy(dtype=float)
    report = SummaryReport(scenario=scenario, controller_calls=controller_calls)

    startup = th["startup_s"]
    active = t > startup
    quiet = active.copy()
    for event in events:
        quiet &= ~((t >= event.time) & (t < event.time + th["event_window_s"]))

    # bus stiffness
    if quiet.any():
        dc_dev = np.abs(frame["v_dc"].to_numpy(dtype=float)[quiet] - refs.v_dc_ref) / refs.v_dc_ref
        pcc_dev = np.abs(frame["v_pcc_rms"].to_numpy(dtype=float)[quiet] - refs.v_pcc_rms_ref) / refs.v_pcc_rms_ref
        report.max_dc_deviation_pct = float(np.nanmax(dc_dev)) * 100.0
        report.max_pcc_deviation_pct = float(np.nanmax(pcc_dev)) * 100.0
    if refs.check_buses:
        limit = th["bus_band"] * 100.0
        report.criteria.append(CriterionResult(
            "dc_bus_band", report.max_dc_deviation_pct <= limit,
            f"max {report.max_dc_deviation_pct:.3f} % (limit {limit:.1f} %)"))
        report.criteria.append(CriterionResult(
            "pcc_rms_band", report.max_pcc_deviation_pct <= limit,
            f"max {report.max_pcc_deviation_pct:.3f} % (limit {limit:.1f} %)"))

    # frequency
    f_pcc = frame["f_pcc"].to_numpy(dtype=float)[active]
    if np.isfinite(f_pcc).any():
        report.max_frequency_deviation_pct = float(np.nanmax(np.abs(f_pcc - refs.f0))) / refs.f0 * 100.0
    else:
        logger.warning(f"{scenario}: no PCC frequency estimate after start-up")
        report.max_frequency_deviation_pct = math.nan
    bus = frame[[f"f_bus{j}" for j in range(1, m + 1)]].to_numpy(dtype=float)[active]
    if np.isfinite(bus).any():
        report.max_bus_frequency_deviation_pct = float(np.nanmax(np.abs(bus - refs.f0))) / refs.f0 * 100.0
    if refs.check_frequency:
        limit = th["frequency_deviation_limit"] * 100.0
        ok = math.isfinite(report.max_frequency_deviation_pct) and report.max_frequency_deviation_pct < limit
        report.criteria.append(CriterionResult(
            "frequency_deviation", ok,
            f"max {report.max_frequency_deviation_pct:.4f} % (limit {limit:.2f} %)"))

    # steady windows
    columns = ["p_pv", "p_bat", "p_dcload"] + [f"p_vsi{j}" for j in range(1, m + 1)]
    windows = _window_bounds(float(t[-1]), events, startup)
    for start, end in windows:
        steady = _steady_slice(frame, start, end, refs.f0)
        report.window_means.append({c: float(steady[c].mean()) if len(steady) else math.nan for c in columns})

    for w, means in enumerate(report.window_means):
        ratios = [_ratio(means[f"p_vsi{j}"], means[f"p_vsi{j + 1}"]) for j in range(1, m)]
        report.sharing_ratios.append(ratios)
        expected = refs.betas[w] if w < len(refs.betas) else []
        report.sharing_errors_pct.append(
            [(r - b) / b * 100.0 for r, b in zip(ratios, expected)] if expected else []
        )
        if expected:
            worst = max((abs(e) for e in report.sharing_errors_pct[-1]), default=math.nan)
            report.criteria.append(CriterionResult(
                f"sharing_window{w + 1}", bool(worst <= th["sharing_tolerance"] * 100.0),
                f"ratios {', '.join(f'{r:.4f}' for r in ratios)} vs {', '.join(f'{b:.4f}' for b in expected)}"))

        if w < len(refs.window_powers):
            for column, target in refs.window_powers[w].items():
                tolerance = th["pv_power_tolerance"] if column == "p_pv" else th["window_power_tolerance"]
                err = _relative_error(means[column], target)
                report.criteria.append(CriterionResult(
                    f"{column}_window{w + 1}", bool(err <= tolerance),
                    f"{means[column] / 1000.0:.3f} kW vs {target / 1000.0:.3f} kW (±{tolerance * 100:.0f} %)"))

        if w < len(refs.pv_oracle):
            efficiency = means["p_pv"] / refs.pv_oracle[w]
            report.criteria.append(CriterionResult(
                f"mppt_window{w + 1}", bool(efficiency >= th["mppt_efficiency"]),
                f"{efficiency * 100.0:.2f} % of oracle {refs.pv_oracle[w] / 1000.0:.3f} kW"))

        if w < len(refs.total_pcc):
            total = sum(means[f"p_vsi{j}"] for j in range(1, m + 1))
            err = _relative_error(total, refs.total_pcc[w])
            report.criteria.append(CriterionResult(
                f"total_pcc_window{w + 1}", bool(err <= th["total_power_tolerance"]),
                f"{total / 1000.0:.3f} kW vs {refs.total_pcc[w] / 1000.0:.3f} kW"))

    if refs.check_balance:
        for w in range(1, len(report.window_means)):
            before, after = report.window_means[w - 1], report.window_means[w]
            delta = {c: after[c] - before[c] for c in columns}
            expected = delta["p_dcload"] + delta["p_vsi1"] - delta["p_pv"]
            err = _relative_error(delta["p_bat"], expected)
            report.criteria.append(CriterionResult(
                f"power_balance_event{w}", bool(err <= th["power_step_tolerance"]),
                f"dP_bat {delta['p_bat'] / 1000.0:+.3f} kW vs {expected / 1000.0:+.3f} kW"))

    # settling
    ordered = sorted(events, key=lambda e: e.time)
    for n, event in enumerate(ordered):
        if event.time <= startup or event.time >= t[-1]:
            continue
        end = ordered[n + 1].time if n + 1 < len(ordered) else t[-1] + 1.0
        segment = frame[(frame["t"] >= event.time) & (frame["t"] < end)]
        for column in refs.settle_columns:
            if column not in segment or segment[column].isna().all():
                continue
            key = f"{column}@{event.time:g}s"
            try:
                value = settling_time(segment["t"].to_numpy(dtype=float), segment[column].to_numpy(dtype=float),
                                      event.time, th["settling_band_pct"])
            except (NeverSettles, ValueError) as e:
                logger.warning(f"{scenario}: {key} did not settle: {e}")
                value = math.nan
            report.settling_times[key] = value
            if refs.check_settling:
                ok = math.isfinite(value) and value <= th["settling_limit_s"]
                report.criteria.append(CriterionResult(
                    f"settling_{key}", ok,
                    f"{value * 1000.0:.2f} ms (limit {th['settling_limit_s'] * 1000.0:.0f} ms)"))

    for criterion in report.criteria:
        if not criterion.passed:
            logger.warning(f"{scenario}: criterion {criterion.name} failed: {criterion.detail}")
    return report


def compare_frequency(droop: SummaryReport, mpc: SummaryReport) -> List[CriterionResult]:
    """Droop must deviate strictly more than FCS-MPC, which stays within its limit"""
    limit = ACCEPTANCE_THRESHOLDS["frequency_deviation_limit"] * 100.0
    d, f = droop.max_frequency_deviation_pct, mpc.max_frequency_deviation_pct
    return [
        CriterionResult("droop_exceeds_mpc", bool(math.isfinite(d) and math.isfinite(f) and d > f),
                        f"droop {d:.4f} % vs FCS-MPC {f:.4f} %"),
        CriterionResult("mpc_frequency_deviation", bool(math.isfinite(f) and f < limit),
                        f"{f:.4f} % (limit {limit:.2f} %)"),
    ]
