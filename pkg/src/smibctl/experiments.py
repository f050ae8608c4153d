"""Reproducible experiments shared by the CLI: margin tables, case runs and
the run report with golden-value checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .csvio import read_trace_csv, write_json, write_rows_csv, write_trace_csv
from .freq_analysis import UNBOUNDED, channel, log_grid, margins, nyquist_encirclements
from .lqg_controller import closed_loop_matrix, design_ltr_filter, ideal_filter_gain
from .numerics import Trace
from .plant_models import CDM_STATES, PLANT_STATES
from .scenarios import (
    CASE_CONTROLLERS,
    Metrics,
    Study,
    weight_matrix,
    compute_metrics,
    reference,
    run_case,
    scenario_for,
)

__all__ = [
    "MarginRow",
    "Check",
    "RunReport",
    "GOLDEN_MARGINS",
    "GOLDEN_STEADY_ERRORS",
    "filter_gain",
    "margin_row",
    "margin_table",
    "case_trace_name",
    "run_and_save_case",
    "metrics_from_trace_file",
    "build_report",
]

# published margin rows: (label, q, GM(H11) dB, PM(H11) deg, GM(H22) dB, PM(H22) deg)
GOLDEN_MARGINS = (
    ("q=0", 0.0, math.inf, 75.616, 8.347, math.inf),
    ("q=9.0005", 9.0005, math.inf, 71.793, 45.195, math.inf),
    ("q=100", 100.0, 0.0684, 77.533, 0.4622, 69.475),
    ("ideal", 9.0005, math.inf, 69.501, 3.561, 36.046),
)
# published plant steady-state errors: (case, controller) -> (Vt, delta)
GOLDEN_STEADY_ERRORS = {
    (4, "nflc"): (0.0012, 0.0), (4, "inflc"): (0.00233, 0.0),
    (4, "lqg"): (0.00013, 0.0), (4, "lqr"): (0.00025, 0.0),
    (5, "nflc"): (0.00129, 0.00076), (5, "inflc"): (0.00194, 0.00684),
    (5, "lqg"): (0.00401, 0.00854), (5, "lqr"): (0.00037, 0.00066),
}


@dataclass(frozen=True)
class MarginRow:
    label: str
    q: float
    gm11: object
    pm11: object
    gm22: object
    pm22: object
    nyquist11: int
    nyquist22: int
    max_real_eig: float

    def as_dict(self) -> dict:
        s = lambda v: str(v) if v is UNBOUNDED else float(v)
        return {"label": self.label, "q": self.q, "GM_H11_dB": s(self.gm11),
                "PM_H11_deg": s(self.pm11), "GM_H22_dB": s(self.gm22),
                "PM_H22_deg": s(self.pm22), "nyquist_H11": self.nyquist11,
                "nyquist_H22": self.nyquist22, "max_real_eig": self.max_real_eig}


def filter_gain(study: Study, q: float, *, ideal: bool = False) -> np.ndarray:
    preset = study.config.controller("lqg", "freq")
    m = study.linear
    if ideal:
        return ideal_filter_gain(m, q, V=weight_matrix(preset.V, 2), V2=weight_matrix(preset.V2, 2))
    return design_ltr_filter(m, q, V10=weight_matrix(preset.V10, m.n), V=weight_matrix(preset.V, 2),
                             V2=weight_matrix(preset.V2, 2)).H


def margin_row(study: Study, q: float, *, ideal: bool = False, label: str | None = None) -> MarginRow:
    """Diagonal-channel margins, Nyquist counts and closed-loop spectrum."""
    m = study.linear
    fs = study.config.freq
    K = study.config.controller("lqg", "freq").K
    H = filter_gain(study, q, ideal=ideal)
    grid = log_grid(fs.w_min, fs.w_max, fs.n_points)
    res = []
    for i in range(2):
        L = channel(m, K, H, i, i)
        mg = margins(L, grid)
        ny = nyquist_encirclements(L, omega_max=fs.nyquist_omega_max)
        res.append((mg, ny.count))
    eig = np.linalg.eigvals(closed_loop_matrix(m, K, H))
    if label is None:
        label = "ideal" if ideal else f"q={q:g}"
    return MarginRow(label, float(q), res[0][0].gm_db, res[0][0].pm_deg, res[1][0].gm_db,
                     res[1][0].pm_deg, res[0][1], res[1][1], float(eig.real.max()))


def margin_table(study: Study) -> list[MarginRow]:
    fs = study.config.freq
    rows = [margin_row(study, q) for q in fs.q_values]
    rows.append(margin_row(study, fs.ideal_q, ideal=True))
    return rows


def case_trace_name(case_id: int, controller: str, model: str) -> str:
    return f"case{case_id}_{controller}_{model}.csv"


def run_and_save_case(study: Study, out_dir, case_id: int, controller: str,
                      model: str | None = None) -> tuple[Path, Trace, Metrics]:
    sc = scenario_for(study, case_id, controller, model=model)
    trace, metrics = run_case(study, sc)
    t_from = sc.fault_window[0] if sc.fault_window and sc.fault_window[1] < sc.t_end else 0.0
    meta = {"case": case_id, "controller": controller, "model": sc.model,
            "loading": sc.loading, "dt": sc.dt, "t_from": t_from,
            "reference": reference(study, sc), "config_hash": study.config.digest()}
    names = CDM_STATES if sc.model == "cdm" else PLANT_STATES
    path = write_trace_csv(Path(out_dir) / case_trace_name(case_id, controller, sc.model),
                           trace, names, meta)
    write_rows_csv(Path(out_dir) / path.name.replace(".csv", "_metrics.csv"), metrics.as_rows())
    return path, trace, metrics


def metrics_from_trace_file(path) -> tuple[dict, Metrics]:
    """Recompute metrics from a saved trace and its metadata header."""
    meta, cols = read_trace_csv(path)
    times = cols.pop("time")
    states = np.column_stack([cols.pop(k) for k in list(cols) if k.startswith("x_")] or
                             [np.zeros_like(times)])
    trace = Trace(times, states, cols)
    return meta, compute_metrics(trace, meta["reference"], t_from=meta["t_from"])


@dataclass(frozen=True)
class Check:
    name: str
    value: float | str
    golden: float | str
    tolerance: str
    passed: bool


@dataclass
class RunReport:
    config_hash: str
    metrics: dict[str, list[dict]] = field(default_factory=dict)
    margins: list[dict] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {"config_hash": self.config_hash, "metrics": self.metrics,
                "margins": self.margins,
                "checks": [c.__dict__ for c in self.checks], "passed": self.passed}

    def summary(self) -> str:
        lines = [f"config {self.config_hash}"]
        for c in self.checks:
            lines.append(f"{'PASS' if c.passed else 'FAIL'} {c.name}: value={c.value} "
                         f"golden={c.golden} tol={c.tolerance}")
        return "\n".join(lines)


def _close(value, golden: float, tol: float) -> bool:
    if golden == math.inf:
        return value is UNBOUNDED
    return value is not UNBOUNDED and abs(float(value) - golden) <= tol


def margin_checks(rows: list[MarginRow]) -> list[Check]:
    out = []
    for row, (label, _, gm11, pm11, gm22, pm22) in zip(rows, GOLDEN_MARGINS):
        for name, val, gold, tol, unit in (("GM(H11)", row.gm11, gm11, 0.5, "dB"),
                                           ("PM(H11)", row.pm11, pm11, 1.0, "deg"),
                                           ("GM(H22)", row.gm22, gm22, 0.5, "dB"),
                                           ("PM(H22)", row.pm22, pm22, 1.0, "deg")):
            out.append(Check(f"margins {label} {name}", str(val) if val is UNBOUNDED
                             else round(float(val), 4), str(gold) if gold == math.inf else gold,
                             f"{tol} {unit}", _close(val, gold, tol)))
    return out


def steady_error_checks(results: dict[tuple[int, str], Metrics]) -> list[Check]:
    out = []
    for key, (vt, dl) in GOLDEN_STEADY_ERRORS.items():
        if key not in results:
            continue
        m = results[key]
        for name, val, gold in (("Vt", m["Vt"].steady_state_error, vt),
                                ("delta", m["delta"].steady_state_error, dl)):
            ok = abs(val - gold) <= 0.5 * gold if gold > 0 else val <= 1e-4
            out.append(Check(f"case {key[0]} {key[1]} {name} steady error", float(val),
                             gold, "50% rel" if gold > 0 else "1e-4 abs", ok))
    return out


def build_report(study: Study, out_dir, cases=(1, 2, 3, 4, 5), *, with_margins: bool = True,
                 progress=None) -> RunReport:
    """Run the case studies and margin table, write traces and ``report.json``."""
    out_dir = Path(out_dir)
    report = RunReport(config_hash=study.config.digest())
    results: dict[tuple[int, str], Metrics] = {}
    for case_id in cases:
        for ctl in CASE_CONTROLLERS[case_id]:
            if progress:
                progress(f"case {case_id} {ctl}")
            path, _, metrics = run_and_save_case(study, out_dir, case_id, ctl)
            results[(case_id, ctl)] = metrics
            report.metrics[path.stem] = metrics.as_rows()
    if with_margins:
        rows = margin_table(study)
        report.margins = [r.as_dict() for r in rows]
        write_rows_csv(out_dir / "margins.csv", report.margins)
        report.checks += margin_checks(rows)
    report.checks += steady_error_checks(results)
    write_json(out_dir / "report.json", report.as_dict())
    (out_dir / "report.txt").write_text(report.summary() + "\n", encoding="utf-8")
    return report
