"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line with the
measured values, then asserts.
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from smibctl.cli import main
from smibctl.config import default_config
from smibctl.experiments import GOLDEN_MARGINS, GOLDEN_STEADY_ERRORS, margin_table
from smibctl.freq_analysis import UNBOUNDED
from smibctl.scenarios import CASE_CONTROLLERS, Study, run_case, scenario_for

from test_equilibrium import TABLE
from test_plant_models import PRINTED_CDM

TESTS = Path(__file__).parent


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def runs():
    study = Study(default_config())
    cache = {}

    def get(case_id, ctl):
        if (case_id, ctl) not in cache:
            sc = scenario_for(study, case_id, ctl)
            cache[(case_id, ctl)] = (sc, *run_case(study, sc))
        return cache[(case_id, ctl)]
    return get


def test_1_coefficients(tmp_path, capsys, verdict):
    t0 = time.perf_counter()
    code = main(["--out", str(tmp_path), "derive"])
    elapsed = time.perf_counter() - t0
    out = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
    expected = {f"cdm.{k}": v for k, v in PRINTED_CDM.items()}
    expected.update({"machine.tau_j": 4.74, "machine.Ld_prime": 0.245})
    bad = [k for k, v in expected.items() if round(float(out[k]), 4) != pytest.approx(v, abs=1e-12)]
    verdict(1, code == 0 and not bad and elapsed < 1.0,
            f"{len(expected) - len(bad)}/{len(expected)} values to 4 dp, {elapsed:.2f} s")


def test_2_operating_points(verdict):
    t0 = time.perf_counter()
    study = Study(default_config())
    worst = 0.0
    for name, (d0, eq0, tm0, vt0, id0, if0) in TABLE.items():
        op = study.operating_point(name)
        pop = study.plant_operating_point(name)
        got = (op.cdm_state0[2], op.cdm_state0[0], op.cdm_state0[3], op.Vt0,
               pop.state[0], pop.state[1])
        worst = max(worst, max(abs(a - b) for a, b in zip(got, (d0, eq0, tm0, vt0, id0, if0))))
        worst = max(worst, abs(pop.state[6] - d0))
    elapsed = time.perf_counter() - t0
    verdict(2, worst <= 2e-3 and elapsed < 5.0, f"max abs deviation {worst:.2e}, {elapsed:.2f} s")


def _fmt_margin(v):
    return "inf" if v is UNBOUNDED else f"{float(v):.3f}"


def _match(value, golden, tol):
    if golden == math.inf:
        return value is UNBOUNDED
    return value is not UNBOUNDED and abs(float(value) - golden) <= tol


def test_3_margins(verdict):
    t0 = time.perf_counter()
    rows = margin_table(Study(default_config()))
    elapsed = time.perf_counter() - t0
    ok = elapsed < 30.0
    parts = []
    for row, (label, _, _, pm11, gm22, _) in zip(rows, GOLDEN_MARGINS):
        hit = _match(row.pm11, pm11, 1.0) and _match(row.gm22, gm22, 0.5)
        ok &= hit
        parts.append(f"{label} PM11={_fmt_margin(row.pm11)} (pub {pm11}) "
                     f"GM22={_fmt_margin(row.gm22)} (pub {gm22})")
    verdict(3, ok, "; ".join(parts) + f"; {elapsed:.1f} s")


def test_4_nyquist(verdict):
    rows = {r.label: r for r in margin_table(Study(default_config()))}
    counts = {k: (r.nyquist11, r.nyquist22) for k, r in rows.items()}
    ok_counts = all(counts[k] == ((1, 1) if k == "q=100" else (0, 0)) for k in counts)
    ok_eig = rows["q=100"].max_real_eig > 0 and rows["q=9.0005"].max_real_eig < 0
    verdict(4, ok_counts and ok_eig,
            f"counts {counts}; max Re(eig) q=100 {rows['q=100'].max_real_eig:.4f}, "
            f"q=9.0005 {rows['q=9.0005'].max_real_eig:.4f}")


def test_5_case1_steadies(runs, verdict):
    target = {"Vt": 1.17233, "omega": 1.0, "delta": 1.0, "Tm": 1.0012, "EFD": 2.529, "uT": 1.0512}
    worst = {}
    for ctl in CASE_CONTROLLERS[1]:
        _, tr, _ = runs(1, ctl)
        worst[ctl] = max(target, key=lambda k: abs(tr.final(k) - target[k]))
        worst[ctl] = (worst[ctl], abs(tr.final(worst[ctl]) - target[worst[ctl]]))
    ok = all(v[1] <= 1e-3 for v in worst.values())
    verdict(5, ok, "; ".join(f"{c} worst {k} off by {d:.2e}" for c, (k, d) in worst.items()))


def test_6_case2_fault(runs, verdict):
    ok = True
    parts = []
    settle = {}
    for ctl in CASE_CONTROLLERS[2]:
        sc, tr, m = runs(2, ctl)
        start, end = sc.fault_window
        t, vt = tr.times, tr["Vt"]
        inside = (t > start + 1e-9) & (t < end - 1e-9)
        pre = vt[np.searchsorted(t, start) - 1]
        post = np.abs(vt[t >= 70.0] - pre).max() / pre
        ok &= bool(np.all(vt[inside] == 0.0)) and post <= 5e-3
        settle[ctl] = m["omega"].settling_time
        parts.append(f"{ctl} Vt dev after 70 s {100 * post:.3f}% omega settle {settle[ctl]}")
    s = [settle[c] if settle[c] is not None else math.inf for c in ("inflc", "nflc", "lqg")]
    ok &= s[0] <= s[1] <= s[2]
    verdict(6, ok, "; ".join(parts))


def test_7_plant_steady_errors(runs, verdict):
    ok = True
    parts = []
    err = {}
    for (case_id, ctl), (g_vt, g_d) in GOLDEN_STEADY_ERRORS.items():
        _, _, m = runs(case_id, ctl)
        vt, d = m["Vt"].steady_state_error, m["delta"].steady_state_error
        err[(case_id, ctl)] = vt
        checks = [(vt, g_vt)] + ([(d, g_d)] if case_id == 5 else [])
        hit = all(abs(v - g) <= 0.5 * g for v, g in checks)
        ok &= hit
        parts.append(f"case{case_id} {ctl} Vt {vt:.2e} (pub {g_vt})"
                     + (f" delta {d:.2e} (pub {g_d})" if case_id == 5 else ""))
    best4 = min(CASE_CONTROLLERS[4], key=lambda c: err[(4, c)])
    best5 = min(CASE_CONTROLLERS[5], key=lambda c: err[(5, c)])
    ok &= best4 == "lqg" and best5 == "lqr"
    verdict(7, ok, "; ".join(parts) + f"; best OP I {best4}, best OP II {best5}")


PROPERTY_TESTS = [
    "test_numerics.py::test_care_matches_scipy_and_residual",
    "test_numerics.py::test_scalar_care_closed_form",
    "test_numerics.py::test_rk4_order_ratio",
    "test_lqg_controller.py::test_separation_spectrum_random",
    "test_lqg_controller.py::test_separation_spectrum_cdm",
    "test_lqg_controller.py::test_ltr_direction_converges_monotonically",
    "test_fl_controller.py::test_exact_linearization_trajectory",
    "test_fl_controller.py::test_structural_lie_zeros_exact",
    "test_plant_models.py::test_cdm_jacobian_matches_fd",
    "test_plant_models.py::test_plant_jacobian_matches_fd",
]


def test_8_property_suite(verdict):
    t0 = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
         *[str(TESTS / p) for p in PROPERTY_TESTS]],
        capture_output=True, text=True, cwd=TESTS.parent)
    elapsed = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    verdict(8, proc.returncode == 0 and elapsed < 120.0, f"{tail}; {elapsed:.1f} s")
