"""Command-line entry point ``smibctl``.

Exit status: 0 ok, 1 usage or configuration error, 2 numerical failure,
3 golden-value mismatch in ``report``. Errors are printed as a single line
``error kind=<kind> message=<text>`` on stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, FlPreset, load_config
from .csvio import fmt, write_bode_csv, write_rows_csv, write_trace_csv
from .equilibrium import LinearModel
from .experiments import build_report, filter_gain, margin_row, margin_table, run_and_save_case
from .freq_analysis import frequency_response, log_grid
from .numerics import NumericalError, SimulationDiverged
from .plant_models import CDM_STATES, PLANT_STATES
from .scenarios import CASE_CONTROLLERS, CONTROLLERS, Scenario, Study, run_case

ENV_OUT = "SMIBCTL_OUT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="smibctl", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="configuration file (defaults if omitted)")
    p.add_argument("--out", help=f"output directory (overrides ${ENV_OUT} and the config)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("derive", help="model coefficients")
    sub.add_parser("equilibrium", help="operating points of both models")
    sub.add_parser("linearize", help="linearized CDM at Operating Point I")
    d = sub.add_parser("design", help="controller gains")
    d.add_argument("--controller", choices=CONTROLLERS, default="lqg")
    d.add_argument("--model", choices=("cdm", "plant", "freq"), default="freq")
    d.add_argument("--q", type=float)
    s = sub.add_parser("simulate", help="closed loop from equilibrium, no disturbance")
    s.add_argument("--controller", choices=CONTROLLERS, default="nflc")
    s.add_argument("--model", choices=("cdm", "plant"), default="cdm")
    s.add_argument("--loading", choices=("I", "II"), default="I")
    s.add_argument("--t-end", type=float, default=10.0)
    f = sub.add_parser("freq", help="frequency responses as CSV")
    f.add_argument("--q", type=float)
    f.add_argument("--ideal", action="store_true")
    m = sub.add_parser("margins", help="gain/phase margin table")
    m.add_argument("--q", type=float)
    m.add_argument("--ideal", action="store_true")
    c = sub.add_parser("case", help="run a case study")
    c.add_argument("case_id", type=int, choices=range(1, 6))
    c.add_argument("--controller", choices=CONTROLLERS, default="nflc")
    c.add_argument("--model", choices=("cdm", "plant"))
    r = sub.add_parser("report", help="all case studies, margins and golden checks")
    r.add_argument("--cases", default="1,2,3,4,5")
    return p


def _out_dir(args, cfg) -> Path:
    path = args.out or os.environ.get(ENV_OUT) or cfg.output_dir
    return Path(path)


def _emit(rows):
    for k, v in rows:
        print(f"{k} = {fmt(v)}")


def _matrix_rows(name, M):
    return [{"matrix": name, "row": i, **{f"c{j}": float(v) for j, v in enumerate(r)}}
            for i, r in enumerate(np.atleast_2d(M))]


def cmd_derive(study, out, args):
    rows = []
    for model, coeffs in (("plant", study.plant), ("cdm", study.cdm)):
        for k, v in coeffs.as_dict().items():
            rows.append({"model": model, "name": k, "value": v})
    p = study.config.machine
    rows += [{"model": "machine", "name": "tau_j", "value": p.tau_j},
             {"model": "machine", "name": "Ld_prime", "value": p.ld_prime},
             {"model": "machine", "name": "Td0_prime", "value": p.td0_prime}]
    write_rows_csv(out / "coefficients.csv", rows)
    _emit((f"{r['model']}.{r['name']}", r["value"]) for r in rows)


def cmd_equilibrium(study, out, args):
    rows = []
    for name in study.config.loadings:
        op = study.operating_point(name)
        pop = study.plant_operating_point(name)
        row = {"loading": name, **op.as_dict(), "within_limits": op.within_limits}
        row.update({f"plant_{n}0": float(v) for n, v in zip(PLANT_STATES, pop.state)})
        row.update(plant_VF0=float(pop.u0[0]), plant_uT0=float(pop.u0[1]),
                   plant_P=pop.P, plant_power_factor=pop.power_factor,
                   plant_Ia=pop.stator_current)
        rows.append(row)
    write_rows_csv(out / "operating_points.csv", rows)
    for row in rows:
        _emit((f"{row['loading']}.{k}", v) for k, v in row.items() if k != "loading")


def cmd_linearize(study, out, args):
    m: LinearModel = study.linear
    rows = sum((_matrix_rows(n, getattr(m, n)) for n in "ABCD"), [])
    write_rows_csv(out / "linear_model.csv", rows)
    for n in "ABCD":
        print(f"{n} =")
        for r in np.atleast_2d(getattr(m, n)):
            print("  " + " ".join(f"{v: .6g}" for v in r))


def cmd_design(study, out, args):
    cfg = study.config
    if args.controller == "lqg":
        preset = cfg.controller("lqg", args.model)
        q = preset.q if args.q is None else args.q
        H = filter_gain(study, q) if args.model == "freq" else \
            study.lqg_controller(preset.__class__(preset.K, q, preset.V10, preset.V, preset.V2)).H
        mats = {"K": preset.K, "H": H}
    elif args.controller == "lqr":
        mats = {"K": cfg.controller("lqr", "plant" if args.model == "freq" else args.model).K}
    else:
        preset: FlPreset = cfg.controller(args.controller, "cdm" if args.model == "freq" else args.model)
        mats = {"KG": np.array(preset.KG), "KT": np.array(preset.KT)}
        if args.controller == "inflc":
            mats.update(KiG=np.array([preset.KiG]), KiT=np.array([preset.KiT]))
    rows = sum((_matrix_rows(k, v) for k, v in mats.items()), [])
    write_rows_csv(out / f"gains_{args.controller}_{args.model}.csv", rows)
    for k, v in mats.items():
        print(f"{k} =")
        for r in np.atleast_2d(v):
            print("  " + " ".join(f"{x: .6g}" for x in r))


def cmd_simulate(study, out, args):
    s = study.config.scenario
    case_id = 4 if args.loading == "I" else 5
    if args.model == "cdm":
        case_id = 1
    dt = s.cdm_dt if args.model == "cdm" else s.plant_dt
    sc = Scenario(case_id, args.model, args.controller, args.t_end, dt, args.loading)
    trace, metrics = run_case(study, sc)
    names = CDM_STATES if args.model == "cdm" else PLANT_STATES
    path = write_trace_csv(out / f"simulate_{args.controller}_{args.model}_{args.loading}.csv",
                           trace, names)
    print(f"trace = {path}")
    _emit((k, trace.final(k)) for k in trace.channels)


def _q_list(study, args):
    fs = study.config.freq
    if args.q is not None:
        return [(args.q, args.ideal)]
    if args.ideal:
        return [(fs.ideal_q, True)]
    return [(q, False) for q in fs.q_values] + [(fs.ideal_q, True)]


def cmd_freq(study, out, args):
    fs = study.config.freq
    m = study.linear
    K = study.config.controller("lqg", "freq").K
    w = log_grid(fs.w_min, fs.w_max, fs.n_points)
    for q, ideal in _q_list(study, args):
        fr = frequency_response(m, K, filter_gain(study, q, ideal=ideal), w)
        chans = {}
        for label, arr in (("N", fr.plant), ("KC", fr.controller), ("H", fr.loop)):
            for i in range(2):
                for j in range(2):
                    chans[f"{label}{i + 1}{j + 1}"] = arr[:, i, j]
        name = f"bode_{'ideal' if ideal else 'q'}_{q:g}.csv"
        print(f"bode = {write_bode_csv(out / name, w, chans)}")


def cmd_margins(study, out, args):
    if args.q is None and not args.ideal:
        rows = margin_table(study)
    else:
        rows = [margin_row(study, q, ideal=ideal) for q, ideal in _q_list(study, args)]
    dicts = [r.as_dict() for r in rows]
    write_rows_csv(out / "margins.csv", dicts)
    print("design GM(H11)_dB PM(H11)_deg GM(H22)_dB PM(H22)_deg N11 N22 max_re_eig")
    for d in dicts:
        print(" ".join(fmt(d[k]) if not isinstance(d[k], float) else f"{d[k]:.6g}"
                       for k in ("label", "GM_H11_dB", "PM_H11_deg", "GM_H22_dB", "PM_H22_deg",
                                 "nyquist_H11", "nyquist_H22", "max_real_eig")))


def cmd_case(study, out, args):
    if args.controller not in CASE_CONTROLLERS[args.case_id]:
        raise UsageError(f"case {args.case_id} has no {args.controller} run")
    path, trace, metrics = run_and_save_case(study, out, args.case_id, args.controller, args.model)
    print(f"trace = {path}")
    _emit((f"final.{k}", trace.final(k)) for k in trace.channels)
    for row in metrics.as_rows():
        _emit((f"{row['channel']}.{k}", v) for k, v in row.items() if k != "channel")
    print(f"saturation_duration = {fmt(metrics.saturation_duration)}")


def cmd_report(study, out, args):
    try:
        cases = tuple(int(c) for c in args.cases.split(","))
    except ValueError as exc:
        raise UsageError(f"bad --cases {args.cases!r}") from exc
    if any(c not in CASE_CONTROLLERS for c in cases):
        raise UsageError("cases must be in 1-5")
    report = build_report(study, out, cases,
                          progress=lambda s: print(f"running {s}", file=sys.stderr))
    print(report.summary())
    return 0 if report.passed else 3


COMMANDS = {
    "derive": cmd_derive, "equilibrium": cmd_equilibrium, "linearize": cmd_linearize,
    "design": cmd_design, "simulate": cmd_simulate, "freq": cmd_freq,
    "margins": cmd_margins, "case": cmd_case, "report": cmd_report,
}


def _fail(kind: str, message: str, code: int) -> int:
    msg = " ".join(str(message).split())
    print(f"error kind={kind} message={msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        cfg = load_config(args.config)
        out = _out_dir(args, cfg)
        out.mkdir(parents=True, exist_ok=True)
        study = Study(cfg)
        code = COMMANDS[args.command](study, out, args)
        return 0 if code is None else code
    except UsageError as exc:
        return _fail("usage", exc, 1)
    except (ConfigError, OSError) as exc:
        return _fail("config", exc, 1)
    except SimulationDiverged as exc:
        return _fail("diverged", exc, 2)
    except NumericalError as exc:
        return _fail("numerical", exc, 2)


if __name__ == "__main__":
    sys.exit(main())
