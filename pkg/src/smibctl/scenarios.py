"""Closed-loop case studies on the CDM and the ninth-order plant.

Cases 1-3 run on the CDM at Operating Point I (nominal, terminal fault,
mechanical-power schedule); cases 4 and 5 run the controllers designed on
the CDM against the plant at Operating Points I and II.

The integrated state is the model state followed by controller states: the
two INFLC error integrals or the five LQG estimate deviations. Network mode
is a pair ``(network, pm)`` where ``pm`` pins ``T_m`` when not ``None``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .config import Config, FlPreset, LqgPreset, LqrPreset
from .equilibrium import (
    LinearModel,
    OperatingPoint,
    PlantOperatingPoint,
    find_equilibrium,
    linearize_cdm,
    plant_equilibrium,
)
from .fl_controller import FlGains, FlSingularity, fl_control, reconstruct_eq_prime
from .lqg_controller import LqgController, design_ltr_filter, lqg_derivative
from .numerics import Event, OdeProblem, Trace, integrate
from .plant_models import (
    FAULT,
    NORMAL,
    CdmCoefficients,
    PlantCoefficients,
    cdm_outputs,
    cdm_rhs,
    clamp,
    derive_cdm_coefficients,
    derive_plant_coefficients,
    plant_outputs,
    plant_rhs,
)

__all__ = [
    "CONTROLLERS",
    "CASE_CONTROLLERS",
    "Scenario",
    "Metrics",
    "OutputMetrics",
    "Study",
    "pm_schedule",
    "pm_events",
    "apply_fault",
    "fault_events",
    "bridge_state",
    "bridge_controller_to_plant",
    "scenario_for",
    "run_case",
    "compute_metrics",
    "reference",
    "weight_matrix",
]

CONTROLLERS = ("nflc", "inflc", "lqg", "lqr")
CASE_CONTROLLERS = {1: ("nflc", "inflc", "lqg"), 2: ("nflc", "inflc", "lqg"),
                    3: ("nflc", "inflc", "lqg"), 4: CONTROLLERS, 5: CONTROLLERS}
OUTPUTS = ("Vt", "omega", "delta", "Tm")

_PM_STEPS = ((25.0, 1.1), (50.0, 1.0), (75.0, 0.9))


def pm_schedule(t: float) -> float:
    """Mechanical power of case 3: 1.0, 1.1, 1.0 and 0.9 p.u. in 25 s blocks."""
    if not 0.0 <= t <= 100.0:
        raise ValueError(f"schedule defined on [0, 100] s, got t = {t}")
    value = 1.0
    for t_step, v in _PM_STEPS:
        if t >= t_step:
            value = v
    return value


def pm_events(t_end: float, tm_index: int = 3) -> list[Event]:
    """Events switching the pinned ``T_m`` at each schedule step."""
    def reset_to(v):
        def reset(x):
            x[tm_index] = v
            return x
        return reset

    return [Event(t, mode=(NORMAL, v), reset=reset_to(v), label=f"Pm={v}")
            for t, v in _PM_STEPS if t < t_end]


def fault_events(window: tuple[float, float]) -> list[Event]:
    start, end = window
    return [Event(start, mode=(FAULT, None), label="fault"),
            Event(end, mode=(NORMAL, None), label="clear")]


def apply_fault(model_rhs, window: tuple[float, float]):
    """Wrap ``model_rhs(x, u, network)`` so the network is faulted inside
    ``window``; the infinite-bus terms vanish and terminal voltage reads 0."""
    start, end = window

    def faulted(t, x, u):
        return model_rhs(x, u, FAULT if start <= t < end else NORMAL)
    return faulted


# ------------------------------------------------------------- setup


@dataclass
class Study:
    """Coefficients, operating points and linear design model for a config."""

    config: Config

    @cached_property
    def plant(self) -> PlantCoefficients:
        return derive_plant_coefficients(self.config.machine)

    @cached_property
    def cdm(self) -> CdmCoefficients:
        return derive_cdm_coefficients(self.config.machine)

    def operating_point(self, name: str) -> OperatingPoint:
        return self._ops[name]

    def plant_operating_point(self, name: str) -> PlantOperatingPoint:
        return self._plant_ops[name]

    @cached_property
    def _ops(self) -> dict[str, OperatingPoint]:
        return {k: find_equilibrium(self.cdm, ld.Tm0, Vt0=ld.Vt0)
                for k, ld in self.config.loadings.items()}

    @cached_property
    def _plant_ops(self) -> dict[str, PlantOperatingPoint]:
        return {k: plant_equilibrium(self.plant, ld.Tm0, ld.Vt0, KT=self.cdm.KT)
                for k, ld in self.config.loadings.items()}

    @cached_property
    def linear(self) -> LinearModel:
        return linearize_cdm(self.cdm, self.operating_point("I"))

    def lqg_controller(self, preset: LqgPreset, op: OperatingPoint | None = None) -> LqgController:
        m = self.linear
        design = design_ltr_filter(m, preset.q, V10=weight_matrix(preset.V10, m.n),
                                   V=weight_matrix(preset.V, 2), V2=weight_matrix(preset.V2, 2))
        ctl = LqgController.build(m, preset.K, design.H,
                                  u_min=(self.cdm.efd_min, -np.inf),
                                  u_max=(self.cdm.efd_max, np.inf))
        return ctl if op is None else ctl.recentered(op)


def weight_matrix(diag, n: int) -> np.ndarray:
    d = np.asarray(diag, dtype=float)
    return np.eye(n) * d[0] if d.size == 1 else np.diag(d)


# --------------------------------------------------------- scenarios


@dataclass(frozen=True)
class Scenario:
    case_id: int
    model: str
    controller: str
    t_end: float
    dt: float
    loading: str = "I"
    events: tuple[Event, ...] = ()
    x0: tuple[float, ...] | None = None
    fault_window: tuple[float, float] | None = None

    def __post_init__(self):
        if self.case_id not in CASE_CONTROLLERS:
            raise ValueError(f"case must be 1-5, got {self.case_id}")
        if self.model not in ("cdm", "plant"):
            raise ValueError(f"model must be 'cdm' or 'plant', got {self.model!r}")
        if self.controller not in CONTROLLERS:
            raise ValueError(f"unknown controller {self.controller!r}")


def scenario_for(study: Study, case_id: int, controller: str, *, model: str | None = None,
                 t_end: float | None = None) -> Scenario:
    """Default scenario of a case study from the configuration."""
    s = study.config.scenario
    if model is None:
        model = "cdm" if case_id <= 3 else "plant"
    dt = s.cdm_dt if model == "cdm" else s.plant_dt
    if t_end is None:
        t_end = s.cdm_t_end if model == "cdm" else s.plant_t_end
    loading = "II" if case_id == 5 else "I"
    events: tuple[Event, ...] = ()
    window = None
    x0 = None
    if case_id == 1 and model == "cdm":
        x0 = tuple(study.operating_point("I").cdm_state0 + np.asarray(s.case1_offset))
    elif case_id == 2:
        window = (s.fault_start, s.fault_end)
        if window[1] < t_end:
            events = tuple(fault_events(window))
    elif case_id == 3:
        if t_end > 100.0:
            raise ValueError("the power schedule is defined up to 100 s")
        events = tuple(pm_events(t_end, 3 if model == "cdm" else 7))
    return Scenario(case_id, model, controller, float(t_end), float(dt), loading,
                    events, x0, window)


# -------------------------------------------------------- controllers


def bridge_state(c: CdmCoefficients, xs, variant: str = "B") -> np.ndarray:
    """CDM state ``[E'_q, omega, delta, T_m, G_V]`` assembled from a plant state."""
    return np.array([reconstruct_eq_prime(c, xs, variant), xs[5], xs[6], xs[7], xs[8]])


class _Controller:
    """Control law on the CDM view of the model state."""

    n_aux = 0

    def aux0(self) -> np.ndarray:
        return np.zeros(self.n_aux)

    def __call__(self, view, y_fn, aux, pm):
        raise NotImplementedError


class _FlLaw(_Controller):
    def __init__(self, c: CdmCoefficients, gains: FlGains):
        self.c = c
        self.gains = gains
        self.n_aux = 2 if gains.integral else 0
        self.hold = None
        self._pinned = {}

    def _gains(self, pm):
        if pm is None:
            return self.gains
        if pm not in self._pinned:
            self._pinned[pm] = self.gains.with_reference(self.gains.z1d, pm)
        return self._pinned[pm]

    def __call__(self, view, y_fn, aux, pm):
        g = self._gains(pm)
        eiG, eiT = (aux[0], aux[1]) if self.n_aux else (0.0, 0.0)
        u, sat, z = fl_control(self.c, g, view, eiG, eiT, hold=self.hold)
        self.hold = u
        if not self.n_aux:
            return u, None, sat
        # integral of a channel frozen while its actuator saturates
        daux = np.array([0.0 if sat else z[0] - g.z1d, z[3] - g.z4d])
        return u, daux, sat


class _LqgLaw(_Controller):
    n_aux = 5

    def __init__(self, ctl: LqgController):
        self.ctl = ctl

    def __call__(self, view, y_fn, aux, pm):
        u_raw = self.ctl.u0 - self.ctl.K @ aux
        u = np.clip(u_raw, self.ctl.u_min, self.ctl.u_max)
        _, xdot = lqg_derivative(self.ctl, aux, y_fn(u))
        return u, xdot, bool(u_raw[0] != u[0])


class _LqrLaw(_Controller):
    def __init__(self, K, x0, u0, c: CdmCoefficients):
        self.K = np.asarray(K, dtype=float)
        self.x0 = np.asarray(x0, dtype=float)
        self.u0 = np.asarray(u0, dtype=float)
        self.c = c

    def __call__(self, view, y_fn, aux, pm):
        u = self.u0 - self.K @ (view - self.x0)
        efd = clamp(u[0], self.c.efd_min, self.c.efd_max)
        return np.array([efd, u[1]]), None, efd != u[0]


def _make_law(study: Study, sc: Scenario) -> _Controller:
    cfg = study.config
    op = study.operating_point(sc.loading)
    preset = cfg.controller(sc.controller, sc.model)
    if sc.controller in ("nflc", "inflc"):
        assert isinstance(preset, FlPreset)
        gains = FlGains(preset.KG, preset.KT, preset.KiG, preset.KiT,
                        z1d=float(op.cdm_state0[2]), z4d=float(op.cdm_state0[3]))
        if sc.controller == "nflc" and gains.integral:
            raise ValueError("NFLC preset must not carry integral gains")
        return _FlLaw(study.cdm, gains)
    if sc.controller == "lqg":
        assert isinstance(preset, LqgPreset)
        return _LqgLaw(study.lqg_controller(preset, op if sc.loading != "I" else None))
    assert isinstance(preset, LqrPreset)
    return _LqrLaw(preset.K, op.cdm_state0, op.u0, study.cdm)


def bridge_controller_to_plant(study: Study, controller: str, plant_state, *,
                               loading: str = "I", aux=None) -> np.ndarray:
    """Plant inputs ``[V_F, u_T]`` issued by a CDM-designed controller.

    FL and LQR laws act on the reconstructed CDM state; LQG acts on the
    measured ``(V_t, omega)`` through its estimate ``aux`` (zero by default).
    """
    sc = Scenario(4 if loading == "I" else 5, "plant", controller, 1.0, 1.0, loading)
    law = _make_law(study, sc)
    xs = np.asarray(plant_state, dtype=float)
    view = bridge_state(study.cdm, xs, study.config.scenario.eq_variant)
    pc = study.plant
    aux = law.aux0() if aux is None else np.asarray(aux, dtype=float)

    def y_fn(u):
        return np.array(plant_outputs(pc, xs, [study.cdm.e15 * u[0], u[1]]))

    u, _, _ = law(view, y_fn, aux, None)
    return np.array([study.cdm.e15 * u[0], u[1]])


# --------------------------------------------------------- simulation


def _initial_state(study: Study, sc: Scenario) -> np.ndarray:
    op = study.operating_point(sc.loading)
    if sc.x0 is not None:
        x = np.array(sc.x0, dtype=float)
    elif sc.model == "cdm":
        x = op.cdm_state0.copy()
    else:
        x = study.plant_operating_point(sc.loading).state.copy()
    if sc.case_id == 3:
        x[3 if sc.model == "cdm" else 7] = pm_schedule(0.0)
    return x


def _build_problem(study: Study, sc: Scenario, law: _Controller) -> OdeProblem:
    c, pc = study.cdm, study.plant
    variant = study.config.scenario.eq_variant
    nm = 5 if sc.model == "cdm" else 9
    tm_idx = 3 if sc.model == "cdm" else 7
    pinned = sc.case_id == 3
    mode0 = (NORMAL, pm_schedule(0.0) if pinned else None)

    def evaluate(x, mode):
        net, pm = mode
        xm, aux = x[:nm], x[nm:]
        if sc.model == "cdm":
            view = xm
            y_fn = lambda u: np.array(cdm_outputs(c, xm, net))
        else:
            view = bridge_state(c, xm, variant)
            y_fn = lambda u: np.array(plant_outputs(pc, xm, [c.e15 * u[0], u[1]], net))
        u, daux, sat = law(view, y_fn, aux, pm)
        return xm, u, daux, sat, net, pm

    def rhs(t, x, mode):
        xm, u, daux, _, net, pm = evaluate(x, mode)
        if sc.model == "cdm":
            dx = cdm_rhs(c, xm, u, net)
        else:
            dx = plant_rhs(pc, xm, [c.e15 * u[0], u[1]], net)
        if pm is not None:
            dx[tm_idx] = 0.0
        return dx if daux is None else np.concatenate([dx, daux])

    def observe(t, x, mode):
        xm, u, _, sat, net, _ = evaluate(x, mode)
        efd = clamp(float(u[0]), c.efd_min, c.efd_max)
        if sc.model == "cdm":
            Vt, w = cdm_outputs(c, xm, net)
            d, Tm, Gv = xm[2], xm[3], xm[4]
        else:
            Vt, w = plant_outputs(pc, xm, [c.e15 * u[0], u[1]], net)
            d, Tm, Gv = xm[6], xm[7], xm[8]
        out = {"Vt": Vt, "omega": w, "delta": float(d), "Tm": float(Tm), "GV": float(Gv),
               "EFD": efd, "uT": float(u[1]), "efd_saturated": float(sat)}
        if sc.model == "plant":
            out["VF"] = c.e15 * efd
        return out

    x0 = np.concatenate([_initial_state(study, sc), law.aux0()])
    return OdeProblem(rhs=rhs, x0=x0, t_span=(0.0, sc.t_end), dt=sc.dt, events=sc.events,
                      mode0=mode0, observe=observe)


def run_case(study: Study, sc: Scenario) -> tuple[Trace, "Metrics"]:
    """Simulate one scenario and extract metrics against its reference.

    Raises
    ------
    SimulationDiverged
        With the partial trace if the state becomes non-finite.
    FlSingularity
        If the linearizing law is singular before any good input exists.
    """
    law = _make_law(study, sc)
    trace = integrate(_build_problem(study, sc, law))
    return trace, compute_metrics(trace, reference(study, sc), t_from=_metrics_start(sc))


def reference(study: Study, sc: Scenario) -> dict[str, float]:
    """Reference values of the reported channels for a scenario."""
    if sc.model == "cdm":
        op = study.operating_point(sc.loading)
        x = op.cdm_state0
        return {"Vt": op.Vt0, "omega": 1.0, "delta": float(x[2]), "Tm": float(x[3]),
                "EFD": float(op.u0[0]), "uT": float(op.u0[1])}
    pop = study.plant_operating_point(sc.loading)
    return {"Vt": study.config.loadings[sc.loading].Vt0, "omega": 1.0,
            "delta": float(pop.state[6]), "Tm": float(pop.state[7]),
            "VF": float(pop.u0[0]), "uT": float(pop.u0[1])}


def _metrics_start(sc: Scenario) -> float:
    if sc.fault_window is not None and sc.fault_window[1] < sc.t_end:
        return sc.fault_window[0]
    return 0.0


# ------------------------------------------------------------ metrics


@dataclass(frozen=True)
class OutputMetrics:
    steady_state_error: float
    steady_value: float
    overshoot_pct: float
    peak_deviation: float
    settling_time: float | None

    @property
    def settled(self) -> bool:
        return self.settling_time is not None


@dataclass(frozen=True)
class Metrics:
    """Per-channel response metrics and excitation saturation time.

    ``settling_time`` is ``None`` for a channel whose 2% band never holds.
    """

    outputs: dict[str, OutputMetrics] = field(default_factory=dict)
    saturation_duration: float = 0.0

    def __getitem__(self, name: str) -> OutputMetrics:
        return self.outputs[name]

    def as_rows(self) -> list[dict[str, object]]:
        rows = []
        for k, m in self.outputs.items():
            rows.append({"channel": k, "steady_state_error": m.steady_state_error,
                         "steady_value": m.steady_value, "overshoot_pct": m.overshoot_pct,
                         "peak_deviation": m.peak_deviation,
                         "settling_time": "unsettled" if m.settling_time is None
                         else m.settling_time})
        return rows


def _channel_metrics(t: np.ndarray, y: np.ndarray, ref: float, t_from: float,
                     tail: float, band: float) -> OutputMetrics:
    n_tail = max(1, int(math.ceil(tail * len(y))))
    steady = float(np.mean(y[-n_tail:]))
    sel = t >= t_from - 1e-12
    ts, ys = t[sel], y[sel]
    step = ref - ys[0]
    if abs(step) > 1e-6:
        over = float(np.max((ys - ref) * math.copysign(1.0, step)))
        overshoot = 100.0 * max(0.0, over) / abs(step)
    else:
        # no step: excursion relative to the reference value
        overshoot = 100.0 * float(np.abs(ys - ref).max()) / max(abs(ref), 1e-12)
    dev = np.abs(ys - steady)
    peak = float(dev.max())
    tol = band * peak
    outside = np.nonzero(dev > tol)[0] if peak > 0 else np.array([], dtype=int)
    if len(outside) == 0:
        settle = 0.0
    elif outside[-1] == len(ys) - 1:
        settle = None
    else:
        settle = float(ts[outside[-1] + 1] - t_from)
    return OutputMetrics(steady_state_error=abs(steady - ref), steady_value=steady,
                         overshoot_pct=overshoot, peak_deviation=float(np.abs(ys - ref).max()),
                         settling_time=settle)


def compute_metrics(trace: Trace, ref: dict[str, float], *, t_from: float = 0.0,
                    tail: float = 0.1, band: float = 0.02) -> Metrics:
    """Metrics of the channels named in ``ref``.

    Steady-state error is ``|mean(last tail fraction) - ref|``. Overshoot is
    the excursion beyond ``ref`` relative to the step from the value at
    ``t_from``; without a step it is the peak excursion relative to ``ref``.
    Settling time is measured from ``t_from`` until the deviation from the
    steady value stays within ``band`` times its peak.
    """
    t = trace.times
    out = {k: _channel_metrics(t, np.asarray(trace[k]), v, t_from, tail, band)
           for k, v in ref.items() if k in trace.channels}
    sat = 0.0
    if "efd_saturated" in trace.channels:
        flags = np.asarray(trace["efd_saturated"]) > 0.5
        sat = float(np.sum(np.diff(t)[flags[:-1]]))
    return Metrics(outputs=out, saturation_duration=sat)
