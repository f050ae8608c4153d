"""Operating points of both models and the linearized CDM about them."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import NewtonError, NumericalError, newton_solve
from .plant_models import (
    CDM_STATES,
    CdmCoefficients,
    PlantCoefficients,
    cdm_jacobian,
    cdm_rhs,
    cdm_voltages,
    plant_rhs,
    plant_voltages,
)

__all__ = [
    "OperatingPoint",
    "PlantOperatingPoint",
    "LinearModel",
    "find_equilibrium",
    "plant_equilibrium",
    "linearize_cdm",
    "output_jacobian",
]


def _unlimited(c: CdmCoefficients) -> CdmCoefficients:
    return dataclasses.replace(c, gv_min=-math.inf, gv_max=math.inf,
                               efd_min=-math.inf, efd_max=math.inf)


@dataclass(frozen=True)
class PlantOperatingPoint:
    """Steady state of the ninth-order plant and its steady inputs."""

    state: np.ndarray
    u0: np.ndarray
    Vd0: float
    Vq0: float
    Vt0: float
    P: float
    power_factor: float

    @property
    def stator_current(self) -> float:
        return float(math.hypot(self.state[0], self.state[3]))


@dataclass(frozen=True)
class OperatingPoint:
    """CDM steady state, steady inputs ``[E_FD0, u_T0]`` and terminal values.

    ``within_limits`` is False when the steady gate opening or field EMF
    lies outside the actuator range of the coefficient record.
    """

    cdm_state0: np.ndarray
    u0: np.ndarray
    Vt0: float
    Vd0: float
    Vq0: float
    P: float
    power_factor: float
    within_limits: bool = True
    plant: PlantOperatingPoint | None = None

    def as_dict(self) -> dict[str, float]:
        d = {f"{n}0": float(v) for n, v in zip(CDM_STATES, self.cdm_state0)}
        d.update(EFD0=float(self.u0[0]), uT0=float(self.u0[1]), Vt0=self.Vt0,
                 Vd0=self.Vd0, Vq0=self.Vq0, P=self.P, power_factor=self.power_factor)
        return d


@dataclass(frozen=True)
class LinearModel:
    """Deviation model ``dx = A dx + B du``, ``dy = C dx`` about ``op``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    op: OperatingPoint
    state_names: tuple[str, ...] = field(default=CDM_STATES)

    @property
    def n(self) -> int:
        return self.A.shape[0]


def _steady_inputs(c: CdmCoefficients, x) -> np.ndarray:
    Eq, w, d, Tm, Gv = x
    s, co = math.sin(d - c.alpha), math.cos(d - c.alpha)
    efd = -(c.f11 * Eq + c.f12 * co + c.f13 * s) / c.g11
    ut = -(c.f51 * w + c.f52 * Gv) / c.g55
    return np.array([efd, ut])


def _cdm_power(c: CdmCoefficients, x) -> tuple[float, float, float, float]:
    """Terminal voltages, real power and power factor of a CDM state.

    Stator currents follow from the output map: ``V_d = -L_q I_q`` and
    ``V_q = E'_q + L'_d I_d``.
    """
    Vd, Vq = cdm_voltages(c, x)
    Lq = c.L4 + c.Ld_prime
    Iq = -Vd / Lq
    Id = (Vq - x[0]) / c.Ld_prime
    P = float(Vd * Id + Vq * Iq)
    S = math.hypot(Vd, Vq) * math.hypot(Id, Iq)
    return Vd, Vq, P, (P / S if S > 0 else 0.0)


def find_equilibrium(c: CdmCoefficients, Tm0: float, *, Eq0: float | None = None,
                     Vt0: float | None = None, guess=(1.2, 1.0)) -> OperatingPoint:
    """Steady state of the CDM at mechanical torque ``Tm0``.

    Exactly one electrical target is given: the transient voltage ``Eq0`` or
    the terminal voltage ``Vt0``. ``omega = 1`` and ``G_V = Tm0/K_T``; the
    rotor angle (and ``E'_q`` for a voltage target) solve ``d omega/dt = 0``
    and the steady inputs follow from the remaining two rows.

    Raises
    ------
    NewtonError
        If the Newton iteration fails.
    ValueError
        If the solved rotor angle lies outside ``(0, pi)``.
    """
    if (Eq0 is None) == (Vt0 is None):
        raise ValueError("give exactly one of Eq0 and Vt0")
    cu = _unlimited(c)
    Gv0 = Tm0 / c.KT

    def state(Eq, d):
        return np.array([Eq, 1.0, d, Tm0, Gv0])

    if Eq0 is not None:
        sol = newton_solve(lambda v: [_drift(cu, state(Eq0, v[0]))[1]], [guess[1]])
        x = state(Eq0, sol[0])
    else:
        def F(v):
            x = state(v[0], v[1])
            Vd, Vq = cdm_voltages(cu, x)
            return [_drift(cu, x)[1], math.hypot(Vd, Vq) - Vt0]

        sol = newton_solve(F, list(guess))
        x = state(*sol)

    if not 0.0 < x[2] < math.pi:
        raise ValueError(f"non-physical equilibrium: delta = {x[2]:.6g} rad")
    u0 = _steady_inputs(cu, x)
    res = np.abs(cdm_rhs(cu, x, u0)).max()
    if res > 1e-10:
        raise NewtonError("equilibrium residual above tolerance", res, x)
    Vd, Vq, P, pf = _cdm_power(cu, x)
    within = (c.gv_min <= Gv0 <= c.gv_max) and (c.efd_min <= u0[0] <= c.efd_max)
    return OperatingPoint(cdm_state0=x, u0=u0, Vt0=math.hypot(Vd, Vq), Vd0=Vd,
                          Vq0=Vq, P=P, power_factor=pf, within_limits=within)


def _drift(c: CdmCoefficients, x) -> np.ndarray:
    return cdm_rhs(c, x, [0.0, 0.0])


def plant_equilibrium(c: PlantCoefficients, Tm0: float, Vt0: float,
                      guess=(-0.9, 1.6, 0.0, 0.4, 0.0, 1.0, 0.0012),
                      KT: float = 1.0) -> PlantOperatingPoint:
    """Steady state of the ninth-order plant at torque ``Tm0`` and terminal
    voltage ``Vt0``.

    Unknowns are the five currents, the rotor angle and the field voltage;
    ``omega = 1`` and ``G_V = Tm0/K_T``.
    """
    Gv0 = Tm0 / KT
    cu = dataclasses.replace(c, vf_min=-math.inf, vf_max=math.inf)

    def assemble(v):
        Id, IF, ID, Iq, IQ, d, vf = v
        return np.array([Id, IF, ID, Iq, IQ, 1.0, d, Tm0, Gv0]), [vf, 0.0]

    def F(v):
        x, u = assemble(v)
        Vd, Vq = plant_voltages(cu, x, u)
        return list(plant_rhs(cu, x, u)[:6]) + [math.hypot(Vd, Vq) - Vt0]

    v = newton_solve(F, list(guess))
    x, u = assemble(v)
    if not 0.0 < x[6] < math.pi:
        raise ValueError(f"non-physical equilibrium: delta = {x[6]:.6g} rad")
    ut = -(cu.F91 + cu.F92 * Gv0) / cu.G92
    u0 = np.array([u[0], ut])
    Vd, Vq = plant_voltages(cu, x, u0)
    Id, Iq = x[0], x[3]
    P = float(Vd * Id + Vq * Iq)
    S = math.hypot(Vd, Vq) * math.hypot(Id, Iq)
    return PlantOperatingPoint(state=x, u0=u0, Vd0=Vd, Vq0=Vq, Vt0=math.hypot(Vd, Vq),
                               P=P, power_factor=P / S)


def output_jacobian(c: CdmCoefficients, x) -> np.ndarray:
    """Analytic Jacobian of ``(V_t, omega)`` with respect to the CDM state."""
    Vd, Vq = cdm_voltages(c, x)
    Vt = math.hypot(Vd, Vq)
    if Vt == 0.0:
        raise NumericalError("terminal voltage is zero; output row undefined")
    d = float(x[2])
    s, co = math.sin(d - c.alpha), math.cos(d - c.alpha)
    T1 = (Vd / Vt) * c.Vd1 + (Vq / Vt) * c.Vq1 + Vq / Vt
    T2 = ((Vd / Vt) * (-c.Vd2 * s + c.Vd3 * co)
          + (Vq / Vt) * (-c.Vq2 * s + c.Vq3 * co))
    return np.array([[T1, 0.0, T2, 0.0, 0.0],
                     [0.0, 1.0, 0.0, 0.0, 0.0]])


def linearize_cdm(c: CdmCoefficients, op: OperatingPoint) -> LinearModel:
    """Jacobian linearization of the CDM about ``op``."""
    x0 = op.cdm_state0
    A = cdm_jacobian(c, x0)
    B = np.zeros((5, 2))
    B[0, 0] = c.g11
    B[4, 1] = c.g55
    C = output_jacobian(c, x0)
    return LinearModel(A=A, B=B, C=C, D=np.zeros((2, 2)), op=op)
