"""Ninth-order SMIB plant and fifth-order control-design model (CDM).

All quantities are per unit with base speed ``omega_R = 1``. Coefficient
records are derived once from :class:`MachineParams` and then passed to the
right-hand-side and output functions, which are written on scalar floats so a
fixed-step integrator can call them tens of thousands of times per run.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

__all__ = [
    "NORMAL",
    "FAULT",
    "MachineParams",
    "PlantCoefficients",
    "CdmCoefficients",
    "PLANT_STATES",
    "CDM_STATES",
    "derive_plant_coefficients",
    "derive_cdm_coefficients",
    "plant_rhs",
    "plant_jacobian",
    "plant_outputs",
    "plant_voltages",
    "cdm_rhs",
    "cdm_jacobian",
    "cdm_outputs",
    "cdm_voltages",
    "clamp",
]

NORMAL = "normal"
FAULT = "fault"

PLANT_STATES = ("Id", "IF", "ID", "Iq", "IQ", "omega", "delta", "Tm", "GV")
CDM_STATES = ("Eq", "omega", "delta", "Tm", "GV")


def clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


def _vinf_scale(mode) -> float:
    if mode in (None, NORMAL):
        return 1.0
    if mode == FAULT:
        return 0.0
    raise ValueError(f"unknown network mode {mode!r}")


@dataclass(frozen=True)
class MachineParams:
    """Raw machine, network and turbine-governor constants (per unit).

    ``Ld_prime`` and ``Td0_prime`` are the transient reactance and open-circuit
    time constant used by the CDM. Set either to ``None`` to derive it from
    the winding data (``Ld - kMF**2/LF`` and ``LF/(rF*omega_base)``).
    ``cdm_stator_resistance`` selects whether the CDM network resistance
    ``R1`` includes the stator resistance ``r`` or only the line ``Re``.
    """

    Ld: float = 1.70
    LF: float = 1.65
    LD: float = 1.605
    Lq: float = 1.64
    LQ: float = 1.526
    kMF: float = 1.55
    kMD: float = 1.55
    MR: float = 1.55
    kMQ: float = 1.49
    r: float = 0.001096
    rF: float = 0.000742
    rD: float = 0.0131
    rQ: float = 0.0540
    H: float = 2.37
    Re: float = 0.02
    Le: float = 0.4
    D: float = 0.0
    KT: float = 1.0
    KG: float = 1.0
    tau_T: float = 0.5
    tau_G: float = 0.2
    RT: float = 20.0
    V_inf: float = 1.0
    alpha: float = math.radians(3.5598)
    omega_R: float = 1.0
    omega_base: float = 376.99
    Ld_prime: float | None = 0.245
    Td0_prime: float | None = 5.9
    cdm_stator_resistance: bool = False
    efd_min: float = -5.0
    efd_max: float = 5.0
    gv_min: float = 0.0
    gv_max: float = 1.2

    def __post_init__(self):
        positive = ("Ld", "LF", "LD", "Lq", "LQ", "kMF", "kMD", "MR", "kMQ",
                    "r", "rF", "rD", "rQ", "H", "Re", "Le", "tau_T", "tau_G",
                    "RT", "V_inf", "omega_R", "omega_base")
        for name in positive:
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not self.D >= 0:
            raise ValueError(f"D must be non-negative, got {self.D}")
        for name in ("Ld_prime", "Td0_prime"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")
        if not self.efd_min < self.efd_max:
            raise ValueError("efd_min must be below efd_max")
        if not self.gv_min < self.gv_max:
            raise ValueError("gv_min must be below gv_max")

    @property
    def k(self) -> float:
        return math.sqrt(1.5)

    @property
    def tau_j(self) -> float:
        return 2.0 * self.H * self.omega_R

    @property
    def ld_prime(self) -> float:
        if self.Ld_prime is not None:
            return self.Ld_prime
        return self.Ld - self.kMF ** 2 / self.LF

    @property
    def td0_prime(self) -> float:
        if self.Td0_prime is not None:
            return self.Td0_prime
        return self.LF / (self.rF * self.omega_base)

    def replace(self, **changes) -> "MachineParams":
        d = asdict(self)
        d.update(changes)
        return MachineParams(**d)


@dataclass(frozen=True)
class PlantCoefficients:
    """Closed-form coefficients of the ninth-order plant and its outputs."""

    k: float
    tau_j: float
    mu: float
    nu: float
    Ld1: float
    LF1: float
    LD1: float
    MF1: float
    MD1: float
    MR1: float
    Lq1: float
    LQ1: float
    MQ1: float
    F11: float
    F12: float
    F13: float
    F14: float
    F15: float
    F16: float
    G11: float
    F21: float
    F22: float
    F23: float
    F24: float
    F25: float
    F26: float
    G21: float
    F31: float
    F32: float
    F33: float
    F34: float
    F35: float
    F36: float
    G31: float
    F41: float
    F42: float
    F43: float
    F44: float
    F45: float
    F46: float
    F51: float
    F52: float
    F53: float
    F54: float
    F55: float
    F56: float
    F61: float
    F62: float
    F63: float
    F64: float
    F65: float
    F66: float
    F81: float
    F82: float
    F91: float
    F92: float
    G92: float
    y11: float
    y12: float
    y13: float
    y14: float
    y15: float
    y16: float
    i11: float
    y21: float
    y22: float
    y23: float
    y24: float
    y25: float
    y26: float
    V_inf: float
    alpha: float
    vf_min: float
    vf_max: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class CdmCoefficients:
    """Coefficients of the CDM, its output map, the field-current bridge
    constants ``e11..e15`` and the feedback-linearization constants."""

    tau_j: float
    Ld_prime: float
    Td0_prime: float
    L1: float
    L2: float
    L3: float
    L4: float
    R1: float
    M1: float
    f11: float
    f12: float
    f13: float
    g11: float
    f21: float
    f22: float
    f23: float
    f24: float
    f25: float
    f26: float
    f27: float
    f28: float
    f41: float
    f42: float
    f51: float
    f52: float
    g55: float
    Vd1: float
    Vd2: float
    Vd3: float
    Vq1: float
    Vq2: float
    Vq3: float
    e11: float
    e12: float
    e13: float
    e14: float
    e15: float
    p31: float
    p32: float
    p33: float
    p34: float
    p35: float
    p36: float
    p37: float
    p38: float
    p39: float
    q31: float
    q32: float
    q33: float
    q34: float
    q35: float
    r31: float
    r32: float
    r33: float
    p51: float
    p52: float
    p53: float
    r51: float
    KT: float
    V_inf: float
    alpha: float
    efd_min: float
    efd_max: float
    gv_min: float
    gv_max: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def derive_plant_coefficients(p: MachineParams) -> PlantCoefficients:
    """Evaluate the ninth-order model coefficients from machine constants.

    Raises
    ------
    ValueError
        If the d- or q-axis inductance determinant ``mu``/``nu`` vanishes.
    """
    k = p.k
    MF, MD, MQ = p.kMF / k, p.kMD / k, p.kMQ / k
    Ld, LF, LD, Lq, LQ, MR = p.Ld, p.LF, p.LD, p.Lq, p.LQ, p.MR
    Le, Re, V = p.Le, p.Re, p.V_inf
    tj = p.tau_j
    LdE = Ld + Le
    LqE = Lq + Le
    R = p.r + Re

    mu = LdE * MR ** 2 - LD * LF * LdE + k ** 2 * (LD * MF ** 2 + LF * MD ** 2 - 2 * MD * MF * MR)
    nu = -k ** 2 * MQ ** 2 + LQ * LqE
    if abs(mu) < 1e-12 or abs(nu) < 1e-12:
        raise ValueError(f"degenerate machine: mu = {mu:.3e}, nu = {nu:.3e}")

    Ld1 = (MR ** 2 - LD * LF) / mu
    LF1 = (MD ** 2 * k ** 2 - LD * LdE) / mu
    LD1 = (MF ** 2 * k ** 2 - LF * LdE) / mu
    MF1 = (MD * MR - LD * MF) / mu
    MD1 = (MF * MR - LF * MD) / mu
    MR1 = (LdE * MR - MD * MF * k ** 2) / mu
    Lq1 = LQ / nu
    LQ1 = LqE / nu
    MQ1 = MQ / nu

    F = dict(
        F11=-Ld1 * R, F12=k * MF1 * p.rF, F13=k * MD1 * p.rD, F14=-LqE * Ld1,
        F15=-k * MQ * Ld1, F16=V * Ld1, G11=-k * MF1,
        F21=k * MF1 * R, F22=-LF1 * p.rF, F23=-MR1 * p.rD, F24=k * MF1 * LqE,
        F25=k ** 2 * MF1 * MQ, F26=-V * k * MF1, G21=LF1,
        F31=k * MD1 * R, F32=-MR1 * p.rF, F33=-LD1 * p.rD, F34=k * MD1 * LqE,
        F35=k ** 2 * MD1 * MQ, F36=-V * k * MD1, G31=MR1,
        F41=Lq1 * LdE, F42=k * MF * Lq1, F43=k * MD * Lq1, F44=-Lq1 * R,
        F45=k * MQ1 * p.rQ, F46=-V * Lq1,
        F51=-k * MQ1 * LdE, F52=-k ** 2 * MQ1 * MF, F53=-k ** 2 * MQ1 * MD,
        F54=k * MQ1 * R, F55=-LQ1 * p.rQ, F56=V * k * MQ1,
        F61=-(Ld - Lq) / tj, F62=-k * MF / tj, F63=-k * MD / tj, F64=k * MQ / tj,
        F65=-p.D / tj, F66=1.0 / tj,
        F81=-1.0 / p.tau_T, F82=p.KT / p.tau_T,
        F91=-p.KG / (p.tau_G * p.RT), F92=-1.0 / p.tau_G, G92=p.KG / p.tau_G,
    )
    Y = dict(
        y11=Re + Le * F["F11"], y12=Le * F["F12"], y13=Le * F["F13"],
        y14=Le * F["F14"] + Le, y15=Le * F["F15"], y16=Le * F["F16"] - V,
        i11=Le * F["G11"],
        y21=Le * F["F41"] - Le, y22=Le * F["F42"], y23=Le * F["F43"],
        y24=Re + Le * F["F44"], y25=Le * F["F45"], y26=Le * F["F46"] + V,
    )
    e15 = p.rF / (p.omega_R * p.kMF)
    return PlantCoefficients(
        k=k, tau_j=tj, mu=mu, nu=nu, Ld1=Ld1, LF1=LF1, LD1=LD1, MF1=MF1,
        MD1=MD1, MR1=MR1, Lq1=Lq1, LQ1=LQ1, MQ1=MQ1, **F, **Y,
        V_inf=V, alpha=p.alpha, vf_min=e15 * p.efd_min, vf_max=e15 * p.efd_max,
    )


def derive_cdm_coefficients(p: MachineParams) -> CdmCoefficients:
    """Evaluate the CDM, output-map, bridge and linearization constants."""
    Ldp = p.ld_prime
    td0 = p.td0_prime
    tj = p.tau_j
    V = p.V_inf
    L1 = p.Lq + p.Le
    L2 = p.Ld - Ldp
    L3 = Ldp + p.Le
    L4 = p.Lq - Ldp
    R1 = p.Re + (p.r if p.cdm_stator_resistance else 0.0)
    M1 = R1 ** 2 + L3 * L1
    if not M1 > 0:
        raise ValueError(f"M1 must be positive, got {M1}")

    f11 = -(1 + L2 * L1 / M1) / td0
    f12 = L2 * L1 * V / (M1 * td0)
    f13 = L2 * R1 * V / (M1 * td0)
    g11 = 1.0 / td0
    den = M1 ** 2 * tj
    f21 = -(R1 / (M1 * tj) + L4 * L1 * R1 / den)
    f22 = (R1 / (M1 * tj) + 2 * L4 * L1 * R1 / den) * V
    f23 = -(L3 / (M1 * tj) + L4 * L1 * L3 / den - L4 * R1 ** 2 / den) * V
    f24 = -(L4 * R1 ** 2 / den - L4 * L1 * L3 / den) * V ** 2
    f25 = -(L4 * L1 * R1 * V ** 2 / den)
    f26 = L4 * L3 * R1 * V ** 2 / den
    f27 = -p.D / tj
    f28 = 1.0 / tj
    f41 = -1.0 / p.tau_T
    f42 = p.KT / p.tau_T
    f51 = -p.KG / (p.tau_G * p.RT)
    f52 = -1.0 / p.tau_G
    g55 = p.KG / p.tau_G

    Vd1 = -p.Lq * R1 / M1
    Vd2 = V * p.Lq * R1 / M1
    Vd3 = -V * p.Lq * L3 / M1
    Vq1 = -Ldp * L1 / M1
    Vq2 = V * Ldp * L1 / M1
    Vq3 = V * Ldp * R1 / M1

    e11 = 1 + L1 * L2 / M1
    e12 = L1 * L2 * V / M1
    e13 = R1 * L2 * V / M1
    e14 = p.omega_R * p.kMF
    e15 = p.rF / (p.omega_R * p.kMF)

    fl = dict(
        p31=2 * f11 * f21 + f27 * f21,
        p32=2 * f21 * f12 + f22 * f11 - f23 + f27 * f22,
        p33=2 * f21 * f13 + f22 + f23 * f11 + f27 * f23,
        p34=f22 * f12 - f24 + f27 * f25,
        p35=f23 * f13 + f24 + f27 * f26,
        p36=f22 * f13 + f23 * f12 + 2 * f25 - 2 * f26 + f27 * f24,
        p37=f27 ** 2,
        p38=f27 * f28 + f28 * f41,
        p39=f28 * f42,
        q31=f23, q32=-f22, q33=f24, q34=-f24, q35=-2 * f25 + 2 * f26,
        r31=2 * f21 * g11, r32=f22 * g11, r33=f23 * g11,
        p51=f42 * f51, p52=f41 ** 2, p53=f41 * f42 + f42 * f52, r51=f42 * g55,
    )
    return CdmCoefficients(
        tau_j=tj, Ld_prime=Ldp, Td0_prime=td0, L1=L1, L2=L2, L3=L3, L4=L4,
        R1=R1, M1=M1, f11=f11, f12=f12, f13=f13, g11=g11, f21=f21, f22=f22,
        f23=f23, f24=f24, f25=f25, f26=f26, f27=f27, f28=f28, f41=f41,
        f42=f42, f51=f51, f52=f52, g55=g55, Vd1=Vd1, Vd2=Vd2, Vd3=Vd3,
        Vq1=Vq1, Vq2=Vq2, Vq3=Vq3, e11=e11, e12=e12, e13=e13, e14=e14,
        e15=e15, **fl, KT=p.KT, V_inf=V, alpha=p.alpha, efd_min=p.efd_min,
        efd_max=p.efd_max, gv_min=p.gv_min, gv_max=p.gv_max,
    )


# ---------------------------------------------------------------- plant


def plant_rhs(c: PlantCoefficients, x, u, mode=NORMAL) -> np.ndarray:
    """State derivative of the ninth-order plant.

    ``u = [V_F, u_T]``; ``V_F`` is clipped to the field-voltage range implied
    by the excitation limits. In ``FAULT`` mode the infinite-bus terms vanish.
    """
    Id, IF, ID, Iq, IQ, w, d, Tm, Gv = (float(v) for v in x)
    vf = clamp(float(u[0]), c.vf_min, c.vf_max)
    ut = float(u[1])
    v = _vinf_scale(mode)
    s = v * math.sin(d - c.alpha)
    co = v * math.cos(d - c.alpha)
    return np.array([
        c.F11 * Id + c.F12 * IF + c.F13 * ID + (c.F14 * Iq + c.F15 * IQ) * w + c.F16 * s + c.G11 * vf,
        c.F21 * Id + c.F22 * IF + c.F23 * ID + (c.F24 * Iq + c.F25 * IQ) * w + c.F26 * s + c.G21 * vf,
        c.F31 * Id + c.F32 * IF + c.F33 * ID + (c.F34 * Iq + c.F35 * IQ) * w + c.F36 * s + c.G31 * vf,
        (c.F41 * Id + c.F42 * IF + c.F43 * ID) * w + c.F44 * Iq + c.F45 * IQ + c.F46 * co,
        (c.F51 * Id + c.F52 * IF + c.F53 * ID) * w + c.F54 * Iq + c.F55 * IQ + c.F56 * co,
        (c.F61 * Id + c.F62 * IF + c.F63 * ID) * Iq + c.F64 * Id * IQ + c.F65 * w + c.F66 * Tm,
        w - 1.0,
        c.F81 * Tm + c.F82 * Gv,
        c.F91 * w + c.F92 * Gv + c.G92 * ut,
    ])


def plant_jacobian(c: PlantCoefficients, x, mode=NORMAL) -> np.ndarray:
    """Analytic state Jacobian of :func:`plant_rhs` (inputs held fixed)."""
    Id, IF, ID, Iq, IQ, w, d, Tm, Gv = (float(v) for v in x)
    v = _vinf_scale(mode)
    s = v * math.sin(d - c.alpha)
    co = v * math.cos(d - c.alpha)
    J = np.zeros((9, 9))
    J[0] = [c.F11, c.F12, c.F13, c.F14 * w, c.F15 * w, c.F14 * Iq + c.F15 * IQ, c.F16 * co, 0, 0]
    J[1] = [c.F21, c.F22, c.F23, c.F24 * w, c.F25 * w, c.F24 * Iq + c.F25 * IQ, c.F26 * co, 0, 0]
    J[2] = [c.F31, c.F32, c.F33, c.F34 * w, c.F35 * w, c.F34 * Iq + c.F35 * IQ, c.F36 * co, 0, 0]
    J[3] = [c.F41 * w, c.F42 * w, c.F43 * w, c.F44, c.F45,
            c.F41 * Id + c.F42 * IF + c.F43 * ID, -c.F46 * s, 0, 0]
    J[4] = [c.F51 * w, c.F52 * w, c.F53 * w, c.F54, c.F55,
            c.F51 * Id + c.F52 * IF + c.F53 * ID, -c.F56 * s, 0, 0]
    J[5] = [c.F61 * Iq + c.F64 * IQ, c.F62 * Iq, c.F63 * Iq,
            c.F61 * Id + c.F62 * IF + c.F63 * ID, c.F64 * Id, c.F65, 0, c.F66, 0]
    J[6, 5] = 1.0
    J[7, 7] = c.F81
    J[7, 8] = c.F82
    J[8, 5] = c.F91
    J[8, 8] = c.F92
    return J


def plant_voltages(c: PlantCoefficients, x, u, mode=NORMAL) -> tuple[float, float]:
    """Terminal voltage components ``(V_d, V_q)``; zero while faulted."""
    if mode == FAULT:
        return 0.0, 0.0
    Id, IF, ID, Iq, IQ, w, d, Tm, Gv = (float(v) for v in x)
    vf = clamp(float(u[0]), c.vf_min, c.vf_max)
    s = math.sin(d - c.alpha)
    co = math.cos(d - c.alpha)
    Vd = (c.y11 * Id + c.y12 * IF + c.y13 * ID + (c.y14 * Iq + c.y15 * IQ) * w
          + c.y16 * s + c.i11 * vf)
    Vq = (c.y21 * Id + c.y22 * IF + c.y23 * ID) * w + c.y24 * Iq + c.y25 * IQ + c.y26 * co
    return Vd, Vq


def plant_outputs(c: PlantCoefficients, x, u, mode=NORMAL) -> tuple[float, float]:
    """Measured outputs ``(V_t, omega)`` of the plant."""
    Vd, Vq = plant_voltages(c, x, u, mode)
    return math.hypot(Vd, Vq), float(x[5])


# ---------------------------------------------------------------- CDM


def cdm_rhs(c: CdmCoefficients, x, u, mode=NORMAL) -> np.ndarray:
    """State derivative of the CDM.

    ``E_FD`` is clipped to its limits and the gate opening ``G_V`` is held
    inside ``[gv_min, gv_max]``: the model sees the clipped value and the
    derivative is zeroed when it would push further past a bound.
    """
    Eq, w, d, Tm, Gv = (float(v) for v in x)
    efd = clamp(float(u[0]), c.efd_min, c.efd_max)
    ut = float(u[1])
    v = _vinf_scale(mode)
    s = math.sin(d - c.alpha)
    co = math.cos(d - c.alpha)
    gv = clamp(Gv, c.gv_min, c.gv_max)
    dgv = c.f51 * w + c.f52 * gv + c.g55 * ut
    if (Gv >= c.gv_max and dgv > 0) or (Gv <= c.gv_min and dgv < 0):
        dgv = 0.0
    return np.array([
        c.f11 * Eq + v * (c.f12 * co + c.f13 * s) + c.g11 * efd,
        (c.f21 * Eq * Eq + v * Eq * (c.f22 * co + c.f23 * s)
         + v * v * (c.f24 * s * co + c.f25 * co * co + c.f26 * s * s)
         + c.f27 * w + c.f28 * Tm),
        w - 1.0,
        c.f41 * Tm + c.f42 * gv,
        dgv,
    ])


def cdm_jacobian(c: CdmCoefficients, x, mode=NORMAL) -> np.ndarray:
    """Analytic state Jacobian of :func:`cdm_rhs` inside the G_V limits."""
    Eq, w, d, Tm, Gv = (float(v) for v in x)
    v = _vinf_scale(mode)
    s = math.sin(d - c.alpha)
    co = math.cos(d - c.alpha)
    J = np.zeros((5, 5))
    J[0, 0] = c.f11
    J[0, 2] = v * (-c.f12 * s + c.f13 * co)
    J[1, 0] = 2 * c.f21 * Eq + v * (c.f22 * co + c.f23 * s)
    J[1, 1] = c.f27
    J[1, 2] = (v * Eq * (-c.f22 * s + c.f23 * co)
               + v * v * (c.f24 * (co * co - s * s) + 2 * (c.f26 - c.f25) * s * co))
    J[1, 3] = c.f28
    J[2, 1] = 1.0
    J[3, 3] = c.f41
    J[3, 4] = c.f42
    J[4, 1] = c.f51
    J[4, 4] = c.f52
    return J


def cdm_voltages(c: CdmCoefficients, x, mode=NORMAL) -> tuple[float, float]:
    """Terminal voltage components ``(V_d, V_q)``; zero while faulted."""
    if mode == FAULT:
        return 0.0, 0.0
    Eq, d = float(x[0]), float(x[2])
    s = math.sin(d - c.alpha)
    co = math.cos(d - c.alpha)
    Vd = c.Vd1 * Eq + c.Vd2 * co + c.Vd3 * s
    Vq = c.Vq1 * Eq + c.Vq2 * co + c.Vq3 * s + Eq
    return Vd, Vq


def cdm_outputs(c: CdmCoefficients, x, mode=NORMAL) -> tuple[float, float]:
    """Measured outputs ``(V_t, omega)`` of the CDM."""
    Vd, Vq = cdm_voltages(c, x, mode)
    return math.hypot(Vd, Vq), float(x[1])
