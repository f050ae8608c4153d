"""Exact feedback-linearizing controllers (NFLC and INFLC) for the CDM.

With outputs ``delta`` (relative degree 3) and ``T_m`` (relative degree 2)
the CDM is fully linearized by

    E_FD = (w1 - sigma1(x)) / gamma1(x),    u_T = (w2 - sigma2(x)) / gamma2,

leaving two integrator chains driven by LQR outer loops. The INFLC adds an
integral of the first error of each chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import NumericalError, is_hurwitz, lqr_gain
from .plant_models import CdmCoefficients, cdm_rhs, clamp

__all__ = [
    "GAMMA_MIN",
    "FlSingularity",
    "FlTerms",
    "FlGains",
    "relative_degree_check",
    "fl_terms",
    "transform_state",
    "chain_matrices",
    "design_fl_gains",
    "fl_inputs",
    "virtual_inputs",
    "fl_control",
    "nflc_control",
    "inflc_control",
    "reconstruct_eq_prime",
    "efd_to_vf",
    "vf_to_efd",
]

GAMMA_MIN = 1e-8


class FlSingularity(NumericalError):
    """The decoupling gain ``gamma1`` vanished at the current state."""


@dataclass(frozen=True)
class FlTerms:
    sigma1: float
    gamma1: float
    sigma2: float
    gamma2: float


@dataclass(frozen=True)
class FlGains:
    """Outer-loop gains and set point of an NFLC/INFLC controller.

    ``KiG``/``KiT`` are the integral gains; both zero gives the NFLC.
    """

    KG: np.ndarray
    KT: np.ndarray
    KiG: float = 0.0
    KiT: float = 0.0
    z1d: float = 1.0
    z4d: float = 1.0012

    def __post_init__(self):
        object.__setattr__(self, "KG", np.asarray(self.KG, dtype=float).reshape(3))
        object.__setattr__(self, "KT", np.asarray(self.KT, dtype=float).reshape(2))

    @property
    def integral(self) -> bool:
        return self.KiG != 0.0 or self.KiT != 0.0

    @classmethod
    def from_augmented(cls, KG_tilde, KT_tilde, **kw) -> "FlGains":
        """Split augmented rows ``[K_G, K_iG]`` and ``[K_T, K_iT]``."""
        KG_tilde = np.asarray(KG_tilde, dtype=float).ravel()
        KT_tilde = np.asarray(KT_tilde, dtype=float).ravel()
        return cls(KG=KG_tilde[:3], KT=KT_tilde[:2], KiG=float(KG_tilde[3]),
                   KiT=float(KT_tilde[2]), **kw)

    def with_reference(self, z1d: float, z4d: float) -> "FlGains":
        return FlGains(self.KG, self.KT, self.KiG, self.KiT, z1d, z4d)


def _directional(fun, x: np.ndarray, v: np.ndarray, h: float = 1e-6) -> float:
    return (fun(x + h * v) - fun(x - h * v)) / (2.0 * h)


def relative_degree_check(c: CdmCoefficients, x, *, zero_tol: float = 1e-10,
                          nonzero_tol: float = GAMMA_MIN) -> tuple[int, int]:
    """Relative degrees of ``delta`` and ``T_m`` by numeric Lie derivatives.

    Lie derivatives are taken by central directional differences of
    :func:`cdm_rhs`, independently of the closed-form coefficients.

    Raises
    ------
    FlSingularity
        If the first non-vanishing derivative falls below ``nonzero_tol``.
    """
    x = np.asarray(x, dtype=float)
    drift = lambda y: cdm_rhs(c, y, [0.0, 0.0])
    g = [cdm_rhs(c, x, e) - drift(x) for e in ([1.0, 0.0], [0.0, 1.0])]

    def degree(chain) -> int:
        for r, fun in enumerate(chain, start=1):
            lg = max(abs(_directional(fun, x, gi)) for gi in g)
            if lg > zero_tol:
                if lg < nonzero_tol:
                    raise FlSingularity(f"L_g L_f^{r - 1} h = {lg:.3e} below threshold")
                return r
        raise FlSingularity("no input appears in the output derivatives")

    h1 = [lambda y: y[2], lambda y: drift(y)[2], lambda y: drift(y)[1]]
    h2 = [lambda y: y[3], lambda y: drift(y)[3]]
    return degree(h1), degree(h2)


def fl_terms(c: CdmCoefficients, x) -> FlTerms:
    """Closed-form ``sigma1``, ``gamma1``, ``sigma2`` and ``gamma2``."""
    Eq, w, d, Tm, Gv = (float(v) for v in x)
    s = math.sin(d - c.alpha)
    co = math.cos(d - c.alpha)
    sigma1 = (c.p31 * Eq * Eq + c.p32 * Eq * co + c.p33 * Eq * s
              + c.p34 * co * co + c.p35 * s * s + c.p36 * s * co
              + c.p37 * w + c.p38 * Tm + c.p39 * Gv
              + w * (c.q31 * Eq * co + c.q32 * Eq * s + c.q33 * co * co
                     + c.q34 * s * s + c.q35 * s * co))
    gamma1 = c.r31 * Eq + c.r32 * co + c.r33 * s
    sigma2 = c.p51 * w + c.p52 * Tm + c.p53 * Gv
    return FlTerms(sigma1, gamma1, sigma2, c.r51)


def transform_state(c: CdmCoefficients, x) -> np.ndarray:
    """Linearizing coordinates ``z = [delta, omega-1, domega/dt, T_m, dT_m/dt]``."""
    Eq, w, d, Tm, Gv = (float(v) for v in x)
    s = math.sin(d - c.alpha)
    co = math.cos(d - c.alpha)
    z3 = (c.f21 * Eq * Eq + c.f22 * Eq * co + c.f23 * Eq * s + c.f24 * s * co
          + c.f25 * co * co + c.f26 * s * s + c.f27 * w + c.f28 * Tm)
    return np.array([d, w - 1.0, z3, Tm, c.f41 * Tm + c.f42 * Gv])


def chain_matrices(integral: bool):
    """Integrator-chain subsystems ``(A_G, B_G, A_T, B_T)``, optionally
    augmented with the integral of the first error state."""
    AG = np.diag([1.0, 1.0], 1)
    BG = np.array([[0.0], [0.0], [1.0]])
    AT = np.array([[0.0, 1.0], [0.0, 0.0]])
    BT = np.array([[0.0], [1.0]])
    if integral:
        AG = np.block([[AG, np.zeros((3, 1))], [np.array([[1.0, 0.0, 0.0, 0.0]])]])
        BG = np.vstack([BG, [[0.0]]])
        AT = np.block([[AT, np.zeros((2, 1))], [np.array([[1.0, 0.0, 0.0]])]])
        BT = np.vstack([BT, [[0.0]]])
    return AG, BG, AT, BT


def design_fl_gains(QG, RG, QT, RT, with_integral: bool, *, z1d: float = 1.0,
                    z4d: float = 1.0012) -> FlGains:
    """LQR outer-loop gains for the (possibly augmented) integrator chains."""
    AG, BG, AT, BT = chain_matrices(with_integral)
    KG = lqr_gain(AG, BG, QG, np.atleast_2d(RG))
    KT = lqr_gain(AT, BT, QT, np.atleast_2d(RT))
    if not (is_hurwitz(AG - BG @ KG) and is_hurwitz(AT - BT @ KT)):
        raise NumericalError("outer-loop design is not stabilizing")
    if with_integral:
        return FlGains.from_augmented(KG, KT, z1d=z1d, z4d=z4d)
    return FlGains(KG=KG, KT=KT, z1d=z1d, z4d=z4d)


def fl_inputs(c: CdmCoefficients, x, w1: float, w2: float) -> tuple[float, float, FlTerms]:
    """Unclamped ``(E_FD, u_T)`` realizing the virtual inputs ``w1, w2``.

    Raises
    ------
    FlSingularity
        If ``|gamma1| < GAMMA_MIN``.
    """
    t = fl_terms(c, x)
    if abs(t.gamma1) < GAMMA_MIN:
        raise FlSingularity(f"gamma1 = {t.gamma1:.3e} at x = {np.asarray(x)}")
    return (w1 - t.sigma1) / t.gamma1, (w2 - t.sigma2) / t.gamma2, t


def virtual_inputs(gains: FlGains, z: np.ndarray, eiG: float, eiT: float):
    eG = (z[0] - gains.z1d, z[1], z[2])
    eT = (z[3] - gains.z4d, z[4])
    KG, KT = gains.KG, gains.KT
    w1 = -(KG[0] * eG[0] + KG[1] * eG[1] + KG[2] * eG[2]) - gains.KiG * eiG
    w2 = -(KT[0] * eT[0] + KT[1] * eT[1]) - gains.KiT * eiT
    return w1, w2


def fl_control(c: CdmCoefficients, gains: FlGains, x, eiG: float = 0.0, eiT: float = 0.0,
               hold=None) -> tuple[np.ndarray, bool, np.ndarray]:
    """Clamped input, excitation saturation flag and linearizing coordinates."""
    z = transform_state(c, x)
    w1, w2 = virtual_inputs(gains, z, eiG, eiT)
    try:
        efd, ut, _ = fl_inputs(c, x, w1, w2)
    except FlSingularity:
        if hold is None:
            raise
        return np.array(hold, dtype=float), False, z
    sat = not (c.efd_min <= efd <= c.efd_max)
    return np.array([clamp(efd, c.efd_min, c.efd_max), ut]), sat, z


def nflc_control(c: CdmCoefficients, gains: FlGains, x, *, hold=None) -> np.ndarray:
    """NFLC input ``[E_FD, u_T]``, clamped to the excitation limits.

    ``hold`` is the last good input, returned if ``gamma1`` is singular.
    """
    u, _, _ = fl_control(c, gains, x, 0.0, 0.0, hold)
    return u


def inflc_control(c: CdmCoefficients, gains: FlGains, x, integrals, dt: float, *,
                  hold=None) -> tuple[np.ndarray, np.ndarray]:
    """INFLC input and integral states advanced by one step ``dt``.

    The integral of a channel is frozen while that actuator is saturated.
    """
    eiG, eiT = (float(v) for v in integrals)
    u, sat, z = fl_control(c, gains, x, eiG, eiT, hold)
    if not sat:
        eiG += dt * (z[0] - gains.z1d)
    eiT += dt * (z[3] - gains.z4d)
    return u, np.array([eiG, eiT])


def reconstruct_eq_prime(c: CdmCoefficients, xs, variant: str = "B") -> float:
    """CDM voltage ``E'_q`` from a plant state.

    Variant ``"A"`` uses the field current and rotor angle; variant ``"B"``
    uses the field and d-axis currents only.
    """
    Id, IF, d = float(xs[0]), float(xs[1]), float(xs[6])
    if variant == "A":
        return ((c.e14 * IF + c.e12 * math.cos(d - c.alpha)
                 + c.e13 * math.sin(d - c.alpha)) / c.e11)
    if variant == "B":
        return c.e14 * IF + c.L2 * Id
    raise ValueError(f"unknown reconstruction variant {variant!r}")


def efd_to_vf(c: CdmCoefficients, efd: float) -> float:
    """Field voltage corresponding to the excitation EMF."""
    return c.e15 * efd


def vf_to_efd(c: CdmCoefficients, vf: float) -> float:
    return vf / c.e15
