"""LQG controller with loop transfer recovery and the full-state LQR baseline.

The filter is designed on the linearized CDM with fictitious process noise
``V1(q) = V10 + q**2 B V B'``; increasing ``q`` drives the observer-based
loop, broken at the plant input, towards the full-state LQR loop.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigvals, sqrtm

from .equilibrium import LinearModel
from .numerics import NumericalError, is_hurwitz, kalman_gain, lqr_gain

__all__ = [
    "LtrDesign",
    "LqgController",
    "NonMinimumPhaseWarning",
    "transmission_zeros",
    "design_ltr_filter",
    "ideal_filter_gain",
    "design_lqg_gain",
    "lqg_output",
    "lqg_derivative",
    "lqg_step",
    "closed_loop_matrix",
    "full_state_lqr_control",
]


class NonMinimumPhaseWarning(UserWarning):
    """The plant has right-half-plane zeros; recovery is not guaranteed."""


@dataclass(frozen=True)
class LtrDesign:
    q: float
    V10: np.ndarray
    V: np.ndarray
    V2: np.ndarray
    V1: np.ndarray
    H: np.ndarray
    Psi: np.ndarray


def transmission_zeros(A, B, C, D=None) -> np.ndarray:
    """Finite invariant zeros of a square system from the Rosenbrock pencil.

    Solves ``[[A, B], [C, D]] v = s [[I, 0], [0, 0]] v`` and keeps the finite
    generalized eigenvalues.
    """
    A, B, C = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, C))
    n, m = B.shape
    p = C.shape[0]
    if D is None:
        D = np.zeros((p, m))
    M = np.block([[A, B], [C, D]])
    N = np.zeros_like(M)
    N[:n, :n] = np.eye(n)
    z = eigvals(M, N)
    z = z[np.isfinite(z)]
    z = z[np.abs(z) < 1e10]
    return z[np.lexsort((z.imag, z.real))]


def _v1(m: LinearModel, q: float, V10, V) -> np.ndarray:
    return V10 + q * q * m.B @ V @ m.B.T


def design_ltr_filter(m: LinearModel, q: float, V10=None, V=None, V2=None) -> LtrDesign:
    """Steady-state Kalman gain ``H(q) = Psi C' V2^-1`` for ``V1(q)``.

    Warns with :class:`NonMinimumPhaseWarning` when ``C(sI-A)^-1 B`` has
    transmission zeros in the open right half-plane. The linearized CDM has
    a zero at the origin (the speed output is the derivative of the angle);
    zeros within ``1e-8`` of the imaginary axis are not flagged.
    """
    if q < 0:
        raise ValueError("q must be non-negative")
    n, nu = m.B.shape
    ny = m.C.shape[0]
    V10 = np.eye(n) if V10 is None else np.asarray(V10, dtype=float)
    V = np.eye(nu) if V is None else np.asarray(V, dtype=float)
    V2 = np.eye(ny) if V2 is None else np.asarray(V2, dtype=float)
    zeros = transmission_zeros(m.A, m.B, m.C, m.D)
    rhp = zeros[zeros.real > 1e-8]
    if len(rhp):
        warnings.warn(f"right-half-plane transmission zeros {rhp}",
                      NonMinimumPhaseWarning, stacklevel=2)
    V1 = _v1(m, q, V10, V)
    H, Psi = kalman_gain(m.A, m.C, V1, V2)
    if not is_hurwitz(m.A - H @ m.C):
        raise NumericalError("filter error dynamics are not stable")
    return LtrDesign(q=float(q), V10=V10, V=V, V2=V2, V1=V1, H=H, Psi=Psi)


def ideal_filter_gain(m: LinearModel, q: float, V=None, V2=None) -> np.ndarray:
    """Asymptotic filter gain ``q B V^(1/2) V2^(-1/2)``."""
    nu = m.B.shape[1]
    ny = m.C.shape[0]
    V = np.eye(nu) if V is None else np.asarray(V, dtype=float)
    V2 = np.eye(ny) if V2 is None else np.asarray(V2, dtype=float)
    return q * m.B @ np.real(sqrtm(V)) @ np.linalg.inv(np.real(sqrtm(V2)))


def design_lqg_gain(m: LinearModel, Q, R) -> np.ndarray:
    """Regulator gain ``K = R^-1 B' P`` on the linearized CDM."""
    return lqr_gain(m.A, m.B, Q, R)


@dataclass(frozen=True)
class LqgController:
    """Observer-based controller acting in deviation coordinates.

    ``x0``, ``u0`` and ``y0`` locate the operating point; ``xhat`` is the
    current estimate of ``x - x0``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    K: np.ndarray
    H: np.ndarray
    x0: np.ndarray
    u0: np.ndarray
    y0: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray
    xhat: np.ndarray

    @classmethod
    def build(cls, m: LinearModel, K, H, *, op=None, y0=None,
              u_min=(-5.0, -np.inf), u_max=(5.0, np.inf)) -> "LqgController":
        op = m.op if op is None else op
        if y0 is None:
            y0 = np.array([op.Vt0, op.cdm_state0[1]])
        K = np.asarray(K, dtype=float)
        if not is_hurwitz(m.A - m.B @ K):
            raise NumericalError("A - BK is not Hurwitz")
        return cls(A=m.A, B=m.B, C=m.C, K=K, H=np.asarray(H, dtype=float),
                   x0=np.asarray(op.cdm_state0, dtype=float),
                   u0=np.asarray(op.u0, dtype=float), y0=np.asarray(y0, dtype=float),
                   u_min=np.asarray(u_min, dtype=float), u_max=np.asarray(u_max, dtype=float),
                   xhat=np.zeros(m.A.shape[0]))

    def recentered(self, op, y0=None) -> "LqgController":
        """Same gains about a different operating point."""
        if y0 is None:
            y0 = np.array([op.Vt0, op.cdm_state0[1]])
        return dataclasses.replace(self, x0=np.asarray(op.cdm_state0, dtype=float),
                                   u0=np.asarray(op.u0, dtype=float),
                                   y0=np.asarray(y0, dtype=float))


def lqg_output(ctl: LqgController, xhat) -> np.ndarray:
    """Clamped absolute input ``u0 - K xhat``."""
    return np.clip(ctl.u0 - ctl.K @ xhat, ctl.u_min, ctl.u_max)


def lqg_derivative(ctl: LqgController, xhat, y) -> tuple[np.ndarray, np.ndarray]:
    """Applied input and estimate derivative for measured absolute ``y``.

    The estimate is driven by the applied (clamped) input deviation.
    """
    u = lqg_output(ctl, xhat)
    dy = np.asarray(y, dtype=float) - ctl.y0
    xdot = ctl.A @ xhat + ctl.B @ (u - ctl.u0) + ctl.H @ (dy - ctl.C @ xhat)
    return u, xdot


def lqg_step(ctl: LqgController, y_measured, dt: float) -> tuple[np.ndarray, LqgController]:
    """Advance the estimate by one RK4 step with ``y`` held over the step.

    Returns the input applied during the step and the updated controller.
    """
    x = ctl.xhat
    u, k1 = lqg_derivative(ctl, x, y_measured)
    _, k2 = lqg_derivative(ctl, x + 0.5 * dt * k1, y_measured)
    _, k3 = lqg_derivative(ctl, x + 0.5 * dt * k2, y_measured)
    _, k4 = lqg_derivative(ctl, x + dt * k3, y_measured)
    xn = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(xn)):
        raise NumericalError("non-finite state estimate")
    return u, dataclasses.replace(ctl, xhat=xn)


def closed_loop_matrix(m: LinearModel, K, H) -> np.ndarray:
    """State matrix of plant plus observer-based controller in ``(x, xhat)``."""
    A, B, C = m.A, m.B, m.C
    K = np.asarray(K, dtype=float)
    H = np.asarray(H, dtype=float)
    return np.block([[A, -B @ K], [H @ C, A - B @ K - H @ C]])


def full_state_lqr_control(K, x, x0, u0, u_min=(-5.0, -np.inf),
                           u_max=(5.0, np.inf)) -> np.ndarray:
    """Full-state feedback ``u0 - K (x - x0)``, clamped."""
    u = np.asarray(u0, dtype=float) - np.asarray(K) @ (np.asarray(x, dtype=float) - x0)
    return np.clip(u, u_min, u_max)
