"""Frequency responses of the LQG/LTR loop broken at the plant input,
gain/phase margins and Nyquist encirclement counts.

    N_R(s)   = C (sI - A)^-1 B
    K_C(s)   = K (sI - A + BK + HC)^-1 H
    H_LTF(s) = K_C(s) N_R(s)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .equilibrium import LinearModel

__all__ = [
    "UNBOUNDED",
    "Unbounded",
    "Margins",
    "NyquistResult",
    "FrequencyResponse",
    "log_grid",
    "plant_tf_eval",
    "controller_tf_eval",
    "loop_tf_eval",
    "full_state_loop_eval",
    "frequency_response",
    "channel",
    "margins",
    "nyquist_encirclements",
]


class Unbounded:
    """Margin with no corresponding crossing inside the search band."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNBOUNDED"

    def __str__(self) -> str:
        return "inf"

    def __reduce__(self):
        return (Unbounded, ())


UNBOUNDED = Unbounded()


def log_grid(w_min: float = 1e-3, w_max: float = 1e3, n: int = 2000) -> np.ndarray:
    return np.logspace(np.log10(w_min), np.log10(w_max), n)


def _resolvent_apply(A: np.ndarray, R: np.ndarray, w) -> np.ndarray:
    """``(jw I - A)^-1 R`` for every frequency, by batched complex solves."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    n = A.shape[0]
    M = 1j * w[:, None, None] * np.eye(n) - A[None, :, :]
    rhs = np.broadcast_to(R.astype(complex), (len(w),) + R.shape)
    return np.linalg.solve(M, rhs)


def plant_tf_eval(m: LinearModel, w) -> np.ndarray:
    """``N_R(jw)`` as an array of shape ``(len(w), 2, 2)``."""
    return m.C @ _resolvent_apply(m.A, m.B, w)


def controller_tf_eval(m: LinearModel, K, H, w) -> np.ndarray:
    """``K_C(jw)`` of the observer-based controller."""
    K = np.asarray(K, dtype=float)
    H = np.asarray(H, dtype=float)
    Ac = m.A - m.B @ K - H @ m.C
    return K @ _resolvent_apply(Ac, H, w)


def loop_tf_eval(m: LinearModel, K, H, w) -> np.ndarray:
    """Loop transfer ``K_C(jw) N_R(jw)`` broken at the plant input."""
    return controller_tf_eval(m, K, H, w) @ plant_tf_eval(m, w)


def full_state_loop_eval(m: LinearModel, K, w) -> np.ndarray:
    """Target loop ``K (jwI - A)^-1 B`` of full-state feedback."""
    return np.asarray(K, dtype=float) @ _resolvent_apply(m.A, m.B, w)


@dataclass(frozen=True)
class FrequencyResponse:
    omegas: np.ndarray
    plant: np.ndarray
    controller: np.ndarray
    loop: np.ndarray


def frequency_response(m: LinearModel, K, H, w=None) -> FrequencyResponse:
    w = log_grid() if w is None else np.asarray(w, dtype=float)
    N = plant_tf_eval(m, w)
    Kc = controller_tf_eval(m, K, H, w)
    return FrequencyResponse(omegas=w, plant=N, controller=Kc, loop=Kc @ N)


def channel(m: LinearModel, K, H, i: int, j: int) -> Callable[[np.ndarray], np.ndarray]:
    """SISO loop channel ``H_ij(jw)`` as a vectorized callable."""
    return lambda w: loop_tf_eval(m, K, H, w)[:, i, j]


@dataclass(frozen=True)
class Margins:
    """Gain margin (dB) and phase margin (degrees) of a SISO loop.

    ``UNBOUNDED`` marks a margin without a crossing in the band.
    """

    gm_db: float | Unbounded
    pm_deg: float | Unbounded
    w_phase_crossover: float | None
    w_gain_crossover: float | None

    def as_row(self) -> tuple[str, str]:
        return tuple(str(v) if v is UNBOUNDED else f"{v:.6g}" for v in (self.gm_db, self.pm_deg))


def _refine(fun, a: float, b: float, tol: float) -> float:
    return brentq(lambda w: float(fun(w)), a, b, xtol=tol, rtol=1e-15, maxiter=200)


def margins(loop: Callable[[np.ndarray], np.ndarray], grid=None, *, tol: float = 1e-6) -> Margins:
    """Gain and phase margins of a SISO loop over a frequency band.

    Phase crossovers are sign changes of ``Im L`` with ``Re L < 0``; gain
    crossovers are sign changes of ``log|L|``. Each bracket is refined to
    ``tol`` rad/s. With several crossings the margin closest to zero is kept.
    """
    w = log_grid() if grid is None else np.asarray(grid, dtype=float)
    L = np.asarray(loop(w))
    single = lambda x: complex(np.asarray(loop(np.array([x]))).ravel()[0])

    gm, w_pc = UNBOUNDED, None
    im = L.imag
    for k in np.nonzero(np.sign(im[:-1]) * np.sign(im[1:]) < 0)[0]:
        wc = _refine(lambda x: single(x).imag, w[k], w[k + 1], tol)
        Lc = single(wc)
        if Lc.real >= 0:
            continue
        g = -20.0 * math.log10(abs(Lc))
        if gm is UNBOUNDED or abs(g) < abs(gm):
            gm, w_pc = g, wc
    for k in np.nonzero(im == 0)[0]:
        if L[k].real < 0:
            g = -20.0 * math.log10(abs(L[k]))
            if gm is UNBOUNDED or abs(g) < abs(gm):
                gm, w_pc = g, float(w[k])

    pm, w_gc = UNBOUNDED, None
    lm = np.log(np.abs(L))
    for k in np.nonzero(np.sign(lm[:-1]) * np.sign(lm[1:]) < 0)[0]:
        wc = _refine(lambda x: math.log(abs(single(x))), w[k], w[k + 1], tol)
        ph = math.degrees(math.atan2(single(wc).imag, single(wc).real))
        p = (ph % 360.0) - 180.0
        if pm is UNBOUNDED or abs(p) < abs(pm):
            pm, w_gc = p, wc
    return Margins(gm, pm, w_pc, w_gc)


@dataclass(frozen=True)
class NyquistResult:
    """Counter-clockwise encirclements of ``-1`` by the closed contour."""

    count: int
    winding: float
    min_distance: float
    indeterminate: bool


def nyquist_encirclements(loop: Callable[[np.ndarray], np.ndarray], *, omega_max: float = 1e6,
                          omega_min: float = 1e-6, n: int = 20000) -> NyquistResult:
    """Winding number of ``L(jw)`` about ``-1`` for ``w`` in ``[-W, W]``.

    The contour is closed through the origin-side arc, which ``L`` maps near
    zero for a strictly proper loop; the closure contributes the principal
    angle between the end points.
    """
    pos = np.logspace(np.log10(omega_min), np.log10(omega_max), n)
    w = np.concatenate([-pos[::-1], [0.0], pos])
    L = np.asarray(loop(w))
    d = L + 1.0
    ph = np.unwrap(np.angle(d))
    # refine coarse steps to keep every phase increment well below pi
    jumps = np.nonzero(np.abs(np.diff(ph)) > 0.5)[0]
    total = ph[-1] - ph[0]
    if len(jumps):
        for k in jumps:
            sub = np.linspace(w[k], w[k + 1], 2001)
            ps = np.unwrap(np.angle(np.asarray(loop(sub)) + 1.0))
            total += (ps[-1] - ps[0]) - (ph[k + 1] - ph[k])
    closure = math.remainder(float(np.angle(d[0]) - np.angle(d[-1])), 2 * math.pi)
    winding = (total + closure) / (2 * math.pi)
    dist = float(np.abs(d).min())
    indeterminate = dist < 1e-9 or abs(L[0]) >= 1.0 or abs(winding - round(winding)) > 0.05
    return NyquistResult(count=int(round(winding)), winding=float(winding),
                         min_distance=dist, indeterminate=bool(indeterminate))
