"""Numerical kernels: Riccati solver, LQR/Kalman gains, RK4 integration,
sorted eigenvalues and a damped Newton root finder."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

__all__ = [
    "NumericalError",
    "CareConvergenceError",
    "NewtonError",
    "SimulationDiverged",
    "care_residual",
    "solve_care",
    "lqr_gain",
    "kalman_gain",
    "eigenvalues",
    "is_hurwitz",
    "newton_solve",
    "Event",
    "OdeProblem",
    "Trace",
    "integrate",
]


class NumericalError(RuntimeError):
    """Base class for numerical failures (CLI exit status 2)."""


class CareConvergenceError(NumericalError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (final residual {residual:.3e})")
        self.residual = residual


class NewtonError(NumericalError):
    def __init__(self, message: str, residual: float, x: np.ndarray):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual
        self.x = x


class SimulationDiverged(NumericalError):
    def __init__(self, time: float, trace: "Trace"):
        super().__init__(f"non-finite state at t = {time:.6g} s")
        self.time = time
        self.trace = trace


def _as_matrix(M, name: str) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {M.shape}")
    return M


def _check_care_inputs(A, B, Q, R):
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    Q = _as_matrix(Q, "Q")
    R = _as_matrix(R, "R")
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"A must be square, got {A.shape}")
    if B.shape[0] != n:
        raise ValueError(f"B has {B.shape[0]} rows, expected {n}")
    m = B.shape[1]
    if Q.shape != (n, n):
        raise ValueError(f"Q must be {n}x{n}, got {Q.shape}")
    if R.shape != (m, m):
        raise ValueError(f"R must be {m}x{m}, got {R.shape}")
    if not np.allclose(Q, Q.T, atol=1e-12 * max(1.0, np.abs(Q).max())):
        raise ValueError("Q must be symmetric")
    if not np.allclose(R, R.T, atol=1e-12 * max(1.0, np.abs(R).max())):
        raise ValueError("R must be symmetric")
    if np.linalg.eigvalsh(R).min() <= 0:
        raise ValueError("R must be positive definite")
    return A, B, Q, R


def care_residual(A, B, Q, R, P) -> float:
    """Max-abs residual of ``A'P + PA - PBR^-1B'P + Q``."""
    A, B, Q, R = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, Q, R))
    P = np.atleast_2d(P)
    res = A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T @ P) + Q
    return float(np.abs(res).max())


def _care_scale(A, Q, P) -> float:
    """Magnitude of the largest Riccati term, floored at one."""
    return max(1.0, float(np.abs(Q).max()), float(np.abs(A.T @ P).max()))


def _stabilizing_gain(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Initial gain for the Newton iteration via a shifted Lyapunov equation.

    With ``beta`` large enough that ``-(A + beta I)`` is Hurwitz, the solution
    ``Z`` of ``(A + bI) Z + Z (A + bI)' = 2 B B'`` yields ``K = B' Z^-1`` with
    ``A - B K`` stable whenever ``(A, B)`` is controllable.
    """
    n = A.shape[0]
    lam = np.linalg.eigvals(A)
    if lam.real.max() < 0:
        return np.zeros((B.shape[1], n))
    beta = max(1.0, float(np.abs(lam).max())) * 1.5
    Abar = A + beta * np.eye(n)
    Z = solve_continuous_lyapunov(-Abar, -2.0 * B @ B.T)
    Z = 0.5 * (Z + Z.T)
    return B.T @ np.linalg.pinv(Z)


def solve_care(A, B, Q, R, *, tol: float = 1e-8, max_iter: int = 100) -> np.ndarray:
    """Stabilizing solution of ``A'P + PA - PBR^-1B'P + Q = 0``.

    Kleinman–Newton iteration: each step solves the Lyapunov equation of the
    current closed loop ``A - BK`` and updates ``K = R^-1 B' P``.

    Convergence requires the max-abs residual to fall below ``tol`` times the
    largest term magnitude ``max(1, |Q|, |A'P|)``; for unit-scale data this
    is an absolute bound.

    Raises
    ------
    CareConvergenceError
        If the residual is above tolerance after ``max_iter`` iterations or
        the closed loop is not Hurwitz.
    """
    A, B, Q, R = _check_care_inputs(A, B, Q, R)
    n = A.shape[0]
    K = _stabilizing_gain(A, B)
    if np.linalg.eigvals(A - B @ K).real.max() >= 0:
        raise CareConvergenceError("no stabilizing initial gain; (A, B) not stabilizable?", math.inf)

    P = np.zeros((n, n))
    best_res, best_P, best_lim = math.inf, None, tol
    for _ in range(max_iter):
        Ak = A - B @ K
        P_new = solve_continuous_lyapunov(Ak.T, -(Q + K.T @ R @ K))
        P_new = 0.5 * (P_new + P_new.T)
        K = np.linalg.solve(R, B.T @ P_new)
        res = care_residual(A, B, Q, R, P_new)
        step = np.abs(P_new - P).max()
        P = P_new
        lim = tol * _care_scale(A, Q, P)
        if res - lim < best_res - best_lim:
            best_res, best_P, best_lim = res, P, lim
        scale = max(1.0, float(np.abs(P).max()))
        # quadratic convergence has stalled at round-off level
        if res <= lim and step <= 1e-9 * scale:
            break
    P = best_P
    if best_res > best_lim:
        raise CareConvergenceError("Kleinman iteration did not converge", best_res)
    if np.linalg.eigvals(A - B @ np.linalg.solve(R, B.T @ P)).real.max() >= 0:
        raise CareConvergenceError("closed loop not Hurwitz; (Q, A) not detectable?", best_res)
    return P


def lqr_gain(A, B, Q, R) -> np.ndarray:
    """State-feedback gain ``K = R^-1 B' P`` minimizing the quadratic cost."""
    P = solve_care(A, B, Q, R)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    return np.linalg.solve(R, np.atleast_2d(B).T @ P)


def kalman_gain(A, C, V1, V2) -> tuple[np.ndarray, np.ndarray]:
    """Steady-state filter gain ``H = Psi C' V2^-1`` and covariance ``Psi``.

    ``Psi`` solves the dual Riccati equation
    ``A Psi + Psi A' + V1 - Psi C' V2^-1 C Psi = 0``.
    """
    A = _as_matrix(A, "A")
    C = _as_matrix(C, "C")
    V2 = _as_matrix(V2, "V2")
    Psi = solve_care(A.T, C.T, V1, V2)
    H = Psi @ C.T @ np.linalg.inv(V2)
    return H, Psi


def eigenvalues(M) -> np.ndarray:
    """Full spectrum sorted by real part, then imaginary part."""
    M = _as_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"matrix must be square, got {M.shape}")
    lam = np.linalg.eigvals(M).astype(complex)
    order = np.lexsort((lam.imag, lam.real))
    return lam[order]


def is_hurwitz(M) -> bool:
    return bool(eigenvalues(M).real.max() < 0)


def _fd_jacobian(F, x: np.ndarray, f0: np.ndarray) -> np.ndarray:
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        h = 1e-7 * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        J[:, j] = (np.asarray(F(xp), dtype=float) - np.asarray(F(xm), dtype=float)) / (2 * h)
    return J


def newton_solve(F: Callable[[np.ndarray], Sequence[float]], x0, *, tol: float = 1e-10,
                 max_iter: int = 100, max_halvings: int = 30) -> np.ndarray:
    """Damped Newton iteration with a central-difference Jacobian.

    Each full step is halved (up to ``max_halvings`` times) until the
    residual infinity norm decreases.
    """
    x = np.array(x0, dtype=float)
    f = np.asarray(F(x), dtype=float)
    res = float(np.abs(f).max())
    for _ in range(max_iter):
        if res <= tol:
            return x
        J = _fd_jacobian(F, x, f)
        if not np.all(np.isfinite(J)) or np.linalg.cond(J) > 1e14:
            raise NewtonError("singular Jacobian", res, x)
        dx = np.linalg.solve(J, -f)
        lam = 1.0
        for _ in range(max_halvings + 1):
            x_try = x + lam * dx
            f_try = np.asarray(F(x_try), dtype=float)
            res_try = float(np.abs(f_try).max())
            if np.isfinite(res_try) and res_try < res:
                break
            lam *= 0.5
        else:
            raise NewtonError("line search failed", res, x)
        x, f, res = x_try, f_try, res_try
    if res <= tol:
        return x
    raise NewtonError("iteration cap reached", res, x)


@dataclass(frozen=True)
class Event:
    """Mode switch and/or state reset applied exactly at ``time``."""

    time: float
    mode: Hashable | None = None
    reset: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = ""


@dataclass
class OdeProblem:
    """Fixed-step initial value problem.

    ``rhs(t, x, mode)`` returns the state derivative; ``observe(t, x, mode)``
    (optional) returns a dict of scalar channels recorded at every sample;
    ``project(x)`` (optional) maps each accepted state back onto hard limits.
    """

    rhs: Callable[[float, np.ndarray, Hashable], np.ndarray]
    x0: np.ndarray
    t_span: tuple[float, float]
    dt: float
    events: Sequence[Event] = ()
    mode0: Hashable = None
    observe: Callable[[float, np.ndarray, Hashable], dict] | None = None
    project: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        t0, t1 = self.t_span
        if not t1 > t0:
            raise ValueError("t_span must satisfy t1 > t0")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        times = [e.time for e in self.events]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("events must be sorted by time")
        if any(not (t0 < t < t1) for t in times):
            raise ValueError("event times must lie strictly inside t_span")


@dataclass
class Trace:
    """Time-indexed simulation record."""

    times: np.ndarray
    states: np.ndarray
    channels: dict[str, np.ndarray] = field(default_factory=dict)
    events: list[tuple[float, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.channels[name]

    def final(self, name: str) -> float:
        return float(self.channels[name][-1])

    def window(self, t_from: float, t_to: float = math.inf) -> np.ndarray:
        """Boolean mask of samples with ``t_from <= t <= t_to``."""
        return (self.times >= t_from - 1e-12) & (self.times <= t_to + 1e-12)


def _segments(t0: float, t1: float, dt: float, events: Sequence[Event]):
    edges = [t0] + [e.time for e in events] + [t1]
    for a, b in zip(edges, edges[1:]):
        if b - a <= 0:
            yield a, b, 0, 0.0
            continue
        n = max(1, math.ceil((b - a) / dt - 1e-9))
        yield a, b, n, (b - a) / n


def integrate(problem: OdeProblem) -> Trace:
    """Classical fixed-step RK4 on a grid split at every event time.

    Events are applied after the sample at their time is recorded, so the
    pre-event value and the post-event value share the same time stamp only
    in the state record when a reset changes the state; channels are
    re-sampled after the switch.
    """
    rhs = problem.rhs
    project = problem.project or (lambda x: x)
    observe = problem.observe
    t0, t1 = problem.t_span
    mode = problem.mode0
    x = project(np.array(problem.x0, dtype=float))

    times: list[float] = []
    states: list[np.ndarray] = []
    chans: dict[str, list[float]] = {}
    event_log: list[tuple[float, str]] = []

    def record(t, x, mode):
        times.append(t)
        states.append(x)
        if observe is not None:
            for k, v in observe(t, x, mode).items():
                chans.setdefault(k, []).append(v)

    def build() -> Trace:
        return Trace(np.array(times), np.array(states),
                     {k: np.array(v) for k, v in chans.items()}, event_log)

    record(t0, x, mode)
    events = list(problem.events)
    for i, (a, b, n, h) in enumerate(_segments(t0, t1, problem.dt, events)):
        for k in range(n):
            t = a + k * h
            k1 = rhs(t, x, mode)
            k2 = rhs(t + 0.5 * h, x + (0.5 * h) * k1, mode)
            k3 = rhs(t + 0.5 * h, x + (0.5 * h) * k2, mode)
            k4 = rhs(t + h, x + h * k3, mode)
            x = project(x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
            t_next = b if k == n - 1 else a + (k + 1) * h
            if not np.all(np.isfinite(x)):
                raise SimulationDiverged(t_next, build())
            if k == n - 1 and i < len(events):
                # the sample at an event time reflects the post-event mode
                ev = events[i]
                if ev.mode is not None:
                    mode = ev.mode
                if ev.reset is not None:
                    x = project(np.array(ev.reset(x.copy()), dtype=float))
                event_log.append((ev.time, ev.label or str(ev.mode)))
            record(t_next, x, mode)
    return build()
