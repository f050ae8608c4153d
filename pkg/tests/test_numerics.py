import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import solve_continuous_are

from smibctl.numerics import (
    CareConvergenceError,
    Event,
    NewtonError,
    OdeProblem,
    SimulationDiverged,
    care_residual,
    eigenvalues,
    integrate,
    is_hurwitz,
    kalman_gain,
    lqr_gain,
    newton_solve,
    solve_care,
)


def test_double_integrator_gain():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    K = lqr_gain(A, B, np.eye(2), np.eye(1))
    np.testing.assert_allclose(K, [[1.0, math.sqrt(3.0)]], atol=1e-10)


def test_scalar_care_closed_form():
    # a p + p a - p^2 b^2 / r + q = 0
    a, b, q, r = 0.7, 2.0, 3.0, 0.5
    p = r * (a + math.sqrt(a * a + b * b * q / r)) / (b * b)
    P = solve_care([[a]], [[b]], [[q]], [[r]])
    assert P[0, 0] == pytest.approx(p, rel=1e-12)


@st.composite
def lq_problem(draw):
    n = draw(st.integers(2, 5))
    m = draw(st.integers(1, 3))
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    B = rng.normal(size=(n, m))
    L = rng.normal(size=(n, n))
    Q = L @ L.T + 0.1 * np.eye(n)
    S = rng.normal(size=(m, m))
    R = S @ S.T + 0.5 * np.eye(m)
    return A, B, Q, R


@settings(max_examples=40, deadline=None)
@given(lq_problem())
def test_care_matches_scipy_and_residual(prob):
    A, B, Q, R = prob
    P = solve_care(A, B, Q, R)
    scale = max(1.0, np.abs(Q).max(), np.abs(A.T @ P).max())
    assert care_residual(A, B, Q, R, P) <= 1e-8 * scale
    np.testing.assert_allclose(P, solve_continuous_are(A, B, Q, R), rtol=1e-7,
                               atol=1e-8 * np.abs(P).max())
    np.testing.assert_allclose(P, P.T, atol=1e-12 * np.abs(P).max())
    assert is_hurwitz(A - B @ np.linalg.solve(R, B.T @ P))


def test_care_unit_scale_residual():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(4, 4)) * 0.3
    B = rng.normal(size=(4, 2))
    P = solve_care(A, B, 0.5 * np.eye(4), np.eye(2))
    assert care_residual(A, B, 0.5 * np.eye(4), np.eye(2), P) <= 1e-8


def test_kalman_gain_is_dual_regulator():
    rng = np.random.default_rng(7)
    A = rng.normal(size=(4, 4))
    C = rng.normal(size=(2, 4))
    V1, V2 = np.eye(4), 0.5 * np.eye(2)
    H, Psi = kalman_gain(A, C, V1, V2)
    np.testing.assert_allclose(Psi, solve_continuous_are(A.T, C.T, V1, V2), rtol=1e-7)
    np.testing.assert_allclose(H, Psi @ C.T @ np.linalg.inv(V2), rtol=1e-10)
    assert is_hurwitz(A - H @ C)


def test_care_rejects_bad_inputs():
    A = np.eye(2)
    B = np.ones((2, 1))
    with pytest.raises(ValueError):
        solve_care(A, B, np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(1))
    with pytest.raises(ValueError):
        solve_care(A, B, np.eye(2), -np.eye(1))
    with pytest.raises(ValueError):
        solve_care(A, np.ones((3, 1)), np.eye(2), np.eye(1))


def test_care_unstabilizable():
    # unstable mode not reachable from the input
    A = np.diag([1.0, -1.0])
    B = np.array([[0.0], [1.0]])
    with pytest.raises(CareConvergenceError):
        solve_care(A, B, np.eye(2), np.eye(1))


def test_eigenvalues_sorted():
    ev = eigenvalues(np.diag([3.0, -1.0, 0.5]))
    np.testing.assert_array_equal(ev.real, [-1.0, 0.5, 3.0])


def test_newton_circle_line():
    F = lambda v: [v[0] ** 2 + v[1] ** 2 - 1.0, v[0] - v[1]]
    x = newton_solve(F, [1.0, 0.2])
    np.testing.assert_allclose(x, [1 / math.sqrt(2)] * 2, atol=1e-12)


def test_newton_singular_jacobian():
    with pytest.raises(NewtonError):
        newton_solve(lambda v: [v[0] ** 2 + 1.0], [0.0])


def _decay_problem(dt, t1=2.0):
    # x' = -x + sin t, x(0) = 1
    return OdeProblem(rhs=lambda t, x, m: -x + math.sin(t), x0=[1.0], t_span=(0.0, t1), dt=dt)


def _decay_exact(t):
    return 1.5 * math.exp(-t) + 0.5 * (math.sin(t) - math.cos(t))


@pytest.mark.parametrize("dt", [0.2, 0.1, 0.05])
def test_rk4_order_ratio(dt):
    # x' = x cos t has x = exp(sin t); halving dt divides the error by ~16
    def final_error(h):
        prob = OdeProblem(rhs=lambda t, x, m: x * math.cos(t), x0=[1.0], t_span=(0.0, 2.0), dt=h)
        return abs(integrate(prob).states[-1, 0] - math.exp(math.sin(2.0)))

    assert 12.0 <= final_error(dt) / final_error(dt / 2) <= 20.0


def test_rk4_matches_forced_decay():
    err = abs(integrate(_decay_problem(0.01)).states[-1, 0] - _decay_exact(2.0))
    assert err < 1e-10


def test_event_mode_and_reset_at_event_time():
    ev = Event(1.0, mode="b", reset=lambda x: x * 0.0 + 5.0, label="kick")
    seen = []
    prob = OdeProblem(rhs=lambda t, x, m: np.zeros(1), x0=[1.0], t_span=(0.0, 2.0),
                      dt=0.3, events=[ev], mode0="a",
                      observe=lambda t, x, m: {"mode": 1.0 if m == "b" else 0.0})
    tr = integrate(prob)
    assert 1.0 in tr.times  # grid split at the event
    k = int(np.nonzero(tr.times == 1.0)[0][0])
    assert tr.states[k - 1, 0] == 1.0 and tr.states[k, 0] == 5.0
    assert tr["mode"][k] == 1.0 and tr["mode"][k - 1] == 0.0
    assert np.all(np.diff(tr.times) > 0)
    assert tr.events == [(1.0, "kick")]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_returns_partial_trace():
    prob = OdeProblem(rhs=lambda t, x, m: x * x, x0=[1.0], t_span=(0.0, 2.0), dt=0.01)
    with pytest.raises(SimulationDiverged) as info:
        integrate(prob)
    assert 0.9 < info.value.time < 1.2
    assert len(info.value.trace) > 10


@pytest.mark.parametrize("kw", [dict(t_span=(1.0, 0.0)), dict(dt=0.0),
                                dict(events=[Event(5.0)])])
def test_problem_validation(kw):
    base = dict(rhs=lambda t, x, m: x, x0=[0.0], t_span=(0.0, 1.0), dt=0.1)
    base.update(kw)
    with pytest.raises(ValueError):
        OdeProblem(**base)


def test_integrate_is_deterministic():
    a = integrate(_decay_problem(0.01))
    b = integrate(_decay_problem(0.01))
    assert np.array_equal(a.states, b.states)
