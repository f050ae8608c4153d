import math
import pickle

import numpy as np
import pytest
from scipy import signal

from smibctl.config import PUBLISHED_LQG_K
from smibctl.freq_analysis import (
    UNBOUNDED,
    channel,
    controller_tf_eval,
    frequency_response,
    full_state_loop_eval,
    log_grid,
    loop_tf_eval,
    margins,
    nyquist_encirclements,
    plant_tf_eval,
)
from smibctl.lqg_controller import design_ltr_filter


def cubic(k):
    return lambda w: k / (1j * np.asarray(w, dtype=float) + 1.0) ** 3


def test_margins_closed_form():
    k = 4.0
    m = margins(cubic(k))
    assert m.gm_db == pytest.approx(20 * math.log10(8.0 / k), abs=1e-6)
    assert m.w_phase_crossover == pytest.approx(math.sqrt(3.0), abs=1e-6)
    wc = math.sqrt(k ** (2 / 3) - 1.0)
    assert m.w_gain_crossover == pytest.approx(wc, abs=1e-6)
    assert m.pm_deg == pytest.approx(180.0 - 3 * math.degrees(math.atan(wc)), abs=1e-5)


def test_unbounded_margins():
    m = margins(lambda w: 0.5 / (1j * np.asarray(w) + 1.0))
    assert m.gm_db is UNBOUNDED and m.pm_deg is UNBOUNDED
    assert str(m.gm_db) == "inf" and m.as_row() == ("inf", "inf")
    assert pickle.loads(pickle.dumps(UNBOUNDED)) is UNBOUNDED


def test_negative_margins_when_unstable():
    m = margins(cubic(10.0))
    assert m.gm_db < 0 and m.pm_deg < 0


@pytest.mark.parametrize("k,count", [(4.0, 0), (10.0, -2)])
def test_nyquist_counts_ccw(k, count):
    # Z = P - N_ccw: two closed-loop RHP poles for k = 10
    res = nyquist_encirclements(cubic(k))
    assert res.count == count and not res.indeterminate
    den = np.poly([-1, -1, -1]) + np.array([0, 0, 0, k])
    assert int(np.sum(np.roots(den).real > 0)) == -res.count


def test_plant_response_matches_scipy(linear):
    w = np.array([0.01, 0.3, 2.0, 40.0])
    N = plant_tf_eval(linear, w)
    for j in range(2):
        sys = signal.StateSpace(linear.A, linear.B[:, [j]], linear.C, np.zeros((2, 1)))
        for i in range(2):
            num, den = signal.ss2tf(sys.A, sys.B, sys.C, sys.D)
            _, h = signal.freqs(num[i], den, worN=w)
            np.testing.assert_allclose(N[:, i, j], h, rtol=1e-7, atol=1e-12)


def test_loop_is_controller_times_plant(linear):
    H = design_ltr_filter(linear, 9.0005).H
    w = log_grid(1e-2, 1e2, 7)
    L = loop_tf_eval(linear, PUBLISHED_LQG_K, H, w)
    np.testing.assert_allclose(L, controller_tf_eval(linear, PUBLISHED_LQG_K, H, w)
                               @ plant_tf_eval(linear, w))
    fr = frequency_response(linear, PUBLISHED_LQG_K, H, w)
    np.testing.assert_allclose(fr.loop, L)
    np.testing.assert_allclose(channel(linear, PUBLISHED_LQG_K, H, 1, 1)(w), L[:, 1, 1])


def test_recovery_approaches_full_state_loop(linear):
    w = np.array([0.5, 2.0])
    target = full_state_loop_eval(linear, PUBLISHED_LQG_K, w)
    errs = [np.abs(loop_tf_eval(linear, PUBLISHED_LQG_K, design_ltr_filter(linear, q).H, w)
                   - target).max() for q in (1.0, 100.0, 1e4)]
    assert errs[2] < errs[1] < errs[0]


def test_grid():
    w = log_grid()
    assert len(w) == 2000 and w[0] == pytest.approx(1e-3) and w[-1] == pytest.approx(1e3)
