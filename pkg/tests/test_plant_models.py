import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smibctl.plant_models import (
    FAULT,
    MachineParams,
    cdm_jacobian,
    cdm_outputs,
    cdm_rhs,
    derive_cdm_coefficients,
    plant_jacobian,
    plant_outputs,
    plant_rhs,
)

PRINTED_CDM = {
    "Vd1": -0.0249, "Vd2": 0.0249, "Vd3": -0.8037, "Vq1": -0.3797, "Vq2": 0.3797,
    "Vq3": 0.0037, "f11": -0.5517, "f12": 0.3822, "f13": 0.0037, "f21": -0.0101,
    "f22": 0.0171, "f23": -0.3269, "f24": 0.2235, "f25": -0.0069, "f26": 0.0022,
    "f27": 0.0, "f28": 0.2110, "f41": -2.0, "f42": 2.0, "f51": -0.25, "f52": -5.0,
    "g11": 0.1695, "g55": 5.0,
}


@pytest.mark.parametrize("name,value", sorted(PRINTED_CDM.items()))
def test_printed_cdm_coefficients(cdm, name, value):
    assert round(getattr(cdm, name), 4) == pytest.approx(value, abs=1e-12)


def test_machine_constants():
    p = MachineParams()
    assert round(p.tau_j, 2) == 4.74
    assert p.ld_prime == 0.245
    assert p.td0_prime == 5.9
    assert p.k == pytest.approx(math.sqrt(1.5))


def test_derived_transient_constants_when_unset():
    p = MachineParams().replace(Ld_prime=None, Td0_prime=None)
    assert p.ld_prime == pytest.approx(p.Ld - p.kMF ** 2 / p.LF)
    assert p.td0_prime == pytest.approx(p.LF / (p.rF * p.omega_base))


@pytest.mark.parametrize("field", ["H", "LF", "tau_G", "Le"])
def test_rejects_nonpositive(field):
    with pytest.raises(ValueError, match=field):
        MachineParams().replace(**{field: -1.0})


def _fd_jacobian(f, x, h=1e-6):
    J = np.empty((len(x), len(x)))
    for j in range(len(x)):
        e = np.zeros(len(x))
        e[j] = h
        J[:, j] = (f(x + e) - f(x - e)) / (2 * h)
    return J


cdm_states = st.tuples(st.floats(0.8, 1.6), st.floats(0.98, 1.02), st.floats(0.3, 1.5),
                       st.floats(0.8, 1.1), st.floats(0.2, 1.1))


@settings(max_examples=50, deadline=None)
@given(cdm_states, st.sampled_from(["normal", FAULT]))
def test_cdm_jacobian_matches_fd(cdm, x, mode):
    x = np.array(x)
    u = [1.0, 1.0]
    J = cdm_jacobian(cdm, x, mode)
    np.testing.assert_allclose(J, _fd_jacobian(lambda y: cdm_rhs(cdm, y, u, mode), x), atol=1e-6)


plant_states = st.tuples(st.floats(-1.5, -0.5), st.floats(1.0, 2.5), st.floats(-0.1, 0.1),
                         st.floats(0.1, 0.6), st.floats(-0.1, 0.1), st.floats(0.98, 1.02),
                         st.floats(0.3, 1.5), st.floats(0.8, 1.2), st.floats(0.8, 1.2))


@settings(max_examples=50, deadline=None)
@given(plant_states, st.sampled_from(["normal", FAULT]))
def test_plant_jacobian_matches_fd(plant, x, mode):
    x = np.array(x)
    u = [0.0012, 1.0]
    J = plant_jacobian(plant, x, mode)
    np.testing.assert_allclose(J, _fd_jacobian(lambda y: plant_rhs(plant, y, u, mode), x),
                               atol=1e-6)


def test_fault_removes_bus_and_zeroes_voltage(cdm, op1):
    x = op1.cdm_state0
    Vt, w = cdm_outputs(cdm, x, FAULT)
    assert Vt == 0.0 and w == x[1]
    dx = cdm_rhs(cdm, x, op1.u0, FAULT)
    # electrical torque reduces to the E'q^2 term
    assert dx[1] == pytest.approx(cdm.f21 * x[0] ** 2 + cdm.f27 * x[1] + cdm.f28 * x[3])
    assert dx[0] == pytest.approx(cdm.f11 * x[0] + cdm.g11 * op1.u0[0])


def test_excitation_limits_clip(cdm, op1):
    x = op1.cdm_state0
    hi = cdm_rhs(cdm, x, [50.0, 1.0])
    at = cdm_rhs(cdm, x, [cdm.efd_max, 1.0])
    assert hi[0] == at[0]


def test_gate_held_at_limit(cdm):
    x = np.array([1.2, 1.0, 1.0, 1.0, cdm.gv_max])
    assert cdm_rhs(cdm, x, [2.5, 10.0])[4] == 0.0
    assert cdm_rhs(cdm, x, [2.5, -10.0])[4] < 0.0


def test_plant_fault_voltage(plant, study):
    x = study.plant_operating_point("I").state
    assert plant_outputs(plant, x, [0.0012, 1.0], FAULT)[0] == 0.0


def test_stator_resistance_option():
    base = derive_cdm_coefficients(MachineParams())
    with_r = derive_cdm_coefficients(MachineParams().replace(cdm_stator_resistance=True))
    assert with_r.R1 == pytest.approx(base.R1 + MachineParams().r)
