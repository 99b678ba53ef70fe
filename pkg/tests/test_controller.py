import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tendonkit.controller import (Controller, ControllerConfig, MeasuredState, Reference, computed_torque,
                                  control_step, joint_velocity_from_wires, reference_wire_velocity,
                                  tension_command, torque_from_tension)
from tendonkit.dynamics import bias_forces, gravity_vector, inertia_matrix
from tendonkit.errors import DimensionMismatch, ValidationError
from tendonkit.kinematics import muscle_jacobian
from tendonkit.model import attach_point_mass
from tendonkit.tension import TensionProblem, solve_tension

from conftest import point_pendulum, random_chain, random_q

PAIR = np.array([[-0.01], [0.01]])


def test_zero_error_zero_gravity_gives_zero_torque():
    m = point_pendulum(gravity=(0.0, 0.0, 0.0))
    state = MeasuredState(q=np.array([0.4]), ldot=np.zeros(2))
    tau = computed_torque(m, state, Reference(np.array([0.4]), np.zeros(1)), np.eye(1) * 400)
    assert tau == pytest.approx([0.0], abs=1e-15)


def test_horizontal_hold_is_gravity_compensation():
    m = point_pendulum()
    q = np.array([math.pi / 2])
    tau = computed_torque(m, MeasuredState(q, np.zeros(2)), Reference(q, np.zeros(1)), np.eye(1) * 400)
    assert abs(tau[0]) == pytest.approx(9.81, rel=1e-14)
    assert tau == pytest.approx(gravity_vector(m, q), rel=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_computed_torque_term_by_term(seed):
    m = random_chain(seed, 4)
    rng = np.random.default_rng(seed)
    q, q_ref, qdd_ref, qd = random_q(m, rng), random_q(m, rng), rng.normal(size=4), rng.normal(size=4)
    Kp = np.diag(rng.uniform(10, 500, 4))
    ldot = muscle_jacobian(m, q) @ qd
    tau = computed_torque(m, MeasuredState(q, ldot), Reference(q_ref, qdd_ref), Kp)
    # the wire rates are consistent with qd, so the estimate recovers it
    expected = inertia_matrix(m, q) @ (Kp @ (q_ref - q) + qdd_ref) + bias_forces(m, q, qd) + gravity_vector(m, q)
    assert np.max(np.abs(tau - expected)) < 1e-9 * max(1.0, np.max(np.abs(expected)))
    tau2 = computed_torque(m, MeasuredState(q, ldot), Reference(q_ref, qdd_ref), Kp, qdot=qd)
    assert np.max(np.abs(tau2 - expected)) < 1e-12 * max(1.0, np.max(np.abs(expected)))


def test_wire_velocity_estimate_recovers_joint_rate(saqiel):
    rng = np.random.default_rng(2)
    q = random_q(saqiel, rng)
    qd = rng.normal(size=7)
    G = muscle_jacobian(saqiel, q)
    assert joint_velocity_from_wires(G, G @ qd) == pytest.approx(qd, abs=1e-10)


def test_torque_from_tension():
    assert np.array_equal(torque_from_tension(PAIR, [0.0, 0.0]), [0.0])
    assert torque_from_tension(PAIR, [105.0, 5.0]) == pytest.approx([1.0], rel=1e-14)
    with pytest.raises(DimensionMismatch):
        torque_from_tension(PAIR, [1.0, 2.0, 3.0])


def test_tension_round_trip_with_slack():
    rng = np.random.default_rng(8)
    G = rng.normal(scale=0.5, size=(3, 3)) + 2.0 * np.eye(3)
    tau_ref = -G.T @ np.array([100.0, 150.0, 200.0])  # reachable strictly inside the box
    sol = solve_tension(TensionProblem(G, tau_ref, 1e8, 5.0, 490.0))
    # relative to |tau_ref|, the same measure as the QP slack-exactness property
    assert np.linalg.norm(torque_from_tension(G, sol.f_ref) - tau_ref) < 1e-6 * np.linalg.norm(tau_ref)


def test_tension_command_examples():
    f_ref = np.array([10.0, 10.0])
    assert np.array_equal(tension_command(f_ref, np.diag([100.0, 100.0]), [0.3, 0.2], [0.3, 0.2]), f_ref)
    assert np.array_equal(tension_command(f_ref, np.zeros((2, 2)), [1.0, -2.0], [0.0, 0.0]), f_ref)
    out = tension_command(f_ref, np.diag([100.0, 100.0]), [0.01, -0.2], [0.0, 0.0])
    assert out == pytest.approx([11.0, 0.0], abs=1e-12)
    assert tension_command(f_ref, 100.0, [5.0, 0.0], [0.0, 0.0], f_max=490.0)[0] == 490.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_no_clamp_when_tracking(seed):
    rng = np.random.default_rng(seed)
    f_ref = rng.uniform(20, 400, 10)
    ldot_ref = rng.normal(scale=0.01, size=10)
    ldot = ldot_ref + rng.normal(scale=1e-3, size=10)
    K = np.diag(rng.uniform(0, 200, 10))
    out = tension_command(f_ref, K, ldot_ref, ldot, 490.0)
    assert np.array_equal(out, K @ (ldot_ref - ldot) + f_ref)


def _config(model, **kw):
    return ControllerConfig.for_model(model, **kw)


def test_rest_at_target_without_gravity_gives_floor():
    m = point_pendulum(gravity=(0.0, 0.0, 0.0))
    q = np.array([0.2])
    out = control_step(m, MeasuredState(q, np.zeros(2)), Reference(q, np.zeros(1)), _config(m))
    assert np.array_equal(out.f_final, m.f_min)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000))
def test_output_ignores_joint_encoder_rate(seed):
    m = random_chain(seed, 3)
    rng = np.random.default_rng(seed)
    q = random_q(m, rng)
    ldot = rng.normal(scale=0.05, size=m.n_routes)
    ref = Reference(random_q(m, rng), rng.normal(size=3), qd_ref=rng.normal(size=3))
    cfg = _config(m)
    a = control_step(m, MeasuredState(q, ldot, qdot=np.zeros(3)), ref, cfg)
    b = control_step(m, MeasuredState(q, ldot, qdot=rng.normal(scale=10.0, size=3)), ref, cfg)
    assert a.f_final.tobytes() == b.f_final.tobytes()
    assert a.tau_ref.tobytes() == b.tau_ref.tobytes()


def test_pipeline_deterministic(saqiel):
    rng = np.random.default_rng(0)
    q = random_q(saqiel, rng)
    state = MeasuredState(q, rng.normal(scale=0.02, size=10))
    ref = Reference(random_q(saqiel, rng), np.zeros(7), qd_ref=rng.normal(size=7))
    cfg = _config(saqiel)
    a = control_step(saqiel, state, ref, cfg)
    b = control_step(saqiel, state, ref, cfg)
    assert a.f_final.tobytes() == b.f_final.tobytes()


def test_payload_gravity_hold(saqiel):
    loaded = attach_point_mass(saqiel, "hand", 3.74, (0.0, 0.0, -0.2))
    q = np.zeros(7)
    q[saqiel.joint_id("elbow")] = math.radians(-44)
    cfg = _config(loaded)
    out = control_step(loaded, MeasuredState(q, np.zeros(10)), Reference(q, np.zeros(7)), cfg)
    assert np.all(out.f_final >= loaded.f_min) and np.all(out.f_final <= 490.0)
    # static equilibrium: wire torques balance gravity
    G = muscle_jacobian(loaded, q)
    assert np.max(np.abs(-G.T @ out.f_final - gravity_vector(loaded, q))) < 0.01


def test_wire_feedback_damps():
    """A joint moving away from a still reference sees a braking torque from the feedback alone."""
    m = point_pendulum(gravity=(0.0, 0.0, 0.0))
    q = np.array([0.0])
    G = muscle_jacobian(m, q)
    cfg = _config(m, kp=0.0)
    for qd in (0.5, -0.5):
        out = control_step(m, MeasuredState(q, G @ [qd]), Reference(q, np.zeros(1)), cfg)
        tau = torque_from_tension(G, out.f_final)
        assert tau[0] * qd < 0


def test_reference_wire_velocity(saqiel):
    q = np.zeros(7)
    qd = np.arange(7) * 0.1
    assert reference_wire_velocity(saqiel, q, qd) == pytest.approx(muscle_jacobian(saqiel, q) @ qd)


def test_controller_keeps_warm_start(saqiel):
    ctl = Controller(saqiel, _config(saqiel))
    q = np.zeros(7)
    q[3] = -0.5
    first = ctl.step(MeasuredState(q, np.zeros(10)), Reference(q, np.zeros(7)))
    second = ctl.step(MeasuredState(q, np.zeros(10)), Reference(q, np.zeros(7)))
    assert second.qp_iterations <= first.qp_iterations
    assert second.f_final == pytest.approx(first.f_final, abs=1e-9)


def test_config_validation(saqiel):
    with pytest.raises(ValidationError):
        _config(saqiel, control_rate=100.0)
    with pytest.raises(ValidationError):
        ControllerConfig(np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(2), 1.0, 5.0, 490.0)
    with pytest.raises(ValidationError):
        ControllerConfig(-np.eye(2), np.eye(2), 1.0, 5.0, 490.0)
    low = _config(saqiel, gain_scale=0.1)
    assert low.K_p[0, 0] == pytest.approx(40.0)
    assert low.K_v[0, 0] == pytest.approx(20.0)
    with pytest.raises(DimensionMismatch):
        control_step(saqiel, MeasuredState(np.zeros(7), np.zeros(9)), Reference(np.zeros(7), np.zeros(7)),
                     _config(saqiel))
