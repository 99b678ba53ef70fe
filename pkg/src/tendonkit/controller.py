"""Computed-torque control for a coupled tendon-driven arm.

One control tick runs

    tau_ref = M(q) (K_p (q_ref - q) + qdd_ref) + h(q, qdot) + g(q)
    f_ref   = argmin of the tension QP for tau_ref
    f_final = clip(K_v (w_ref - w) + f_ref, 0, f_max),   w = -ldot

``w`` is the take-up rate of each wire at its motor (positive while the
motor reels in). With ``ldot = dl/dt`` and ``tau = -G^T f`` the feedback
then adds ``-G^T K_v G (qdot - qdot_ref)``, which damps; written on ``ldot``
directly it would feed the error back with the wrong sign.

There is no joint-velocity feedback: damping comes from the wire-velocity
term, and the velocity fed to h() is estimated from motor-side wire
velocities, so the joint-encoder rate ``MeasuredState.qdot`` is never read.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import _rnea
from .errors import DimensionMismatch, ValidationError
from .kinematics import _lengths_and_jacobian, as_config, frames, muscle_jacobian
from .tension import DEFAULT_LAMBDA, TensionProblem, TensionSolver

DEFAULT_KP = 400.0  # 1/s^2
DEFAULT_KV = 200.0  # N s/m
LOW_GAIN_SCALE = 0.1
MIN_CONTROL_RATE = 500.0


def _gain(value, name, n=None):
    K = np.asarray(value, dtype=float)
    if K.ndim == 0:
        if n is None:
            raise DimensionMismatch(f"{name} needs a size to expand a scalar gain")
        K = float(K) * np.eye(n)
    elif K.ndim == 1:
        K = np.diag(K)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or (n is not None and K.shape[0] != n):
        raise DimensionMismatch(f"{name} must be square" + (f" ({n}x{n})" if n else ""))
    if K.size and np.abs(K - K.T).max() > 1e-9 * max(1.0, np.abs(K).max()):
        raise ValidationError(f"controller.{name}", "symmetric")
    if K.size and np.linalg.eigvalsh(K)[0] < -1e-12:
        raise ValidationError(f"controller.{name}", "positive semidefinite")
    return K


@dataclass
class ControllerConfig:
    K_p: np.ndarray
    K_v: np.ndarray
    Lambda: np.ndarray
    f_min: np.ndarray
    f_max: np.ndarray
    control_rate: float = 500.0

    def __post_init__(self):
        self.K_p = _gain(self.K_p, "K_p")
        self.K_v = _gain(self.K_v, "K_v")
        if not self.control_rate >= MIN_CONTROL_RATE:
            raise ValidationError("controller.control_rate", f"control_rate >= {MIN_CONTROL_RATE:g} Hz")

    @classmethod
    def for_model(cls, model, kp=DEFAULT_KP, kv=DEFAULT_KV, Lambda=DEFAULT_LAMBDA, gain_scale=1.0,
                  control_rate=500.0, f_min=None, f_max=None):
        """Defaults: K_p = 400 I, K_v = 200 I, Lambda = 1e6 I, per-route tension bounds."""
        n, r = model.n_dof, model.n_routes
        return cls(
            K_p=gain_scale * _gain(kp, "K_p", n),
            K_v=gain_scale * _gain(kv, "K_v", r),
            Lambda=Lambda,
            f_min=model.f_min.copy() if f_min is None else np.broadcast_to(f_min, (r,)).astype(float),
            f_max=model.f_max.copy() if f_max is None else np.broadcast_to(f_max, (r,)).astype(float),
            control_rate=control_rate,
        )


@dataclass
class Reference:
    q_ref: np.ndarray
    qdd_ref: np.ndarray
    qd_ref: np.ndarray | None = None
    ldot_ref: np.ndarray | None = None


@dataclass
class MeasuredState:
    q: np.ndarray
    ldot: np.ndarray
    qdot: np.ndarray | None = None  # joint encoder rate; not used by the control law


@dataclass
class ControlOutput:
    f_final: np.ndarray
    tau_ref: np.ndarray
    f_ref: np.ndarray
    torque_residual: np.ndarray
    kkt_residual: float
    qp_iterations: int
    qp_status: str
    qdot_estimate: np.ndarray
    elapsed: float = 0.0
    extra: dict = field(default_factory=dict)


def joint_velocity_from_wires(G, ldot):
    """Least-squares joint rate from wire rates, ldot = G qdot."""
    return np.linalg.lstsq(G, ldot, rcond=None)[0]


def computed_torque(model, state, reference, K_p, qdot=None):
    """Target joint torques; ``qdot`` (for h) defaults to the wire-velocity estimate."""
    q = as_config(model, state.q)
    if qdot is None:
        qdot = joint_velocity_from_wires(muscle_jacobian(model, q), np.asarray(state.ldot, dtype=float))
    accel = np.asarray(K_p) @ (as_config(model, reference.q_ref, "q_ref") - q) \
        + as_config(model, reference.qdd_ref, "qdd_ref")
    return _rnea(model, q, as_config(model, qdot, "qdot"), accel, True)


def torque_from_tension(G, f):
    """Joint torques produced by wire tensions: tau = -G^T f."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    f = np.asarray(f, dtype=float)
    if f.shape != (G.shape[0],):
        raise DimensionMismatch(f"f has {f.size} entries, G has {G.shape[0]} rows")
    return -G.T @ f


def tension_command(f_ref, K_v, ldot_ref, ldot, f_max=None):
    """Add wire-velocity feedback to the QP tensions and clamp to [0, f_max]."""
    f_ref = np.asarray(f_ref, dtype=float)
    err = np.asarray(ldot_ref, dtype=float) - np.asarray(ldot, dtype=float)
    K_v = np.asarray(K_v, dtype=float)
    if err.shape != f_ref.shape:
        raise DimensionMismatch("ldot_ref/ldot and f_ref differ in length")
    fb = K_v * err if K_v.ndim == 0 else K_v @ err
    upper = np.inf if f_max is None else f_max
    return np.clip(fb + f_ref, 0.0, upper)


def reference_wire_velocity(model, q_ref, qd_ref):
    return muscle_jacobian(model, q_ref) @ np.asarray(qd_ref, dtype=float)


class Controller:
    """Stateful control loop: holds the QP warm start; one instance per robot."""

    def __init__(self, model, config):
        self.model = model
        self.config = config
        self.solver = TensionSolver()

    def step(self, state, reference):
        return control_step(self.model, state, reference, self.config, solver=self.solver)


def control_step(model, state, reference, config, solver=None):
    """computed torque -> tension QP -> wire-velocity feedback, in that order."""
    t0 = time.perf_counter()
    q = as_config(model, state.q)
    ldot = np.asarray(state.ldot, dtype=float)
    if ldot.shape != (model.n_routes,):
        raise DimensionMismatch(f"ldot has {ldot.size} entries, model has {model.n_routes} routes")
    fr = frames(model, q)
    G = _lengths_and_jacobian(model, q, fr)[1]
    qdot_est = joint_velocity_from_wires(G, ldot)
    accel = config.K_p @ (as_config(model, reference.q_ref, "q_ref") - q) \
        + as_config(model, reference.qdd_ref, "qdd_ref")
    tau_ref = _rnea(model, q, qdot_est, accel, True, fr)

    problem = TensionProblem(G, tau_ref, config.Lambda, config.f_min, config.f_max)
    sol = (solver or TensionSolver()).solve(problem, warm_start=solver is not None)

    ldot_ref = reference.ldot_ref
    if ldot_ref is None:
        qd_ref = reference.qd_ref if reference.qd_ref is not None else np.zeros(model.n_dof)
        ldot_ref = reference_wire_velocity(model, reference.q_ref, qd_ref)
    # feedback on take-up rates, see module docstring
    f_final = tension_command(sol.f_ref, config.K_v, -np.asarray(ldot_ref, dtype=float), -ldot, config.f_max)
    return ControlOutput(
        f_final=f_final,
        tau_ref=tau_ref,
        f_ref=sol.f_ref,
        torque_residual=sol.torque_residual,
        kkt_residual=sol.kkt_residual,
        qp_iterations=sol.iterations,
        qp_status=sol.status,
        qdot_estimate=qdot_est,
        elapsed=time.perf_counter() - t0,
    )
