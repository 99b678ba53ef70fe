"""Closed-loop simulation: controller ticks, wire transmission, rigid-body plant.

The controller runs at ``control_rate`` and holds its tension command for
one control period; the plant integrates at ``dt`` inside that period.

In ``ideal_tension`` mode the wires are inextensible: each motor drives its
wire with the commanded force and its rotor moves rigidly with the wire, so
the reflected rotor inertia ``G^T diag(m_r) G`` adds to the arm inertia
(``rotor_inertia = false`` under ``[plant]`` removes it). In ``elastic`` mode each wire is a unilateral spring-damper between the
joint-side geometric length and the motor-side released length; the motor
is a reflected mass ``J_rotor / r^2`` driven by a force that follows the
command through a first-order lag.
"""

import math
from dataclasses import dataclass

import numpy as np

from .controller import Controller, MeasuredState, Reference
from .dynamics import _crba, _rnea, kinetic_energy, potential_energy, solve_inertia
from .errors import NumericalBlowup, TendonkitError
from .kinematics import _jacobian_from_frames, _lengths_and_jacobian, frames
from .model import attach_point_mass
from .trace import Trace, trace_columns

BLOWUP_NORM = 1e9
ROTOR_FD_STEP = 1e-6


# ---------------------------------------------------------------------------
# wire transmission

def wire_stiffness(route, rest_length, ea_scale=1.0):
    """Axial stiffness EA / L0 of a wire of unstretched length ``rest_length``, N/m."""
    return ea_scale * route.elasticity / rest_length


def wire_damping(route, stiffness):
    """Damping ``zeta`` of critical for the wire spring against the reflected rotor mass."""
    m_r = route.motor.reflected_mass
    return 2.0 * route.damping_ratio * math.sqrt(stiffness * m_r) if m_r > 0 else 0.0


def wire_transmission(route, l_geometric, l_motor, ldot_geometric, ldot_motor, rest_length=None,
                      ea_scale=1.0, damping=None):
    """Tension carried by one elastic wire, N.

    ``f = max(0, k (l_geometric - l_motor) + c (ldot_geometric - ldot_motor))``
    with ``k = EA / L0``. ``rest_length`` defaults to the released length plus
    the route's lead length. ``damping`` defaults to the route's damping ratio
    applied to the reflected rotor mass.
    """
    L0 = (l_motor + route.lead_length) if rest_length is None else rest_length
    k = wire_stiffness(route, L0, ea_scale)
    c = wire_damping(route, k) if damping is None else damping
    return max(0.0, k * (l_geometric - l_motor) + c * (ldot_geometric - ldot_motor))


# ---------------------------------------------------------------------------
# plant state

@dataclass
class SimState:
    t: float
    q: np.ndarray
    qdot: np.ndarray
    f_applied: np.ndarray
    l_motor: np.ndarray | None = None
    ldot_motor: np.ndarray | None = None
    f_drive: np.ndarray | None = None  # motor drive force (elastic mode)

    def check(self):
        parts = [self.q, self.qdot, self.f_applied]
        if self.l_motor is not None:
            parts += [self.l_motor, self.ldot_motor, self.f_drive]
        x = np.concatenate(parts)
        if not np.all(np.isfinite(x)) or np.abs(x).max() > BLOWUP_NORM:
            raise NumericalBlowup(f"state diverged at t={self.t:.6g}s")


@dataclass
class Plane:
    normal: np.ndarray
    offset: float
    stiffness: float
    damping: float
    link: str
    point: np.ndarray


def apply_plane_contact(model, q, qdot, plane, fr=None):
    """Penalty force of one plane on the contact point; returns (force_world, penetration).

    The plane is ``normal . x = offset`` with the free side along ``normal``.
    Force is ``stiffness * depth + damping * depth_rate`` along the normal,
    never pulling, and zero when separated.
    """
    if fr is None:
        fr = frames(model, np.asarray(q, dtype=float))
    k = model.link_id(plane.link)
    p = fr.point(k, plane.point)
    depth = plane.offset - float(plane.normal @ p)
    if depth <= 0.0:
        return np.zeros(3), depth
    J = _jacobian_from_frames(model, fr, k, p)
    depth_rate = -float(plane.normal @ (J @ qdot))
    mag = max(0.0, plane.stiffness * depth + plane.damping * depth_rate)
    return mag * plane.normal, depth


class Plant:
    """Rigid-body arm plus wire transmission, with the scenario's events applied."""

    def __init__(self, spec):
        self.spec = spec
        self.base = spec.model
        self.model = spec.model
        self.controller_model = spec.model
        self.attached = {}  # name -> (link, mass, point, known)
        self.planes = []
        opts = spec.plant
        self.routes = spec.model.routes
        self.m_r = np.array([r.motor.reflected_mass for r in self.routes])
        self.lead = np.array([r.lead_length for r in self.routes])
        self.ea = np.array([r.elasticity for r in self.routes]) * opts.ea_scale
        self.zeta = np.array([r.damping_ratio for r in self.routes])
        self.lag = opts.motor_lag
        self.stops = opts.joint_stops
        self.k_stop = opts.stop_stiffness
        self.d_stop = opts.stop_damping
        self.lower = spec.model.lower_limits
        self.upper = spec.model.upper_limits
        self.elastic = spec.mode == "elastic"
        self.rigid_rotors = opts.rotor_inertia and not self.elastic and bool(self.m_r.any())

    # -- events -------------------------------------------------------------

    def _rebuild(self):
        plant = ctl = self.base
        for link, mass, point, known in self.attached.values():
            plant = attach_point_mass(plant, link, mass, point)
            if known:
                ctl = attach_point_mass(ctl, link, mass, point)
        self.model, self.controller_model = plant, ctl

    def apply_event(self, ev, state):
        if ev.kind == "attach_mass":
            self.attached[ev.name] = (ev.link, ev.mass, ev.point, ev.known)
            self._rebuild()
        elif ev.kind == "release":
            held = self.attached.pop(ev.name, None)
            self._rebuild()
            if held is not None:
                fr = frames(self.model, state.q)
                k = self.model.link_id(held[0])
                p = fr.point(k, np.asarray(held[2], dtype=float))
                v = _jacobian_from_frames(self.model, fr, k, p) @ state.qdot
                return {"release_position": [float(x) for x in p], "release_velocity": [float(x) for x in v]}
        elif ev.kind == "plane_contact":
            self.planes.append(Plane(ev.normal, ev.offset, ev.stiffness, ev.damping, ev.link, ev.point))
        elif ev.kind == "impulse":
            fr = frames(self.model, state.q)
            k = self.model.link_id(ev.link)
            J = _jacobian_from_frames(self.model, fr, k, fr.point(k, ev.point))
            M = _crba(self.model, fr)
            if self.rigid_rotors:
                G = _lengths_and_jacobian(self.model, state.q, fr)[1]
                M = M + G.T @ (self.m_r[:, None] * G)
            dqd = solve_inertia(M, J.T @ ev.impulse)
            state.qdot = state.qdot + dqd
            return {"dqdot": [float(v) for v in dqd]}
        return {}

    # -- forces -------------------------------------------------------------

    def stop_torque(self, q, qd):
        if not self.stops:
            return 0.0
        over = q - self.upper
        under = self.lower - q
        tau = np.zeros_like(q)
        hi = over > 0
        lo = under > 0
        tau[hi] = -np.maximum(0.0, self.k_stop * over[hi] + self.d_stop * qd[hi])
        tau[lo] = np.maximum(0.0, self.k_stop * under[lo] - self.d_stop * qd[lo])
        return tau

    def wire_forces(self, l_geo, ldot_geo, l_m, ld_m):
        k = self.ea / (l_m + self.lead)
        c = 2.0 * self.zeta * np.sqrt(k * self.m_r)
        return np.maximum(0.0, k * (l_geo - l_m) + c * (ldot_geo - ld_m))

    def contact(self, q, qd, fr):
        tau = np.zeros_like(q)
        total = 0.0
        for plane in self.planes:
            force, _ = apply_plane_contact(self.model, q, qd, plane, fr)
            if force.any():
                k = self.model.link_id(plane.link)
                J = _jacobian_from_frames(self.model, fr, k, fr.point(k, plane.point))
                tau += J.T @ force
                total += float(np.linalg.norm(force))
        return tau, total

    def derivatives(self, q, qd, f_cmd, l_m=None, ld_m=None, f_drive=None):
        """Accelerations of the joint (and motor) states; also returns applied tensions."""
        model = self.model
        fr = frames(model, q)
        l_geo, G = _lengths_and_jacobian(model, q, fr)
        if self.elastic:
            f = self.wire_forces(l_geo, G @ qd, l_m, ld_m)
        else:
            f = f_cmd
        tau = -G.T @ f + self.stop_torque(q, qd)
        if self.planes:
            tau = tau + self.contact(q, qd, fr)[0]
        bias = _rnea(model, q, qd, np.zeros(model.n_dof), True, fr)
        M = _crba(model, fr)
        if self.rigid_rotors:
            # rotor force m_r * l_dd with l_dd = G qdd + Gdot qd
            M = M + G.T @ (self.m_r[:, None] * G)
            bias = bias + G.T @ (self.m_r * self._gdot_qd(q, qd))
        qdd = solve_inertia(M, tau - bias)
        if not self.elastic:
            return qdd, f, None, None
        ldd_m = (f - f_drive) / self.m_r
        df_drive = (f_cmd - f_drive) / self.lag
        return qdd, f, ldd_m, df_drive

    def _gdot_qd(self, q, qd):
        speed = float(np.linalg.norm(qd))
        if speed == 0.0:
            return np.zeros(self.model.n_routes)
        h = ROTOR_FD_STEP * qd / speed
        Gp = _lengths_and_jacobian(self.model, q + h, frames(self.model, q + h))[1]
        Gm = _lengths_and_jacobian(self.model, q - h, frames(self.model, q - h))[1]
        return (Gp - Gm) @ qd * (speed / (2.0 * ROTOR_FD_STEP))

    def rotor_kinetic_energy(self, q, qd):
        if not self.rigid_rotors:
            return 0.0
        ld = _lengths_and_jacobian(self.model, q, frames(self.model, q))[1] @ qd
        return 0.5 * float(self.m_r @ ld**2)

    def applied_tension(self, state):
        if not self.elastic:
            return state.f_applied
        fr = frames(self.model, state.q)
        l_geo, G = _lengths_and_jacobian(self.model, state.q, fr)
        return self.wire_forces(l_geo, G @ state.qdot, state.l_motor, state.ldot_motor)

    def measured_wire_velocity(self, state):
        if self.elastic:
            return state.ldot_motor.copy()
        fr = frames(self.model, state.q)
        return _lengths_and_jacobian(self.model, state.q, fr)[1] @ state.qdot

    # -- integration --------------------------------------------------------

    def step(self, state, f_cmd, dt, integrator="semi_implicit_euler"):
        """Advance ``state`` by ``dt`` with ``f_cmd`` held; returns the new state."""
        if integrator == "rk4":
            new = self._rk4(state, f_cmd, dt)
        else:
            new = self._semi_implicit(state, f_cmd, dt)
        new.f_applied = f_cmd.copy() if not self.elastic else self.applied_tension(new)
        new.check()
        return new

    def _semi_implicit(self, s, f_cmd, dt):
        if not self.elastic:
            qdd, _, _, _ = self.derivatives(s.q, s.qdot, f_cmd)
            qd = s.qdot + dt * qdd
            return SimState(s.t + dt, s.q + dt * qd, qd, f_cmd)
        qdd, _, ldd, _ = self.derivatives(s.q, s.qdot, f_cmd, s.l_motor, s.ldot_motor, s.f_drive)
        qd = s.qdot + dt * qdd
        ld = s.ldot_motor + dt * ldd
        # the drive lag is linear, so integrate it exactly
        decay = math.exp(-dt / self.lag)
        f_drive = f_cmd + (s.f_drive - f_cmd) * decay
        return SimState(s.t + dt, s.q + dt * qd, qd, s.f_applied, s.l_motor + dt * ld, ld, f_drive)

    def _rk4(self, s, f_cmd, dt):
        n = len(s.q)
        if not self.elastic:
            def deriv(x):
                qdd = self.derivatives(x[:n], x[n:], f_cmd)[0]
                return np.concatenate([x[n:], qdd])
            x0 = np.concatenate([s.q, s.qdot])
        else:
            r = len(f_cmd)

            def deriv(x):
                q, qd = x[:n], x[n:2 * n]
                l_m, ld_m, fd = x[2 * n:2 * n + r], x[2 * n + r:2 * n + 2 * r], x[2 * n + 2 * r:]
                qdd, _, ldd, dfd = self.derivatives(q, qd, f_cmd, l_m, ld_m, fd)
                return np.concatenate([qd, qdd, ld_m, ldd, dfd])
            x0 = np.concatenate([s.q, s.qdot, s.l_motor, s.ldot_motor, s.f_drive])
        k1 = deriv(x0)
        k2 = deriv(x0 + 0.5 * dt * k1)
        k3 = deriv(x0 + 0.5 * dt * k2)
        k4 = deriv(x0 + dt * k3)
        x = x0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not self.elastic:
            return SimState(s.t + dt, x[:n], x[n:], f_cmd)
        r = len(f_cmd)
        return SimState(s.t + dt, x[:n], x[n:2 * n], s.f_applied, x[2 * n:2 * n + r],
                        x[2 * n + r:2 * n + 2 * r], x[2 * n + 2 * r:])

    def initial_state(self, q0, qd0, f0):
        state = SimState(0.0, np.array(q0, dtype=float), np.array(qd0, dtype=float), np.array(f0, dtype=float))
        if self.elastic:
            fr = frames(self.model, state.q)
            l_geo, G = _lengths_and_jacobian(self.model, state.q, fr)
            # pre-stretch each wire so it already carries f0: solve k(l_m) (l_geo - l_m) = f0
            a = self.ea
            l_m = (a * l_geo - f0 * self.lead) / (a + f0)
            state.l_motor = l_m
            state.ldot_motor = G @ state.qdot
            state.f_drive = state.f_applied.copy()
        return state


def step(spec, plant, state, f_cmd):
    """One physics substep of the scenario's integrator."""
    return plant.step(state, np.asarray(f_cmd, dtype=float), spec.dt, spec.integrator)


# ---------------------------------------------------------------------------
# scenario runner

def _row(plant, spec, state, ref, out, f_cmd, contact_force):
    model = plant.model
    fr = frames(model, state.q)
    ee = model.end_effector_or_default()
    k = model.link_id(ee.link)
    p = fr.point(k, np.asarray(ee.point))
    v = _jacobian_from_frames(model, fr, k, p) @ state.qdot
    x_ref = ref.x if ref.x is not None else _ee_point(model, ref.q)
    ke = kinetic_energy(model, state.q, state.qdot) + plant.rotor_kinetic_energy(state.q, state.qdot)
    energy = ke + potential_energy(model, state.q)
    if out is not None:
        diag = [float(np.abs(out.torque_residual).max()), out.kkt_residual, float(out.qp_iterations)]
        f_ref = out.f_ref
    else:
        diag = [0.0, 0.0, 0.0]
        f_ref = np.zeros_like(f_cmd)
    return np.concatenate([[state.t], state.q, state.qdot, ref.q, f_cmd, f_ref, state.f_applied, p, v, x_ref,
                           [contact_force, energy, ke], diag])


def _ee_point(model, q):
    ee = model.end_effector_or_default()
    fr = frames(model, np.asarray(q, dtype=float))
    return fr.point(model.link_id(ee.link), np.asarray(ee.point))


def run_scenario(spec):
    """Run a scenario to completion and return its :class:`Trace`.

    Deterministic: the same spec always produces the same trace. On a
    numerical failure the partial trace is attached to the raised error as
    ``exc.trace``.
    """
    model = spec.model
    plant = Plant(spec)
    n = model.n_dof
    r = model.n_routes
    ref0 = spec.reference(0.0)
    q0 = ref0.q if spec.q0 is None else spec.q0
    qd0 = ref0.qd if spec.qdot0 is None else spec.qdot0
    columns = trace_columns(model)
    trace = Trace(columns, [], spec.name, spec.sample_rate, [])

    events = list(spec.events)
    n_sub = spec.substeps
    n_ticks = int(round(spec.duration * spec.controller.control_rate))
    every = spec.sample_every
    ev_step = [int(round(ev.time / spec.dt)) for ev in events]

    state = None
    try:
        # events scheduled at t = 0 apply before the first command
        state = plant.initial_state(q0, qd0, np.zeros(r))
        i_ev = 0
        while i_ev < len(events) and ev_step[i_ev] == 0:
            info = plant.apply_event(events[i_ev], state)
            trace.events.append({**events[i_ev].describe(), **info})
            i_ev += 1
        controller = Controller(plant.controller_model, spec.controller) if spec.control_enabled else None

        f0, out0 = _command(plant, spec, controller, state, ref0)
        state = plant.initial_state(state.q, state.qdot, f0)
        k_step = 0
        for tick in range(n_ticks + 1):
            t = tick / spec.controller.control_rate
            state.t = t
            ref = spec.reference(t)
            if tick == 0:
                f_cmd, out = f0, out0
            else:
                f_cmd, out = _command(plant, spec, controller, state, ref)
            if not plant.elastic:
                state.f_applied = f_cmd
            if tick % every == 0:
                contact = 0.0
                if plant.planes:
                    contact = plant.contact(state.q, state.qdot, frames(plant.model, state.q))[1]
                trace.rows.append(_row(plant, spec, state, ref, out, f_cmd, contact))
            if tick == n_ticks:
                break
            for _ in range(n_sub):
                while i_ev < len(events) and ev_step[i_ev] <= k_step:
                    info = plant.apply_event(events[i_ev], state)
                    trace.events.append({**events[i_ev].describe(), **info})
                    if controller is not None:
                        controller.model = plant.controller_model
                    i_ev += 1
                state = plant.step(state, f_cmd, spec.dt, spec.integrator)
                k_step += 1
    except TendonkitError as exc:
        exc.trace = trace.finalize()
        raise
    return trace.finalize()


def _command(plant, spec, controller, state, ref):
    r = plant.model.n_routes
    if controller is None:
        return np.zeros(r), None
    measured = MeasuredState(q=state.q, ldot=plant.measured_wire_velocity(state))
    out = controller.step(measured, Reference(ref.q, ref.qdd, qd_ref=ref.qd))
    return out.f_final, out
