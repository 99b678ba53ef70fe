"""Forward kinematics, point Jacobians, wire lengths and the muscle Jacobian.

Sign convention: ``G[i, j] = d l_i / d q_j``, so tensions ``f >= 0`` produce
joint torques ``tau = -G.T @ f``. A wire that flexes joint j shortens as
``q_j`` grows and therefore has a negative entry in column j.
"""

import math

import numpy as np

from .errors import DegenerateSpan, DimensionMismatch, JointLimitViolation
from .model import CircularWrap

DEGENERATE_LENGTH = 1e-9
FD_EPS = 1e-6


def cross(a, b):
    # np.cross carries ~10 us of overhead per call on 3-vectors
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def rotation_about(axis, angle):
    k = skew(np.asarray(axis, dtype=float))
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def rpy_matrix(rpy):
    r, p, y = rpy
    cr, sr, cp, sp, cy, sy = math.cos(r), math.sin(r), math.cos(p), math.sin(p), math.cos(y), math.sin(y)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return rz @ ry @ rx


class _Compiled:
    """Per-model arrays used by the hot loops; built once and cached on the model."""

    def __init__(self, model):
        topo = model.topology
        self.n = n = model.n_dof
        self.n_links = len(model.links)
        self.joint_parent = [int(v) for v in topo.joint_parent]
        self.joint_child = [int(v) for v in topo.joint_child]
        self.R_origin = [rpy_matrix(j.rpy) for j in model.joints]
        self.p_origin = [np.array(j.origin) for j in model.joints]
        self.axis_local = [np.array(j.axis) for j in model.joints]
        self.K = [skew(a) for a in self.axis_local]
        self.K2 = [k @ k for k in self.K]
        self.I_K2 = [np.eye(3) + k2 for k2 in self.K2]
        R = model.n_routes
        # circular wraps: l += offset + G_circ q, constant Jacobian entries
        self.G_circ = np.zeros((R, n))
        self.circ_offset = np.zeros(R)
        # linear spans, batched: span k belongs to route span_route[k]
        starts, a_pts, ends, b_pts, routes = [], [], [], [], []
        crossing = []
        for i, route in enumerate(model.routes):
            for seg in route.segments:
                if isinstance(seg, CircularWrap):
                    self.G_circ[i, topo.joint_index[seg.joint]] += seg.radius * seg.sign
                    self.circ_offset[i] += seg.arc_offset
                    continue
                s = topo.link_index[seg.start.link]
                e = topo.link_index[seg.end.link]
                mask = np.zeros(n)
                mask[topo.joints_between(s, e)] = 1.0
                starts.append(s)
                ends.append(e)
                a_pts.append(seg.start.point)
                b_pts.append(seg.end.point)
                routes.append(i)
                crossing.append(mask)
        self.span_start = np.array(starts, dtype=int)
        self.span_end = np.array(ends, dtype=int)
        self.span_a = np.array(a_pts, dtype=float).reshape(-1, 3)
        self.span_b = np.array(b_pts, dtype=float).reshape(-1, 3)
        self.span_crossing = np.array(crossing, dtype=float).reshape(-1, n)
        self.span_to_route = np.zeros((R, len(starts)))
        self.span_to_route[routes, np.arange(len(starts))] = 1.0


def compiled(model):
    cache = model.__dict__.get("_kin_compiled")
    if cache is None:
        cache = _Compiled(model)
        model.__dict__["_kin_compiled"] = cache
    return cache


def as_config(model, q, name="q"):
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n_dof,):
        raise DimensionMismatch(f"{name} has shape {q.shape}, model has {model.n_dof} DoF")
    if not np.all(np.isfinite(q)):
        raise DimensionMismatch(f"{name} contains non-finite values")
    return q


def check_limits(model, q, tol=1e-9):
    low = q < model.lower_limits - tol
    high = q > model.upper_limits + tol
    if np.any(low | high):
        j = int(np.argmax(low | high))
        jt = model.joints[j]
        raise JointLimitViolation(
            f"joint {jt.name}: q={q[j]:.6g} outside [{jt.lower:.6g}, {jt.upper:.6g}]")


class Frames:
    """World-frame pose of every link plus joint axes/origins for one configuration."""

    __slots__ = ("R", "p", "axes", "origins")

    def __init__(self, R, p, axes, origins):
        self.R = R
        self.p = p
        self.axes = axes
        self.origins = origins

    def point(self, link, point):
        return self.p[link] + self.R[link] @ point


def frames(model, q):
    c = compiled(model)
    R = np.empty((c.n_links, 3, 3))
    p = np.empty((c.n_links, 3))
    R[0] = np.eye(3)
    p[0] = 0.0
    axes = np.empty((c.n, 3))
    origins = np.empty((c.n, 3))
    for j in range(c.n):
        par = c.joint_parent[j]
        Rj = R[par] @ c.R_origin[j]
        pj = p[par] + R[par] @ c.p_origin[j]
        axes[j] = Rj @ c.axis_local[j]
        origins[j] = pj
        s, cq = math.sin(q[j]), math.cos(q[j])
        R[c.joint_child[j]] = Rj @ (c.I_K2[j] + s * c.K[j] - cq * c.K2[j])
        p[c.joint_child[j]] = pj
    return Frames(R, p, axes, origins)


def forward_kinematics(model, q, allow_out_of_range=False):
    """World transforms of every link, shape (n_links, 4, 4); link 0 is identity."""
    q = as_config(model, q)
    if not allow_out_of_range:
        check_limits(model, q)
    fr = frames(model, q)
    out = np.zeros((len(model.links), 4, 4))
    for k in range(len(model.links)):
        out[k, :3, :3] = fr.R[k]
        out[k, :3, 3] = fr.p[k]
        out[k, 3, 3] = 1.0
    return out


def link_point(model, q, link, point):
    k = model.link_id(link)
    fr = frames(model, as_config(model, q))
    return fr.point(k, np.asarray(point, dtype=float))


def _jacobian_from_frames(model, fr, k, p_world):
    J = np.zeros((3, model.n_dof))
    for j in model.topology.link_ancestors[k]:
        J[:, j] = cross(fr.axes[j], p_world - fr.origins[j])
    return J


def point_jacobian(model, q, link, point_in_link):
    """Translational Jacobian (3 x N) of a point fixed on ``link``."""
    k = model.link_id(link)
    fr = frames(model, as_config(model, q))
    return _jacobian_from_frames(model, fr, k, fr.point(k, np.asarray(point_in_link, dtype=float)))


def angular_jacobian(model, q, link):
    k = model.link_id(link)
    fr = frames(model, as_config(model, q))
    J = np.zeros((3, model.n_dof))
    for j in model.topology.link_ancestors[k]:
        J[:, j] = fr.axes[j]
    return J


def _lengths_and_jacobian(model, q, fr, want_jacobian=True):
    c = compiled(model)
    lengths = c.circ_offset + c.G_circ @ q
    G = c.G_circ.copy() if want_jacobian else None
    if len(c.span_start):
        a_w = fr.p[c.span_start] + np.einsum("kij,kj->ki", fr.R[c.span_start], c.span_a)
        b_w = fr.p[c.span_end] + np.einsum("kij,kj->ki", fr.R[c.span_end], c.span_b)
        d = b_w - a_w
        dist = np.sqrt(np.einsum("ki,ki->k", d, d))
        if dist.min() < DEGENERATE_LENGTH:
            k = int(np.argmin(dist))
            route = model.routes[int(np.argmax(c.span_to_route[:, k]))]
            raise DegenerateSpan(f"route {route.name}: span anchors coincide")
        lengths = lengths + c.span_to_route @ dist
        if want_jacobian:
            u = d / dist[:, None]
            # u . (z_j x (b - o_j)) == (b - o_j) . (u x z_j), masked to crossed joints
            z = fr.axes
            uz = np.stack([u[:, None, 1] * z[None, :, 2] - u[:, None, 2] * z[None, :, 1],
                           u[:, None, 2] * z[None, :, 0] - u[:, None, 0] * z[None, :, 2],
                           u[:, None, 0] * z[None, :, 1] - u[:, None, 1] * z[None, :, 0]], axis=-1)
            rel = b_w[:, None, :] - fr.origins[None, :, :]
            G += c.span_to_route @ (c.span_crossing * np.einsum("kji,kji->kj", uz, rel))
    if lengths.size and lengths.min() <= 0.0:
        i = int(np.argmin(lengths))
        raise DegenerateSpan(f"route {model.routes[i].name}: non-positive wire length {lengths[i]:.3g} m")
    return lengths, G


def wire_lengths(model, q):
    q = as_config(model, q)
    return _lengths_and_jacobian(model, q, frames(model, q), want_jacobian=False)[0]


def muscle_jacobian(model, q):
    """Analytic muscle Jacobian G (R x N), m/rad."""
    q = as_config(model, q)
    return _lengths_and_jacobian(model, q, frames(model, q))[1]


def lengths_and_jacobian(model, q):
    q = as_config(model, q)
    return _lengths_and_jacobian(model, q, frames(model, q))


def muscle_jacobian_fd(model, q, eps=FD_EPS):
    """Central-difference muscle Jacobian, used as an oracle for :func:`muscle_jacobian`."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    q = as_config(model, q)
    G = np.zeros((model.n_routes, model.n_dof))
    for j in range(model.n_dof):
        dq = np.zeros(model.n_dof)
        dq[j] = eps
        G[:, j] = (wire_lengths(model, q + dq) - wire_lengths(model, q - dq)) / (2.0 * eps)
    return G


def end_effector_position(model, q):
    ee = model.end_effector_or_default()
    return link_point(model, q, ee.link, ee.point)
