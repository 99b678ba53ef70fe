"""Rigid-body dynamics of the joint chain and collision-safety measures.

``M`` comes from the composite-rigid-body algorithm, ``h`` and ``g`` from a
world-frame recursive Newton-Euler pass. The chains here have at most ten
joints, so everything is dense.
"""

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, SingularConfiguration, SingularInertia
from .kinematics import _jacobian_from_frames, as_config, cross, frames, muscle_jacobian

SINGULAR_COND = 1e12
SINGULAR_SV = 1e-9
CONSTRAINED_MOBILITY = 1e-12


class _Inertial:
    def __init__(self, model):
        self.mass = np.array([lk.mass for lk in model.links])
        self.com = [np.array(lk.center_of_mass) for lk in model.links]
        self.inertia = [np.array(lk.inertia_tensor) for lk in model.links]
        self.gravity = np.array(model.gravity)
        self.inert = [m == 0 and not np.any(I) for m, I in zip(self.mass, self.inertia)]


def _inertial(model):
    cache = model.__dict__.get("_dyn_inertial")
    if cache is None:
        cache = _Inertial(model)
        model.__dict__["_dyn_inertial"] = cache
    return cache


def _rnea(model, q, qd, qdd, with_gravity, fr=None):
    if fr is None:
        fr = frames(model, q)
    ine = _inertial(model)
    topo = model.topology
    n_links = len(model.links)
    w = [None] * n_links
    dw = [None] * n_links
    a = [None] * n_links
    w[0] = np.zeros(3)
    dw[0] = np.zeros(3)
    a[0] = -ine.gravity if with_gravity else np.zeros(3)
    parents = topo.joint_parent
    children = topo.joint_child
    for j in range(model.n_dof):
        par = parents[j]
        k = children[j]
        z = fr.axes[j]
        w[k] = w[par] + z * qd[j]
        dw[k] = dw[par] + z * qdd[j] + cross(w[par], z) * qd[j]
        d = fr.p[k] - fr.p[par]
        a[k] = a[par] + cross(dw[par], d) + cross(w[par], cross(w[par], d))
    f = [np.zeros(3) for _ in range(n_links)]
    n = [np.zeros(3) for _ in range(n_links)]
    for k in range(1, n_links):
        if ine.inert[k]:
            continue
        m = ine.mass[k]
        R = fr.R[k]
        r = R @ ine.com[k]
        I = R @ ine.inertia[k] @ R.T
        if m > 0:
            ac = a[k] + cross(dw[k], r) + cross(w[k], cross(w[k], r))
            F = m * ac
            f[k] = F
            n[k] = cross(r, F)
        n[k] = n[k] + I @ dw[k] + cross(w[k], I @ w[k])
    tau = np.zeros(model.n_dof)
    for j in range(model.n_dof - 1, -1, -1):
        k = children[j]
        par = parents[j]
        tau[j] = fr.axes[j] @ n[k]
        f[par] = f[par] + f[k]
        n[par] = n[par] + n[k] + cross(fr.p[k] - fr.p[par], f[k])
    return tau


def inverse_dynamics(model, q, qdot, qddot):
    """Joint torques M qdd + h + g via recursive Newton-Euler."""
    q = as_config(model, q)
    return _rnea(model, q, as_config(model, qdot, "qdot"), as_config(model, qddot, "qddot"), True)


def bias_forces(model, q, qdot):
    """Centrifugal and Coriolis torques h(q, qdot), gravity excluded."""
    q = as_config(model, q)
    return _rnea(model, q, as_config(model, qdot, "qdot"), np.zeros(model.n_dof), False)


def gravity_vector(model, q):
    """Gravity torques g(q); holding the arm still takes tau = g."""
    q = as_config(model, q)
    zero = np.zeros(model.n_dof)
    return _rnea(model, q, zero, zero, True)


def _crba(model, fr):
    ine = _inertial(model)
    topo = model.topology
    n_links = len(model.links)
    mass = np.zeros(n_links)
    first = [np.zeros(3) for _ in range(n_links)]
    rot = [np.zeros((3, 3)) for _ in range(n_links)]
    eye = np.eye(3)
    for k in range(1, n_links):
        m = ine.mass[k]
        R = fr.R[k]
        c = fr.p[k] + R @ ine.com[k]
        mass[k] = m
        first[k] = m * c
        rot[k] = R @ ine.inertia[k] @ R.T + m * ((c @ c) * eye - np.outer(c, c))
    for j in range(model.n_dof - 1, -1, -1):
        k = topo.joint_child[j]
        par = topo.joint_parent[j]
        mass[par] += mass[k]
        first[par] = first[par] + first[k]
        rot[par] = rot[par] + rot[k]
    N = model.n_dof
    M = np.zeros((N, N))
    for i in range(N):
        k = topo.joint_child[i]
        z = fr.axes[i]
        o = fr.origins[i]
        v0 = cross(o, z)
        F = mass[k] * v0 + cross(z, first[k])
        N0 = rot[k] @ z + cross(first[k], v0)
        for j in topo.link_ancestors[k]:
            M[j, i] = fr.axes[j] @ (N0 - cross(fr.origins[j], F))
            M[i, j] = M[j, i]
    return M


def inertia_matrix(model, q):
    """Joint-space inertia matrix M(q), kg m^2 (composite rigid body algorithm)."""
    q = as_config(model, q)
    return _crba(model, frames(model, q))


def rotor_inertia_matrix(model, q):
    """Motor rotor inertia reflected through the wires: G^T diag(J_rotor / r^2) G."""
    G = muscle_jacobian(model, q)
    m_r = np.array([r.motor.reflected_mass for r in model.routes])
    return G.T @ (m_r[:, None] * G)


def generalized_force(model, q, wrenches):
    """Map point forces ``(link, point_in_link, force_world)`` to joint torques J^T F."""
    q = as_config(model, q)
    tau = np.zeros(model.n_dof)
    if not wrenches:
        return tau
    fr = frames(model, q)
    for link, point, force in wrenches:
        k = model.link_id(link)
        p = fr.point(k, np.asarray(point, dtype=float))
        tau += _jacobian_from_frames(model, fr, k, p).T @ np.asarray(force, dtype=float)
    return tau


def solve_inertia(M, rhs):
    if np.linalg.cond(M) > SINGULAR_COND:
        raise SingularInertia(f"inertia matrix condition number exceeds {SINGULAR_COND:g}")
    return np.linalg.solve(M, rhs)


def forward_dynamics(model, q, qdot, tau, wrenches=()):
    """qdd = M^-1 (tau + J^T w - h - g)."""
    q = as_config(model, q)
    qdot = as_config(model, qdot, "qdot")
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (model.n_dof,):
        raise DimensionMismatch(f"tau has shape {tau.shape}")
    fr = frames(model, q)
    M = _crba(model, fr)
    rhs = tau + generalized_force(model, q, wrenches) - _rnea(model, q, qdot, np.zeros(model.n_dof), True, fr)
    return solve_inertia(M, rhs)


def kinetic_energy(model, q, qdot):
    """Sum of link translational and rotational kinetic energy (from link twists)."""
    q = as_config(model, q)
    qdot = as_config(model, qdot, "qdot")
    fr = frames(model, q)
    ine = _inertial(model)
    topo = model.topology
    total = 0.0
    for k in range(1, len(model.links)):
        R = fr.R[k]
        c = fr.p[k] + R @ ine.com[k]
        w = np.zeros(3)
        v = np.zeros(3)
        for j in topo.link_ancestors[k]:
            w += fr.axes[j] * qdot[j]
            v += cross(fr.axes[j], c - fr.origins[j]) * qdot[j]
        I = R @ ine.inertia[k] @ R.T
        total += 0.5 * ine.mass[k] * (v @ v) + 0.5 * w @ I @ w
    return float(total)


def potential_energy(model, q):
    q = as_config(model, q)
    fr = frames(model, q)
    ine = _inertial(model)
    total = 0.0
    for k in range(1, len(model.links)):
        c = fr.p[k] + fr.R[k] @ ine.com[k]
        total -= ine.mass[k] * (ine.gravity @ c)
    return float(total)


# ---------------------------------------------------------------------------
# operational space / effective mass


def _mobility(model, q, link, point, include_rotor=False):
    """Translational mobility J M^-1 J^T at a point (inverse operational inertia)."""
    q = as_config(model, q)
    k = model.link_id(link)
    fr = frames(model, q)
    p = fr.point(k, np.asarray(point, dtype=float))
    J = _jacobian_from_frames(model, fr, k, p)
    M = _crba(model, fr)
    if include_rotor:
        M = M + rotor_inertia_matrix(model, q)
    MinvJt = solve_inertia(M, J.T)
    A = J @ MinvJt
    return 0.5 * (A + A.T), J


def operational_inertia(model, q, link, point, include_rotor=False):
    """Translational operational-space inertia (J M^-1 J^T)^-1, kg.

    Raises SingularConfiguration when the point Jacobian has rank < 3; no
    pseudo-inverse fallback is applied.
    """
    A, J = _mobility(model, q, link, point, include_rotor)
    sv = np.linalg.svd(J, compute_uv=False)
    if sv.size < 3 or sv[-1] < SINGULAR_SV * max(1.0, sv[0]):
        raise SingularConfiguration("point Jacobian rank < 3")
    L = np.linalg.inv(A)
    return 0.5 * (L + L.T)


@dataclass
class EffectiveMassResult:
    m_u: float
    direction: np.ndarray
    lambda_v: np.ndarray | None = None
    constrained_direction: bool = False


def _unit(u):
    u = np.asarray(u, dtype=float)
    if u.shape != (3,):
        raise DimensionMismatch("direction must be a 3-vector")
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ValueError("direction must have unit norm (within 1e-9)")
    return u


def effective_mass_result(model, q, link, point, u, include_rotor=False):
    u = _unit(u)
    A, J = _mobility(model, q, link, point, include_rotor)
    mobility = float(u @ A @ u)
    scale = max(float(np.trace(A)), 1e-300)
    lam = None
    sv = np.linalg.svd(J, compute_uv=False)
    if sv.size == 3 and sv[-1] >= SINGULAR_SV * max(1.0, sv[0]):
        lam = np.linalg.inv(A)
        lam = 0.5 * (lam + lam.T)
    if mobility <= CONSTRAINED_MOBILITY * scale:
        return EffectiveMassResult(math.inf, u, lam, True)
    return EffectiveMassResult(1.0 / mobility, u, lam, False)


def effective_mass(model, q, link, point, u, include_rotor=False):
    """Apparent mass 1 / (u^T J M^-1 J^T u) at a point along unit direction ``u``.

    Directions the point cannot move along return ``math.inf``; use
    :func:`effective_mass_result` to get the ``constrained_direction`` flag.
    """
    return effective_mass_result(model, q, link, point, u, include_rotor).m_u


PLANES = {
    "xz": (np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]), (0, 2)),
    "xy": (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]), (0, 1)),
    "yz": (np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]), (1, 2)),
}


def plane_directions(plane, resolution):
    e1, e2, _ = PLANES[plane]
    theta = 2.0 * np.pi * np.arange(resolution) / resolution
    return np.cos(theta)[:, None] * e1 + np.sin(theta)[:, None] * e2


@dataclass
class EffectiveMassField:
    rows: np.ndarray  # (K, 3): in-plane coordinates and max effective mass
    posture_index: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    constrained: list = field(default_factory=list)  # rows whose in-plane mobility is rank deficient

    @property
    def max(self):
        return float(self.rows[:, 2].max()) if len(self.rows) else math.nan


def _field_point(model, q, link, point, dirs, coords, include_rotor):
    q = np.asarray(q, dtype=float)
    try:
        A, _ = _mobility(model, q, link, point, include_rotor)
    except SingularInertia:
        return None
    A_plane = A[np.ix_(coords, coords)]
    w = np.linalg.eigvalsh(A_plane)
    tol = CONSTRAINED_MOBILITY * max(float(np.trace(A)), 1e-300)
    if w[-1] <= tol:
        return None
    fr = frames(model, q)
    pos = fr.point(model.link_id(link), np.asarray(point, dtype=float))
    if w[0] <= tol:
        # one in-plane direction is immobile: report the max over the mobile one
        return pos[coords[0]], pos[coords[1]], 1.0 / float(w[-1]), True
    mob = np.einsum("ki,ij,kj->k", dirs, A, dirs)
    return pos[coords[0]], pos[coords[1]], float((1.0 / mob).max()), False


def xz_posture_grid(model, counts=(12, 13, 7), joints=("shoulder_pitch", "elbow", "wrist_pitch")):
    """Even grid over the limits of the joints that move the hand in the xz plane.

    Other joints stay at zero. ``counts`` gives the samples per joint; the
    default grid has 12 x 13 x 7 = 1092 postures.
    """
    if len(counts) != len(joints):
        raise ValueError("one count per joint")
    idx = [model.topology.joint_index[j] for j in joints]
    axes = [np.linspace(model.lower_limits[i], model.upper_limits[i], c) for i, c in zip(idx, counts)]
    grid = []
    for values in itertools.product(*axes):
        q = np.zeros(model.n_dof)
        q[idx] = values
        grid.append(q)
    return grid


def effective_mass_field(model, posture_grid, plane="xz", resolution=360, link=None, point=None,
                         include_rotor=False, workers=None):
    """Per-posture maximum in-plane effective mass at the end-effector point.

    Postures with no in-plane mobility (or a singular M) are skipped and
    listed in ``skipped``. When only one in-plane direction is mobile the row
    reports the effective mass along it and is listed in ``constrained``. ``workers`` > 1 evaluates
    postures on a thread pool; each evaluation reads only the immutable model.
    """
    grid = [np.asarray(q, dtype=float) for q in posture_grid]
    if not grid:
        raise ValueError("posture grid is empty")
    if plane not in PLANES:
        raise ValueError(f"plane must be one of {sorted(PLANES)}")
    ee = model.end_effector_or_default()
    link = ee.link if link is None else link
    point = ee.point if point is None else point
    dirs = plane_directions(plane, resolution)
    coords = PLANES[plane][2]

    def one(q):
        return _field_point(model, q, link, point, dirs, coords, include_rotor)

    if workers is None:
        workers = int(os.environ.get("TENDONKIT_THREADS", "1") or 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, grid))
    else:
        results = [one(q) for q in grid]
    rows, kept, skipped, constrained = [], [], [], []
    for i, res in enumerate(results):
        if res is None:
            skipped.append(i)
            continue
        if res[3]:
            constrained.append(len(rows))
        rows.append(res[:3])
        kept.append(i)
    return EffectiveMassField(np.array(rows, dtype=float).reshape(-1, 3), kept, skipped, constrained)


def max_contact_force(safety, m_u):
    """Peak unconstrained human-robot contact force, N.

    F = sqrt(m_u M_H / (m_u + M_H)) sqrt(K_H) v_rel; an infinite ``m_u``
    gives the reduced-mass limit sqrt(M_H K_H) v_rel.
    """
    if math.isinf(m_u):
        reduced = safety.M_H
    else:
        if not m_u > 0:
            raise ValueError("effective mass must be positive")
        reduced = m_u * safety.M_H / (m_u + safety.M_H)
    return math.sqrt(reduced) * math.sqrt(safety.K_H) * safety.v_rel
