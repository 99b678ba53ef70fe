"""Robot description: kinematic tree, link inertia and wire routing.

Models are immutable. Every invariant is checked when an object is built,
so ``dataclasses.replace`` on a valid model either returns another valid
model or raises :class:`~tendonkit.errors.ValidationError`.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Union

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .errors import ParseError, UnknownLink, ValidationError

DEFAULT_GRAVITY = (0.0, 0.0, -9.81)
AXIS_TOL = 1e-9
SYM_TOL = 1e-9


def _vec3(value, where):
    try:
        out = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ValidationError(where, "3-vector of numbers") from None
    if len(out) != 3 or not all(math.isfinite(v) for v in out):
        raise ValidationError(where, "finite 3-vector")
    return out


def _mat3(value, where):
    arr = np.asarray(value, dtype=float)
    if arr.shape == (6,):
        ixx, iyy, izz, ixy, ixz, iyz = arr
        arr = np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
    if arr.shape != (3, 3) or not np.all(np.isfinite(arr)):
        raise ValidationError(where, "finite 3x3 matrix")
    return tuple(tuple(float(v) for v in row) for row in arr)


def _set(obj, name, value):
    object.__setattr__(obj, name, value)


@dataclass(frozen=True)
class LinkSpec:
    name: str
    mass: float = 0.0
    center_of_mass: tuple = (0.0, 0.0, 0.0)
    inertia_tensor: tuple = ((0.0,) * 3,) * 3

    def __post_init__(self):
        where = f"link.{self.name}"
        _set(self, "mass", float(self.mass))
        _set(self, "center_of_mass", _vec3(self.center_of_mass, where + ".center_of_mass"))
        _set(self, "inertia_tensor", _mat3(self.inertia_tensor, where + ".inertia_tensor"))
        if not math.isfinite(self.mass) or self.mass < 0:
            raise ValidationError(where + ".mass", "mass >= 0", f"got {self.mass}")
        inertia = np.array(self.inertia_tensor)
        scale = max(1.0, float(np.abs(inertia).max()))
        if np.abs(inertia - inertia.T).max() > SYM_TOL * scale:
            raise ValidationError(where + ".inertia_tensor", "symmetric")
        moments = np.linalg.eigvalsh(inertia)
        tol = 1e-12 * scale
        if moments[0] < -tol:
            raise ValidationError(where + ".inertia_tensor", "positive semidefinite")
        a, b, c = moments
        if a + b < c - tol:
            raise ValidationError(where + ".inertia_tensor", "triangle inequality on principal moments")


def rod_inertia(mass, length, radius=0.0, axis=2):
    """Inertia of a uniform cylinder about its centre, long axis along ``axis``."""
    perp = mass * (3.0 * radius**2 + length**2) / 12.0
    axial = 0.5 * mass * radius**2
    diag = [perp, perp, perp]
    diag[axis] = axial
    return tuple(tuple(diag[i] if i == j else 0.0 for j in range(3)) for i in range(3))


@dataclass(frozen=True)
class JointSpec:
    """Revolute joint. ``origin``/``rpy`` place the joint frame in the parent link frame."""

    name: str
    parent: str
    child: str
    axis: tuple = (0.0, 0.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)
    rpy: tuple = (0.0, 0.0, 0.0)
    lower: float = -math.pi
    upper: float = math.pi

    def __post_init__(self):
        where = f"joint.{self.name}"
        _set(self, "axis", _vec3(self.axis, where + ".axis"))
        _set(self, "origin", _vec3(self.origin, where + ".origin"))
        _set(self, "rpy", _vec3(self.rpy, where + ".rpy"))
        _set(self, "lower", float(self.lower))
        _set(self, "upper", float(self.upper))
        if abs(math.sqrt(sum(v * v for v in self.axis)) - 1.0) > AXIS_TOL:
            raise ValidationError(where + ".axis", "unit norm within 1e-9")
        if not (self.lower < self.upper):
            raise ValidationError(where + ".lower", "lower < upper")
        if self.parent == self.child:
            raise ValidationError(where + ".child", "parent != child")


@dataclass(frozen=True)
class Anchor:
    link: str
    point: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        _set(self, "point", _vec3(self.point, f"anchor.{self.link}.point"))


@dataclass(frozen=True)
class LinearSpan:
    """Straight wire between two aligner anchor points on different links."""

    start: Anchor
    end: Anchor


@dataclass(frozen=True)
class CircularWrap:
    """Wire lying on an arc coaxial with ``joint``; length = arc_offset + sign*radius*q."""

    joint: str
    radius: float
    sign: int = 1
    arc_offset: float = 0.0

    def __post_init__(self):
        _set(self, "radius", float(self.radius))
        _set(self, "arc_offset", float(self.arc_offset))
        if self.sign not in (1, -1):
            raise ValidationError(f"segment.{self.joint}.sign", "sign is +1 or -1")
        _set(self, "sign", int(self.sign))
        if not self.radius > 0:
            raise ValidationError(f"segment.{self.joint}.radius", "radius > 0")


Segment = Union[LinearSpan, CircularWrap]


@dataclass(frozen=True)
class MotorSpec:
    pulley_radius: float = 0.005
    torque_constant: float = 0.3
    winding_sign: int = 1
    rotor_inertia: float = 2e-5

    def __post_init__(self):
        for name in ("pulley_radius", "torque_constant", "rotor_inertia"):
            _set(self, name, float(getattr(self, name)))
        if not self.pulley_radius > 0:
            raise ValidationError("motor.pulley_radius", "pulley_radius > 0")
        if not self.torque_constant > 0:
            raise ValidationError("motor.torque_constant", "torque_constant > 0")
        if self.rotor_inertia < 0:
            raise ValidationError("motor.rotor_inertia", "rotor_inertia >= 0")
        if self.winding_sign not in (1, -1):
            raise ValidationError("motor.winding_sign", "winding_sign is +1 or -1")

    @property
    def reflected_mass(self):
        """Rotor inertia seen as a translational mass on the wire, kg."""
        return self.rotor_inertia / self.pulley_radius**2


@dataclass(frozen=True)
class WireRoute:
    name: str
    segments: tuple
    f_min: float = 5.0
    f_max: float = 490.0
    elasticity: float = 1.0e4  # EA, N
    damping_ratio: float = 0.1
    lead_length: float = 0.5  # free wire between drum and first anchor, m
    motor: MotorSpec = field(default_factory=MotorSpec)

    def __post_init__(self):
        where = f"route.{self.name}"
        _set(self, "segments", tuple(self.segments))
        for name in ("f_min", "f_max", "elasticity", "damping_ratio", "lead_length"):
            _set(self, name, float(getattr(self, name)))
        if not self.segments:
            raise ValidationError(where + ".segments", "at least one segment")
        for seg in self.segments:
            if not isinstance(seg, (LinearSpan, CircularWrap)):
                raise ValidationError(where + ".segments", "LinearSpan or CircularWrap")
        if not (0.0 <= self.f_min < self.f_max):
            raise ValidationError(where + ".f_min", "0 <= f_min < f_max")
        if not self.elasticity > 0:
            raise ValidationError(where + ".elasticity", "EA > 0")
        if self.damping_ratio < 0:
            raise ValidationError(where + ".damping_ratio", "damping_ratio >= 0")
        if self.lead_length < 0:
            raise ValidationError(where + ".lead_length", "lead_length >= 0")


@dataclass(frozen=True)
class EndEffector:
    link: str
    point: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        _set(self, "point", _vec3(self.point, "model.end_effector.point"))


@dataclass(frozen=True)
class SafetyParams:
    """Human-side contact parameters for the collision force bound."""

    M_H: float
    K_H: float
    v_rel: float

    def __post_init__(self):
        for name in ("M_H", "K_H", "v_rel"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"safety.{name}", "strictly positive")
            _set(self, name, value)


class Topology:
    """Index tables derived from a validated model (internal)."""

    def __init__(self, model):
        links = model.links
        joints = model.joints
        self.link_index = {lk.name: i for i, lk in enumerate(links)}
        self.joint_index = {jt.name: i for i, jt in enumerate(joints)}
        n_links = len(links)
        self.parent_joint = [-1] * n_links
        self.joint_parent = np.array([self.link_index[j.parent] for j in joints], dtype=int)
        self.joint_child = np.array([self.link_index[j.child] for j in joints], dtype=int)
        for j, child in enumerate(self.joint_child):
            self.parent_joint[child] = j
        # joints on the path root -> link, root side first
        self.link_ancestors = [[] for _ in range(n_links)]
        for j in range(len(joints)):
            child = self.joint_child[j]
            parent = self.joint_parent[j]
            self.link_ancestors[child] = self.link_ancestors[parent] + [j]
        self.children = [[] for _ in range(n_links)]
        for j in range(len(joints)):
            self.children[self.joint_parent[j]].append(self.joint_child[j])
        # joint i supports joint j if i is on the root path of j's child link
        n = len(joints)
        self.supports = np.zeros((n, n), dtype=bool)
        for j in range(n):
            for i in self.link_ancestors[self.joint_child[j]]:
                self.supports[i, j] = True

    def joints_between(self, upper_link, lower_link):
        """Joints crossed going from ``upper_link`` down to ``lower_link``.

        Returns None when ``upper_link`` is not an ancestor of ``lower_link``.
        """
        up = self.link_ancestors[upper_link]
        down = self.link_ancestors[lower_link]
        if upper_link != 0 and (not up or len(down) < len(up) or down[: len(up)] != up):
            return None
        if upper_link == lower_link:
            return []
        return down[len(up):]


@dataclass(frozen=True)
class RobotModel:
    name: str
    links: tuple
    joints: tuple
    routes: tuple = ()
    gravity: tuple = DEFAULT_GRAVITY
    tension_ceiling: float = 490.0
    fully_actuated: bool = False
    end_effector: EndEffector | None = None

    def __post_init__(self):
        _set(self, "links", tuple(self.links))
        _set(self, "joints", tuple(self.joints))
        _set(self, "routes", tuple(self.routes))
        _set(self, "gravity", _vec3(self.gravity, "model.gravity"))
        _set(self, "tension_ceiling", float(self.tension_ceiling))
        _set(self, "fully_actuated", bool(self.fully_actuated))
        self._validate()

    def _validate(self):
        if not self.links:
            raise ValidationError("model.links", "at least one (root) link")
        names = [lk.name for lk in self.links]
        if len(set(names)) != len(names):
            raise ValidationError("model.links", "unique link names")
        jnames = [j.name for j in self.joints]
        if len(set(jnames)) != len(jnames):
            raise ValidationError("model.joints", "unique joint names")
        known = set(names)
        root = names[0]
        seen = {root}
        for jt in self.joints:
            where = f"joint.{jt.name}"
            if jt.parent not in known:
                raise ValidationError(where + ".parent", "parent link exists", jt.parent)
            if jt.child not in known:
                raise ValidationError(where + ".child", "child link exists", jt.child)
            if jt.child == root:
                raise ValidationError(where + ".child", "link 0 is the fixed root")
            if jt.child in seen:
                raise ValidationError(where + ".child", "single rooted tree (no cycles, one parent per link)")
            if jt.parent not in seen:
                raise ValidationError(where + ".parent", "joints ordered parent before child (rooted tree)")
            seen.add(jt.child)
        if seen != known:
            missing = sorted(known - seen)
            raise ValidationError("model.links", "every link connected to the root", ", ".join(missing))

        if not (math.isfinite(self.tension_ceiling) and self.tension_ceiling > 0):
            raise ValidationError("model.tension_ceiling", "tension_ceiling > 0")
        topo = Topology(self)
        rnames = [r.name for r in self.routes]
        if len(set(rnames)) != len(rnames):
            raise ValidationError("model.routes", "unique route names")
        for route in self.routes:
            where = f"route.{route.name}"
            if route.f_max > self.tension_ceiling:
                raise ValidationError(where + ".f_max", "f_max <= model tension ceiling",
                                      f"{route.f_max} > {self.tension_ceiling}")
            for k, seg in enumerate(route.segments):
                swhere = f"{where}.segment.{k}"
                if isinstance(seg, CircularWrap):
                    if seg.joint not in topo.joint_index:
                        raise ValidationError(swhere + ".joint", "joint exists", seg.joint)
                    continue
                for end in (seg.start, seg.end):
                    if end.link not in topo.link_index:
                        raise ValidationError(swhere, "anchor link exists", end.link)
                crossed = topo.joints_between(topo.link_index[seg.start.link],
                                              topo.link_index[seg.end.link])
                if not crossed:
                    raise ValidationError(
                        swhere, "linear span crosses >= 1 joint (from.link strict ancestor of to.link)",
                        f"{seg.start.link} -> {seg.end.link}")
        if self.fully_actuated and len(self.routes) < len(self.joints) + 1:
            raise ValidationError("model.routes", "routes >= joints + 1 for full antagonistic actuation",
                                  f"{len(self.routes)} routes, {len(self.joints)} joints")
        if self.end_effector is not None and self.end_effector.link not in topo.link_index:
            raise ValidationError("model.end_effector.link", "link exists", self.end_effector.link)

    @cached_property
    def topology(self):
        return Topology(self)

    @property
    def n_dof(self):
        return len(self.joints)

    @property
    def n_routes(self):
        return len(self.routes)

    @property
    def root(self):
        return self.links[0]

    def link_id(self, link):
        if isinstance(link, (int, np.integer)):
            if not 0 <= link < len(self.links):
                raise UnknownLink(f"no link with index {link}")
            return int(link)
        try:
            return self.topology.link_index[link]
        except KeyError:
            raise UnknownLink(f"no link named {link!r}") from None

    def joint_id(self, joint):
        if isinstance(joint, (int, np.integer)):
            return int(joint)
        try:
            return self.topology.joint_index[joint]
        except KeyError:
            raise ValidationError("joint", "joint exists", str(joint)) from None

    @cached_property
    def lower_limits(self):
        return np.array([j.lower for j in self.joints])

    @cached_property
    def upper_limits(self):
        return np.array([j.upper for j in self.joints])

    @cached_property
    def f_min(self):
        return np.array([r.f_min for r in self.routes])

    @cached_property
    def f_max(self):
        return np.array([r.f_max for r in self.routes])

    def end_effector_or_default(self):
        if self.end_effector is not None:
            return self.end_effector
        return EndEffector(self.links[-1].name, self.links[-1].center_of_mass)


def moving_part_mass(model):
    """Total mass of every link except the fixed root, kg."""
    return float(sum(lk.mass for lk in model.links[1:]))


def attach_point_mass(model, link, mass, point):
    """Return a copy of ``model`` with a point mass rigidly fixed to ``link``."""
    idx = model.link_id(link)
    lk = model.links[idx]
    if mass < 0:
        raise ValidationError("attach_mass.mass", "mass >= 0")
    total = lk.mass + mass
    p = np.asarray(point, dtype=float)
    c_old = np.asarray(lk.center_of_mass)
    if total == 0:
        return model
    com = (lk.mass * c_old + mass * p) / total
    inertia = np.asarray(lk.inertia_tensor)

    def shift(m, r):
        return m * (np.dot(r, r) * np.eye(3) - np.outer(r, r))

    inertia = inertia + shift(lk.mass, c_old - com) + shift(mass, p - com)
    inertia = 0.5 * (inertia + inertia.T)
    new_link = dataclasses.replace(lk, mass=total, center_of_mass=tuple(com), inertia_tensor=inertia)
    links = list(model.links)
    links[idx] = new_link
    return dataclasses.replace(model, links=tuple(links))


# ---------------------------------------------------------------------------
# structured-text reader / writer

_ANGLE_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(deg|rad)?\s*$")


def parse_angle(value, where="angle"):
    """Number (radians) or string with an optional ``deg``/``rad`` suffix."""
    if isinstance(value, bool):
        raise ValidationError(where, "angle is a number or '<number> deg|rad'")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _ANGLE_RE.match(value)
        if m:
            num = float(m.group(1))
            return math.radians(num) if m.group(2) == "deg" else num
    raise ValidationError(where, "angle is a number or '<number> deg|rad'", repr(value))


def parse_toml(text, what="document"):
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        msg = str(exc).split(" (at ")[0]
        raise ParseError(f"malformed {what}: {msg}", getattr(exc, "lineno", None),
                         getattr(exc, "colno", None)) from None


def _table(doc, key, where):
    value = doc.get(key, {})
    if not isinstance(value, dict):
        raise ValidationError(where, "table")
    return value


def _require(tbl, key, where):
    if key not in tbl:
        raise ValidationError(f"{where}.{key}", "required key present")
    return tbl[key]


_LINK_KEYS = {"mass", "com", "inertia"}
_JOINT_KEYS = {"parent", "child", "axis", "origin", "rpy", "lower", "upper"}
_ROUTE_KEYS = {"f_min", "f_max", "elasticity", "damping_ratio", "lead_length", "motor", "segment"}


def _check_keys(tbl, allowed, where):
    extra = set(tbl) - allowed
    if extra:
        raise ValidationError(where, "known keys only", ", ".join(sorted(extra)))


def _anchor(tbl, where):
    if not isinstance(tbl, dict):
        raise ValidationError(where, "anchor table {link, point}")
    return Anchor(str(_require(tbl, "link", where)), _require(tbl, "point", where))


def _segment(tbl, where):
    kind = _require(tbl, "type", where)
    if kind == "linear":
        _check_keys(tbl, {"type", "from", "to"}, where)
        return LinearSpan(_anchor(_require(tbl, "from", where), where + ".from"),
                          _anchor(_require(tbl, "to", where), where + ".to"))
    if kind == "circular":
        _check_keys(tbl, {"type", "joint", "radius", "sign", "arc_offset"}, where)
        sign = tbl.get("sign", 1)
        if isinstance(sign, float) and sign in (1.0, -1.0):
            sign = int(sign)
        return CircularWrap(str(_require(tbl, "joint", where)), _require(tbl, "radius", where),
                            sign, tbl.get("arc_offset", 0.0))
    raise ValidationError(where + ".type", "type is 'linear' or 'circular'", repr(kind))


def model_from_dict(doc):
    head = _table(doc, "model", "model")
    links = []
    for name, tbl in _table(doc, "link", "link").items():
        _check_keys(tbl, _LINK_KEYS, f"link.{name}")
        links.append(LinkSpec(name, tbl.get("mass", 0.0), tbl.get("com", (0.0, 0.0, 0.0)),
                              tbl.get("inertia", ((0.0,) * 3,) * 3)))
    joints = []
    for name, tbl in _table(doc, "joint", "joint").items():
        where = f"joint.{name}"
        _check_keys(tbl, _JOINT_KEYS, where)
        rpy = [parse_angle(v, where + ".rpy") for v in tbl.get("rpy", (0.0, 0.0, 0.0))]
        joints.append(JointSpec(name, str(_require(tbl, "parent", where)), str(_require(tbl, "child", where)),
                                _require(tbl, "axis", where), tbl.get("origin", (0.0, 0.0, 0.0)), rpy,
                                parse_angle(tbl.get("lower", -math.pi), where + ".lower"),
                                parse_angle(tbl.get("upper", math.pi), where + ".upper")))
    joints = _topological(joints, links[0].name if links else None)
    routes = []
    for name, tbl in _table(doc, "route", "route").items():
        where = f"route.{name}"
        _check_keys(tbl, _ROUTE_KEYS, where)
        segs = _table(tbl, "segment", where + ".segment")
        try:
            order = sorted(segs, key=int)
        except ValueError:
            raise ValidationError(where + ".segment", "segment keys are integers") from None
        segments = [_segment(segs[k], f"{where}.segment.{k}") for k in order]
        motor = MotorSpec(**_table(tbl, "motor", where + ".motor")) if "motor" in tbl else MotorSpec()
        kwargs = {k: tbl[k] for k in ("f_min", "f_max", "elasticity", "damping_ratio", "lead_length") if k in tbl}
        routes.append(WireRoute(name, segments, motor=motor, **kwargs))
    ee = head.get("end_effector")
    if ee is not None:
        ee = EndEffector(str(_require(ee, "link", "model.end_effector")), ee.get("point", (0.0, 0.0, 0.0)))
    return RobotModel(
        name=str(head.get("name", "model")),
        links=links,
        joints=joints,
        routes=routes,
        gravity=head.get("gravity", DEFAULT_GRAVITY),
        tension_ceiling=head.get("tension_ceiling", 490.0),
        fully_actuated=head.get("fully_actuated", False),
        end_effector=ee,
    )


def _topological(joints, root):
    """Stable reorder so every joint follows the joint that created its parent link."""
    placed = {root}
    out = []
    pending = list(joints)
    while pending:
        progress = False
        rest = []
        for jt in pending:
            if jt.parent in placed:
                out.append(jt)
                placed.add(jt.child)
                progress = True
            else:
                rest.append(jt)
        pending = rest
        if not progress:
            out.extend(pending)  # RobotModel validation reports the cycle/orphan
            break
    return out


def load_model(text):
    """Parse a model document and return a validated :class:`RobotModel`."""
    return model_from_dict(parse_toml(text, "model file"))


def load_model_file(path):
    path = Path(path)
    if not path.exists():
        bundled = bundled_model_path(str(path))
        if bundled is None:
            raise FileNotFoundError(str(path))
        path = bundled
    return load_model(path.read_text())


def bundled_model_path(name):
    stem = Path(name).name
    if stem.endswith(".model"):
        stem = stem[: -len(".model")]
    candidate = resources.files("tendonkit") / "data" / f"{stem}.model"
    if candidate.is_file():
        return Path(str(candidate))
    return None


def bundled_model(name="saqiel_ref"):
    path = bundled_model_path(name)
    if path is None:
        raise FileNotFoundError(f"no bundled model {name!r}")
    return load_model(path.read_text())


def _anchor_dict(a):
    return {"link": a.link, "point": list(a.point)}


def model_to_dict(model):
    head = {
        "name": model.name,
        "gravity": list(model.gravity),
        "tension_ceiling": model.tension_ceiling,
        "fully_actuated": model.fully_actuated,
    }
    if model.end_effector is not None:
        head["end_effector"] = _anchor_dict(model.end_effector)
    doc = {"model": head, "link": {}, "joint": {}, "route": {}}
    for lk in model.links:
        doc["link"][lk.name] = {
            "mass": lk.mass,
            "com": list(lk.center_of_mass),
            "inertia": [list(r) for r in lk.inertia_tensor],
        }
    for jt in model.joints:
        doc["joint"][jt.name] = {
            "parent": jt.parent,
            "child": jt.child,
            "axis": list(jt.axis),
            "origin": list(jt.origin),
            "rpy": list(jt.rpy),
            "lower": jt.lower,
            "upper": jt.upper,
        }
    for route in model.routes:
        segs = {}
        for k, seg in enumerate(route.segments):
            if isinstance(seg, LinearSpan):
                segs[str(k)] = {"type": "linear", "from": _anchor_dict(seg.start), "to": _anchor_dict(seg.end)}
            else:
                segs[str(k)] = {"type": "circular", "joint": seg.joint, "radius": seg.radius,
                                "sign": seg.sign, "arc_offset": seg.arc_offset}
        doc["route"][route.name] = {
            "f_min": route.f_min,
            "f_max": route.f_max,
            "elasticity": route.elasticity,
            "damping_ratio": route.damping_ratio,
            "lead_length": route.lead_length,
            "motor": dataclasses.asdict(route.motor),
            "segment": segs,
        }
    return doc


_INLINE_KEYS = {"end_effector", "motor", "from", "to"}


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        r = repr(float(v))
        return r if any(ch in r for ch in ".enia") else r + ".0"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, dict):
        return "{ " + ", ".join(f"{k} = {_toml_value(x)}" for k, x in v.items()) + " }"
    return "[" + ", ".join(_toml_value(x) for x in v) + "]"


def dump_toml(doc):
    """Minimal TOML writer: sections for nested tables, inline arrays/anchors."""
    lines = []

    def emit(path, table):
        leaves = [(k, v) for k, v in table.items() if not isinstance(v, dict) or k in _INLINE_KEYS]
        subs = [(k, v) for k, v in table.items() if isinstance(v, dict) and k not in _INLINE_KEYS]
        if path and (leaves or not subs):
            if lines:
                lines.append("")
            lines.append("[" + ".".join(path) + "]")
        for k, v in leaves:
            lines.append(f"{k} = {_toml_value(v)}")
        for k, v in subs:
            emit(path + [k], v)

    emit([], doc)
    return "\n".join(lines) + "\n"


def dump_model(model):
    """Serialize to the model file dialect; ``load_model(dump_model(m)) == m``."""
    return dump_toml(model_to_dict(model))
