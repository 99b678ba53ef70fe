"""Scenario documents and reference trajectories.

A scenario is a TOML document with ``[scenario]``, ``[controller]``,
``[transmission]``, ``[plant]``, ``[reference]`` and ``[[event]]`` tables;
docs/scenario-format.md lists every key.
"""

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import least_squares

from .controller import DEFAULT_KP, DEFAULT_KV, LOW_GAIN_SCALE, ControllerConfig
from .errors import ValidationError
from .kinematics import _jacobian_from_frames, frames
from .model import RobotModel, load_model_file, parse_angle, parse_toml
from .tension import DEFAULT_LAMBDA

MODES = ("ideal_tension", "elastic")
INTEGRATORS = ("semi_implicit_euler", "rk4")
EVENT_KINDS = ("attach_mass", "release", "impulse", "plane_contact")
DEFAULT_DT = {"ideal_tension": 1e-3, "elastic": 1e-4}
IK_TOL = 1e-6  # m


def _angles(value, where, n=None):
    if not isinstance(value, (list, tuple)):
        raise ValidationError(where, "array of angles")
    out = np.array([parse_angle(v, f"{where}[{i}]") for i, v in enumerate(value)])
    if n is not None and out.shape != (n,):
        raise ValidationError(where, f"{n} entries", f"got {out.size}")
    return out


def _vector(value, where, n=3):
    try:
        out = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(where, f"{n}-element numeric array") from None
    if out.shape != (n,) or not np.all(np.isfinite(out)):
        raise ValidationError(where, f"{n}-element numeric array")
    return out


def _positive(tbl, key, default, where):
    value = float(tbl.get(key, default))
    if not value > 0:
        raise ValidationError(f"{where}.{key}", f"{key} > 0")
    return value


def _check_keys(tbl, allowed, where):
    extra = set(tbl) - set(allowed)
    if extra:
        raise ValidationError(where, "known keys only", ", ".join(sorted(extra)))


# ---------------------------------------------------------------------------
# references

def min_jerk(s):
    """Position, velocity and acceleration of the quintic 0 -> 1 blend at s in [0, 1]."""
    s = min(max(s, 0.0), 1.0)
    return (10 * s**3 - 15 * s**4 + 6 * s**5,
            30 * s**2 - 60 * s**3 + 30 * s**4,
            60 * s - 180 * s**2 + 120 * s**3)


@dataclass
class ReferenceSample:
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    x: np.ndarray | None = None  # task-space target, when the reference defines one


class HoldReference:
    def __init__(self, q):
        self.q = np.asarray(q, dtype=float)

    def __call__(self, t):
        z = np.zeros_like(self.q)
        return ReferenceSample(self.q, z, z)


class JointSweep:
    """Minimum-jerk move from ``start`` to ``end`` over [t0, t1]; holds outside."""

    def __init__(self, start, end, t0, t1):
        if not t1 > t0:
            raise ValidationError("reference.t1", "t1 > t0")
        self.start = np.asarray(start, dtype=float)
        self.end = np.asarray(end, dtype=float)
        self.t0, self.t1 = float(t0), float(t1)

    def __call__(self, t):
        T = self.t1 - self.t0
        s, ds, dds = min_jerk((t - self.t0) / T)
        if t <= self.t0 or t >= self.t1:
            ds = dds = 0.0
        delta = self.end - self.start
        return ReferenceSample(self.start + s * delta, ds / T * delta, dds / T**2 * delta)


class WaypointReference:
    """Clamped cubic spline through joint waypoints (zero end velocity); holds outside."""

    def __init__(self, times, points):
        self.times = np.asarray(times, dtype=float)
        self.points = np.asarray(points, dtype=float)
        if self.times.ndim != 1 or len(self.times) < 2 or np.any(np.diff(self.times) <= 0):
            raise ValidationError("reference.times", "at least two strictly increasing times")
        if self.points.shape[0] != len(self.times):
            raise ValidationError("reference.q", "one posture per time")
        self.spline = CubicSpline(self.times, self.points, bc_type="clamped")

    def __call__(self, t):
        tc = min(max(t, self.times[0]), self.times[-1])
        q = self.spline(tc)
        if t < self.times[0] or t > self.times[-1]:
            z = np.zeros_like(q)
            return ReferenceSample(q, z, z)
        return ReferenceSample(q, self.spline(tc, 1), self.spline(tc, 2))


PLANE_AXES = {"xz": (0, 2), "xy": (0, 1), "yz": (1, 2)}


def circle_point(center, radius, plane, phase):
    i, j = PLANE_AXES[plane]
    p = np.array(center, dtype=float)
    p[i] += radius * math.cos(phase)
    p[j] += radius * math.sin(phase)
    return p


def solve_ik(model, link, point, target, posture, x0=None, posture_weight=0.05, margin=1e-3):
    """Joint posture placing ``point`` on ``link`` at ``target``, resolving redundancy toward ``posture``."""
    k = model.link_id(link)
    point = np.asarray(point, dtype=float)
    lo = model.lower_limits + margin
    hi = model.upper_limits - margin
    posture = np.clip(np.asarray(posture, dtype=float), lo, hi)
    x0 = posture if x0 is None else np.clip(np.asarray(x0, dtype=float), lo, hi)

    reg = posture_weight * np.eye(model.n_dof)

    def pos(q):
        return frames(model, q).point(k, point) - target

    def jac(q):
        fr = frames(model, q)
        return _jacobian_from_frames(model, fr, k, fr.point(k, point))

    q = least_squares(lambda q: np.concatenate([pos(q), posture_weight * (q - posture)]), x0,
                      jac=lambda q: np.vstack([jac(q), reg]), bounds=(lo, hi),
                      xtol=1e-12, ftol=1e-12, gtol=1e-12).x
    # minimum-norm Newton polish removes the small position bias of the posture term
    for _ in range(20):
        e = pos(q)
        if np.linalg.norm(e) < 1e-13:
            break
        q = np.clip(q - np.linalg.pinv(jac(q)) @ e, lo, hi)
    err = float(np.linalg.norm(frames(model, q).point(k, point) - target))
    return q, err


class CircleReference:
    """Task-space circle converted to joint space by IK and a periodic spline.

    The IK runs once at construction over ``samples`` points of one period;
    redundancy is resolved toward the fixed ``seed`` posture so the joint
    loop closes. The joint path is a periodic cubic spline, so q_ref,
    qd_ref and qdd_ref are smooth.
    """

    def __init__(self, model, center, diameter, period, seed, plane="xz", phase=0.0,
                 samples=120, link=None, point=None):
        if plane not in PLANE_AXES:
            raise ValidationError("reference.plane", "plane is xy, xz or yz")
        if not diameter > 0 or not period > 0:
            raise ValidationError("reference.diameter", "diameter and period > 0")
        ee = model.end_effector_or_default()
        self.link = ee.link if link is None else link
        self.point = np.asarray(ee.point if point is None else point, dtype=float)
        self.center = np.asarray(center, dtype=float)
        self.radius = 0.5 * float(diameter)
        self.period = float(period)
        self.plane = plane
        self.phase = float(phase)
        times = np.linspace(0.0, self.period, samples + 1)
        qs = []
        q = np.asarray(seed, dtype=float)
        for t in times[:-1]:
            q, err = solve_ik(model, self.link, self.point, self.target(t), seed, x0=q)
            if err > IK_TOL:
                raise ValidationError("reference.center", "circle reachable within joint limits",
                                      f"IK error {err:.3g} m at t={t:.3f}s")
            qs.append(q)
        qs.append(qs[0])
        self.spline = CubicSpline(times, np.array(qs), bc_type="periodic")

    def target(self, t):
        return circle_point(self.center, self.radius, self.plane,
                            self.phase + 2.0 * math.pi * t / self.period)

    def __call__(self, t):
        tm = t % self.period
        return ReferenceSample(self.spline(tm), self.spline(tm, 1), self.spline(tm, 2), self.target(t))


def build_reference(model, tbl):
    where = "reference"
    kind = tbl.get("type", "hold")
    n = model.n_dof
    if kind == "hold":
        _check_keys(tbl, {"type", "q"}, where)
        return HoldReference(_angles(tbl["q"], "reference.q", n) if "q" in tbl else np.zeros(n))
    if kind == "joint_sweep":
        _check_keys(tbl, {"type", "start", "end", "t0", "t1"}, where)
        return JointSweep(_angles(tbl.get("start"), "reference.start", n),
                          _angles(tbl.get("end"), "reference.end", n),
                          float(tbl.get("t0", 0.0)), float(tbl.get("t1", 1.0)))
    if kind == "waypoints":
        _check_keys(tbl, {"type", "times", "q"}, where)
        pts = tbl.get("q")
        if not isinstance(pts, list):
            raise ValidationError("reference.q", "array of postures")
        return WaypointReference(tbl.get("times", []),
                                 [_angles(p, f"reference.q[{i}]", n) for i, p in enumerate(pts)])
    if kind == "circle":
        _check_keys(tbl, {"type", "center", "diameter", "period", "plane", "phase", "seed", "samples"}, where)
        seed = _angles(tbl["seed"], "reference.seed", n) if "seed" in tbl else np.zeros(n)
        return CircleReference(model, _vector(tbl.get("center"), "reference.center"),
                               _positive(tbl, "diameter", 0.25, where), _positive(tbl, "period", 0.6, where),
                               seed, plane=tbl.get("plane", "xz"),
                               phase=parse_angle(tbl.get("phase", 0.0), "reference.phase"),
                               samples=int(tbl.get("samples", 120)))
    raise ValidationError("reference.type", "type is hold, joint_sweep, waypoints or circle", repr(kind))


# ---------------------------------------------------------------------------
# events

@dataclass
class Event:
    time: float
    kind: str
    link: str | None = None
    point: np.ndarray | None = None
    mass: float = 0.0
    name: str = "payload"
    known: bool = True  # attach/release is reflected in the controller's model
    impulse: np.ndarray | None = None
    normal: np.ndarray | None = None
    offset: float = 0.0
    stiffness: float = 1e5
    damping: float = 0.0

    def describe(self):
        """Plain dict of the fields that apply to this event kind."""
        out = {}
        for key in sorted(_EVENT_KEYS[self.kind]):
            value = getattr(self, key)
            if isinstance(value, np.ndarray):
                value = [float(v) for v in value]
            out[key] = value
        return out


_EVENT_KEYS = {
    "attach_mass": {"time", "kind", "link", "point", "mass", "name", "known"},
    "release": {"time", "kind", "name", "known"},
    "impulse": {"time", "kind", "link", "point", "impulse"},
    "plane_contact": {"time", "kind", "link", "point", "normal", "offset", "stiffness", "damping"},
}


def _event(model, tbl, i, duration):
    where = f"event[{i}]"
    if not isinstance(tbl, dict):
        raise ValidationError(where, "table")
    kind = tbl.get("kind")
    if kind not in EVENT_KINDS:
        raise ValidationError(f"{where}.kind", "kind is " + ", ".join(EVENT_KINDS), repr(kind))
    _check_keys(tbl, _EVENT_KEYS[kind], where)
    time = float(tbl.get("time", 0.0))
    if not 0.0 <= time <= duration:
        raise ValidationError(f"{where}.time", "0 <= time <= duration")
    ee = model.end_effector_or_default()
    ev = Event(time=time, kind=kind)
    if kind in ("attach_mass", "impulse", "plane_contact"):
        ev.link = str(tbl.get("link", ee.link))
        model.link_id(ev.link)
        ev.point = _vector(tbl.get("point", ee.point), f"{where}.point")
    if kind == "attach_mass":
        ev.mass = float(tbl.get("mass", 0.0))
        if not ev.mass > 0:
            raise ValidationError(f"{where}.mass", "mass > 0")
    if kind in ("attach_mass", "release"):
        ev.name = str(tbl.get("name", "payload"))
        ev.known = bool(tbl.get("known", True))
    if kind == "impulse":
        ev.impulse = _vector(tbl.get("impulse"), f"{where}.impulse")
    if kind == "plane_contact":
        n = _vector(tbl.get("normal", [0.0, 0.0, 1.0]), f"{where}.normal")
        norm = np.linalg.norm(n)
        if not norm > 0:
            raise ValidationError(f"{where}.normal", "non-zero normal")
        ev.normal = n / norm
        ev.offset = float(tbl.get("offset", 0.0))
        ev.stiffness = _positive(tbl, "stiffness", 1e5, where)
        ev.damping = float(tbl.get("damping", 0.0))
        if ev.damping < 0:
            raise ValidationError(f"{where}.damping", "damping >= 0")
    return ev


# ---------------------------------------------------------------------------
# scenario

@dataclass
class PlantOptions:
    joint_stops: bool = True
    stop_stiffness: float = 200.0  # N m / rad
    stop_damping: float = 2.0  # N m s / rad
    ea_scale: float = 1.0
    motor_lag: float = 0.002  # s
    rotor_inertia: bool = True  # rigid rotors in ideal_tension mode


@dataclass
class ScenarioSpec:
    name: str
    model: RobotModel
    controller: ControllerConfig
    mode: str
    duration: float
    dt: float
    integrator: str
    reference: object
    events: list = field(default_factory=list)
    q0: np.ndarray | None = None
    qdot0: np.ndarray | None = None
    sample_rate: float = 500.0
    control_enabled: bool = True
    plant: PlantOptions = field(default_factory=PlantOptions)

    @property
    def substeps(self):
        return int(round(1.0 / (self.controller.control_rate * self.dt)))

    @property
    def sample_every(self):
        return int(round(self.controller.control_rate / self.sample_rate))


def _controller(model, tbl):
    _check_keys(tbl, {"kp", "kv", "lambda", "gain_scale", "preset", "control_rate", "f_min", "f_max",
                      "enabled"}, "controller")
    preset = tbl.get("preset", "default")
    if preset not in ("default", "low_gain"):
        raise ValidationError("controller.preset", "preset is default or low_gain", repr(preset))
    scale = float(tbl.get("gain_scale", LOW_GAIN_SCALE if preset == "low_gain" else 1.0))
    return ControllerConfig.for_model(
        model, kp=tbl.get("kp", DEFAULT_KP), kv=tbl.get("kv", DEFAULT_KV),
        Lambda=tbl.get("lambda", DEFAULT_LAMBDA), gain_scale=scale,
        control_rate=float(tbl.get("control_rate", 500.0)),
        f_min=tbl.get("f_min"), f_max=tbl.get("f_max"))


def scenario_from_dict(doc, base_dir=None):
    _check_keys(doc, {"scenario", "controller", "transmission", "plant", "reference", "event"}, "document")
    sc = doc.get("scenario")
    if not isinstance(sc, dict):
        raise ValidationError("scenario", "[scenario] table present")
    _check_keys(sc, {"name", "model", "mode", "duration", "dt", "integrator", "sample_rate", "q0", "qdot0"},
                "scenario")
    model_ref = sc.get("model", "saqiel_ref")
    path = Path(model_ref)
    if base_dir is not None and not path.is_absolute() and (Path(base_dir) / path).exists():
        path = Path(base_dir) / path
    model = load_model_file(path)

    mode = sc.get("mode", "ideal_tension")
    if mode not in MODES:
        raise ValidationError("scenario.mode", "mode is ideal_tension or elastic", repr(mode))
    integrator = sc.get("integrator", "semi_implicit_euler")
    if integrator not in INTEGRATORS:
        raise ValidationError("scenario.integrator", "integrator is semi_implicit_euler or rk4", repr(integrator))
    dt = _positive(sc, "dt", DEFAULT_DT[mode], "scenario")
    duration = _positive(sc, "duration", 1.0, "scenario")
    if duration < dt:
        raise ValidationError("scenario.duration", "duration >= dt")

    ctl_tbl = doc.get("controller", {})
    config = _controller(model, ctl_tbl)
    ratio = 1.0 / (config.control_rate * dt)
    if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
        raise ValidationError("scenario.dt", "control period is an integer multiple of dt")
    sample_rate = _positive(sc, "sample_rate", config.control_rate, "scenario")
    every = config.control_rate / sample_rate
    if abs(every - round(every)) > 1e-9 or round(every) < 1:
        raise ValidationError("scenario.sample_rate", "control_rate is an integer multiple of sample_rate")

    tr = doc.get("transmission", {})
    _check_keys(tr, {"ea_scale", "motor_lag"}, "transmission")
    pl = doc.get("plant", {})
    _check_keys(pl, {"joint_stops", "stop_stiffness", "stop_damping", "rotor_inertia"}, "plant")
    plant = PlantOptions(
        joint_stops=bool(pl.get("joint_stops", True)),
        stop_stiffness=_positive(pl, "stop_stiffness", 200.0, "plant"),
        stop_damping=float(pl.get("stop_damping", 2.0)),
        rotor_inertia=bool(pl.get("rotor_inertia", True)),
        ea_scale=_positive(tr, "ea_scale", 1.0, "transmission"),
        motor_lag=_positive(tr, "motor_lag", 0.002, "transmission"),
    )
    reference = build_reference(model, doc.get("reference", {"type": "hold"}))
    events = doc.get("event", [])
    if not isinstance(events, list):
        raise ValidationError("event", "array of tables [[event]]")
    events = sorted((_event(model, e, i, duration) for i, e in enumerate(events)), key=lambda e: e.time)
    n = model.n_dof
    return ScenarioSpec(
        name=str(sc.get("name", "scenario")),
        model=model,
        controller=config,
        mode=mode,
        duration=duration,
        dt=dt,
        integrator=integrator,
        reference=reference,
        events=events,
        q0=_angles(sc["q0"], "scenario.q0", n) if "q0" in sc else None,
        qdot0=_angles(sc["qdot0"], "scenario.qdot0", n) if "qdot0" in sc else None,
        sample_rate=sample_rate,
        control_enabled=bool(ctl_tbl.get("enabled", True)),
        plant=plant,
    )


def parse_override(item):
    """``a.b.c=value`` -> (["a", "b", "c"], value); the value is read as a TOML literal."""
    if "=" not in item:
        raise ValidationError("override", "key=value", repr(item))
    key, raw = item.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ValidationError("override", "non-empty key", repr(item))
    try:
        value = parse_toml(f"v = {raw.strip()}", "override")["v"]
    except Exception:
        value = raw.strip()
    return path, value


def apply_overrides(doc, overrides):
    for item in overrides or ():
        path, value = parse_override(item) if isinstance(item, str) else item
        tbl = doc
        for key in path[:-1]:
            nxt = tbl.setdefault(key, {})
            if not isinstance(nxt, dict):
                raise ValidationError("override", f"{'.'.join(path)} addresses a table", repr(item))
            tbl = nxt
        tbl[path[-1]] = value
    return doc


def load_scenario(text, base_dir=None, overrides=None):
    doc = apply_overrides(parse_toml(text, "scenario file"), overrides)
    return scenario_from_dict(doc, base_dir)


def bundled_scenario_path(name):
    stem = Path(name).name
    if stem.endswith(".scn"):
        stem = stem[: -len(".scn")]
    candidate = resources.files("tendonkit") / "data" / "scenarios" / f"{stem}.scn"
    return Path(str(candidate)) if candidate.is_file() else None


def load_scenario_file(path, overrides=None):
    """Load a scenario file; a bare name like ``circle_track`` falls back to the bundled set."""
    path = Path(path)
    if not path.exists():
        bundled = bundled_scenario_path(str(path))
        if bundled is None:
            raise FileNotFoundError(str(path))
        path = bundled
    return load_scenario(path.read_text(), base_dir=path.parent, overrides=overrides)
