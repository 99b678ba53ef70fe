import math

import numpy as np
import pytest

from tendonkit.model import (Anchor, CircularWrap, EndEffector, JointSpec, LinearSpan, LinkSpec, RobotModel,
                             WireRoute, bundled_model, rod_inertia)


@pytest.fixture(scope="session")
def saqiel():
    return bundled_model("saqiel_ref")


@pytest.fixture(scope="session")
def pendulum():
    return bundled_model("pendulum")


def point_pendulum(mass=1.0, length=1.0, gravity=(0.0, 0.0, -9.81), axis=(0.0, 1.0, 0.0)):
    """Point bob on a massless rod hanging along -z; q = 0 is the stable equilibrium."""
    links = [LinkSpec("base"), LinkSpec("rod", mass, (0.0, 0.0, -length))]
    joints = [JointSpec("pivot", "base", "rod", axis=axis, lower=-3.0, upper=3.0)]
    routes = [
        WireRoute("flexor", [CircularWrap("pivot", 0.02, -1, 0.3)], f_min=1.0),
        WireRoute("extensor", [CircularWrap("pivot", 0.02, 1, 0.3)], f_min=1.0),
    ]
    return RobotModel("pendulum", links, joints, routes, gravity=gravity,
                      end_effector=EndEffector("rod", (0.0, 0.0, -length)))


def planar_two_link(m1=1.0, m2=1.0, l1=1.0, l2=1.0, gravity=(0.0, 0.0, 0.0), along=(1.0, 0.0, 0.0)):
    """Two point masses at the link ends, joints about +y, links along ``along``."""
    d = np.asarray(along, dtype=float)
    links = [LinkSpec("base"), LinkSpec("l1", m1, tuple(l1 * d)), LinkSpec("l2", m2, tuple(l2 * d))]
    joints = [
        JointSpec("j1", "base", "l1", axis=(0.0, 1.0, 0.0), lower=-3.0, upper=3.0),
        JointSpec("j2", "l1", "l2", axis=(0.0, 1.0, 0.0), origin=tuple(l1 * d), lower=-3.0, upper=3.0),
    ]
    return RobotModel("two_link", links, joints, (), gravity=gravity,
                      end_effector=EndEffector("l2", tuple(l2 * d)))


def random_chain(seed, n=3, spans=True):
    """Spatial chain with random axes, offsets and rod inertias, plus mixed wire routes."""
    rng = np.random.default_rng(seed)
    links = [LinkSpec("base")]
    joints = []
    for i in range(n):
        length = rng.uniform(0.15, 0.4)
        mass = rng.uniform(0.2, 1.0)
        links.append(LinkSpec(f"l{i}", mass, (0.0, 0.0, -length / 2), rod_inertia(mass, length, 0.02)))
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        origin = (0.0, 0.0, 0.0) if i == 0 else (0.0, 0.0, -prev_len)
        rpy = tuple(rng.uniform(-0.5, 0.5, 3))
        joints.append(JointSpec(f"j{i}", links[i].name, f"l{i}", axis=tuple(axis), origin=origin, rpy=rpy,
                                lower=-2.0, upper=2.0))
        prev_len = length
    routes = []
    for i in range(n):
        routes.append(WireRoute(f"c{i}", [CircularWrap(f"j{i}", rng.uniform(0.01, 0.04), 1 - 2 * (i % 2),
                                                        0.2)]))
    if spans:
        for i in range(n):
            start = "base" if i == 0 else f"l{i - 1}"
            for k in range(2):
                a = tuple(rng.uniform(-0.08, 0.08, 3))
                b = tuple(rng.uniform(-0.08, 0.08, 2)) + (rng.uniform(-0.2, -0.05),)
                routes.append(WireRoute(f"s{i}{k}", [
                    LinearSpan(Anchor(start, a), Anchor(f"l{min(i + k, n - 1)}", b)),
                ]))
        # a mixed route: span over j0 then a wrap on the last joint
        routes.append(WireRoute("mixed", [
            LinearSpan(Anchor("base", (0.05, 0.02, 0.03)), Anchor("l0", (0.04, -0.03, -0.1))),
            CircularWrap(f"j{n - 1}", 0.015, -1, 0.1),
        ]))
    return RobotModel(f"chain{seed}", links, joints, routes, end_effector=EndEffector(f"l{n - 1}", (0.0, 0.0, -0.2)))


def random_q(model, rng, margin=0.05):
    lo = model.lower_limits + margin
    hi = model.upper_limits - margin
    return rng.uniform(lo, hi)


def deg(x):
    return math.radians(x)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance")
        for line in sorted(lines):
            terminalreporter.write_line(line)
