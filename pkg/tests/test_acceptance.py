"""Acceptance checks, one test per criterion.

Each test prints a ``criterion N: PASS|FAIL ...`` line (collected again in
the terminal summary) before asserting.  The heavier scenario runs are
shared through module fixtures.
"""

import math
import time

import numpy as np
import pytest

from tendonkit.controller import Controller, ControllerConfig, MeasuredState, Reference, control_step
from tendonkit.dynamics import (effective_mass, effective_mass_field, forward_dynamics, gravity_vector,
                                max_contact_force, xz_posture_grid)
from tendonkit.kinematics import link_point, muscle_jacobian, muscle_jacobian_fd
from tendonkit.model import SafetyParams, attach_point_mass, bundled_model
from tendonkit.scenario import load_scenario_file
from tendonkit.sim import run_scenario
from tendonkit.tension import TensionProblem, kkt_residual, objective, solve_tension
from tendonkit.trace import contact_metrics, summarize

from conftest import planar_two_link, random_chain, random_q

RESULTS = []


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module")
def saqiel():
    return bundled_model("saqiel_ref")


# ---------------------------------------------------------------------------
# 1. muscle Jacobian against central differences

def test_criterion_1_jacobian_oracle(saqiel):
    start = time.perf_counter()
    rng = np.random.default_rng(20240601)
    cases = [(saqiel, random_q(saqiel, rng, 0.01)) for _ in range(100)]
    for seed in (1, 2, 3):
        m = random_chain(seed, 3 + seed)
        cases += [(m, random_q(m, rng, 0.01)) for _ in range(20)]
    worst = 0.0
    for model, q in cases:
        G = muscle_jacobian(model, q)
        Gfd = muscle_jacobian_fd(model, q, eps=1e-6)
        worst = max(worst, float(np.max(np.abs(G - Gfd)) / np.max(np.abs(G))))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-6 and elapsed < 5.0
    report(1, ok, f"max rel err {worst:.2e} (< 1e-6), {len(cases)} configs in {elapsed:.2f} s (< 5 s)")
    assert worst < 1e-6
    assert elapsed < 5.0


# ---------------------------------------------------------------------------
# 2. tension QP

def _grid_best(problem, step=0.1):
    axes = [np.arange(lo, hi + step / 2, step) for lo, hi in zip(problem.f_min, problem.f_max)]
    F = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(axes))
    r = problem.tau_ref + F @ problem.G
    obj = np.einsum("ij,ij->i", F, F) + np.einsum("ij,jk,ik->i", r, problem.Lambda, r)
    return float(obj.min())


def test_criterion_2_qp_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst_kkt, worst_box, not_optimal = 0.0, 0.0, 0
    for _ in range(1000):
        R, N = int(rng.integers(1, 11)), int(rng.integers(1, 8))
        A = rng.normal(size=(N, N))
        lo = rng.uniform(0.0, 10.0, R)
        problem = TensionProblem(rng.normal(scale=0.05, size=(R, N)), rng.normal(scale=5.0, size=N),
                                 A @ A.T * 10 ** rng.uniform(0, 7), lo, lo + rng.uniform(1.0, 480.0, R))
        sol = solve_tension(problem)
        worst_kkt = max(worst_kkt, kkt_residual(problem, sol.f_ref, scaled=True))
        worst_box = max(worst_box, float(np.max(problem.f_min - sol.f_ref)), float(np.max(sol.f_ref - problem.f_max)))
        not_optimal += sol.status != "optimal"

    # exhaustive 0.1 N grid for R <= 3
    worst_gap = -np.inf
    for _ in range(60):
        R, N = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        lo = rng.uniform(0.0, 2.0, R)
        width = {1: 200.0, 2: 30.0, 3: 8.0}[R]
        problem = TensionProblem(rng.normal(scale=0.3, size=(R, N)), rng.normal(scale=2.0, size=N),
                                 rng.uniform(0.1, 10.0), lo, lo + width)
        best = _grid_best(problem)
        worst_gap = max(worst_gap, (objective(problem, solve_tension(problem).f_ref) - best) / max(1.0, best))

    # slack and full row rank: near-exact torque at Lambda = 1e8 I
    worst_slack = 0.0
    for _ in range(200):
        R = int(rng.integers(1, 5))
        N = R + int(rng.integers(0, 3))
        U = np.linalg.qr(rng.normal(size=(R, R)))[0]
        V = np.linalg.qr(rng.normal(size=(N, N)))[0][:, :R]
        G = U @ np.diag(rng.uniform(0.5, 3.0, R)) @ V.T
        tau = -G.T @ rng.uniform(50.0, 400.0, R)
        sol = solve_tension(TensionProblem(G, tau, 1e8 * np.eye(N), 5.0, 490.0))
        worst_slack = max(worst_slack, float(np.linalg.norm(sol.torque_residual) / np.linalg.norm(tau)))
    elapsed = time.perf_counter() - start

    parts = {
        "a": worst_kkt <= 1e-8 and not_optimal == 0,
        "b": worst_gap <= 1e-9,
        "c": worst_box <= 1e-9,
        "d": worst_slack <= 1e-6,
        "time": elapsed < 30.0,
    }
    report(2, all(parts.values()),
           f"(a) kkt {worst_kkt:.1e} ({not_optimal} non-optimal) (b) grid gap {worst_gap:.1e} "
           f"(c) box {max(worst_box, 0.0):.1e} (d) slack {worst_slack:.1e}; {elapsed:.1f} s")
    assert all(parts.values()), parts


# ---------------------------------------------------------------------------
# 3. controller rate

def test_criterion_3_controller_rate(saqiel):
    ctl = Controller(saqiel, ControllerConfig.for_model(saqiel))
    rng = np.random.default_rng(3)
    q0 = np.zeros(7)
    q0[3] = -0.8
    states = []
    for k in range(1000):
        t = k * 0.002
        q = q0 + 0.3 * np.sin(2 * np.pi * t + np.arange(7))
        states.append((MeasuredState(q, rng.normal(scale=0.01, size=10)),
                       Reference(q + 0.01, np.zeros(7), qd_ref=0.1 * np.ones(7))))
    ctl.step(*states[0])
    start = time.perf_counter()
    for state, ref in states:
        ctl.step(state, ref)
    mean_ms = (time.perf_counter() - start) / len(states) * 1e3
    report(3, mean_ms < 2.0, f"mean control_step {mean_ms:.3f} ms (< 2 ms)")
    assert mean_ms < 2.0


# ---------------------------------------------------------------------------
# 4. effective mass

def _impulse_mass(model, q, link, point, u):
    qdd = forward_dynamics(model, q, np.zeros(model.n_dof), np.zeros(model.n_dof), [(link, point, u)])
    h = 1e-6
    acc = (link_point(model, q + h * qdd, link, point) - link_point(model, q - h * qdd, link, point)) / (2 * h)
    return 1.0 / (u @ acc)


def test_criterion_4_effective_mass(saqiel):
    field = effective_mass_field(saqiel, xz_posture_grid(saqiel))
    in_band = 0.70 <= field.max <= 1.20

    rng = np.random.default_rng(4)
    worst_sym = 0.0
    for _ in range(50):
        q = random_q(saqiel, rng)
        th = rng.uniform(0, 2 * np.pi)
        u = np.array([math.cos(th), 0.0, math.sin(th)])
        a = effective_mass(saqiel, q, "hand", (0.0, 0.0, -0.2), u)
        b = effective_mass(saqiel, q, "hand", (0.0, 0.0, -0.2), -u)
        worst_sym = max(worst_sym, abs(a - b) / a)

    two = planar_two_link(m1=0.8, m2=1.2, l1=0.9, l2=0.7)
    worst_imp = 0.0
    for _ in range(50):
        q = np.array([rng.uniform(-2.5, 2.5), rng.uniform(0.3, 2.5)])
        th = rng.uniform(0, 2 * np.pi)
        u = np.array([math.cos(th), 0.0, math.sin(th)])
        a = effective_mass(two, q, "l2", (0.7, 0.0, 0.0), u)
        worst_imp = max(worst_imp, abs(a - _impulse_mass(two, q, "l2", (0.7, 0.0, 0.0), u)) / a)

    ok = in_band and worst_sym <= 1e-9 and worst_imp < 1e-6
    report(4, ok, f"field max {field.max:.3f} kg over {len(field.rows)} postures (band [0.70, 1.20]); "
                  f"symmetry {worst_sym:.1e}; impulse oracle {worst_imp:.1e}")
    assert worst_sym <= 1e-9
    assert worst_imp < 1e-6
    assert in_band, f"effective-mass field max {field.max:.3f} kg outside [0.70, 1.20]"


# ---------------------------------------------------------------------------
# 5. contact-force formula

def test_criterion_5_contact_force():
    rng = np.random.default_rng(5)
    monotone = True
    for _ in range(2000):
        base = rng.uniform(0.05, 50.0, 4)
        k = int(rng.integers(0, 4))
        up = base.copy()
        up[k] *= 1.0 + rng.uniform(1e-3, 2.0)
        f = lambda v: max_contact_force(SafetyParams(v[1], v[2], v[3]), v[0])  # noqa: E731
        monotone &= f(up) > f(base)
    s = SafetyParams(3.6, 2.5e4, 1.2)
    limit_err = abs(max_contact_force(s, math.inf) - math.sqrt(s.M_H * s.K_H) * s.v_rel)
    big_err = abs(max_contact_force(s, 1e12) - math.sqrt(s.M_H * s.K_H) * s.v_rel)
    sym = max_contact_force(SafetyParams(1.0, 1.0, 1.0), 1.0)
    ok = monotone and limit_err < 1e-9 and abs(sym - 0.70711) <= 1e-5
    report(5, ok, f"monotone {monotone}; limit err {limit_err:.1e} (m_u=1e12: {big_err:.1e}); "
                  f"symmetric {sym:.6f}")
    assert monotone
    assert limit_err < 1e-9
    assert sym == pytest.approx(0.70711, abs=1e-5)


# ---------------------------------------------------------------------------
# 6. payload hold

def test_criterion_6_payload(saqiel):
    spec = load_scenario_file("payload_hold")
    trace = run_scenario(spec)
    names = [r.name for r in saqiel.routes]
    f_ref = np.column_stack([trace.column(f"f_ref_{n}") for n in names])
    f_cmd = np.column_stack([trace.column(f"f_cmd_{n}") for n in names])
    f_min = saqiel.f_min
    ref_ok = bool(np.all(f_ref >= f_min - 1e-9) and np.all(f_ref <= 490.0 + 1e-9))
    cmd_ok = bool(np.all(f_cmd >= 0.0) and np.all(f_cmd <= 490.0 + 1e-9))

    loaded = attach_point_mass(saqiel, "hand", 3.74, (0.0, 0.0, -0.2))
    cfg = ControllerConfig.for_model(loaded)
    worst = 0.0
    elbow = saqiel.joint_id("elbow")
    for angle in np.linspace(-44.0, 20.0, 20):
        q = np.zeros(7)
        q[elbow] = math.radians(angle)
        out = control_step(loaded, MeasuredState(q, np.zeros(10)), Reference(q, np.zeros(7)), cfg)
        G = muscle_jacobian(loaded, q)
        worst = max(worst, float(np.max(np.abs(-G.T @ out.f_final - gravity_vector(loaded, q)))))
        ref_ok &= bool(np.all(out.f_ref >= f_min - 1e-9) and np.all(out.f_ref <= 490.0))

    ok = ref_ok and cmd_ok and worst < 0.01
    report(6, ok, f"f_ref in [{f_ref.min():.3f}, {f_ref.max():.1f}] N; f_cmd in [{f_cmd.min():.3f}, "
                  f"{f_cmd.max():.1f}] N; static residual {worst:.4f} N m at 20 postures")
    assert ref_ok and cmd_ok
    assert worst < 0.01


# ---------------------------------------------------------------------------
# 7. circle tracking

def test_criterion_7_circle_tracking():
    rms, max_err = {}, {}
    for kp in (100.0, 200.0, 400.0):
        m = summarize(run_scenario(load_scenario_file("circle_track", overrides=[f"controller.kp={kp}"])))
        rms[kp], max_err[kp] = m["rms_error"], m["max_error"]
    default = summarize(run_scenario(load_scenario_file("circle_track")))
    monotone = rms[100.0] > rms[200.0] > rms[400.0]
    ok = default["max_error"] < 0.025 and monotone
    report(7, ok, f"default max err {default['max_error'] * 1e3:.2f} mm (< 25 mm); rms over K_p 100/200/400: "
                  + "/".join(f"{rms[k] * 1e3:.2f}" for k in (100.0, 200.0, 400.0)) + " mm")
    assert default["max_error"] < 0.025
    assert monotone


# ---------------------------------------------------------------------------
# 8. collisions

@pytest.fixture(scope="module")
def passive_trace():
    return run_scenario(load_scenario_file("passive_impact"))


@pytest.fixture(scope="module")
def active_trace():
    return run_scenario(load_scenario_file("active_impact"))


def test_criterion_8_collisions(passive_trace, active_trace):
    m = summarize(passive_trace)
    hit = next(ev for ev in passive_trace.events if ev["kind"] == "impulse")
    joints = [j.name for j in bundled_model("saqiel_ref").joints]
    parts = []
    ok = True
    for name in ("elbow", "wrist_pitch"):
        kick = hit["dqdot"][joints.index(name)]
        same_way = np.sign(m[f"deflection_{name}"]) == np.sign(kick) and kick != 0
        fast = m[f"time_to_peak_{name}"] < 0.3
        ok &= bool(same_way and fast)
        parts.append(f"{name} {math.degrees(m[f'deflection_{name}']):+.1f} deg at {m[f'time_to_peak_{name}']:.3f} s")
    cm = contact_metrics(active_trace)
    onset = cm["tangential_onset_time"] if cm else math.inf
    ok &= onset < 0.1
    report(8, ok, "; ".join(parts) + f"; tangential onset {onset:.3f} s after contact (< 0.1 s)")
    assert ok


# ---------------------------------------------------------------------------
# 9. simulation integrity

def _ee(trace):
    return np.column_stack([trace.column(c) for c in ("ee_x", "ee_y", "ee_z")])


def test_criterion_9_integrity(passive_trace, active_trace):
    chain = run_scenario(load_scenario_file("chain3_swing"))
    drift = summarize(chain)["energy_drift"]

    same = all(run_scenario(load_scenario_file(name)).to_csv() == tr.to_csv()
               for name, tr in (("chain3_swing", chain), ("passive_impact", passive_trace),
                                ("active_impact", active_trace)))

    short = ["scenario.duration=0.6", "scenario.dt=1e-4"]
    ideal = _ee(run_scenario(load_scenario_file("circle_track", overrides=short)))
    diffs = []
    for scale in (1.0, 10.0, 100.0):
        el = run_scenario(load_scenario_file("circle_track", overrides=short + [
            'scenario.mode="elastic"', f"transmission.ea_scale={scale}"]))
        diffs.append(float(np.sqrt(np.mean(np.sum((_ee(el) - ideal) ** 2, axis=1)))))
    converges = diffs[0] > diffs[1] > diffs[2]

    ok = drift < 1e-3 and same and converges
    report(9, ok, f"energy drift {drift:.1e} (< 1e-3); byte-identical reruns {same}; elastic-ideal rms "
                  + "/".join(f"{d * 1e3:.2f}" for d in diffs) + " mm for EA x1/x10/x100")
    assert drift < 1e-3
    assert same
    assert converges
