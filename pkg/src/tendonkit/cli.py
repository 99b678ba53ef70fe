"""Command-line entry point: ``tendonkit <subcommand> ...``.

Exit status: 0 success, 1 invalid input (parse/validation/schema), 2
runtime or numerical failure, 64 usage error. Diagnostics go to stderr as
one line ``ERROR <code>: <message>``; data goes to stdout or ``-o``.
"""

import argparse
import io
import json
import sys

import numpy as np

from . import __version__
from .dynamics import effective_mass_field, gravity_vector, xz_posture_grid
from .errors import SchemaError, TendonkitError, ValidationError
from .kinematics import as_config, muscle_jacobian
from .model import attach_point_mass, load_model_file, moving_part_mass, parse_angle, parse_toml
from .scenario import _check_keys, load_scenario_file
from .sim import run_scenario
from .tension import DEFAULT_LAMBDA, TensionProblem, solve_tension
from .trace import NUMBER_FORMAT, Trace, format_summary, summarize

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _vector(text, n, what, angles=False):
    parts = [p for p in text.split(",") if p.strip()]
    try:
        values = [parse_angle(p.strip(), what) if angles else float(p) for p in parts]
    except (TendonkitError, ValueError):
        raise UsageError(f"--{what}: expected {n} comma-separated numbers") from None
    if len(values) != n:
        raise UsageError(f"--{what}: expected {n} values, got {len(values)}")
    return np.array(values)


def _fmt(v):
    return NUMBER_FORMAT % v


def _csv(header, rows):
    buf = io.StringIO()
    if header:
        buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(x if isinstance(x, str) else _fmt(x) for x in row) + "\n")
    return buf.getvalue()


def _emit(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# subcommands

def cmd_validate(args):
    model = load_model_file(args.model)
    print(f"OK: {model.n_dof} DoF, {model.n_routes} routes, moving mass {moving_part_mass(model):.3f} kg")
    return EXIT_OK


def cmd_jacobian(args):
    model = load_model_file(args.model)
    q = _vector(args.q, model.n_dof, "q", angles=True) if args.q else np.zeros(model.n_dof)
    G = muscle_jacobian(model, q)
    routes = [r.name for r in model.routes]
    joints = [j.name for j in model.joints]
    if args.format == "json":
        text = json.dumps({"routes": routes, "joints": joints, "q": q.tolist(), "G": G.tolist()}) + "\n"
    else:
        text = _csv(["route"] + joints, ([r] + list(g) for r, g in zip(routes, G))) if args.labels else _csv(None, G)
    _emit(text, args.output)
    return EXIT_OK


def _problem_file(path):
    """Tension problem document: G (R rows), tau_ref, optional Lambda, f_min, f_max, routes."""
    with open(path) as fh:
        doc = parse_toml(fh.read(), "tension problem")
    _check_keys(doc, {"G", "tau_ref", "Lambda", "f_min", "f_max", "routes"}, "problem")
    if "G" not in doc or "tau_ref" not in doc:
        raise ValidationError("problem", "G and tau_ref are given")
    try:
        problem = TensionProblem(np.array(doc["G"], dtype=float), np.array(doc["tau_ref"], dtype=float),
                                 np.array(doc.get("Lambda", DEFAULT_LAMBDA), dtype=float),
                                 np.array(doc.get("f_min", 5.0), dtype=float),
                                 np.array(doc.get("f_max", 490.0), dtype=float))
    except (TypeError, ValueError) as exc:
        raise ValidationError("problem", "numeric arrays of consistent shape", str(exc)) from None
    routes = doc.get("routes", [f"w{i + 1}" for i in range(problem.n_wires)])
    if len(routes) != problem.n_wires:
        raise ValidationError("problem.routes", "one name per row of G")
    return problem, [str(r) for r in routes]


def cmd_tension(args):
    if (args.model is None) == (args.problem is None):
        raise UsageError("give either a model file or --problem")
    if args.problem:
        problem, routes = _problem_file(args.problem)
    else:
        model = load_model_file(args.model)
        q = _vector(args.q, model.n_dof, "q", angles=True) if args.q else np.zeros(model.n_dof)
        as_config(model, q)
        if args.payload:
            ee = model.end_effector_or_default()
            model = attach_point_mass(model, ee.link, args.payload, ee.point)
        tau = _vector(args.tau, model.n_dof, "tau") if args.tau else gravity_vector(model, q)
        problem = TensionProblem(muscle_jacobian(model, q), tau, args.Lambda, model.f_min, model.f_max)
        routes = [r.name for r in model.routes]
    tau = problem.tau_ref
    sol = solve_tension(problem)
    if args.format == "json":
        text = json.dumps({
            "routes": routes,
            "f_ref": sol.f_ref.tolist(),
            "tau_ref": tau.tolist(),
            "torque_residual": sol.torque_residual.tolist(),
            "kkt_residual": sol.kkt_residual,
            "iterations": sol.iterations,
            "status": sol.status,
        }) + "\n"
    else:
        text = _csv(["route", "f_ref"], ([r, f] for r, f in zip(routes, sol.f_ref)))
    _emit(text, args.output)
    print(f"residual {_fmt(float(np.linalg.norm(sol.torque_residual)))} N m, kkt {_fmt(sol.kkt_residual)}, "
          f"{sol.iterations} iterations ({sol.status})", file=sys.stderr)
    return EXIT_OK


def cmd_effmass(args):
    model = load_model_file(args.model)
    if args.q:
        grid = [_vector(args.q, model.n_dof, "q", angles=True)]
    else:
        try:
            counts = tuple(int(c) for c in args.grid.split(","))
        except ValueError:
            counts = ()
        if len(counts) != 3 or min(counts) < 1:
            raise UsageError("--grid: expected three positive counts")
        grid = xz_posture_grid(model, counts)
    for q in grid:
        as_config(model, q)
    point = _vector(args.point, 3, "point") if args.point else None
    fld = effective_mass_field(model, grid, plane=args.plane, resolution=args.resolution, link=args.link,
                               point=point, include_rotor=args.include_rotor, workers=args.threads)
    a, b = args.plane[0], args.plane[1]
    if args.format == "json":
        text = json.dumps({
            "plane": args.plane,
            "columns": [a, b, "m_u_max"],
            "rows": fld.rows.tolist(),
            "posture_index": fld.posture_index,
            "skipped": fld.skipped,
            "constrained": fld.constrained,
            "max": fld.max,
        }) + "\n"
    else:
        text = _csv([a, b, "m_u_max"], fld.rows)
    _emit(text, args.output)
    print(f"max effective mass {_fmt(fld.max)} kg over {len(fld.rows)} postures "
          f"({len(fld.skipped)} skipped, {len(fld.constrained)} constrained)", file=sys.stderr)
    return EXIT_OK


def cmd_run(args):
    spec = load_scenario_file(args.scenario, overrides=args.overrides)
    try:
        trace = run_scenario(spec)
    except TendonkitError as exc:
        partial = getattr(exc, "trace", None)
        if partial is not None and args.output not in (None, "-") and len(partial):
            _emit(partial.to_json() + "\n" if args.format == "json" else partial.to_csv(), args.output)
        raise
    _emit(trace.to_json() + "\n" if args.format == "json" else trace.to_csv(), args.output)
    if args.summary:
        _emit(format_summary(summarize(trace), "json"), args.summary)
    return EXIT_OK


def cmd_summarize(args):
    try:
        trace = Trace.from_csv(args.trace)
    except UnicodeDecodeError:
        raise SchemaError("trace is not a text file") from None
    _emit(format_summary(summarize(trace), args.format), args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="tendonkit", description="Coupled tendon-driven manipulator toolkit.")
    p.add_argument("--version", action="version", version=f"tendonkit {__version__}")
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("-o", "--output", help="output file (default: standard output)")
        return sp

    v = sub.add_parser("validate", help="check a model file and print its headline figures")
    v.add_argument("model")
    v.set_defaults(func=cmd_validate)

    j = add("jacobian", "print the muscle Jacobian G = dl/dq at a configuration")
    j.add_argument("model")
    j.add_argument("--q", help="joint angles, comma separated (rad, or '<x> deg')")
    j.add_argument("--format", choices=("csv", "json"), default="csv")
    j.add_argument("--labels", action="store_true", help="add a header row and a route-name column")
    j.set_defaults(func=cmd_jacobian)

    t = add("tension", "solve the tension distribution for a joint torque")
    t.add_argument("model", nargs="?", help="model file; G is evaluated at --q")
    t.add_argument("--problem", help="tension problem file (G, tau_ref, Lambda, f_min, f_max) instead of a model")
    t.add_argument("--q", help="joint angles (default: zero)")
    t.add_argument("--tau", help="target joint torque, N m (default: gravity hold at --q)")
    t.add_argument("--payload", type=float, default=0.0, help="point mass at the end effector, kg")
    t.add_argument("--lambda", dest="Lambda", type=float, default=DEFAULT_LAMBDA, help="torque weight")
    t.add_argument("--format", choices=("csv", "json"), default="csv")
    t.set_defaults(func=cmd_tension)

    e = add("effmass", "effective-mass field over a posture grid (or one posture)")
    e.add_argument("model")
    e.add_argument("--q", help="single posture instead of the grid")
    e.add_argument("--grid", default="12,13,7", help="samples of shoulder pitch, elbow, wrist pitch")
    e.add_argument("--plane", choices=("xz", "xy", "yz"), default="xz")
    e.add_argument("--resolution", type=int, default=360, help="directions sampled per posture")
    e.add_argument("--link", help="link carrying the contact point (default: end effector)")
    e.add_argument("--point", help="contact point in link frame, x,y,z")
    e.add_argument("--include-rotor", action="store_true", help="add reflected motor rotor inertia")
    e.add_argument("--threads", type=int, default=None, help="worker threads (default: TENDONKIT_THREADS or 1)")
    e.add_argument("--format", choices=("csv", "json"), default="csv")
    e.set_defaults(func=cmd_effmass)

    r = add("run", "run a scenario and write its trace")
    r.add_argument("scenario", help="scenario file, or the name of a bundled scenario")
    r.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a scenario value, e.g. controller.kp=200 (repeatable)")
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.add_argument("--summary", help="also write the run summary (JSON) to this file")
    r.set_defaults(func=cmd_run)

    s = add("summarize", "summary metrics of a trace CSV")
    s.add_argument("trace")
    s.add_argument("--format", choices=("text", "json"), default="text")
    s.set_defaults(func=cmd_summarize)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand")
        if getattr(args, "Lambda", 1.0) < 0 or getattr(args, "resolution", 1) < 1:
            raise UsageError("--lambda must be >= 0 and --resolution >= 1")
        return args.func(args)
    except UsageError as exc:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        print(f"ERROR usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TendonkitError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"ERROR not_found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, ValueError) as exc:
        print(f"ERROR {type(exc).__name__.lower()}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
