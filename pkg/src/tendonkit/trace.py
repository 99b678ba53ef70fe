"""Simulation traces: in-memory table, CSV/JSON I/O and summary metrics.

CSV layout (schema version 1)::

    # tendonkit-trace 1
    # scenario <name>
    # sample_rate <Hz>
    # event {"kind": ..., "time": ..., ...}      (one line per applied event)
    t,q_<joint>...,qd_<joint>...,qref_<joint>...,f_cmd_<route>...,f_ref_<route>...,
      f_<route>...,
      ee_x,ee_y,ee_z,ee_vx,ee_vy,ee_vz,ref_x,ref_y,ref_z,
      contact_force,energy,kinetic,tau_res,kkt,qp_iter
    <rows>

Numbers use one fixed format (``%.12g``), so two runs of the same scenario
produce byte-identical files.
"""

import io
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SchemaError

SCHEMA_LINE = "# tendonkit-trace 1"
NUMBER_FORMAT = "%.12g"
TAIL_COLUMNS = ("ee_x", "ee_y", "ee_z", "ee_vx", "ee_vy", "ee_vz", "ref_x", "ref_y", "ref_z",
                "contact_force", "energy", "kinetic", "tau_res", "kkt", "qp_iter")
_COLUMN_RE = re.compile(r"^(t|(q|qd|qref)_\w+|(f_cmd|f_ref|f)_\w+|" + "|".join(TAIL_COLUMNS) + ")$")


def trace_columns(model):
    joints = [j.name for j in model.joints]
    routes = [r.name for r in model.routes]
    return (["t"] + [f"q_{j}" for j in joints] + [f"qd_{j}" for j in joints]
            + [f"qref_{j}" for j in joints] + [f"f_cmd_{r}" for r in routes]
            + [f"f_ref_{r}" for r in routes] + [f"f_{r}" for r in routes] + list(TAIL_COLUMNS))


@dataclass
class Trace:
    columns: list
    rows: list
    scenario: str = ""
    sample_rate: float = 0.0
    events: list = field(default_factory=list)
    data: np.ndarray | None = None

    def finalize(self):
        width = len(self.columns)
        self.data = np.array(self.rows, dtype=float).reshape(-1, width)
        return self

    def __len__(self):
        return 0 if self.data is None else len(self.data)

    def column(self, name):
        try:
            return self.data[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(name) from None

    @property
    def t(self):
        return self.column("t")

    def joint_names(self):
        return [c[2:] for c in self.columns if c.startswith("q_")]

    # -- I/O ----------------------------------------------------------------

    def to_csv(self, target=None):
        """Write the CSV to ``target`` (path or text stream) or return it as a string."""
        buf = io.StringIO()
        buf.write(SCHEMA_LINE + "\n")
        buf.write(f"# scenario {self.scenario}\n")
        buf.write(f"# sample_rate {NUMBER_FORMAT % self.sample_rate}\n")
        for ev in self.events:
            buf.write("# event " + json.dumps(ev, sort_keys=True) + "\n")
        buf.write(",".join(self.columns) + "\n")
        for row in self.data:
            buf.write(",".join(NUMBER_FORMAT % v for v in row) + "\n")
        text = buf.getvalue()
        if target is None:
            return text
        if hasattr(target, "write"):
            target.write(text)
        else:
            Path(target).write_text(text)
        return text

    def to_json(self):
        return json.dumps({
            "schema": 1,
            "scenario": self.scenario,
            "sample_rate": self.sample_rate,
            "events": self.events,
            "columns": self.columns,
            "rows": [[float(NUMBER_FORMAT % v) for v in row] for row in self.data],
        }, sort_keys=True)

    @classmethod
    def from_csv(cls, source):
        """Read a trace written by :meth:`to_csv`; raises SchemaError on anything else."""
        if hasattr(source, "read"):
            text = source.read()
        else:
            text = Path(source).read_text()
        lines = text.splitlines()
        if not lines or lines[0].strip() != SCHEMA_LINE:
            raise SchemaError(f"first line must be '{SCHEMA_LINE}'")
        scenario, rate, events = "", 0.0, []
        i = 1
        while i < len(lines) and lines[i].startswith("#"):
            body = lines[i][1:].strip()
            key, _, rest = body.partition(" ")
            if key == "scenario":
                scenario = rest
            elif key == "sample_rate":
                rate = float(rest)
            elif key == "event":
                try:
                    events.append(json.loads(rest))
                except json.JSONDecodeError:
                    raise SchemaError(f"line {i + 1}: malformed event record") from None
            i += 1
        if i >= len(lines):
            raise SchemaError("missing header row")
        columns = lines[i].strip().split(",")
        unknown = [c for c in columns if not _COLUMN_RE.match(c)]
        if unknown:
            raise SchemaError(f"unknown column(s): {', '.join(unknown)}")
        missing = [c for c in ("t", "ee_x", "ee_y", "ee_z", "ref_x", "ref_y", "ref_z") if c not in columns]
        if missing:
            raise SchemaError(f"missing column(s): {', '.join(missing)}")
        rows = []
        for k, line in enumerate(lines[i + 1:], start=i + 2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != len(columns):
                raise SchemaError(f"line {k}: expected {len(columns)} fields, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise SchemaError(f"line {k}: non-numeric field") from None
        return cls(columns, rows, scenario, rate, events).finalize()


# ---------------------------------------------------------------------------
# metrics

def _block(trace, prefix, exclude=()):
    idx = [i for i, c in enumerate(trace.columns)
           if c.startswith(prefix) and not c.startswith(tuple(exclude))]
    return trace.data[:, idx], [trace.columns[i][len(prefix):] for i in idx]


def deflection_after(trace, t_event, window=None):
    """Per joint: signed peak of q(t) - q(t_event) after ``t_event`` and its delay, s."""
    t = trace.t
    q, names = _block(trace, "q_")
    start = int(np.searchsorted(t, t_event - 1e-12))
    if start >= len(t):
        return {}
    stop = len(t) if window is None else int(np.searchsorted(t, t_event + window + 1e-12))
    d = q[start:stop] - q[start]
    out = {}
    for j, name in enumerate(names):
        k = int(np.argmax(np.abs(d[:, j])))
        out[name] = (float(d[k, j]), float(t[start + k] - t_event))
    return out


def contact_metrics(trace, normal=(0.0, 0.0, 1.0), tangential_threshold=0.005, arrest_fraction=0.1):
    """First contact time and how quickly the contact point stops and starts sliding.

    ``normal_arrest`` is the delay until the normal speed falls below
    ``arrest_fraction`` of its value at first contact; ``tangential_onset``
    is the delay until the tangential displacement since first contact
    exceeds ``tangential_threshold`` (m).
    """
    f = trace.column("contact_force")
    hit = np.flatnonzero(f > 0)
    if not hit.size:
        return None
    i0 = int(hit[0])
    t = trace.t
    n = np.asarray(normal, dtype=float)
    p = np.column_stack([trace.column("ee_x"), trace.column("ee_y"), trace.column("ee_z")])
    v = np.column_stack([trace.column("ee_vx"), trace.column("ee_vy"), trace.column("ee_vz")])
    vn = v @ n
    speed0 = abs(vn[i0 - 1] if i0 > 0 else vn[i0])
    arrest = math.nan
    for i in range(i0, len(t)):
        if abs(vn[i]) <= arrest_fraction * speed0:
            arrest = float(t[i] - t[i0])
            break
    d = p[i0:] - p[i0]
    d_tan = d - np.outer(d @ n, n)
    moved = np.flatnonzero(np.linalg.norm(d_tan, axis=1) > tangential_threshold)
    onset = float(t[i0 + int(moved[0])] - t[i0]) if moved.size else math.nan
    return {
        "first_contact_time": float(t[i0]),
        "impact_normal_speed": float(speed0),
        "normal_arrest_time": arrest,
        "tangential_onset_time": onset,
        "peak_contact_force": float(f.max()),
    }


def summarize(trace):
    """Headline metrics of a trace as an ordered dict of floats."""
    if not isinstance(trace, Trace):
        trace = Trace.from_csv(trace)
    t = trace.t
    if not len(t):
        raise SchemaError("trace has no rows")
    p = np.column_stack([trace.column(c) for c in ("ee_x", "ee_y", "ee_z")])
    ref = np.column_stack([trace.column(c) for c in ("ref_x", "ref_y", "ref_z")])
    err = np.linalg.norm(p - ref, axis=1)
    out = {
        "samples": float(len(t)),
        "duration": float(t[-1] - t[0]),
        "rms_error": float(np.sqrt(np.mean(err**2))),
        "max_error": float(err.max()),
    }
    f, _ = _block(trace, "f_", exclude=("f_cmd_", "f_ref_"))
    fc, _ = _block(trace, "f_cmd_")
    if f.size:
        out["peak_tension"] = float(f.max())
        out["min_tension"] = float(f.min())
    if fc.size:
        out["peak_command"] = float(fc.max())
        out["min_command"] = float(fc.min())
    if "ee_vx" in trace.columns:
        v = np.column_stack([trace.column(c) for c in ("ee_vx", "ee_vy", "ee_vz")])
        out["peak_ee_speed"] = float(np.linalg.norm(v, axis=1).max())
    if "energy" in trace.columns:
        e = trace.column("energy")
        ke = trace.column("kinetic")
        scale = max(float(ke.max()), abs(float(e[0])), 1e-300)
        out["energy_drift"] = float(np.abs(e - e[0]).max() / scale)
    for ev in trace.events:
        if ev.get("kind") == "impulse":
            for name, (peak, delay) in deflection_after(trace, ev["time"]).items():
                out[f"deflection_{name}"] = peak
                out[f"time_to_peak_{name}"] = delay
            break
    for ev in trace.events:
        if ev.get("kind") == "plane_contact":
            cm = contact_metrics(trace, ev.get("normal", (0.0, 0.0, 1.0)))
            if cm:
                out.update(cm)
            break
    return out


def format_summary(metrics, fmt="text"):
    if fmt == "json":
        return json.dumps(metrics, sort_keys=False, indent=2) + "\n"
    return "".join(f"{k} = {NUMBER_FORMAT % v}\n" for k, v in metrics.items())
