"""CSV and text output of finished runs.

Files written to the output directory:

``runs.csv``
    one row per run and time step ``n = 0..steps``: ``run, n, x1..xN,
    u1..uM, w1..wN, sigma_active, tau_active, v_norm, deviation``. Inputs and
    disturbances are blank in the final row, ``v_norm`` is blank before the
    first switching time and the switching columns are blank before it too.
``sweep.csv``
    ``tau_max, tau_inf, delta_sigma_inf, max_deviation, v_bound, v_observed,
    status``, one row per sweep entry.
``bounds.csv``
    ``seed, tau_max, tau_inf, delta_sigma_inf, w_sup, v_bound, v_observed,
    satisfied``, one row per run that completed.
``summary.txt``
    human-readable overview; the only file containing wall-clock times.

Floats are written with ``repr`` so equal runs give byte-identical files.
"""
from __future__ import annotations

import csv
from pathlib import Path

from ..errors import ConfigurationError

SWEEP_COLUMNS = ["tau_max", "tau_inf", "delta_sigma_inf", "max_deviation",
                 "v_bound", "v_observed", "status"]
BOUND_COLUMNS = ["seed", "tau_max", "tau_inf", "delta_sigma_inf", "w_sup",
                 "v_bound", "v_observed", "satisfied"]


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_columns(nx, nu):
    return (["run", "n"] + [f"x{i + 1}" for i in range(nx)] + [f"u{i + 1}" for i in range(nu)]
            + [f"w{i + 1}" for i in range(nx)]
            + ["sigma_active", "tau_active", "v_norm", "deviation"])


def run_rows(record, run_index=0):
    traj = record.trajectory
    steps = traj.end_time
    switch = dict(record.switch_log)
    sigma, tau = None, None
    v = record.v
    for n in range(steps + 1):
        row = [run_index, n] + [float(a) for a in traj.states[n]]
        if n < steps:
            if n in switch:
                sigma, tau = n, switch[n]
            row += [float(a) for a in traj.inputs[n]]
            row += [float(a) for a in record.disturbances[n]]
            row += [sigma, tau]
            vi = None if v is None else n - v.start
            row.append(float(v.norms[vi]) if v is not None and 0 <= vi < len(v.norms) else None)
        else:
            row += [None] * (traj.inputs.shape[1] + traj.states.shape[1] + 3)
        row.append(None if record.deviation is None else float(record.deviation[n]))
        yield row


def _writer(path):
    try:
        fh = open(path, "w", newline="")
    except OSError as exc:
        raise ConfigurationError(f"cannot write {path}: {exc}") from exc
    return fh, csv.writer(fh, lineterminator="\n")


def _write(path, header, rows):
    fh, w = _writer(path)
    with fh:
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(c) for c in r])


def summary_text(records, sweep_rows=None):
    lines = [f"runs: {len(records)}"]
    for i, r in enumerate(records):
        s = r.scenario
        lines.append(f"[{i}] {s.name} seed={s.seed} tau_max={s.tau_max} status={r.status} "
                     f"wall_time={r.wall_time:.3f}s")
        if r.message:
            lines.append(f"    {r.message}")
        if r.consistency is not None:
            lines.append(f"    consistency violations: {len(r.consistency.violations)}")
        if r.bound is not None:
            b = r.bound
            lines.append(f"    tau_inf={b.tau_inf} delta_sigma_inf={b.delta_sigma_inf} "
                         f"|v|_inf={b.v_observed:.6g} bound={b.v_bound:.6g} satisfied={b.satisfied}")
        if r.max_deviation is not None:
            lines.append(f"    max deviation: {r.max_deviation:.6g}")
    ok = all(r.ok for r in records) and all(r.bound.satisfied for r in records if r.bound)
    lines.append(f"overall: {'PASS' if ok and records else 'FAIL' if records else 'EMPTY'}")
    return "\n".join(lines) + "\n"


def emit_report(records, out_dir, sweep_rows=None):
    """Write the report files for ``records`` into ``out_dir``; returns their paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {out}: {exc}") from exc
    records = list(records)

    if records:
        nx = records[0].trajectory.states.shape[1]
        nu = records[0].trajectory.inputs.shape[1]
    else:
        nx, nu = 4, 2
    runs = []
    for i, r in enumerate(records):
        if r.trajectory.states.shape[1] != nx or r.trajectory.inputs.shape[1] != nu:
            raise ConfigurationError("all runs in one report must share state and input dimensions")
        runs.extend(run_rows(r, i))

    paths = {name: out / name for name in ("runs.csv", "sweep.csv", "bounds.csv", "summary.txt")}
    _write(paths["runs.csv"], run_columns(nx, nu), runs)
    sweep_rows = list(sweep_rows or [])
    _write(paths["sweep.csv"], SWEEP_COLUMNS,
           ([getattr(row, c) for c in SWEEP_COLUMNS] for row in sweep_rows))
    bounds = [r.bound.row() for r in records if r.bound is not None]
    _write(paths["bounds.csv"], BOUND_COLUMNS, ([b[c] for c in BOUND_COLUMNS] for b in bounds))
    try:
        paths["summary.txt"].write_text(summary_text(records, sweep_rows))
    except OSError as exc:
        raise ConfigurationError(f"cannot write {paths['summary.txt']}: {exc}") from exc
    return paths
