"""Run orchestration and plot-ready text output.

A run writes, per method, ``history.csv``, ``boundary_<k>.txt`` every
``dump_every`` iterations (and at the last one), ``mesh_final.txt`` and
``sigma_trace.txt``.  With ``method = both`` the two runs go to ``ccbm/``
and ``kv/`` subdirectories.
"""

import csv
import enum
import itertools
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import core
from .descent import HISTORY_COLUMNS, IterationRecord, run_descent
from .errors import CCBMError
from .mesh import generate_annular_mesh, hausdorff_distance, write_mesh, write_polyline

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("lambda", "mu", "h", "method", "final_J", "final_dH", "iters", "cpu_ms")


class ExitStatus(enum.IntEnum):
    SUCCESS = 0
    USAGE = 1
    NUMERICAL = 2


@dataclass(frozen=True)
class RunSummary:
    method: str
    iters: int
    stop: str
    final_J: float  # the method's own objective
    final_J_ccbm: float
    final_J_kv: float
    final_dH: float
    mean_radius: float
    cpu_ms: float
    out_dir: str


# ---------------------------------------------------------------------------
# CSV helpers

def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def _atomic_write(path, write):
    """Write through a temporary file in the same directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            write(f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_history(records, path):
    def write(f):
        w = csv.writer(f, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for r in records:
            w.writerow([_fmt(v) for v in r.as_row()])
    _atomic_write(path, write)


def read_history(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if tuple(rows[0]) != HISTORY_COLUMNS:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    out = []
    for row in rows[1:]:
        vals = dict(zip(HISTORY_COLUMNS, row))
        out.append(IterationRecord(int(vals.pop("k")), **{k: float(v) for k, v in vals.items()}))
    return out


def write_summary(rows, path):
    def write(f):
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([_fmt(v) for v in row[:3]] + [row[3]] + [_fmt(v) for v in row[4:]])
    _atomic_write(path, write)


def read_summary(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if tuple(rows[0]) != SUMMARY_COLUMNS:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    out = []
    for row in rows[1:]:
        d = dict(zip(SUMMARY_COLUMNS, row))
        out.append({k: (v if k == "method" else float(v)) for k, v in d.items()})
    return out


# ---------------------------------------------------------------------------
# single runs

def _check_writable(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    if not os.access(out_dir, os.W_OK | os.X_OK):
        raise PermissionError(f"output directory {out_dir!r} is not writable")
    # access() can lie (e.g. read-only mounts); probe for real
    fd, probe = tempfile.mkstemp(dir=out_dir, prefix=".probe-")
    os.close(fd)
    os.unlink(probe)


def initial_mesh(s):
    return generate_annular_mesh(s.fixed_boundary(), s.initial_radius, s.h)


def _run_method(s, method, out_dir, m0=None):
    _check_writable(out_dir)
    cfg = replace(s.cfg, fd_mode=(method == "kv"))
    m0 = initial_mesh(s) if m0 is None else m0
    ref = s.reference_polyline()
    cpu0 = time.process_time()
    res = run_descent(m0, s.lam, cfg, reference_sigma=ref)
    cpu_ms = 1e3 * (time.process_time() - cpu0)

    records = res.records
    if s.reference.strip().lower() == "final":
        last = res.boundaries[-1]
        records = [replace(r, d_H=hausdorff_distance(b, last))
                   for r, b in zip(records, res.boundaries)]
    write_history(records, os.path.join(out_dir, "history.csv"))
    last_k = records[-1].k
    for r, b in zip(records, res.boundaries):
        if r.k % s.dump_every == 0 or r.k == last_k:
            write_polyline(b, os.path.join(out_dir, f"boundary_{r.k}.txt"))
    write_mesh(res.mesh, os.path.join(out_dir, "mesh_final.txt"))
    st, adj, geom, dens = core.shape_gradient(res.mesh, s.lam)
    core.write_sigma_trace(res.mesh, st, adj, geom, dens,
                           os.path.join(out_dir, "sigma_trace.txt"))

    fin = records[-1]
    radius = float(np.mean(np.linalg.norm(
        res.mesh.sigma_polyline() - s.fixed_boundary().star_center, axis=1)))
    return RunSummary(method, len(records), res.stop.kind.value,
                      fin.J_KV if method == "kv" else fin.J, fin.J, fin.J_KV,
                      fin.d_H, radius, cpu_ms, out_dir)


def summary_line(s, r):
    return (f"{s.name} [{r.method}] lambda={s.lam:g} mu={s.cfg.mu:g} h={s.h:g}: "
            f"{r.iters} iterations ({r.stop}), J={r.final_J_ccbm:.6e}, "
            f"J_KV={r.final_J_kv:.6e}, mean Sigma radius={r.mean_radius:.6f}, "
            f"d_H={r.final_dH:.6e}")


def run_methods(s, out_dir):
    """Run ``s`` and return one :class:`RunSummary` per method."""
    _check_writable(out_dir)
    methods = ("ccbm", "kv") if s.method == "both" else (s.method,)
    m0 = initial_mesh(s)
    out = []
    for meth in methods:
        d = os.path.join(out_dir, meth) if s.method == "both" else out_dir
        out.append(_run_method(s, meth, d, m0))
    return out


def run_scenario(s, out_dir, echo=print):
    """Run a scenario, write its files and echo one summary line per method.

    Returns :attr:`ExitStatus.SUCCESS`; failures propagate as exceptions
    (the CLI maps them to exit codes).
    """
    for r in run_methods(s, out_dir):
        echo(summary_line(s, r))
    return ExitStatus.SUCCESS


# ---------------------------------------------------------------------------
# sweeps

def _run_dir(lam, mu, h):
    return f"lam{lam:g}_mu{mu:g}_h{h:g}"


def _sweep_job(args):
    """Run every method of one sweep entry; returns ``(rows, errors)``."""
    s, out_dir = args
    methods = ("ccbm", "kv") if s.method == "both" else (s.method,)
    rows, errors = [], []
    try:
        m0 = initial_mesh(s)
    except (CCBMError, ValueError) as exc:
        m0, mesh_error = None, exc
    for meth in methods:
        d = os.path.join(out_dir, meth) if s.method == "both" else out_dir
        try:
            if m0 is None:
                raise mesh_error
            r = _run_method(s, meth, d, m0)
            rows.append((s.lam, s.cfg.mu, s.h, meth, r.final_J, r.final_dH, r.iters, r.cpu_ms))
        except (CCBMError, ValueError) as exc:
            it = getattr(exc, "iteration", None)
            rows.append((s.lam, s.cfg.mu, s.h, meth, math.nan, math.nan,
                         math.nan if it is None else it, math.nan))
            errors.append(f"{_run_dir(s.lam, s.cfg.mu, s.h)} [{meth}]: "
                          f"{type(exc).__name__}: {exc}")
    return rows, errors


def sweep(base, lams, mus, hs, out_dir, workers=1, echo=print):
    """Cartesian product of runs, one subdirectory each, plus ``summary.csv``.

    Failed runs keep NaN entries in the summary and are listed in
    ``failures.txt``; the sweep itself carries on.  Returns SUCCESS when
    every run succeeded and NUMERICAL otherwise.
    """
    _check_writable(out_dir)
    jobs = []
    for lam, mu, h in itertools.product(lams, mus, hs):
        s = replace(base, lam=float(lam), h=float(h), cfg=replace(base.cfg, mu=float(mu)))
        jobs.append((s, os.path.join(out_dir, _run_dir(s.lam, mu, h))))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]

    rows, failures = [], []
    for (s, _), (r, errs) in zip(jobs, results):
        rows.extend(r)
        failures.extend(errs)
        for e in errs:
            echo(f"FAILED {e}")
        for row in r:
            if not math.isnan(row[4]):
                echo(f"{_run_dir(s.lam, s.cfg.mu, s.h)} [{row[3]}]: {row[6]} iterations, "
                     f"final J={row[4]:.6e}")
    write_summary(rows, os.path.join(out_dir, "summary.csv"))
    if failures:
        with open(os.path.join(out_dir, "failures.txt"), "w") as f:
            f.write("\n".join(failures) + "\n")
    return ExitStatus.NUMERICAL if failures else ExitStatus.SUCCESS


def default_workers():
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity")
               else (os.cpu_count() or 1))
