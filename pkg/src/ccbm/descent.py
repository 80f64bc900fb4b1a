"""Sobolev-gradient descent on the free boundary.

Each iteration solves the state and adjoint, forms the boundary gradient
density, extends ``-G n`` to the whole domain by an H1 Riesz solve, picks
the step ``t = mu J / |V|_H1^2`` (halved while the mesh inverts or the cost
rises) and moves every node by ``t V``.

With ``fd_mode`` the Kohn-Vogelius cost is descended instead; its density
is recovered by central finite differences over H1-extended normal hat
fields at the free-boundary vertices.
"""

import enum
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import core, fem, kv
from .errors import MeshInversion, NumericalError, StepCollapse
from .mesh import boundary_geometry, hausdorff_distance, mesh_quality, move_mesh

log = logging.getLogger(__name__)

# aspect ratio above which the loop warns (once) that the mesh is degenerating
ASPECT_WARNING = 1e3

HISTORY_COLUMNS = ("k", "J", "J_KV", "grad_norm", "v_inf_sigma", "t", "d_H", "wall_ms")


@dataclass(frozen=True)
class DescentConfig:
    mu: float = 1.0
    tol: float = 1e-6
    max_iters: int = 100
    cost_plateau_tol: float = 1e-6  # 0 disables the plateau test
    fd_mode: bool = False  # descend J_KV with finite-difference gradients
    fd_step: float = 1e-4
    max_halvings: int = 20

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")

    @property
    def method(self):
        return "kv" if self.fd_mode else "ccbm"


@dataclass(frozen=True)
class IterationRecord:
    k: int
    J: float
    J_KV: float
    grad_norm: float
    v_inf_sigma: float
    t: float
    d_H: float = math.nan
    wall_ms: float = 0.0

    def as_row(self):
        return tuple(getattr(self, c) for c in HISTORY_COLUMNS)


class StopKind(enum.Enum):
    CONTINUE = "continue"
    CONVERGED = "converged"
    PLATEAU = "plateau"
    ITER_BUDGET = "iter_budget"


@dataclass(frozen=True)
class StopDecision:
    kind: StopKind
    reason: str = ""

    @property
    def stop(self):
        return self.kind is not StopKind.CONTINUE


def _objective(rec, cfg):
    return rec.J_KV if cfg.fd_mode else rec.J


def check_stopping(rec, prev, cfg):
    """Decide whether the loop ends after iterate ``rec``."""
    J = _objective(rec, cfg)
    if max(rec.grad_norm, rec.v_inf_sigma, J) < cfg.tol:
        return StopDecision(StopKind.CONVERGED, "max(|V|_H1, |V|_C(Sigma), J) < tol")
    if prev is not None and cfg.cost_plateau_tol > 0 \
            and abs(J - _objective(prev, cfg)) < cfg.cost_plateau_tol:
        return StopDecision(StopKind.PLATEAU, "|J^k - J^(k-1)| below plateau tolerance")
    if rec.k + 1 >= cfg.max_iters:
        return StopDecision(StopKind.ITER_BUDGET, "iteration budget exhausted")
    return StopDecision(StopKind.CONTINUE)


def sobolev_gradient(m, G, geom, A=None):
    """H1 descent field with boundary source ``-G n``."""
    dens = getattr(G, "G", G)
    return fem.solve_vector_h1(m, -np.asarray(dens)[:, None] * geom.normals, A=A)


def initial_step(J, V, mu):
    """t = mu J / |V|_H1^2 (0 when J vanishes)."""
    if J == 0.0:
        return 0.0
    nsq = V.h1_norm_sq
    if not nsq > 0.0:
        raise ValueError("step size needs a nonzero descent field")
    return mu * J / nsq


def backtrack(m, V, t, J, evaluate, max_halvings=20):
    """Halve ``t`` until the moved mesh is valid and the cost does not grow.

    Returns ``(t, new_mesh, new_eval)`` where ``new_eval`` is whatever
    ``evaluate(new_mesh)`` returned (its ``.value`` is compared with ``J``).
    """
    for _ in range(max_halvings + 1):
        try:
            trial = move_mesh(m, V, t)
        except MeshInversion:
            t *= 0.5
            continue
        ev = evaluate(trial)
        if ev.value <= J:
            return t, trial, ev
        t *= 0.5
    raise StepCollapse(f"no acceptable step after {max_halvings} halvings")


def step_size(J, V, mu, m=None, evaluate=None, max_halvings=20):
    """Initial step, then (if a mesh and evaluator are given) backtracking."""
    t = initial_step(J, V, mu)
    if m is None or t == 0.0:
        return t
    return backtrack(m, V, t, J, evaluate, max_halvings)[0]


# ---------------------------------------------------------------------------
# objective evaluations

@dataclass(eq=False)
class _Eval:
    mesh: object
    value: float
    state: object = None
    pair: object = None


def _ccbm_eval(lam):
    def evaluate(m):
        s = core.solve_state(m, lam)
        return _Eval(m, core.cost(m, s), state=s)
    return evaluate


def _kv_eval(lam):
    def evaluate(m):
        pair = kv.solve_kv_states(m, lam)
        return _Eval(m, kv.kv_cost(m, pair), pair=pair)
    return evaluate


def objective_value(m, lam, which):
    if which.lower() == "ccbm":
        return core.cost(m, core.solve_state(m, lam))
    if which.lower() == "kv":
        return kv.kv_value(m, lam)
    raise ValueError(f"unknown objective {which!r}")


def fd_directional_derivative(m, lam, V, t, which="ccbm"):
    """Central difference (J(m + tV) - J(m - tV)) / 2t with full re-solves."""
    V = np.asarray(getattr(V, "values", V), float)
    if not np.any(V):
        return 0.0
    plus = objective_value(move_mesh(m, V, t), lam, which)
    minus = objective_value(move_mesh(m, V, -t), lam, which)
    return (plus - minus) / (2.0 * t)


def normal_hat_extensions(m, geom, A=None):
    """H1-harmonic extensions of ``n_j`` at each free-boundary vertex.

    Field ``j`` equals the outward normal at vertex ``j``, vanishes at the
    other boundary vertices and satisfies the H1 equation inside.  Returns
    an array of shape (n_sigma, n_vertices, 2).
    """
    A = sp.csr_matrix(fem.h1_matrix(m) if A is None else A)
    inner = np.flatnonzero(m.interior_mask)
    sig = m.sigma_loop
    lu = splu(sp.csc_matrix(A[inner][:, inner]))
    coupling = A[inner][:, sig].toarray()  # (n_inner, n_sigma)
    out = np.zeros((len(sig), m.n_vertices, 2))
    for c in range(2):
        rhs = -coupling * geom.normals[:, c][None, :]
        sol = lu.solve(rhs)
        out[:, inner, c] = sol.T
        out[np.arange(len(sig)), sig, c] = geom.normals[:, c]
    return out


def kv_density_fd(m, lam, geom, t=1e-4, A=None):
    """Finite-difference Kohn-Vogelius gradient density at free-boundary vertices."""
    fields = normal_hat_extensions(m, geom, A)
    g = np.array([fd_directional_derivative(m, lam, W, t, "kv") for W in fields])
    return g / geom.weights


# ---------------------------------------------------------------------------
# the loop

@dataclass(eq=False)
class DescentResult:
    mesh: object
    records: list
    stop: StopDecision
    boundaries: list = field(default_factory=list)  # Sigma polyline per record


def run_descent(m0, lam, cfg, reference_sigma=None, on_iterate=None):
    """Run the descent from ``m0``; returns a :class:`DescentResult`.

    ``on_iterate(record, mesh)`` is called after every record.  Solver
    failures are re-raised with the iteration index attached.
    """
    evaluate = _kv_eval(lam) if cfg.fd_mode else _ccbm_eval(lam)
    m = m0
    ev = None
    records = []
    boundaries = []
    prev = None
    warned = False
    k = 0
    while True:
        tic = time.perf_counter()
        try:
            if ev is None:
                ev = evaluate(m)
            geom = boundary_geometry(m)
            A = fem.h1_matrix(m)
            if cfg.fd_mode:
                G = kv_density_fd(m, lam, geom, cfg.fd_step, A)
                J_kv = ev.value
                J = core.cost(m, core.solve_state(m, lam))
            else:
                s = ev.state
                a = core.solve_adjoint(m, s)
                G = core.gradient_density(m, s, a, geom, lam).G
                J = ev.value
                J_kv = kv.kv_value(m, lam)
            V = sobolev_gradient(m, G, geom, A)
        except NumericalError as exc:
            raise type(exc)(str(exc), iteration=k) from exc

        d_H = math.nan
        if reference_sigma is not None:
            d_H = hausdorff_distance(m.sigma_polyline(), reference_sigma)
        rec = IterationRecord(k, J, J_kv, V.h1_norm, V.sigma_sup_norm(m), 0.0, d_H)
        decision = check_stopping(rec, prev, cfg)
        t = 0.0
        if not decision.stop:
            t = initial_step(ev.value, V, cfg.mu)
            if t == 0.0:
                decision = StopDecision(StopKind.CONVERGED, "zero cost")
        if not decision.stop:
            try:
                t, m_new, ev_new = backtrack(m, V, t, ev.value, evaluate, cfg.max_halvings)
            except NumericalError as exc:
                raise type(exc)(str(exc), iteration=k) from exc
            assert ev_new.value <= ev.value, "accepted step increased the cost"
        rec = replace(rec, t=t, wall_ms=1e3 * (time.perf_counter() - tic))
        records.append(rec)
        boundaries.append(m.sigma_polyline())
        if on_iterate is not None:
            on_iterate(rec, m)
        if not warned and mesh_quality(m).max_aspect > ASPECT_WARNING:
            log.warning("iteration %d: max triangle aspect ratio above %g; mesh is degenerating",
                        k, ASPECT_WARNING)
            warned = True
        log.debug("k=%d J=%.6e J_KV=%.6e |V|=%.3e t=%.3e", k, J, J_kv, V.h1_norm, t)
        if decision.stop:
            return DescentResult(m, records, decision, boundaries)
        m, ev, prev = m_new, ev_new, rec
        k += 1
