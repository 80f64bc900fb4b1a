import math
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import LAM, right_triangle
from ccbm import core, descent, fem
from ccbm.core import GradientDensity
from ccbm.descent import (DescentConfig, IterationRecord, StopKind, backtrack, check_stopping,
                          fd_directional_derivative, initial_step, run_descent,
                          sobolev_gradient, step_size)
from ccbm.errors import SingularSystem, StepCollapse
from ccbm.mesh import boundary_geometry, generate_annular_mesh
from ccbm.shapes import Circle

CFG_2D1 = DescentConfig(mu=2.0, tol=1e-6, max_iters=500, cost_plateau_tol=1e-6)


@pytest.fixture(scope="module")
def run_2d1():
    m0 = generate_annular_mesh(Circle(0.5), 1.25, 0.05)
    return m0, run_descent(m0, LAM, CFG_2D1)


def _density(m, G):
    geom = boundary_geometry(m)
    return GradientDensity(np.asarray(G, float), geom.weights, geom.normals, m.sigma_loop), geom


# ---------------------------------------------------------------------------
# Sobolev gradient

def test_zero_density_gives_zero_field(annulus_coarse):
    dens, geom = _density(annulus_coarse, np.zeros(len(annulus_coarse.sigma_loop)))
    V = sobolev_gradient(annulus_coarse, dens, geom)
    assert not np.any(V.values)


def test_positive_constant_density_shrinks_a_circle(annulus_coarse):
    m = annulus_coarse
    dens, geom = _density(m, np.full(len(m.sigma_loop), 0.3))
    V = sobolev_gradient(m, dens, geom)
    vn = np.sum(V.values[m.sigma_loop] * geom.normals, axis=1)
    assert np.all(vn < 0)
    assert np.all(V.values[m.gamma_loop] == 0)


@given(st.integers(0, 2 ** 31))
def test_sobolev_field_is_a_descent_direction(lmesh, seed):
    G = np.random.default_rng(seed).normal(size=len(lmesh.sigma_loop))
    dens, geom = _density(lmesh, G)
    V = sobolev_gradient(lmesh, dens, geom)
    dJ = dens.directional_derivative(V)
    assert dJ <= 0.0
    # with the lumped load the boundary pairing is exactly -|V|^2
    assert dJ == pytest.approx(-V.h1_norm_sq, rel=1e-9)


# ---------------------------------------------------------------------------
# step size

def test_initial_step_formula():
    V = fem.DescentField(np.zeros((3, 2)), 4.0)
    assert initial_step(0.5, V, 2.0) == 0.25
    assert initial_step(0.0, V, 2.0) == 0.0


def test_zero_field_is_refused():
    with pytest.raises(ValueError):
        initial_step(1.0, fem.DescentField(np.zeros((3, 2)), 0.0), 1.0)


def _squash(m):
    V = np.zeros((3, 2))
    V[2] = (0.0, -1.0)  # top vertex drops; the triangle flips at t = 1
    return V


def test_inversion_forces_one_halving():
    m = right_triangle()
    V = fem.DescentField(_squash(m), 1.0)
    ok = lambda mm: SimpleNamespace(value=0.0)
    assert step_size(1.5, V, 1.0, m, ok) == 0.75


def test_cost_increase_forces_halving():
    m = right_triangle()
    V = _squash(m)
    # accept only once the top vertex stays above y = 0.8
    ev = lambda mm: SimpleNamespace(value=0.0 if mm.vertices[2, 1] >= 0.8 else 2.0)
    t, moved, _ = backtrack(m, V, 0.5, 1.0, ev)
    assert t == 0.125 and moved.vertices[2, 1] == 0.875


def test_step_collapse():
    m = right_triangle()
    bad = lambda mm: SimpleNamespace(value=2.0)
    with pytest.raises(StepCollapse):
        backtrack(m, _squash(m), 0.5, 1.0, bad, max_halvings=20)


# ---------------------------------------------------------------------------
# stopping

def _rec(k=3, J=1.0, g=1.0, v=1.0):
    return IterationRecord(k, J, J, g, v, 0.0)


def test_small_everything_converges():
    d = check_stopping(_rec(J=1e-9, g=1e-9, v=1e-9), None, DescentConfig(tol=1e-6))
    assert d.kind is StopKind.CONVERGED and d.stop


def test_one_large_norm_blocks_convergence():
    d = check_stopping(_rec(J=1e-9, g=1e-9, v=1e-3), None, DescentConfig(tol=1e-6))
    assert d.kind is StopKind.CONTINUE and not d.stop


def test_equal_costs_plateau():
    cfg = DescentConfig(tol=1e-6, cost_plateau_tol=1e-6)
    assert check_stopping(_rec(J=0.5), _rec(k=2, J=0.5), cfg).kind is StopKind.PLATEAU
    off = replace(cfg, cost_plateau_tol=0.0)
    assert check_stopping(_rec(J=0.5), _rec(k=2, J=0.5), off).kind is StopKind.CONTINUE


def test_iteration_budget():
    cfg = DescentConfig(max_iters=10)
    assert check_stopping(_rec(k=9), _rec(k=8, J=2.0), cfg).kind is StopKind.ITER_BUDGET
    assert check_stopping(_rec(k=8), _rec(k=7, J=2.0), cfg).kind is StopKind.CONTINUE


def test_kv_mode_stops_on_kv_cost():
    cfg = DescentConfig(tol=1e-6, fd_mode=True)
    rec = IterationRecord(0, 1.0, 1e-9, 1e-9, 1e-9, 0.0)
    assert check_stopping(rec, None, cfg).kind is StopKind.CONVERGED


@given(J=st.floats(0, 1e3), g=st.floats(0, 1e3), v=st.floats(0, 1e3), tol=st.floats(1e-12, 1.0))
def test_convergence_iff_max_below_tol(J, g, v, tol):
    d = check_stopping(_rec(k=0, J=J, g=g, v=v), None,
                       DescentConfig(tol=tol, cost_plateau_tol=0.0, max_iters=100))
    assert (d.kind is StopKind.CONVERGED) == (max(J, g, v) < tol)


# ---------------------------------------------------------------------------
# the loop

def test_single_iteration_budget(annulus_coarse):
    res = run_descent(annulus_coarse, LAM, DescentConfig(max_iters=1))
    assert len(res.records) == 1
    assert res.stop.kind is StopKind.ITER_BUDGET
    assert res.records[0].t == 0.0 and res.mesh is annulus_coarse


def test_zero_cost_reports_convergence(annulus_coarse, monkeypatch):
    monkeypatch.setattr(core, "cost", lambda m, s: 0.0)
    res = run_descent(annulus_coarse, LAM, DescentConfig(cost_plateau_tol=0.0))
    assert len(res.records) == 1 and res.stop.kind is StopKind.CONVERGED


def test_recovers_the_exact_annulus(run_2d1):
    m0, res = run_2d1
    radii = np.linalg.norm(res.mesh.sigma_polyline(), axis=1)
    assert np.mean(radii) == pytest.approx(0.7, rel=0.02)
    assert np.max(np.abs(radii - 0.7)) <= 0.04 * 0.7
    assert res.stop.kind in (StopKind.CONVERGED, StopKind.PLATEAU)


def test_gamma_never_moves_and_k_increases(run_2d1):
    m0, res = run_2d1
    assert np.array_equal(res.mesh.vertices[m0.gamma_loop], m0.vertices[m0.gamma_loop])
    ks = [r.k for r in res.records]
    assert ks == list(range(len(ks)))
    assert all(r.grad_norm >= 0 and r.v_inf_sigma >= 0 and r.J >= 0 for r in res.records)


def test_costs_decrease_after_three_iterations(run_2d1):
    _, res = run_2d1
    for key in ("J", "J_KV"):
        vals = [getattr(r, key) for r in res.records[3:]]
        for a, b in zip(vals, vals[1:]):
            assert b <= a * 1.01, key
    Js = [r.J for r in res.records]
    assert all(b <= a for a, b in zip(Js, Js[1:]))


def test_start_at_optimum_stops_quickly(annulus_exact):
    res = run_descent(annulus_exact, LAM, CFG_2D1)
    assert len(res.records) <= 3
    assert res.stop.kind in (StopKind.CONVERGED, StopKind.PLATEAU)


def test_runs_are_deterministic():
    m0 = generate_annular_mesh(Circle(0.5), 1.25, 0.1)
    cfg = DescentConfig(mu=2.0, max_iters=6)
    a = run_descent(m0, LAM, cfg)
    b = run_descent(m0, LAM, cfg)
    strip = lambda res: [replace(r, wall_ms=0.0) for r in res.records]
    assert strip(a) == strip(b)
    assert np.array_equal(a.mesh.vertices, b.mesh.vertices)


def test_solver_errors_carry_the_iteration(annulus_coarse, monkeypatch):
    calls = {"n": 0}
    real = core.solve_adjoint

    def flaky(m, s):
        calls["n"] += 1
        if calls["n"] == 3:
            raise SingularSystem("boom")
        return real(m, s)

    monkeypatch.setattr(core, "solve_adjoint", flaky)
    with pytest.raises(SingularSystem) as info:
        run_descent(annulus_coarse, LAM, DescentConfig(mu=2.0, max_iters=10, cost_plateau_tol=0))
    assert info.value.iteration == 2


def test_kv_mode_descends_the_kv_cost():
    m0 = generate_annular_mesh(Circle(0.5), 1.25, 0.2)
    res = run_descent(m0, LAM, DescentConfig(mu=2.0, max_iters=3, fd_mode=True))
    kvs = [r.J_KV for r in res.records]
    assert kvs[-1] < kvs[0]
    assert all(b <= a for a, b in zip(kvs, kvs[1:]))


# ---------------------------------------------------------------------------
# finite differences

def test_fd_of_zero_field(annulus_coarse):
    assert fd_directional_derivative(annulus_coarse, LAM, np.zeros((annulus_coarse.n_vertices, 2)),
                                     1e-3) == 0.0


@pytest.mark.parametrize("which", ["ccbm", "kv"])
def test_fd_error_is_second_order(annulus_coarse, which):
    m = annulus_coarse
    V = fem.solve_vector_h1(m, boundary_geometry(m).normals)
    f = [fd_directional_derivative(m, LAM, V, t, which) for t in (0.04, 0.02, 0.01)]
    ratio = (f[0] - f[1]) / (f[1] - f[2])
    assert ratio == pytest.approx(4.0, abs=0.3)


def test_fd_matches_boundary_form(annulus_coarse):
    m = annulus_coarse
    _, _, geom, dens = core.shape_gradient(m, LAM)
    V = sobolev_gradient(m, dens, geom)
    fd = fd_directional_derivative(m, LAM, V, 1e-4)
    assert dens.directional_derivative(V) == pytest.approx(fd, rel=0.05)


def test_unknown_objective(annulus_coarse):
    with pytest.raises(ValueError):
        descent.objective_value(annulus_coarse, LAM, "nope")
