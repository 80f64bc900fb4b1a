"""Quick oracle checks behind ``ccbm validate``.

Each check is cheap (seconds) and compares the solver against an
independent reference: the radial closed form, central finite differences,
the material-derivative volume form, or plain invariants.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import core, fem
from .descent import DescentConfig, run_descent, sobolev_gradient
from .mesh import (generate_annular_mesh, hausdorff_distance, mean_edge_length,
                   move_mesh)
from .scenarios import LAMBDA_2D1, lambda_annulus_2d, radial_coefficients, radial_exact_solution
from .shapes import Circle, lshape


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def check_lambda():
    lam = lambda_annulus_2d(0.5, 0.7)
    return Check("lambda for C(0,0.5) / C(0,0.7)", abs(lam - LAMBDA_2D1) <= 5e-6,
                 f"{lam:.8f} vs {LAMBDA_2D1}")


def check_radial_residual():
    r, R, lam = 0.5, 1.25, LAMBDA_2D1
    a, b = radial_coefficients(r, R, lam)
    res = abs(b / R + 1j * (a + b * math.log(R)) - lam)
    return Check("radial closed form satisfies the Robin condition", res < 1e-14,
                 f"residual {res:.1e}")


def state_errors(hs=(0.2, 0.1, 0.05), r=0.5, R=1.25, lam=LAMBDA_2D1):
    """(mean edge length, L2 error) of the discrete state on a sequence of meshes."""
    out = []
    for h in hs:
        m = generate_annular_mesh(Circle(r), R, h)
        s = core.solve_state(m, lam)
        err = fem.l2_error(m, s.u.values, lambda x: radial_exact_solution(
            r, R, lam, np.clip(np.linalg.norm(x, axis=1), r, R)))
        out.append((mean_edge_length(m), err))
    return out


def observed_orders(pairs):
    return [math.log(e0 / e1) / math.log(h0 / h1) for (h0, e0), (h1, e1) in zip(pairs, pairs[1:])]


def check_state_order():
    orders = observed_orders(state_errors())
    return Check("state L2 error order >= 1.9", min(orders) >= 1.9,
                 "orders " + ", ".join(f"{p:.2f}" for p in orders))


def gradient_triple(m, lam, g, t=1e-4):
    """Boundary form, volume form and central difference of dJ along the
    H1 extension of ``g n``."""
    s, a, geom, dens = core.shape_gradient(m, lam)
    V = fem.solve_vector_h1(m, np.asarray(g)[:, None] * geom.normals)

    def J(mm):
        return core.cost(mm, core.solve_state(mm, lam))

    fd = (J(move_mesh(m, V, t)) - J(move_mesh(m, V, -t))) / (2 * t)
    return dens.directional_derivative(V), core.volume_form_derivative(m, s, V), fd


def check_gradient():
    m = generate_annular_mesh(lshape(), 1.25, 0.05)
    th = np.arctan2(*m.vertices[m.sigma_loop][:, ::-1].T)
    bnd, vol, fd = gradient_triple(m, -5.0, 1 + 0.5 * np.cos(2 * th + 0.3))
    worst = max(abs(bnd - fd), abs(vol - fd), abs(bnd - vol)) / abs(fd)
    return Check("boundary / volume / FD gradients agree within 5%", worst < 0.05,
                 f"boundary {bnd:.6e}, volume {vol:.6e}, FD {fd:.6e}")


def check_descent_direction():
    m = generate_annular_mesh(Circle(0.5), 1.0, 0.1)
    _, _, geom, dens = core.shape_gradient(m, LAMBDA_2D1)
    V = sobolev_gradient(m, dens, geom)
    dj = dens.directional_derivative(V)
    return Check("Sobolev field is a descent direction", dj <= 0.0, f"dJ[V] = {dj:.3e}")


def check_short_run():
    m0 = generate_annular_mesh(Circle(0.5), 1.25, 0.1)
    res = run_descent(m0, LAMBDA_2D1, DescentConfig(mu=2.0, max_iters=5))
    Js = [r.J for r in res.records]
    mono = all(b <= a for a, b in zip(Js, Js[1:]))
    fixed = np.array_equal(res.mesh.vertices[m0.gamma_loop], m0.vertices[m0.gamma_loop])
    return Check("five descent steps: J monotone, fixed boundary untouched", mono and fixed,
                 f"J {Js[0]:.3e} -> {Js[-1]:.3e}")


def check_hausdorff():
    a = Circle(0.7).polyline(0.05)
    b = Circle(0.75).polyline(0.07)
    dab, dba = hausdorff_distance(a, b), hausdorff_distance(b, a)
    return Check("Hausdorff distance symmetric, about |R1 - R2|",
                 dab == dba and abs(dab - 0.05) < 2e-3, f"{dab:.6f}")


CHECKS = (check_lambda, check_radial_residual, check_state_order, check_gradient,
          check_descent_direction, check_short_run, check_hausdorff)


def run_all(echo=print):
    """Run every check, echo one PASS/FAIL line each; True if all passed."""
    ok = True
    for fn in CHECKS:
        try:
            c = fn()
        except Exception as exc:  # a crash is a failed check, not a crash of the suite
            c = Check(fn.__name__, False, f"{type(exc).__name__}: {exc}")
        ok &= c.passed
        echo(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    return ok
