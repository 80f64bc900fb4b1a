"""Coupled complex boundary formulation of the exterior Bernoulli problem.

The state solves ``-Lap u = 0``, ``u = 1`` on the fixed boundary and
``d_n u + i u = lam`` on the free boundary; the cost is half the squared L2
norm of its imaginary part.  This module provides the state and adjoint
solves, the cost, the boundary shape-gradient density and the material
derivative of the state (used as an independent check of the gradient).
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import fem
from .errors import MissingGeometry
from .mesh import boundary_geometry

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Operators:
    K: object
    M: object
    B: object
    sigma_load: np.ndarray  # int_Sigma phi_i


def operators(m):
    """Stiffness, mass and boundary matrices of ``m``, cached on the mesh."""
    ops = m.__dict__.get("_operators")
    if ops is None:
        B = fem.assemble_boundary_mass_sigma(m)
        ops = Operators(fem.assemble_stiffness(m), fem.assemble_mass(m), B,
                        np.asarray(B.sum(axis=1)).ravel())
        m.__dict__["_operators"] = ops
    return ops


def tangential_derivative(values, edge_lengths):
    """d/ds of a nodal field along the closed outer loop, at its vertices.

    Edge slopes are averaged with arc-length weights, which amounts to a
    central difference over the two neighbours.
    """
    ell_prev = np.roll(edge_lengths, 1)
    return (np.roll(values, -1) - np.roll(values, 1)) / (edge_lengths + ell_prev)


@dataclass(frozen=True, eq=False)
class StateSolution:
    """State ``u = u1 + i u2`` with its traces on the free boundary.

    Trace arrays are in ``sigma_loop`` order.  Normal derivatives come from
    the Robin condition: ``d_n u1 = lam + u2`` and ``d_n u2 = -u1``.
    """

    u: fem.ComplexFieldP1
    lam: float
    u1_sigma: np.ndarray
    u2_sigma: np.ndarray
    du1_ds: np.ndarray
    du2_ds: np.ndarray

    @property
    def dn_u1(self):
        return self.lam + self.u2_sigma

    @property
    def dn_u2(self):
        return -self.u1_sigma


@dataclass(frozen=True, eq=False)
class AdjointSolution:
    """Adjoint ``p = p1 + i p2`` with traces; ``d_n p1 = -p2``, ``d_n p2 = p1``."""

    p: fem.ComplexFieldP1
    p1_sigma: np.ndarray
    p2_sigma: np.ndarray
    dp1_ds: np.ndarray
    dp2_ds: np.ndarray

    @property
    def dn_p1(self):
        return -self.p2_sigma

    @property
    def dn_p2(self):
        return self.p1_sigma


def _edge_lengths(m):
    return fem.sigma_edge_lengths(m)


def solve_state(m, lam, robin_sign=1):
    """Discrete complex state on ``m`` for the Bernoulli constant ``lam``.

    ``robin_sign=-1`` solves the conjugate problem ``d_n u - i u = lam``.
    """
    if lam >= 0:
        log.warning("lambda = %g >= 0: outside the exterior Bernoulli setting", lam)
    ops = operators(m)
    u = fem.solve_complex_robin(m, ops.K, ops.B, lam * ops.sigma_load,
                                (m.gamma_loop, 1.0), robin_sign=robin_sign)
    ell = _edge_lengths(m)
    u1 = u.re[m.sigma_loop]
    u2 = u.im[m.sigma_loop]
    return StateSolution(u, float(lam), u1, u2,
                         tangential_derivative(u1, ell), tangential_derivative(u2, ell))


def solve_adjoint(m, s):
    """Adjoint with load ``u2``, zero on the fixed boundary, Robin ``d_n p - i p = 0``."""
    ops = operators(m)
    p = fem.solve_complex_robin(m, ops.K, ops.B, ops.M @ s.u.im,
                                (m.gamma_loop, 0.0), robin_sign=-1)
    ell = _edge_lengths(m)
    p1 = p.re[m.sigma_loop]
    p2 = p.im[m.sigma_loop]
    return AdjointSolution(p, p1, p2, tangential_derivative(p1, ell),
                           tangential_derivative(p2, ell))


def cost(m, s):
    """J = 1/2 int |u2|^2."""
    u2 = s.u.im
    return 0.5 * float(u2 @ (operators(m).M @ u2))


def h1_norm(m, field):
    """H1 norm of a (complex) nodal field."""
    ops = operators(m)
    out = 0.0
    for part in (field.re, field.im):
        out += part @ (ops.K @ part) + part @ (ops.M @ part)
    return float(np.sqrt(out))


@dataclass(frozen=True, eq=False)
class GradientDensity:
    """Shape-gradient density on the free boundary, in ``sigma_loop`` order."""

    G: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    sigma_loop: np.ndarray

    def directional_derivative(self, V):
        """Lumped quadrature of ``int_Sigma G V.n``."""
        V = np.asarray(getattr(V, "values", V), float)
        vn = np.sum(V[self.sigma_loop] * self.normals, axis=1)
        return float(np.sum(self.weights * self.G * vn))


def gradient_density(m, s, a, geom, lam=None):
    """Boundary expression of the shape gradient of J.

    G = |u2|^2 / 2 - [ p1' u2' - p2' u1' + p1 (d_n u1 + k u1)
                       + p2 (d_n u2 + k u2) + lam k p2 ]

    with ``'`` the tangential derivative and ``k`` the curvature.
    """
    if geom is None:
        raise MissingGeometry("gradient_density needs the boundary geometry")
    lam = s.lam if lam is None else lam
    kappa = geom.curvature
    u1, u2 = s.u1_sigma, s.u2_sigma
    p1, p2 = a.p1_sigma, a.p2_sigma
    dn_u1 = lam + u2
    dn_u2 = -u1
    bracket = (a.dp1_ds * s.du2_ds - a.dp2_ds * s.du1_ds
               + p1 * (dn_u1 + kappa * u1) + p2 * (dn_u2 + kappa * u2)
               + lam * kappa * p2)
    G = 0.5 * u2 ** 2 - bracket
    return GradientDensity(G, geom.weights, geom.normals, m.sigma_loop)


def shape_gradient(m, lam):
    """Convenience: state, adjoint, geometry and density in one call."""
    s = solve_state(m, lam)
    a = solve_adjoint(m, s)
    geom = boundary_geometry(m)
    return s, a, geom, gradient_density(m, s, a, geom, lam)


# ---------------------------------------------------------------------------
# material derivative

def velocity_jacobians(m, V):
    """Per-element constant Jacobian DV[e, a, b] = d V_a / d x_b of a P1 field."""
    V = np.asarray(getattr(V, "values", V), float)
    _, g = fem.element_gradients(m)
    return np.einsum("eia,eib->eab", V[m.triangles], g)


def tangential_divergence(m, V):
    """div_Sigma V on each outer edge, from div V - (DV n).n on the adjacent triangle."""
    DV = velocity_jacobians(m, V)[m.sigma_edge_triangles]
    e = m.sigma_edges
    tau = m.vertices[e[:, 1]] - m.vertices[e[:, 0]]
    tau /= np.linalg.norm(tau, axis=1)[:, None]
    n = np.column_stack([tau[:, 1], -tau[:, 0]])
    div = np.trace(DV, axis1=1, axis2=2)
    return div - np.einsum("ea,eab,eb->e", n, DV, n)


def solve_material_derivative(m, s, V):
    """Lagrangian derivative of the state along the deformation ``x + tV``.

    Solves the state operator with right-hand side
    ``-int A grad u . grad v - i int_Sigma divS(V) u v + lam int_Sigma divS(V) v``
    where ``A = div(V) I - DV - DV^T``.  Zero on the fixed boundary.
    """
    V = np.asarray(getattr(V, "values", V), float)
    if not np.any(V):
        return fem.ComplexFieldP1.zeros(m.n_vertices)
    ops = operators(m)
    DV = velocity_jacobians(m, V)
    div = np.trace(DV, axis1=1, axis2=2)
    A = div[:, None, None] * np.eye(2) - DV - np.transpose(DV, (0, 2, 1))
    KA = fem.assemble_weighted_stiffness(m, A)
    Bdiv = fem.assemble_boundary_mass_sigma(m, coef=tangential_divergence(m, V))
    u = s.u.values
    rhs = -(KA @ u) - 1j * (Bdiv @ u) + s.lam * np.asarray(Bdiv.sum(axis=1)).ravel()
    return fem.solve_complex_robin(m, ops.K, ops.B, rhs, (m.gamma_loop, 0.0))


def volume_form_derivative(m, s, V, udot=None):
    """dJ[V] = 1/2 int div(V) |u2|^2 + int u2 udot2."""
    V = np.asarray(getattr(V, "values", V), float)
    if udot is None:
        udot = solve_material_derivative(m, s, V)
    div = np.trace(velocity_jacobians(m, V), axis1=1, axis2=2)
    u2 = s.u.im
    Mdiv = fem.assemble_mass(m, coef=div)
    return float(0.5 * u2 @ (Mdiv @ u2) + u2 @ (operators(m).M @ udot.im))


# ---------------------------------------------------------------------------
# output

def write_sigma_trace(m, s, a, geom, dens, path):
    """One line per outer vertex: ``s x y u1 u2 p1 p2 kappa G``."""
    arc = np.concatenate([[0.0], np.cumsum(geom.edge_lengths)[:-1]])
    xy = m.vertices[m.sigma_loop]
    cols = np.column_stack([arc, xy, s.u1_sigma, s.u2_sigma, a.p1_sigma, a.p2_sigma,
                            geom.curvature, dens.G])
    with open(path, "w") as f:
        f.write("# s x y u1 u2 p1 p2 kappa G\n")
        for row in cols:
            f.write(" ".join(format(v, ".17g") for v in row) + "\n")
