"""P1 finite-element assembly and the linear solves built on it.

All element integrals are exact (P1 x P1 products of degree <= 2 on affine
triangles and segments).  Complex problems ``(K + i s B) u = f`` are solved
through the real block system ``[[K, -s B], [s B, K]]``.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import DegenerateTriangle, DirichletMismatch, SingularSystem

log = logging.getLogger(__name__)

# normwise backward error accepted when the residual target is below rounding
BACKWARD_TOL = 1e-14

_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
_EDGE_MASS_REF = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0


@dataclass(frozen=True)
class ComplexFieldP1:
    """Nodal complex field stored as its real and imaginary parts."""

    re: np.ndarray
    im: np.ndarray

    @property
    def values(self):
        return self.re + 1j * self.im

    @classmethod
    def from_complex(cls, z):
        z = np.asarray(z, dtype=complex)
        return cls(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag))

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n))


@dataclass(frozen=True)
class DescentField:
    """Nodal 2-vector field with its squared H1 norm."""

    values: np.ndarray
    h1_norm_sq: float

    @property
    def h1_norm(self):
        return float(np.sqrt(max(self.h1_norm_sq, 0.0)))

    def sigma_sup_norm(self, m):
        return float(np.max(np.linalg.norm(self.values[m.sigma_loop], axis=1)))


def element_gradients(m):
    """Areas (m,) and barycentric gradients (m, 3, 2) of every triangle."""
    v = m.vertices[m.triangles]
    d1 = v[:, 1] - v[:, 0]
    d2 = v[:, 2] - v[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    if np.any(area <= 0.0):
        raise DegenerateTriangle("triangle with non-positive area")
    # grad phi_i = rot90(opposite edge) / (2 area)
    e0 = v[:, 2] - v[:, 1]
    e1 = v[:, 0] - v[:, 2]
    e2 = v[:, 1] - v[:, 0]
    grads = np.stack([np.column_stack([-e[:, 1], e[:, 0]]) for e in (e0, e1, e2)], axis=1)
    return area, grads / (2.0 * area)[:, None, None]


def _scatter(m, local, n=None):
    n = m.n_vertices if n is None else n
    t = m.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_stiffness(m):
    area, g = element_gradients(m)
    local = area[:, None, None] * np.einsum("eik,ejk->eij", g, g)
    return _scatter(m, local)


def assemble_weighted_stiffness(m, A):
    """Stiffness with a per-element 2x2 coefficient tensor ``A`` (m, 2, 2)."""
    area, g = element_gradients(m)
    local = area[:, None, None] * np.einsum("eik,ekl,ejl->eij", g, A, g)
    return _scatter(m, local)


def assemble_mass(m, coef=None):
    """Consistent P1 mass matrix, optionally with a per-element constant weight."""
    area, _ = element_gradients(m)
    w = area if coef is None else area * coef
    return _scatter(m, w[:, None, None] * _MASS_REF)


def _edge_scatter(m, local_edges, edges):
    n = m.n_vertices
    rows = np.repeat(edges, 2, axis=1).ravel()
    cols = np.tile(edges, (1, 2)).ravel()
    return sp.coo_matrix((local_edges.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def sigma_edge_lengths(m):
    e = m.sigma_edges
    return np.linalg.norm(m.vertices[e[:, 1]] - m.vertices[e[:, 0]], axis=1)


def assemble_boundary_mass_sigma(m, coef=None):
    """P1 mass matrix over the outer boundary edges (zero rows elsewhere)."""
    ell = sigma_edge_lengths(m)
    w = ell if coef is None else ell * coef
    return _edge_scatter(m, w[:, None, None] * _EDGE_MASS_REF, m.sigma_edges)


def assemble_boundary_load_sigma(m, g, lumped=False):
    """Load vector of ``int_Sigma g v`` for nodal ``g`` given in ``sigma_loop`` order.

    The default integrates the P1 interpolant of ``g`` exactly; ``lumped``
    uses the trapezoidal rule on each edge.
    """
    g = np.broadcast_to(np.asarray(g, float), (len(m.sigma_loop),))
    gfull = np.zeros(m.n_vertices)
    gfull[m.sigma_loop] = g
    if lumped:
        ell = sigma_edge_lengths(m)
        w = 0.5 * (ell + np.roll(ell, 1))
        out = np.zeros(m.n_vertices)
        out[m.sigma_loop] = w * g
        return out
    return assemble_boundary_mass_sigma(m) @ gfull


def write_coo(A, path):
    """Debug dump, one ``row col value`` triple per line."""
    A = sp.coo_matrix(A)
    with open(path, "w") as f:
        for i, j, v in zip(A.row, A.col, A.data):
            f.write(f"{i} {j} {v!r}\n")


# ---------------------------------------------------------------------------
# linear solves

def _backward_error(A, x, b, r):
    """Normwise backward error ``|r| / (|A| |x| + |b|)`` in the infinity norm."""
    scale = abs(A).max() * A.shape[1] * np.max(np.abs(x)) + np.max(np.abs(b))
    return float(np.max(np.abs(r)) / scale) if scale > 0 else 0.0


def _factor_solve(A, b, tol=1e-10, refine=5, backward_tol=BACKWARD_TOL):
    """Sparse LU solve with iterative refinement to ``||Ax - b|| <= tol ||b||``.

    On badly shaped meshes the relative residual can sit above ``tol`` purely
    from float64 rounding in ``A x``.  The solve is then accepted (logged at
    debug level) if its normwise backward error is below ``backward_tol``;
    otherwise :class:`SingularSystem` is raised.
    """
    A = sp.csc_matrix(A)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    try:
        lu = splu(A)
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from None
    solve = lu.solve
    x = solve(b)
    best, best_res = x, np.inf
    for _ in range(refine + 1):
        r = b - A @ x
        if not np.all(np.isfinite(r)):
            raise SingularSystem("non-finite residual")
        res = np.linalg.norm(r)
        if res <= tol * bnorm:
            return x
        if res < best_res:
            best, best_res = x, res
        x = x + solve(r)
    r = b - A @ best
    eta = _backward_error(A, best, b, r)
    if eta <= backward_tol:
        log.debug("residual %.2e above %.0e (rounding floor); backward error %.1e accepted",
                  best_res / bnorm, tol, eta)
        return best
    raise SingularSystem(f"residual {best_res / bnorm:.2e} above tolerance "
                         f"(backward error {eta:.1e})")


def _dirichlet_arrays(m, dirichlet, required):
    if isinstance(dirichlet, tuple):
        nodes, vals = dirichlet
        nodes = np.asarray(nodes, dtype=np.int64)
        vals = np.broadcast_to(np.asarray(vals), nodes.shape)
    else:
        nodes = np.fromiter(dirichlet.keys(), dtype=np.int64, count=len(dirichlet))
        vals = np.asarray(list(dirichlet.values()))
    missing = np.setdiff1d(required, nodes)
    if len(missing):
        raise DirichletMismatch(f"{len(missing)} fixed-boundary node(s) lack a value, "
                                f"e.g. node {int(missing[0])}")
    return nodes, vals


def solve_dirichlet(A, rhs, nodes, values):
    """Solve ``A x = rhs`` with ``x[nodes] = values`` by elimination."""
    n = A.shape[0]
    x = np.zeros(n, dtype=np.result_type(rhs, values, float))
    x[nodes] = values
    free = np.ones(n, dtype=bool)
    free[nodes] = False
    A = sp.csr_matrix(A)
    b = rhs[free] - A[free][:, nodes] @ x[nodes]
    x[free] = _factor_solve(A[free][:, free], b)
    return x


def solve_complex_robin(m, K, B, rhs, dirichlet, robin_sign=1):
    """Solve ``(K + i s B) u = rhs`` with Dirichlet values on the fixed boundary.

    Parameters
    ----------
    K, B : sparse matrices
        Stiffness and outer-boundary mass matrices assembled on ``m``.
    rhs : complex array, one entry per vertex
    dirichlet : mapping node -> value, or ``(nodes, values)`` arrays
        Must cover every inner-boundary node.
    robin_sign : +1 or -1
        Sign ``s`` of the Robin term (+1 for the state, -1 for the adjoint).
    """
    nodes, vals = _dirichlet_arrays(m, dirichlet, m.gamma_loop)
    n = m.n_vertices
    rhs = np.asarray(rhs, dtype=complex)
    vals = np.asarray(vals, dtype=complex)
    free = np.ones(n, dtype=bool)
    free[nodes] = False
    fixed_re = np.zeros(n)
    fixed_im = np.zeros(n)
    fixed_re[nodes] = vals.real
    fixed_im[nodes] = vals.imag

    K = sp.csr_matrix(K)
    sB = robin_sign * sp.csr_matrix(B)
    # move known Dirichlet columns to the right-hand side, block by block
    r1 = rhs.real - K @ fixed_re + sB @ fixed_im
    r2 = rhs.imag - sB @ fixed_re - K @ fixed_im
    Kff = K[free][:, free]
    Bff = sB[free][:, free]
    block = sp.bmat([[Kff, -Bff], [Bff, Kff]], format="csc")
    sol = _factor_solve(block, np.concatenate([r1[free], r2[free]]))
    nf = int(free.sum())
    re = fixed_re.copy()
    im = fixed_im.copy()
    re[free] = sol[:nf]
    im[free] = sol[nf:]
    return ComplexFieldP1(re, im)


def h1_matrix(m):
    return assemble_stiffness(m) + assemble_mass(m)


def solve_vector_h1(m, source_on_sigma, A=None):
    """H1 Riesz representative of the boundary functional ``int_Sigma f . phi``.

    ``source_on_sigma`` is an (n_sigma, 2) array in ``sigma_loop`` order; the
    boundary integral uses the trapezoidal (vertex-lumped) rule.  The field
    vanishes on the fixed boundary.  Returns a :class:`DescentField`.
    """
    src = np.asarray(source_on_sigma, float).reshape(len(m.sigma_loop), 2)
    A = h1_matrix(m) if A is None else A
    V = np.zeros((m.n_vertices, 2))
    if np.any(src != 0.0):
        load = np.column_stack([assemble_boundary_load_sigma(m, src[:, c], lumped=True)
                                for c in range(2)])
        free = np.ones(m.n_vertices, dtype=bool)
        free[m.gamma_loop] = False
        Aff = sp.csc_matrix(sp.csr_matrix(A)[free][:, free])
        for c in range(2):
            V[free, c] = _factor_solve(Aff, load[free, c])
    norm_sq = float(sum(V[:, c] @ (A @ V[:, c]) for c in range(2)))
    V.setflags(write=False)
    return DescentField(V, norm_sq)


# ---------------------------------------------------------------------------
# error norms

# symmetric 6-point rule, exact for polynomials of degree 4 on triangles
_QUAD_BARY = np.array([
    [0.816847572980459, 0.091576213509771, 0.091576213509771],
    [0.091576213509771, 0.816847572980459, 0.091576213509771],
    [0.091576213509771, 0.091576213509771, 0.816847572980459],
    [0.108103018168070, 0.445948490915965, 0.445948490915965],
    [0.445948490915965, 0.108103018168070, 0.445948490915965],
    [0.445948490915965, 0.445948490915965, 0.108103018168070],
])
_QUAD_W = np.array([0.109951743655322] * 3 + [0.223381589678011] * 3)


def l2_error(m, uh, exact):
    """L2 norm of ``uh - exact`` for a nodal P1 field and a callable ``exact(xy)``.

    ``exact`` receives an (n, 2) array of points and may return complex values.
    """
    area, _ = element_gradients(m)
    v = m.vertices[m.triangles]
    u = np.asarray(uh)[m.triangles]
    err = 0.0
    for b, w in zip(_QUAD_BARY, _QUAD_W):
        x = np.einsum("i,eik->ek", b, v)
        err += w * np.sum(area * np.abs(u @ b - exact(x)) ** 2)
    return float(np.sqrt(err))
