"""Annular triangulations with a fixed inner boundary and a free outer one.

Vertices on the inner curve are tagged ``G`` (fixed), vertices on the outer
curve ``S`` (free).  Meshes are immutable; :func:`move_mesh` returns a new
instance sharing the connectivity arrays.
"""

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix

from .errors import (DegenerateEdge, EmptyPolyline, GeometryOverlap,
                     MeshInversion, StarShapeViolation)
from .shapes import polyline_length, resample_closed

GAMMA = "G"
SIGMA = "S"


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def signed_areas(vertices, triangles):
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation of an annular domain.

    Attributes
    ----------
    vertices : (n, 2) float array
    triangles : (m, 3) int array, counterclockwise
    gamma_loop : int array
        Inner boundary vertices in counterclockwise order.
    sigma_loop : int array
        Outer boundary vertices in counterclockwise order.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    gamma_loop: np.ndarray
    sigma_loop: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, float))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64))
        object.__setattr__(self, "gamma_loop", _frozen(self.gamma_loop, np.int64))
        object.__setattr__(self, "sigma_loop", _frozen(self.sigma_loop, np.int64))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def gamma_nodes(self):
        return self.gamma_loop

    @property
    def sigma_nodes(self):
        return self.sigma_loop

    @property
    def sigma_edges(self):
        """(k, 2) consecutive vertex pairs along the counterclockwise outer loop."""
        return np.column_stack([self.sigma_loop, np.roll(self.sigma_loop, -1)])

    @property
    def gamma_edges(self):
        return np.column_stack([self.gamma_loop, np.roll(self.gamma_loop, -1)])

    @property
    def boundary_edges(self):
        """List of ``((i, j), tag)`` with tag ``"G"`` or ``"S"``."""
        out = [((int(i), int(j)), GAMMA) for i, j in self.gamma_edges]
        out += [((int(i), int(j)), SIGMA) for i, j in self.sigma_edges]
        return out

    @cached_property
    def interior_mask(self):
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.gamma_loop] = False
        mask[self.sigma_loop] = False
        return mask

    @cached_property
    def sigma_edge_triangles(self):
        """Index of the unique triangle containing each outer edge."""
        lookup = {}
        for t, tri in enumerate(self.triangles):
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                lookup[(int(a), int(b))] = t
        out = np.empty(len(self.sigma_loop), dtype=np.int64)
        for k, (a, b) in enumerate(self.sigma_edges):
            # CCW triangles traverse the outer boundary in the loop direction
            out[k] = lookup[(int(a), int(b))]
        return out

    def signed_areas(self):
        return signed_areas(self.vertices, self.triangles)

    def area(self):
        return float(np.sum(self.signed_areas()))

    def sigma_polyline(self):
        return np.array(self.vertices[self.sigma_loop])

    def gamma_polyline(self):
        return np.array(self.vertices[self.gamma_loop])

    def with_vertices(self, vertices):
        m = Mesh.__new__(Mesh)
        object.__setattr__(m, "vertices", _frozen(vertices, float))
        object.__setattr__(m, "triangles", self.triangles)
        object.__setattr__(m, "gamma_loop", self.gamma_loop)
        object.__setattr__(m, "sigma_loop", self.sigma_loop)
        if "sigma_edge_triangles" in self.__dict__:
            m.__dict__["sigma_edge_triangles"] = self.sigma_edge_triangles
        if "interior_mask" in self.__dict__:
            m.__dict__["interior_mask"] = self.interior_mask
        return m

    def validate(self):
        """Check the structural invariants; raise ``ValueError`` on violation."""
        if np.any(self.signed_areas() <= 0.0):
            raise ValueError("non-positive triangle area")
        counts = {}
        for tri in self.triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                counts[key] = counts.get(key, 0) + 1
        boundary = {k for k, c in counts.items() if c == 1}
        if any(c > 2 for c in counts.values()):
            raise ValueError("edge shared by more than two triangles")
        tagged = {(min(i, j), max(i, j)) for (i, j), _ in self.boundary_edges}
        if boundary != tagged:
            raise ValueError("tagged boundary edges differ from topological boundary")
        if set(self.gamma_loop.tolist()) & set(self.sigma_loop.tolist()):
            raise ValueError("inner and outer boundaries share vertices")
        if _polygon_area(self.sigma_polyline()) <= 0.0:
            raise ValueError("outer loop is not counterclockwise")
        if _polygon_area(self.gamma_polyline()) <= 0.0:
            raise ValueError("inner loop is not counterclockwise")
        return True


def _polygon_area(points):
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


# ---------------------------------------------------------------------------
# generation

def _ray_angles(points, center):
    d = points - center
    return np.arctan2(d[:, 1], d[:, 0])


def _check_star_shaped(polyline, center):
    ang = _ray_angles(polyline, center)
    closed = np.concatenate([ang, ang[:1]])
    steps = np.mod(np.diff(closed) + math.pi, 2.0 * math.pi) - math.pi
    total = float(np.sum(steps))
    if np.any(steps <= 0.0) or abs(total - 2.0 * math.pi) > 1e-8:
        raise StarShapeViolation(
            "inner boundary is not star-shaped with respect to "
            f"({center[0]:g}, {center[1]:g})")


def _arc_parameter(points):
    """Normalized arc-length parameter in [0, 1) of each polyline vertex."""
    closed = np.vstack([points, points[:1]])
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(closed, axis=0), axis=1))])
    return s[:-1] / s[-1], closed, s / s[-1]


def _zip_rings(inner_idx, inner_par, outer_idx, outer_par, vertices):
    """Triangulate the band between two nested rings sharing a parameter.

    Both rings start at parameter 0 and are ordered counterclockwise; at
    each step the shorter of the two candidate diagonals is taken unless
    that would produce a non-positive triangle.
    """
    na, nb = len(inner_idx), len(outer_idx)

    def A(i):
        return inner_idx[i % na]

    def B(j):
        return outer_idx[j % nb]

    def area(p, q, r):
        u = vertices[q] - vertices[p]
        v = vertices[r] - vertices[p]
        return 0.5 * (u[0] * v[1] - u[1] * v[0])

    tris = []
    i = j = 0
    while i < na or j < nb:
        adv_a = (A(i), B(j), A(i + 1))
        adv_b = (A(i), B(j), B(j + 1))
        if i == na:
            take_a = False
        elif j == nb:
            take_a = True
        else:
            da = np.linalg.norm(vertices[A(i + 1)] - vertices[B(j)])
            db = np.linalg.norm(vertices[A(i)] - vertices[B(j + 1)])
            take_a = da <= db
            if area(*(adv_a if take_a else adv_b)) <= 0.0:
                take_a = not take_a
        if take_a:
            tris.append(adv_a)
            i += 1
        else:
            tris.append(adv_b)
            j += 1
    return tris


def _laplacian_smooth(vertices, triangles, movable, iterations):
    if iterations <= 0:
        return vertices
    n = len(vertices)
    rows = triangles[:, [0, 1, 2, 1, 2, 0]].ravel()
    cols = triangles[:, [1, 2, 0, 0, 1, 2]].ravel()
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    adj.data[:] = 1.0
    deg = np.asarray(adj.sum(axis=1)).ravel()
    x = vertices.copy()
    for _ in range(iterations):
        avg = (adj @ x) / deg[:, None]
        trial = x.copy()
        trial[movable] = avg[movable]
        if np.any(signed_areas(trial, triangles) <= 0.0):
            break
        x = trial
    return x


def generate_annular_mesh(inner, outer_radius, h, smooth_iters=5):
    """Mesh the region between ``inner`` and the circle C(0, outer_radius).

    The inner polyline and the outer circle are put in correspondence by
    normalized arc length (the circle starts at the polar angle of the
    first inner vertex).  Intermediate rings are linear blends of the two
    curves, resampled to spacing ``h``, and consecutive rings are zipped
    into triangles.  The result is a pure function of the inputs.

    Parameters
    ----------
    inner : shape object
        Provides ``star_center`` and ``polyline(h)`` (see :mod:`ccbm.shapes`).
    outer_radius : float
        Radius of the initial free boundary, centred at the origin.
    h : float
        Target edge length.
    smooth_iters : int
        Jacobi Laplacian smoothing passes on interior nodes; a pass that
        would invert a triangle is discarded.

    Raises
    ------
    StarShapeViolation, GeometryOverlap
    """
    if not h > 0:
        raise ValueError("h must be positive")
    center = np.asarray(inner.star_center, float)
    inner_pts = np.asarray(inner.polyline(h), float)
    if len(inner_pts) < 3:
        raise EmptyPolyline("inner boundary has fewer than 3 vertices")
    if np.max(np.linalg.norm(inner_pts, axis=1)) >= outer_radius \
            or np.linalg.norm(center) >= outer_radius:
        raise GeometryOverlap("outer circle does not strictly enclose the inner boundary")
    if _polygon_area(inner_pts) <= 0.0:
        inner_pts = inner_pts[::-1]
    _check_star_shaped(inner_pts, center)

    inner_par, inner_closed, inner_s = _arc_parameter(inner_pts)
    phi0 = math.atan2(inner_pts[0, 1], inner_pts[0, 0])

    def outer_at(par):
        ang = phi0 + 2.0 * math.pi * par
        return outer_radius * np.column_stack([np.cos(ang), np.sin(ang)])

    def inner_at(par):
        return np.column_stack([np.interp(par, inner_s, inner_closed[:, 0]),
                                np.interp(par, inner_s, inner_closed[:, 1])])

    n_out = max(len(inner_pts), int(math.ceil(2.0 * math.pi * outer_radius / h)))
    outer_par = np.arange(n_out) / n_out
    outer_pts = outer_at(outer_par)

    grid = np.unique(np.concatenate([inner_par, outer_par,
                                     np.arange(8192) / 8192.0]))
    g_in, g_out = inner_at(grid), outer_at(grid)
    n_layers = max(1, int(round(float(np.mean(np.linalg.norm(g_out - g_in, axis=1))) / h)))

    rings = [inner_pts]
    params = [inner_par]
    for layer in range(1, n_layers):
        s = layer / n_layers
        dense = (1.0 - s) * g_in + s * g_out
        closed = np.vstack([dense, dense[:1]])
        arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(closed, axis=0), axis=1))])
        n = max(len(rings[-1]), int(round(arc[-1] / h)))
        targets = np.arange(n) * (arc[-1] / n)
        rings.append(np.column_stack([np.interp(targets, arc, closed[:, 0]),
                                      np.interp(targets, arc, closed[:, 1])]))
        params.append(np.interp(targets, arc, np.append(grid, 1.0)))
    rings.append(outer_pts)
    params.append(outer_par)

    vertices = np.vstack(rings)
    offsets = np.cumsum([0] + [len(r) for r in rings])
    ring_idx = [np.arange(offsets[k], offsets[k + 1]) for k in range(len(rings))]
    triangles = []
    for k in range(len(rings) - 1):
        triangles.extend(_zip_rings(ring_idx[k], params[k], ring_idx[k + 1],
                                    params[k + 1], vertices))
    triangles = np.asarray(triangles, dtype=np.int64)
    if np.any(signed_areas(vertices, triangles) <= 0.0):
        raise GeometryOverlap("blended rings cross; the inner curve is too far from "
                              "a circle for this mesher")

    movable = np.ones(len(vertices), dtype=bool)
    movable[ring_idx[0]] = False
    movable[ring_idx[-1]] = False
    vertices = _laplacian_smooth(vertices, triangles, movable, smooth_iters)
    return Mesh(vertices, triangles, ring_idx[0], ring_idx[-1])


# ---------------------------------------------------------------------------
# boundary geometry

@dataclass(frozen=True, eq=False)
class BoundaryGeometry:
    """Per-vertex data on the free boundary, in ``sigma_loop`` order.

    ``normals`` are outward unit normals, ``curvature`` is positive for a
    convex boundary, ``weights`` are lumped arc-length weights (half the sum
    of the two adjacent edge lengths).  ``edge_lengths`` and ``edge_tangents``
    refer to the edge leaving each vertex.
    """

    normals: np.ndarray
    curvature: np.ndarray
    weights: np.ndarray
    edge_lengths: np.ndarray
    edge_tangents: np.ndarray

    @property
    def perimeter(self):
        return float(np.sum(self.edge_lengths))


def polyline_geometry(points):
    """Normals, turning-angle curvature and arc weights of a CCW closed polyline."""
    points = np.asarray(points, float)
    e = np.roll(points, -1, axis=0) - points
    ell = np.linalg.norm(e, axis=1)
    perimeter = float(np.sum(ell))
    if len(points) < 3 or perimeter == 0.0:
        raise EmptyPolyline("polyline needs at least three distinct vertices")
    if np.any(ell < 1e-12 * perimeter):
        raise DegenerateEdge("outer boundary has a (nearly) zero-length edge")
    tau = e / ell[:, None]
    edge_n = np.column_stack([tau[:, 1], -tau[:, 0]])
    tau_prev = np.roll(tau, 1, axis=0)
    ell_prev = np.roll(ell, 1)
    # two edges meet at each vertex, so angle weighting reduces to the bisector
    n = edge_n + np.roll(edge_n, 1, axis=0)
    n /= np.linalg.norm(n, axis=1)[:, None]
    turn = np.arctan2(tau_prev[:, 0] * tau[:, 1] - tau_prev[:, 1] * tau[:, 0],
                      np.sum(tau_prev * tau, axis=1))
    weights = 0.5 * (ell + ell_prev)
    return BoundaryGeometry(n, turn / weights, weights, ell, tau)


def boundary_geometry(m):
    return polyline_geometry(m.vertices[m.sigma_loop])


# ---------------------------------------------------------------------------
# motion and diagnostics

def move_mesh(m, V, t):
    """Return the mesh with every vertex ``x`` moved to ``x + t V(x)``.

    Raises
    ------
    MeshInversion
        If any triangle ends with non-positive signed area.
    """
    V = np.asarray(getattr(V, "values", V), float)
    if V.shape != m.vertices.shape:
        raise ValueError("displacement field must have one 2-vector per vertex")
    if np.any(V[m.gamma_loop] != 0.0):
        raise ValueError("displacement must vanish on the fixed boundary")
    if t == 0:
        return m
    new = m.vertices + t * V
    new[m.gamma_loop] = m.vertices[m.gamma_loop]
    areas = signed_areas(new, m.triangles)
    amin = float(areas.min())
    if not amin > 0.0:
        raise MeshInversion(f"triangle inverted (min signed area {amin:.3e})", min_area=amin)
    return m.with_vertices(new)


def _point_segment_distances(points, seg_a, seg_b, chunk=2048):
    out = np.empty(len(points))
    e = seg_b - seg_a
    ee = np.einsum("ij,ij->i", e, e)
    ee = np.where(ee > 0.0, ee, 1.0)
    for lo in range(0, len(points), chunk):
        p = points[lo:lo + chunk, None, :]
        w = p - seg_a[None, :, :]
        s = np.clip(np.einsum("ijk,jk->ij", w, e) / ee, 0.0, 1.0)
        d = w - s[:, :, None] * e[None, :, :]
        out[lo:lo + chunk] = np.sqrt(np.min(np.einsum("ijk,ijk->ij", d, d), axis=1))
    return out


def hausdorff_distance(a, b):
    """Symmetric Hausdorff distance between two closed polylines.

    Distances are measured from the vertices of each polyline to the
    segments of the other.
    """
    a = np.asarray(a, float).reshape(-1, 2)
    b = np.asarray(b, float).reshape(-1, 2)
    if len(a) == 0 or len(b) == 0:
        raise EmptyPolyline("hausdorff_distance needs two non-empty polylines")
    d_ab = _point_segment_distances(a, b, np.roll(b, -1, axis=0))
    d_ba = _point_segment_distances(b, a, np.roll(a, -1, axis=0))
    return float(max(d_ab.max(), d_ba.max()))


@dataclass(frozen=True)
class QualityReport:
    min_area: float
    min_aspect: float
    mean_aspect: float
    max_aspect: float

    @property
    def inverted(self):
        return not self.min_area > 0.0


def mesh_quality(m):
    """Aspect ratio circumradius / (2 inradius); 1 for an equilateral triangle."""
    v = m.vertices
    t = m.triangles
    a = np.linalg.norm(v[t[:, 1]] - v[t[:, 2]], axis=1)
    b = np.linalg.norm(v[t[:, 2]] - v[t[:, 0]], axis=1)
    c = np.linalg.norm(v[t[:, 0]] - v[t[:, 1]], axis=1)
    area = m.signed_areas()
    s = 0.5 * (a + b + c)
    with np.errstate(divide="ignore", invalid="ignore"):
        # R / (2 r) = a b c s / (8 A^2)
        aspect = np.where(area > 0.0, a * b * c * s / (8.0 * area ** 2), np.inf)
    return QualityReport(float(area.min()), float(aspect.min()),
                         float(np.mean(aspect)), float(aspect.max()))


# ---------------------------------------------------------------------------
# text IO

def write_mesh(m, path):
    edges = m.boundary_edges
    with open(path, "w") as f:
        f.write(f"vertices {m.n_vertices} triangles {len(m.triangles)} boundary {len(edges)}\n")
        for x, y in m.vertices:
            f.write(f"{x:.17g} {y:.17g}\n")
        for i, j, k in m.triangles:
            f.write(f"{i} {j} {k}\n")
        for (i, j), tag in edges:
            f.write(f"{i} {j} {tag}\n")


def _loop_from_edges(edges):
    nxt = dict(edges)
    start = edges[0][0]
    loop = [start]
    while True:
        v = nxt[loop[-1]]
        if v == start:
            break
        loop.append(v)
    return np.asarray(loop, dtype=np.int64)


def read_mesh(path):
    with open(path) as f:
        head = f.readline().split()
        nv, nt, nb = int(head[1]), int(head[3]), int(head[5])
        verts = np.array([[float(s) for s in f.readline().split()] for _ in range(nv)])
        tris = np.array([[int(s) for s in f.readline().split()] for _ in range(nt)],
                        dtype=np.int64)
        gam, sig = [], []
        for _ in range(nb):
            i, j, tag = f.readline().split()
            (gam if tag == GAMMA else sig).append((int(i), int(j)))
    return Mesh(verts, tris, _loop_from_edges(gam), _loop_from_edges(sig))


def write_polyline(points, path):
    with open(path, "w") as f:
        for x, y in np.asarray(points, float):
            f.write(f"{x:.17g} {y:.17g}\n")


def read_polyline(path):
    return np.loadtxt(path, ndmin=2)


def mean_edge_length(m):
    """Mean length over the unique edges of the triangulation."""
    t = m.triangles
    e = np.sort(np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    e = np.unique(e, axis=0)
    return float(np.mean(np.linalg.norm(m.vertices[e[:, 0]] - m.vertices[e[:, 1]], axis=1)))
