import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ccbm.errors import (DegenerateEdge, EmptyPolyline, GeometryOverlap, MeshInversion,
                         StarShapeViolation)
from ccbm.fem import solve_vector_h1
from ccbm.mesh import (Mesh, boundary_geometry, generate_annular_mesh, hausdorff_distance,
                       mean_edge_length, mesh_quality, move_mesh, polyline_geometry,
                       read_mesh, read_polyline, write_mesh, write_polyline)
from ccbm.shapes import Circle, PolylineBoundary, Ribbon, lshape


def _perimeter(p):
    return float(np.sum(np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)))


# ---------------------------------------------------------------------------
# generation

def test_annulus_perimeters(annulus_coarse):
    m = annulus_coarse
    m.validate()
    assert _perimeter(m.gamma_polyline()) == pytest.approx(math.pi, rel=0.02)
    assert _perimeter(m.sigma_polyline()) == pytest.approx(2.5 * math.pi, rel=0.02)


def test_lshape_mesh_valid_with_perimeter_two():
    m = generate_annular_mesh(lshape(), 1.25, 0.05)
    m.validate()
    assert _perimeter(m.gamma_polyline()) == pytest.approx(2.0, abs=1e-12)
    # area of the disc minus the L (3/16), up to the polygonal outer circle
    assert m.area() == pytest.approx(math.pi * 1.25 ** 2 - 0.1875, rel=2e-3)


@pytest.mark.parametrize("shape", [Circle(0.5), lshape(), Ribbon()])
def test_generated_meshes_have_reasonable_quality(shape):
    m = generate_annular_mesh(shape, 1.25, 0.05)
    m.validate()
    q = mesh_quality(m)
    assert q.min_area > 0 and q.max_aspect < 5.0
    assert 0.7 * 0.05 < mean_edge_length(m) < 1.3 * 0.05


def test_outer_inside_inner_is_overlap():
    with pytest.raises(GeometryOverlap):
        generate_annular_mesh(Circle(0.5), 0.4, 0.1)


def test_not_star_shaped_is_rejected():
    # a C-shaped polygon: rays from the center cross it more than once
    c = [(-1, -1), (1, -1), (1, -0.5), (-0.5, -0.5), (-0.5, 0.5), (1, 0.5), (1, 1), (-1, 1)]
    shape = PolylineBoundary(tuple(c), (0.75, 0.0))
    with pytest.raises(StarShapeViolation):
        generate_annular_mesh(shape, 3.0, 0.1)


def test_lshape_from_reentrant_side_is_rejected():
    with pytest.raises(StarShapeViolation):
        generate_annular_mesh(lshape(star_center=(0.2, 0.2)), 1.25, 0.1)


def test_generation_is_deterministic():
    a = generate_annular_mesh(Ribbon(), 1.25, 0.1)
    b = generate_annular_mesh(Ribbon(), 1.25, 0.1)
    np.testing.assert_array_equal(a.vertices, b.vertices)
    np.testing.assert_array_equal(a.triangles, b.triangles)


def test_every_sigma_edge_has_one_triangle(lmesh):
    tri = lmesh.triangles[lmesh.sigma_edge_triangles]
    for (a, b), t in zip(lmesh.sigma_edges, tri):
        assert a in t and b in t


# ---------------------------------------------------------------------------
# boundary geometry

def test_curvature_of_256_gon():
    g = polyline_geometry(Circle(0.7).polyline(2 * math.pi * 0.7 / 256))
    np.testing.assert_allclose(g.curvature, 1 / 0.7, rtol=1e-3)


def test_square_has_zero_curvature_between_corners():
    side = np.linspace(-1, 1, 11)[:-1]
    sq = np.vstack([np.column_stack([side, -np.ones(10)]),
                    np.column_stack([np.ones(10), side]),
                    np.column_stack([-side, np.ones(10)]),
                    np.column_stack([-np.ones(10), -side])])
    g = polyline_geometry(sq)
    corners = np.arange(0, 40, 10)
    mask = np.ones(40, dtype=bool)
    mask[corners] = False
    assert np.all(np.abs(g.curvature[mask]) < 1e-12)
    # corner turning angles are pi/2 each
    np.testing.assert_allclose(g.curvature[corners] * g.weights[corners], math.pi / 2)


def test_64_gon_normals_are_radial():
    p = Circle(1.0).polyline(2 * math.pi / 64)
    g = polyline_geometry(p)
    radial = p / np.linalg.norm(p, axis=1)[:, None]
    ang = np.arctan2(radial[:, 0] * g.normals[:, 1] - radial[:, 1] * g.normals[:, 0], np.sum(radial * g.normals, axis=1))
    assert np.max(np.abs(ang)) < 1e-12
    np.testing.assert_allclose(np.linalg.norm(g.normals, axis=1), 1.0, atol=1e-15)


def test_weights_sum_to_perimeter(lmesh):
    g = boundary_geometry(lmesh)
    assert np.sum(g.weights) == pytest.approx(g.perimeter, rel=1e-14)


def test_curvature_error_is_second_order():
    errs = []
    for n in (32, 64, 128, 256):
        # irregular spacing keeps the estimate honest (a regular polygon is exact up to sin/x)
        t = 2 * math.pi * (np.arange(n) + 0.25 * np.sin(2 * math.pi * np.arange(n) / n * 3)) / n
        p = 0.7 * np.column_stack([np.cos(t), np.sin(t)])
        errs.append(np.max(np.abs(polyline_geometry(p).curvature - 1 / 0.7)))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) > 1.8


def test_degenerate_edge():
    p = Circle(1.0).polyline(0.1)
    p = np.insert(p, 1, p[0] + 1e-15, axis=0)
    with pytest.raises(DegenerateEdge):
        polyline_geometry(p)


# ---------------------------------------------------------------------------
# motion

def _radial_field(m):
    """H1 extension of the outward unit normal on the outer boundary."""
    g = boundary_geometry(m)
    return solve_vector_h1(m, g.normals).values / 1.0, g


def test_move_zero_step_is_identity(annulus_coarse):
    V = np.zeros_like(annulus_coarse.vertices)
    assert move_mesh(annulus_coarse, V, 0.0) is annulus_coarse


def test_radial_field_grows_mean_radius_by_t():
    m = generate_annular_mesh(Circle(0.5), 1.0, 0.05)
    V = np.zeros_like(m.vertices)
    V[m.sigma_loop] = m.vertices[m.sigma_loop]  # unit radial on R = 1
    # harmonic-ish interior: blend linearly in the radius
    rho = np.linalg.norm(m.vertices, axis=1)
    inner = m.interior_mask
    V[inner] = (m.vertices[inner] / rho[inner, None]) * ((rho[inner] - 0.5) / 0.5)[:, None]
    t = 1e-3
    moved = move_mesh(m, V, t)
    r0 = np.mean(np.linalg.norm(m.sigma_polyline(), axis=1))
    r1 = np.mean(np.linalg.norm(moved.sigma_polyline(), axis=1))
    assert r1 - r0 == pytest.approx(t, rel=1e-12)


def test_huge_step_inverts(annulus_coarse):
    V, _ = _radial_field(annulus_coarse)
    with pytest.raises(MeshInversion) as info:
        move_mesh(annulus_coarse, -V, 50.0)
    assert info.value.min_area <= 0


def test_field_nonzero_on_gamma_is_refused(annulus_coarse):
    V = np.ones_like(annulus_coarse.vertices)
    with pytest.raises(ValueError):
        move_mesh(annulus_coarse, V, 0.1)


def test_quality_flags_inversion(annulus_coarse):
    V, _ = _radial_field(annulus_coarse)
    flipped = annulus_coarse.with_vertices(annulus_coarse.vertices - 50.0 * V)
    assert mesh_quality(flipped).inverted
    assert not mesh_quality(annulus_coarse).inverted


def test_equilateral_aspect_is_one():
    v = np.array([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]])
    m = Mesh(v, [[0, 1, 2]], [], [0, 1, 2])
    assert mesh_quality(m).max_aspect == pytest.approx(1.0, abs=1e-12)


@given(t=st.floats(-0.05, 0.05), seed=st.integers(0, 2 ** 31))
def test_move_is_reversible(annulus_coarse, t, seed):
    m = annulus_coarse
    rng = np.random.default_rng(seed)
    V = rng.normal(size=m.vertices.shape) * 0.1
    V[m.gamma_loop] = 0.0
    try:
        there = move_mesh(m, V, t)
        back = move_mesh(there, V, -t)
    except MeshInversion:
        return
    np.testing.assert_allclose(back.vertices, m.vertices, atol=1e-12, rtol=0)
    assert np.array_equal(back.vertices[m.gamma_loop], m.vertices[m.gamma_loop])


# ---------------------------------------------------------------------------
# Hausdorff distance

def _dense_hausdorff(a, b, per_edge=400):
    def densify(p):
        s = np.linspace(0, 1, per_edge, endpoint=False)[:, None, None]
        q = np.roll(p, -1, axis=0)
        return (p[None] + s * (q - p)[None]).reshape(-1, 2)

    A, B = densify(a), densify(b)

    def one_sided(X, Y):
        return max(np.min(np.linalg.norm(Y - x, axis=1)) for x in X)

    return max(one_sided(A, B), one_sided(B, A))


def test_identical_polylines_are_at_distance_zero():
    p = Ribbon().polyline(0.05)
    assert hausdorff_distance(p, p) == 0.0


def test_concentric_circles():
    a = Circle(0.7).polyline(2 * math.pi * 0.7 / 4096)
    b = Circle(1.25).polyline(2 * math.pi * 1.25 / 4096)
    assert hausdorff_distance(a, b) == pytest.approx(0.55, abs=1e-6)


def test_square_vs_circle_against_dense_sampling():
    sq = np.array([[1, -1], [1, 1], [-1, 1], [-1, -1]], float)
    circ = Circle(1.0).polyline(2 * math.pi / 64)
    d = hausdorff_distance(sq, circ)
    assert d == pytest.approx(_dense_hausdorff(sq, circ), abs=1e-4)


def test_empty_polyline():
    with pytest.raises(EmptyPolyline):
        hausdorff_distance(np.zeros((0, 2)), Circle(1.0).polyline(0.1))


_poly = st.builds(lambda r, k, a, ph: np.column_stack(
    [(r + a * np.cos(k * np.linspace(0, 2 * np.pi, 40, endpoint=False) + ph))
     * np.cos(np.linspace(0, 2 * np.pi, 40, endpoint=False)),
     (r + a * np.cos(k * np.linspace(0, 2 * np.pi, 40, endpoint=False) + ph))
     * np.sin(np.linspace(0, 2 * np.pi, 40, endpoint=False))]),
    st.floats(0.5, 2.0), st.integers(0, 5), st.floats(0.0, 0.3), st.floats(0, 6.3))


@given(_poly, _poly, _poly)
def test_hausdorff_is_a_metric_on_samples(a, b, c):
    dab = hausdorff_distance(a, b)
    assert dab == hausdorff_distance(b, a)
    assert dab <= hausdorff_distance(a, c) + hausdorff_distance(c, b) + 1e-12


# ---------------------------------------------------------------------------
# text IO

def test_mesh_file_round_trip(tmp_path, lmesh):
    path = tmp_path / "mesh.txt"
    write_mesh(lmesh, path)
    head = path.read_text().splitlines()[0]
    assert head == (f"vertices {lmesh.n_vertices} triangles {len(lmesh.triangles)} "
                    f"boundary {len(lmesh.gamma_loop) + len(lmesh.sigma_loop)}")
    back = read_mesh(path)
    np.testing.assert_array_equal(back.vertices, lmesh.vertices)
    np.testing.assert_array_equal(back.triangles, lmesh.triangles)
    assert sorted(back.sigma_loop) == sorted(lmesh.sigma_loop)
    back.validate()


def test_polyline_round_trip(tmp_path):
    p = Ribbon().polyline(0.1)
    write_polyline(p, tmp_path / "p.txt")
    np.testing.assert_array_equal(read_polyline(tmp_path / "p.txt"), p)
