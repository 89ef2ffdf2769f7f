import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grainpd.geometry import (MeshError, ShapeError, ShapeSpec, generate_shape,
                              mesh_size, polygon_area, read_mesh,
                              shape_to_cloud, to_meshless, triangulate,
                              write_mesh, TriMesh)


def shoelace(verts):
    # independent area oracle
    total = 0.0
    n = len(verts)
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        total += x0 * y1 - x1 * y0
    return 0.5 * total


def brute_min_distance(nodes):
    best = math.inf
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            dx = nodes[i, 0] - nodes[j, 0]
            dy = nodes[i, 1] - nodes[j, 1]
            best = min(best, math.sqrt(dx * dx + dy * dy))
    return best


class TestShapes:
    def test_hexagon_vertices(self):
        poly = generate_shape(ShapeSpec(kind="hexagon", center=(0, 0),
                                        radius=1.0, axis=(1, 0)))
        assert np.allclose(poly[0], (1.0, 0.0), atol=1e-15)
        assert np.allclose(poly[1], (0.5, math.sqrt(3) / 2), atol=1e-15)
        assert len(poly) == 6

    def test_concave_is_valid_and_symmetric(self):
        spec = ShapeSpec(kind="concave", center=(1.5, 1.5), radius=1.0,
                         axis=(0, 1), neck=0.5)
        poly = generate_shape(spec)
        assert polygon_area(poly) > 0
        mirrored = np.column_stack([3.0 - poly[:, 0], poly[:, 1]])
        # reflection about x = 1.5 maps the vertex set onto itself
        for p in mirrored:
            assert np.min(np.hypot(*(poly - p).T)) < 1e-12

    def test_concave_has_reflex_vertices(self):
        poly = generate_shape(ShapeSpec(kind="concave", radius=1.0,
                                        axis=(0, 1), neck=0.5))
        n = len(poly)
        cross = []
        for i in range(n):
            a, b, c = poly[i - 1], poly[i], poly[(i + 1) % n]
            ab, bc = b - a, c - b
            cross.append(ab[0] * bc[1] - ab[1] * bc[0])
        assert sum(1 for c in cross if c < 0) == 2

    def test_concave_area_matches_shoelace_oracle(self):
        poly = generate_shape(ShapeSpec(kind="concave", radius=1.0,
                                        axis=(0, 1), neck=0.5,
                                        center=(1.5, 1.5)))
        assert polygon_area(poly) == pytest.approx(shoelace(poly), abs=1e-12)

    def test_degenerate_specs_rejected(self):
        with pytest.raises(ShapeError):
            ShapeSpec(kind="concave", radius=1.0, neck=1.0)  # w >= R
        with pytest.raises(ShapeError):
            ShapeSpec(kind="disk", radius=0.0)
        with pytest.raises(ShapeError):
            ShapeSpec(kind="hexagon", radius=1.0, axis=(1.0, 0.5))
        with pytest.raises(ShapeError):
            ShapeSpec(kind="blob", radius=1.0)

    @given(st.floats(-math.pi, math.pi), st.sampled_from(["hexagon", "concave"]))
    @settings(max_examples=40, deadline=None)
    def test_rotation_covariance(self, angle, kind):
        base = ShapeSpec(kind=kind, center=(0.3, -0.2), radius=1.0,
                         axis=(0, 1), neck=0.4)
        rotated_spec = ShapeSpec(kind=kind, center=(0.3, -0.2), radius=1.0,
                                 axis=(0, 1), neck=0.4, rotation=angle)
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, -s], [s, c]])
        center = np.array([0.3, -0.2])
        expected = (generate_shape(base) - center) @ rot.T + center
        assert np.allclose(generate_shape(rotated_spec), expected, atol=1e-12)


class TestTriangulate:
    def test_unit_square_area(self):
        square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        mesh = triangulate(square, 0.5)
        assert mesh.areas().sum() == pytest.approx(1.0, abs=1e-10)

    def test_disk_area_matches_polygon(self):
        poly = generate_shape(ShapeSpec(kind="disk", radius=1e-3), 0.2e-3)
        mesh = triangulate(poly, 0.2e-3)
        area = polygon_area(poly)
        assert mesh.areas().sum() == pytest.approx(area, rel=1e-10)

    def test_disk_mesh_size_in_band(self):
        # target 0.15 mm must land the measured h in [0.07, 0.15] mm
        cloud = shape_to_cloud(ShapeSpec(kind="disk", radius=1e-3), 0.15e-3)
        assert 0.07e-3 <= cloud.h <= 0.15e-3

    def test_paper_scale_disk(self):
        from grainpd.presets import mesh_target

        cloud = shape_to_cloud(ShapeSpec(kind="disk", radius=1e-3),
                               mesh_target(0.1423e-3))
        assert abs(cloud.h - 0.1423e-3) < 0.01e-3

    def test_max_edge_bound(self):
        poly = generate_shape(ShapeSpec(kind="hexagon", radius=1e-3), 0.2e-3)
        mesh = triangulate(poly, 0.2e-3)
        edges = mesh.nodes[mesh.triangles] - mesh.nodes[np.roll(mesh.triangles, 1, axis=1)]
        assert np.hypot(edges[..., 0], edges[..., 1]).max() <= 2 * 0.2e-3

    def test_bad_target_rejected(self):
        square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        with pytest.raises(MeshError):
            triangulate(square, 0.0)
        with pytest.raises(MeshError):
            triangulate(square, 5.0)

    @given(st.sampled_from(["disk", "hexagon", "concave", "rectangle"]),
           st.floats(0.15, 0.45))
    @settings(max_examples=20, deadline=None)
    def test_partition_of_unity(self, kind, rel_h):
        if kind == "rectangle":
            spec = ShapeSpec(kind=kind, corners=((0.0, 0.0), (2.0, 0.7)))
        else:
            spec = ShapeSpec(kind=kind, radius=1.0, axis=(0, 1), neck=0.5)
        poly = generate_shape(spec, rel_h)
        mesh = triangulate(poly, rel_h)
        cloud = to_meshless(mesh)
        assert cloud.total_volume == pytest.approx(polygon_area(poly), rel=1e-10)


class TestToMeshless:
    def test_single_triangle_thirds(self):
        mesh = TriMesh(nodes=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                       triangles=np.array([[0, 1, 2]]))
        cloud = to_meshless(mesh)
        assert np.allclose(cloud.volumes, 0.5 / 3.0)

    def test_split_square_lumping(self):
        # two triangles sharing the diagonal: shared vertices get 1/3,
        # the opposite corners 1/6
        nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        tris = np.array([[0, 1, 2], [0, 2, 3]])
        cloud = to_meshless(TriMesh(nodes=nodes, triangles=tris))
        assert cloud.volumes[0] == pytest.approx(1.0 / 3.0)
        assert cloud.volumes[2] == pytest.approx(1.0 / 3.0)
        assert cloud.volumes[1] == pytest.approx(1.0 / 6.0)
        assert cloud.volumes[3] == pytest.approx(1.0 / 6.0)
        assert cloud.volumes.sum() == pytest.approx(1.0)

    def test_empty_mesh_rejected(self):
        with pytest.raises(MeshError):
            to_meshless(TriMesh(nodes=np.zeros((0, 2)),
                                triangles=np.zeros((0, 3), dtype=int)))


class TestMeshSize:
    def test_two_nodes(self):
        assert mesh_size(np.array([[0.0, 0.0], [0.5, 0.0]])) == 0.5

    def test_uniform_grid(self):
        xs, ys = np.meshgrid(np.arange(5) * 0.25, np.arange(4) * 0.25)
        nodes = np.column_stack([xs.ravel(), ys.ravel()])
        assert mesh_size(nodes) == pytest.approx(0.25)

    def test_single_node_rejected(self):
        with pytest.raises(MeshError):
            mesh_size(np.array([[0.0, 0.0]]))

    @given(st.integers(0, 2 ** 31 - 1), st.integers(10, 400))
    @settings(max_examples=25, deadline=None)
    def test_matches_brute_force(self, seed, n):
        rng = np.random.default_rng(seed)
        nodes = rng.uniform(-1, 1, size=(n, 2))
        assert mesh_size(nodes) == brute_min_distance(nodes)


class TestMeshIO:
    def test_round_trip(self):
        poly = generate_shape(ShapeSpec(kind="hexagon", radius=1.0), 0.3)
        mesh = triangulate(poly, 0.3)
        back = read_mesh(write_mesh(mesh))
        assert np.array_equal(back.nodes, mesh.nodes)
        assert np.array_equal(back.triangles, mesh.triangles)

    def test_comments_and_orientation(self):
        text = "\n".join([
            "# a comment",
            "nodes 3",
            "0 0.0 0.0",
            "1 1.0 0.0",
            "2 0.0 1.0",
            "triangles 1",
            "0 0 2 1",  # clockwise on purpose
            "",
        ])
        mesh = read_mesh(text)
        assert mesh.areas()[0] > 0

    def test_bad_header(self):
        with pytest.raises(MeshError):
            read_mesh("vertices 3\n")

    def test_duplicate_node_id(self):
        text = "nodes 2\n0 0 0\n0 1 0\ntriangles 1\n0 0 1 1\n"
        with pytest.raises(MeshError):
            read_mesh(text)
