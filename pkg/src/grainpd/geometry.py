"""Particle and wall geometry: shape outlines, triangulation, meshless clouds.

Shapes are closed 2D polygons (disks are inscribed N-gons). A polygon is
triangulated by seeding a hexagonal lattice inside it plus points along the
boundary and taking the Delaunay triangulation restricted to the polygon.
The triangulation is then lumped into a meshless cloud: one node per mesh
vertex, nodal volume equal to one third of the incident triangle areas
(times unit thickness), which is exact for linear hat functions.

All lengths are in meters; "volumes" are areas times a 1 m out-of-plane
thickness, so they carry m^3 units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import Delaunay, cKDTree

THICKNESS = 1.0  # out-of-plane thickness, m

# Interior lattice points closer than this (times lattice spacing) to the
# polygon boundary are dropped so boundary and lattice nodes never collide.
_BOUNDARY_MARGINS = (0.72, 0.60, 0.85, 0.50)


class ShapeError(ValueError):
    """Degenerate or inconsistent shape parameters."""


class MeshError(ValueError):
    """A triangulation could not be built or fails its invariants."""


def _rot(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class ShapeSpec:
    """Parametric outline of a particle or wall.

    kind: one of ``disk``, ``hexagon``, ``concave``, ``rectangle``.
    ``axis`` orients hexagons and concave shapes (unit vector), ``rotation``
    applies an extra rotation about the center, ``neck`` is the half-width
    of the concave shape's neck, and ``corners`` gives the (lower-left,
    upper-right) corners of an axis-aligned rectangle before rotation.
    """

    kind: str
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.0
    axis: tuple[float, float] = (1.0, 0.0)
    rotation: float = 0.0
    neck: float = 0.0
    corners: tuple[tuple[float, float], tuple[float, float]] | None = None

    def __post_init__(self):
        if self.kind not in ("disk", "hexagon", "concave", "rectangle"):
            raise ShapeError(f"unknown shape kind {self.kind!r}")
        if self.kind == "rectangle":
            if self.corners is None:
                raise ShapeError("rectangle requires corners")
            (x0, y0), (x1, y1) = self.corners
            if not (x1 > x0 and y1 > y0):
                raise ShapeError("rectangle corners must be (lower-left, upper-right)")
            return
        if not self.radius > 0.0:
            raise ShapeError(f"radius must be positive, got {self.radius}")
        a = np.asarray(self.axis, dtype=float)
        if abs(float(np.hypot(a[0], a[1])) - 1.0) > 1e-12:
            raise ShapeError(f"axis must be a unit vector, got {self.axis}")
        if self.kind == "concave" and not (0.0 < self.neck < self.radius):
            raise ShapeError(
                f"concave neck half-width must satisfy 0 < w < R, got w={self.neck}, R={self.radius}"
            )


def generate_shape(spec: ShapeSpec, target_h: float | None = None) -> np.ndarray:
    """Return the closed outline of ``spec`` as an (V, 2) CCW vertex array.

    Disks become inscribed regular N-gons with N = max(16, ceil(2*pi*R/target_h));
    ``target_h`` defaults to R/8 if not supplied.  Hexagons have vertex 0 at
    ``center + R*axis`` and successive vertices at 60 degree steps.  The
    concave shape is a hexagon whose two edge midpoints on the axis are
    pulled inward to distance ``neck`` from the center, giving an
    axis-symmetric outline with two reflex vertices.
    """
    c = np.asarray(spec.center, dtype=float)
    if spec.kind == "rectangle":
        (x0, y0), (x1, y1) = spec.corners
        verts = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
        if spec.rotation != 0.0:
            mid = verts.mean(axis=0)
            verts = (verts - mid) @ _rot(spec.rotation).T + mid
        return verts

    rot = _rot(spec.rotation)
    u = rot @ np.asarray(spec.axis, dtype=float)
    v = np.array([-u[1], u[0]])
    R = spec.radius

    if spec.kind == "disk":
        if target_h is None:
            target_h = R / 8.0
        n = max(16, math.ceil(2.0 * math.pi * R / target_h))
        ang = 2.0 * math.pi * np.arange(n) / n
        return c + R * (np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * v)

    if spec.kind == "hexagon":
        ang = np.deg2rad(60.0 * np.arange(6))
        return c + R * (np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * v)

    # concave: hexagon with edge midpoints on the axis, midpoints pulled in
    ang = np.deg2rad(np.array([0.0, 30.0, 90.0, 150.0, 180.0, 210.0, 270.0, 330.0]))
    rad = np.array([spec.neck, R, R, R, spec.neck, R, R, R])
    return c + rad[:, None] * (np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * v)


def polygon_area(verts: np.ndarray) -> float:
    """Signed shoelace area of a closed polygon given as (V, 2) vertices."""
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _points_in_polygon(points: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Crossing-number inside test, vectorized over ``points``."""
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    x0, y0 = verts[:, 0], verts[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    for k in range(len(verts)):
        crosses = (y0[k] > y) != (y1[k] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = x0[k] + (y - y0[k]) * (x1[k] - x0[k]) / (y1[k] - y0[k])
        inside ^= crosses & (x < xc)
    return inside


def _distance_to_boundary(points: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Min distance from each point to the polygon boundary segments."""
    p0 = verts
    p1 = np.roll(verts, -1, axis=0)
    seg = p1 - p0
    seg_len2 = np.maximum(np.einsum("ij,ij->i", seg, seg), 1e-300)
    d = np.full(len(points), np.inf)
    for k in range(len(verts)):
        w = points - p0[k]
        t = np.clip((w @ seg[k]) / seg_len2[k], 0.0, 1.0)
        proj = p0[k] + t[:, None] * seg[k]
        d = np.minimum(d, np.hypot(*(points - proj).T))
    return d


@dataclass(frozen=True)
class TriMesh:
    """A conforming triangulation: (N, 2) vertex array and (M, 3) indices."""

    nodes: np.ndarray
    triangles: np.ndarray

    def validate(self) -> "TriMesh":
        nodes = np.asarray(self.nodes, dtype=float)
        tris = np.asarray(self.triangles, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise MeshError("nodes must be an (N, 2) array")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise MeshError("triangles must be an (M, 3) array")
        if len(tris) == 0:
            raise MeshError("mesh has no triangles")
        if tris.min() < 0 or tris.max() >= len(nodes):
            raise MeshError("triangle index out of range")
        if np.any(self.areas() <= 0.0):
            raise MeshError("all triangles must have positive signed area")
        tree = cKDTree(nodes)
        if tree.query_pairs(1e-12, output_type="ndarray").size:
            raise MeshError("duplicate nodes closer than 1e-12 m")
        return self

    def areas(self) -> np.ndarray:
        a = self.nodes[self.triangles[:, 0]]
        b = self.nodes[self.triangles[:, 1]]
        c = self.nodes[self.triangles[:, 2]]
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                      - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))


@dataclass(frozen=True)
class MeshlessCloud:
    """Nodes with lumped nodal volumes and the cloud's mesh size h."""

    nodes: np.ndarray
    volumes: np.ndarray
    h: float

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def total_volume(self) -> float:
        return float(self.volumes.sum())


def _hex_lattice(bbox: tuple[float, float, float, float], spacing: float) -> np.ndarray:
    xmin, ymin, xmax, ymax = bbox
    dy = spacing * math.sqrt(3.0) / 2.0
    rows = []
    ny = int(math.floor((ymax - ymin) / dy)) + 1
    nx = int(math.floor((xmax - xmin) / spacing)) + 2
    for j in range(ny + 1):
        y = ymin + j * dy
        off = 0.5 * spacing if j % 2 else 0.0
        xs = xmin + off + spacing * np.arange(nx)
        rows.append(np.column_stack([xs, np.full(nx, y)]))
    return np.concatenate(rows)


def triangulate(polygon: np.ndarray, target_h: float) -> TriMesh:
    """Triangulate a simple polygon with triangles of size about ``target_h``.

    Boundary edges are subdivided to ``target_h`` spacing and the interior is
    filled with a hexagonal lattice; the Delaunay triangulation of the point
    set is clipped to the polygon.  Raises :class:`MeshError` when the result
    does not exactly tile the polygon (area mismatch) or is too coarse.
    """
    verts = np.asarray(polygon, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
        raise MeshError("polygon must be an (V, 2) array with V >= 3")
    area = polygon_area(verts)
    if area == 0.0:
        raise MeshError("degenerate polygon with zero area")
    if area < 0.0:
        verts = verts[::-1]
        area = -area
    bbox = (verts[:, 0].min(), verts[:, 1].min(), verts[:, 0].max(), verts[:, 1].max())
    diam = math.hypot(bbox[2] - bbox[0], bbox[3] - bbox[1])
    if not 0.0 < target_h < diam:
        raise MeshError(f"target_h must be in (0, polygon diameter), got {target_h}")

    boundary = []
    for k in range(len(verts)):
        a, b = verts[k], verts[(k + 1) % len(verts)]
        n = max(1, math.ceil(math.hypot(*(b - a)) / target_h))
        t = np.arange(n) / n
        boundary.append(a + t[:, None] * (b - a))
    boundary = np.concatenate(boundary)

    lattice = _hex_lattice(bbox, target_h)
    keep = _points_in_polygon(lattice, verts)
    lattice = lattice[keep]

    last_err = None
    for margin in _BOUNDARY_MARGINS:
        inner = lattice[_distance_to_boundary(lattice, verts) >= margin * target_h]
        points = np.concatenate([boundary, inner])
        try:
            return _clip_delaunay(points, verts, area, target_h)
        except MeshError as err:
            last_err = err
    raise MeshError(f"could not mesh polygon at target_h={target_h}: {last_err}")


def _clip_delaunay(points: np.ndarray, verts: np.ndarray, area: float,
                   target_h: float) -> TriMesh:
    tri = Delaunay(points)
    simplices = tri.simplices
    a = points[simplices[:, 0]]
    b = points[simplices[:, 1]]
    c = points[simplices[:, 2]]
    signed = 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                    - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))
    flip = signed < 0.0
    simplices[flip] = simplices[flip][:, ::-1]
    signed = np.abs(signed)
    centroids = (a + b + c) / 3.0
    keep = _points_in_polygon(centroids, verts) & (signed > 1e-14 * area)
    simplices = simplices[keep]
    if len(simplices) == 0:
        raise MeshError("no triangles inside the polygon")

    used = np.unique(simplices)
    remap = np.full(len(points), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    mesh = TriMesh(nodes=points[used], triangles=remap[simplices]).validate()

    if abs(mesh.areas().sum() - area) > 1e-10 * area:
        raise MeshError("triangulation does not tile the polygon")
    edges = mesh.nodes[mesh.triangles] - mesh.nodes[np.roll(mesh.triangles, 1, axis=1)]
    if np.hypot(edges[..., 0], edges[..., 1]).max() > 2.0 * target_h:
        raise MeshError("triangulation has edges longer than 2*target_h")
    return mesh


def to_meshless(mesh: TriMesh) -> MeshlessCloud:
    """Lump a triangulation into nodes and nodal volumes.

    Each vertex receives one third of every incident triangle's area (the
    exact integral of its linear hat function) times the unit thickness.
    """
    mesh.validate()
    areas = mesh.areas()
    volumes = np.zeros(len(mesh.nodes))
    for k in range(3):
        np.add.at(volumes, mesh.triangles[:, k], areas / 3.0)
    volumes *= THICKNESS
    if np.any(volumes <= 0.0):
        raise MeshError("mesh has vertices with zero lumped volume")
    return MeshlessCloud(nodes=mesh.nodes.copy(), volumes=volumes,
                         h=mesh_size(mesh.nodes))


def mesh_size(nodes: np.ndarray) -> float:
    """Minimum pairwise node distance, via a KD-tree."""
    nodes = np.asarray(nodes, dtype=float)
    if len(nodes) < 2:
        raise MeshError("mesh size needs at least 2 nodes")
    dist, _ = cKDTree(nodes).query(nodes, k=2)
    return float(dist[:, 1].min())


def read_mesh(text: str) -> TriMesh:
    """Parse the plain-text mesh format.

    Format: ``nodes N`` then N lines ``id x y``; ``triangles M`` then M
    lines ``id n1 n2 n3``.  Lines starting with ``#`` are ignored.
    Triangles are re-oriented CCW if needed.
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise MeshError("unexpected end of mesh file")
        ln = lines[pos]
        pos += 1
        return ln

    head = take().split()
    if len(head) != 2 or head[0] != "nodes":
        raise MeshError("expected 'nodes <N>' header")
    n = int(head[1])
    nodes = np.full((n, 2), np.nan)
    for _ in range(n):
        fields = take().split()
        if len(fields) != 3:
            raise MeshError("node line must be '<id> <x> <y>'")
        i = int(fields[0])
        if not 0 <= i < n:
            raise MeshError(f"node id {i} out of range")
        if not np.isnan(nodes[i]).all():
            raise MeshError(f"duplicate node id {i}")
        nodes[i] = (float(fields[1]), float(fields[2]))

    head = take().split()
    if len(head) != 2 or head[0] != "triangles":
        raise MeshError("expected 'triangles <M>' header")
    m = int(head[1])
    tris = np.empty((m, 3), dtype=np.int64)
    seen = np.zeros(m, dtype=bool)
    for _ in range(m):
        fields = take().split()
        if len(fields) != 4:
            raise MeshError("triangle line must be '<id> <n1> <n2> <n3>'")
        i = int(fields[0])
        if not 0 <= i < m or seen[i]:
            raise MeshError(f"bad or duplicate triangle id {i}")
        seen[i] = True
        tris[i] = [int(f) for f in fields[1:]]

    mesh = TriMesh(nodes=nodes, triangles=tris)
    neg = mesh.areas() < 0.0
    if neg.any():
        tris = tris.copy()
        tris[neg] = tris[neg][:, ::-1]
        mesh = TriMesh(nodes=nodes, triangles=tris)
    return mesh.validate()


def read_mesh_file(path) -> TriMesh:
    with open(path, "r", encoding="utf-8") as f:
        return read_mesh(f.read())


def write_mesh(mesh: TriMesh) -> str:
    """Serialize a mesh in the plain-text format with round-trip floats."""
    out = [f"nodes {len(mesh.nodes)}"]
    for i, (x, y) in enumerate(mesh.nodes):
        out.append(f"{i} {float(x)!r} {float(y)!r}")
    out.append(f"triangles {len(mesh.triangles)}")
    for i, (a, b, c) in enumerate(mesh.triangles):
        out.append(f"{i} {a} {b} {c}")
    return "\n".join(out) + "\n"


def write_mesh_file(mesh: TriMesh, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(write_mesh(mesh))


def shape_to_cloud(spec: ShapeSpec, target_h: float) -> MeshlessCloud:
    """Outline, triangulate, and lump a shape in one call."""
    return to_meshless(triangulate(generate_shape(spec, target_h), target_h))
