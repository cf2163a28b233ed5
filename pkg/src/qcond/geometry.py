"""2D computational domains: triangulation, boundary frames, isometries.

Meshes are plain P1 triangulations.  The disk is the primary domain: its
boundary vertices sit exactly on the circle and every tangent direction
is available as a boundary frame, which is how the direction sweep of
the recovery pipeline is realized without re-meshing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay


class Mesh:
    """Triangulated convex domain with an oriented boundary loop.

    Immutable after construction; shared read-only across solves.

    Attributes
    ----------
    vertices : (N, 2) float array
    triangles : (T, 3) int array, positively oriented
    boundary_loop : (B,) int array, boundary vertices in CCW order
    boundary_edges : (B, 2) int array, consecutive loop pairs
    boundary_normals : (B, 2) float array, outward unit normal per edge
    h : target edge length
    diameter : domain diameter
    """

    def __init__(self, vertices, triangles, boundary_loop, h, diameter):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=int)
        self.boundary_loop = np.asarray(boundary_loop, dtype=int)
        self.h = float(h)
        self.diameter = float(diameter)
        loop = self.boundary_loop
        self.boundary_edges = np.stack([loop, np.roll(loop, -1)], axis=1)
        e = self.vertices[self.boundary_edges[:, 1]] - self.vertices[self.boundary_edges[:, 0]]
        # CCW loop: outward normal is the edge direction rotated by -90 degrees
        n = np.stack([e[:, 1], -e[:, 0]], axis=1)
        self.boundary_normals = n / np.linalg.norm(n, axis=1, keepdims=True)
        self._cache = {}

    # -- P1 element data ---------------------------------------------------

    def _p1(self):
        if "p1" not in self._cache:
            v = self.vertices[self.triangles]          # (T, 3, 2)
            d1 = v[:, 1] - v[:, 0]
            d2 = v[:, 2] - v[:, 0]
            det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
            area = 0.5 * det
            # gradients of the three barycentric hats, (T, 3, 2)
            g = np.empty((len(self.triangles), 3, 2))
            g[:, 1, 0] = d2[:, 1] / det
            g[:, 1, 1] = -d2[:, 0] / det
            g[:, 2, 0] = -d1[:, 1] / det
            g[:, 2, 1] = d1[:, 0] / det
            g[:, 0] = -g[:, 1] - g[:, 2]
            self._cache["p1"] = (area, g)
        return self._cache["p1"]

    @property
    def areas(self):
        return self._p1()[0]

    @property
    def hat_gradients(self):
        return self._p1()[1]

    @property
    def centroids(self):
        if "centroids" not in self._cache:
            self._cache["centroids"] = self.vertices[self.triangles].mean(axis=1)
        return self._cache["centroids"]

    # -- boundary bookkeeping ----------------------------------------------

    @property
    def is_boundary(self):
        if "is_boundary" not in self._cache:
            m = np.zeros(len(self.vertices), dtype=bool)
            m[self.boundary_loop] = True
            self._cache["is_boundary"] = m
        return self._cache["is_boundary"]

    @property
    def interior_idx(self):
        if "interior" not in self._cache:
            self._cache["interior"] = np.flatnonzero(~self.is_boundary)
        return self._cache["interior"]

    @property
    def edge_lengths(self):
        if "elen" not in self._cache:
            d = self.vertices[self.boundary_edges[:, 1]] - self.vertices[self.boundary_edges[:, 0]]
            self._cache["elen"] = np.linalg.norm(d, axis=1)
        return self._cache["elen"]

    @property
    def perimeter(self):
        return float(self.edge_lengths.sum())

    @property
    def arclength(self):
        """Cumulative arclength at each loop vertex, starting at loop[0]."""
        if "arc" not in self._cache:
            s = np.concatenate([[0.0], np.cumsum(self.edge_lengths[:-1])])
            self._cache["arc"] = s
        return self._cache["arc"]

    @property
    def vertex_weights(self):
        """Boundary quadrature weight per loop vertex (half adjacent edges)."""
        if "vw" not in self._cache:
            el = self.edge_lengths
            self._cache["vw"] = 0.5 * (el + np.roll(el, 1))
        return self._cache["vw"]

    @property
    def vertex_normals(self):
        """Outward unit normal per loop vertex (adjacent-edge average)."""
        if "vn" not in self._cache:
            n = self.boundary_normals + np.roll(self.boundary_normals, 1, axis=0)
            self._cache["vn"] = n / np.linalg.norm(n, axis=1, keepdims=True)
        return self._cache["vn"]

    @property
    def loop_position(self):
        """vertex index -> position in boundary_loop (-1 for interior)."""
        if "loop_pos" not in self._cache:
            pos = np.full(len(self.vertices), -1, dtype=int)
            pos[self.boundary_loop] = np.arange(len(self.boundary_loop))
            self._cache["loop_pos"] = pos
        return self._cache["loop_pos"]


def _delaunay_mesh(points, boundary_count, h, diameter):
    """Triangulate a convex point cloud whose last ring is the boundary."""
    tri = Delaunay(points)
    simplices = tri.simplices.copy()
    v = points[simplices]
    det = ((v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
           - (v[:, 1, 1] - v[:, 0, 1]) * (v[:, 2, 0] - v[:, 0, 0]))
    flip = det < 0
    simplices[flip] = simplices[flip][:, [0, 2, 1]]
    keep = np.abs(det) > 1e-12 * h * h
    simplices = simplices[keep]

    hull = set(map(tuple, np.sort(tri.convex_hull, axis=1)))
    # boundary vertices are the trailing block of `points`
    first_b = len(points) - boundary_count
    loop = np.arange(first_b, len(points))
    # order the loop CCW by angle around the centroid
    c = points[loop].mean(axis=0)
    ang = np.arctan2(points[loop, 1] - c[1], points[loop, 0] - c[0])
    loop = loop[np.argsort(ang)]
    # sanity: hull edges must connect consecutive loop vertices
    loop_edges = set(map(tuple, np.sort(np.stack([loop, np.roll(loop, -1)], axis=1), axis=1)))
    if hull != loop_edges:
        raise RuntimeError("triangulation boundary does not match the boundary ring")
    return Mesh(points, simplices, loop, h, diameter)


def build_disk_mesh(radius: float, h: float) -> Mesh:
    """Quasi-uniform triangulation of a disk.

    Vertices are arranged on concentric rings with spacing ~0.75 h (the
    finer constant keeps the boundary resolved for high-frequency
    probes); the outer ring lies exactly on the circle.
    """
    if not (0 < h < radius):
        raise ValueError("build_disk_mesh: need 0 < h < radius")
    spacing = 0.75 * h
    n_rings = max(2, round(radius / spacing))
    n_outer = max(12, int(math.ceil(2.0 * math.pi * radius / spacing)))
    pts = [np.zeros((1, 2))]
    for j in range(1, n_rings + 1):
        r = radius * j / n_rings
        n_j = max(6, round(n_outer * j / n_rings))
        if j == n_rings:
            n_j = n_outer
        off = 0.5 * (j % 2) * 2.0 * math.pi / n_j
        th = off + 2.0 * math.pi * np.arange(n_j) / n_j
        pts.append(np.stack([r * np.cos(th), r * np.sin(th)], axis=1))
    points = np.concatenate(pts, axis=0)
    return _delaunay_mesh(points, n_outer, h, diameter=2.0 * radius)


def build_polygon_mesh(n_sides: int, circumradius: float = 1.0, h: float = 0.1) -> Mesh:
    """Triangulation of a regular polygon (testing domain)."""
    if n_sides < 3:
        raise ValueError("build_polygon_mesh: need at least 3 sides")
    if not (0 < h < circumradius):
        raise ValueError("build_polygon_mesh: need 0 < h < circumradius")
    th = 2.0 * math.pi * np.arange(n_sides) / n_sides
    corners = circumradius * np.stack([np.cos(th), np.sin(th)], axis=1)
    side = np.linalg.norm(corners[1] - corners[0])
    per_side = max(1, round(side / (0.75 * h)))
    ring = []
    for k in range(n_sides):
        a, b = corners[k], corners[(k + 1) % n_sides]
        for t in np.arange(per_side) / per_side:
            ring.append((1 - t) * a + t * b)
    ring = np.asarray(ring)
    n_rings = max(2, round(circumradius / (0.75 * h)))
    pts = [np.zeros((1, 2))]
    for j in range(1, n_rings):
        scale = j / n_rings
        step = max(1, round(1.0 / scale))
        pts.append(scale * ring[::step])
    pts.append(ring)
    points = np.concatenate(pts, axis=0)
    dists = np.linalg.norm(corners[:, None, :] - corners[None, :, :], axis=-1)
    return _delaunay_mesh(points, len(ring), h, diameter=float(dists.max()))


@dataclass(frozen=True)
class BoundaryFrame:
    """Boundary point with outward normal and tangent (tau = nu rotated +90)."""
    x0: np.ndarray
    nu: np.ndarray
    tau: np.ndarray
    theta: float
    vertex: int
    loop_pos: int


def boundary_frame_at(mesh: Mesh, theta: float) -> BoundaryFrame:
    """Frame at the boundary vertex closest to polar angle theta."""
    c = mesh.vertices[mesh.boundary_loop].mean(axis=0)
    xy = mesh.vertices[mesh.boundary_loop] - c
    ang = np.arctan2(xy[:, 1], xy[:, 0])
    diff = np.angle(np.exp(1j * (ang - theta)))
    k = int(np.argmin(np.abs(diff)))
    vtx = int(mesh.boundary_loop[k])
    nu = mesh.vertex_normals[k]
    tau = np.array([-nu[1], nu[0]])
    return BoundaryFrame(x0=mesh.vertices[vtx].copy(), nu=nu.copy(), tau=tau,
                         theta=float(np.arctan2(xy[k, 1], xy[k, 0])),
                         vertex=vtx, loop_pos=k)


@dataclass(frozen=True)
class Isometry:
    """Euclidean isometry y = R x + t with R proper orthogonal."""
    R: np.ndarray
    t: np.ndarray

    def apply(self, x):
        return np.asarray(x, dtype=float) @ self.R.T + self.t

    def invert(self, y):
        return (np.asarray(y, dtype=float) - self.t) @ self.R

    def __post_init__(self):
        if np.max(np.abs(self.R.T @ self.R - np.eye(2))) > 1e-12:
            raise ValueError("Isometry: R is not orthogonal to 1e-12")


def normalize_above_origin(mesh: Mesh, frame: BoundaryFrame) -> Isometry:
    """Isometry placing the domain above the origin at the frame point.

    The returned map sends x0 to the origin, the tangent to e1 and the
    inner normal to e2, so the image domain lies in {y2 >= 0} with the
    x1-axis as supporting line.
    """
    if frame.loop_pos < 0 or mesh.boundary_loop[frame.loop_pos] != frame.vertex:
        raise ValueError("normalize_above_origin: frame is not on the mesh boundary")
    R = np.stack([frame.tau, -frame.nu], axis=0)
    iso = Isometry(R=R, t=-R @ frame.x0)
    y = iso.apply(mesh.vertices)
    if y[:, 1].min() < -1e-10 * max(1.0, mesh.diameter):
        raise ValueError("normalize_above_origin: domain is not supported at the frame "
                         f"(min height {y[:, 1].min():.3e})")
    return iso


def transform_mesh(mesh: Mesh, iso: Isometry) -> Mesh:
    """Apply an isometry to the mesh (same topology, moved vertices)."""
    return Mesh(iso.apply(mesh.vertices), mesh.triangles.copy(),
                mesh.boundary_loop.copy(), mesh.h, mesh.diameter)


def save_mesh(mesh: Mesh, path):
    """Plain-text dump: `v x y`, `t i j k`, `b i j nx ny` lines."""
    with open(path, "w") as f:
        f.write(f"# h {mesh.h!r} diameter {mesh.diameter!r}\n")
        for x, y in mesh.vertices:
            f.write(f"v {float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.triangles:
            f.write(f"t {i} {j} {k}\n")
        for (i, j), (nx, ny) in zip(mesh.boundary_edges, mesh.boundary_normals):
            f.write(f"b {i} {j} {float(nx)!r} {float(ny)!r}\n")


def load_mesh(path) -> Mesh:
    verts, tris, loop = [], [], []
    h, diam = 0.0, 0.0
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "#":
                h, diam = float(parts[2]), float(parts[4])
            elif parts[0] == "v":
                verts.append((float(parts[1]), float(parts[2])))
            elif parts[0] == "t":
                tris.append((int(parts[1]), int(parts[2]), int(parts[3])))
            elif parts[0] == "b":
                loop.append(int(parts[1]))
    return Mesh(np.asarray(verts), np.asarray(tris), np.asarray(loop), h, diam)
