"""Triangle meshes and procedural primitives.

Everything here is plain numpy: a mesh is vertex positions, triangle
indices, per-vertex uv in [0,1]^2, and unit vertex normals. The revolve
builder is the workhorse; vessels, fills, and two of the primitive families
are all surfaces of revolution of a 2D polyline in the (radius, z)
half-plane. Winding is made consistently outward so the renderer can tell
entering from exiting rays by the geometric normal alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_WELD_QUANTUM = 1e-7


@dataclass(frozen=True)
class Mesh:
    """Indexed triangle mesh with per-vertex uv and unit normals."""

    vertices: np.ndarray   # (n, 3) float64, meters
    triangles: np.ndarray  # (m, 3) int32
    uv: np.ndarray         # (n, 2) float64 in [0,1]^2
    normals: np.ndarray    # (n, 3) float64, unit length
    watertight: bool = False

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int32))
        uv = np.ascontiguousarray(np.asarray(self.uv, dtype=np.float64))
        n = np.ascontiguousarray(np.asarray(self.normals, dtype=np.float64))
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle indices out of range")
        if len(uv) != len(v) or len(n) != len(v):
            raise ValueError("uv/normals must be per-vertex")
        lens = np.linalg.norm(n, axis=1)
        if n.size and np.any(np.abs(lens - 1.0) > 1e-4):
            raise ValueError("vertex normals must be unit length within 1e-4")
        for arr in (v, t, uv, n):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "uv", uv)
        object.__setattr__(self, "normals", n)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def bounding_sphere(self) -> tuple:
        """(center, radius) of a simple AABB-centered bounding sphere."""
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        center = 0.5 * (lo + hi)
        radius = float(np.linalg.norm(self.vertices - center, axis=1).max())
        return center, radius

    def bounds(self) -> tuple:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def compute_vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Area-weighted smooth vertex normals."""
    v = np.asarray(vertices, dtype=np.float64)
    t = np.asarray(triangles)
    face_n = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    out = np.zeros_like(v)
    for k in range(3):
        np.add.at(out, t[:, k], face_n)
    lens = np.linalg.norm(out, axis=1, keepdims=True)
    lens[lens < 1e-20] = 1.0
    out = out / lens
    out[np.linalg.norm(out, axis=1) < 0.5] = (0.0, 0.0, 1.0)
    return out


def is_watertight(vertices: np.ndarray, triangles: np.ndarray) -> bool:
    """True if, after welding coincident vertices, every edge borders
    exactly two triangles."""
    v = np.asarray(vertices, dtype=np.float64)
    t = np.asarray(triangles, dtype=np.int64)
    if len(t) == 0:
        return False
    keys = np.round(v / _WELD_QUANTUM).astype(np.int64)
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    wt = inv[t]
    if np.any(wt[:, 0] == wt[:, 1]) or np.any(wt[:, 1] == wt[:, 2]) or np.any(wt[:, 0] == wt[:, 2]):
        return False  # degenerate triangle after welding
    edges = np.concatenate([wt[:, [0, 1]], wt[:, [1, 2]], wt[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


def _orient_outward(vertices, triangles, normals):
    """Flip triangles whose geometric normal disagrees with vertex normals."""
    t = np.asarray(triangles)
    v = np.asarray(vertices)
    face_n = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    ref = normals[t[:, 0]] + normals[t[:, 1]] + normals[t[:, 2]]
    flip = np.einsum("ij,ij->i", face_n, ref) < 0
    t = t.copy()
    t[flip] = t[flip][:, [0, 2, 1]]
    return t


# ---------------------------------------------------------------------------
# surfaces of revolution


def revolve_polyline(
    rs: np.ndarray,
    zs: np.ndarray,
    n_theta: int = 64,
    stretch: tuple = (1.0, 1.0),
    smooth_normals: bool = True,
) -> Mesh:
    """Revolve an (r, z) polyline about the vertical axis.

    Profile rows with r == 0 collapse to single pole vertices (triangle
    fans), so a polyline running axis-to-axis yields a closed solid. The
    seam column is duplicated to give clean uv; watertightness is judged on
    welded positions. ``stretch`` scales x and y nonuniformly after
    revolution.
    """
    rs = np.asarray(rs, dtype=np.float64)
    zs = np.asarray(zs, dtype=np.float64)
    if len(rs) != len(zs) or len(rs) < 2:
        raise ValueError("profile needs matching rs/zs with >= 2 points")
    if np.any(rs < 0):
        raise ValueError("profile radii must be >= 0")
    n_rows = len(rs)
    theta = np.linspace(0.0, 2.0 * math.pi, n_theta + 1)
    cos_t, sin_t = np.cos(theta), np.sin(theta)

    # profile-plane outward normals: right-hand normal of the tangent
    d = np.zeros((n_rows, 2))
    seg = np.stack([np.diff(rs), np.diff(zs)], axis=1)
    seg_n = np.stack([seg[:, 1], -seg[:, 0]], axis=1)
    seg_len = np.linalg.norm(seg_n, axis=1, keepdims=True)
    seg_n = seg_n / np.where(seg_len < 1e-12, 1.0, seg_len)
    d[:-1] += seg_n
    d[1:] += seg_n
    d_len = np.linalg.norm(d, axis=1, keepdims=True)
    d = d / np.where(d_len < 1e-12, 1.0, d_len)

    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(seg, axis=1))])
    vcoord = arc / max(arc[-1], 1e-12)

    pole = rs < 1e-9
    verts, uvs, norms = [], [], []
    row_start = np.zeros(n_rows, dtype=np.int64)
    for i in range(n_rows):
        row_start[i] = len(verts)
        if pole[i]:
            verts.append((0.0, 0.0, zs[i]))
            uvs.append((0.5, vcoord[i]))
            nz = 1.0 if d[i, 1] >= 0 else -1.0
            norms.append((0.0, 0.0, nz))
        else:
            for j in range(n_theta + 1):
                verts.append((rs[i] * cos_t[j], rs[i] * sin_t[j], zs[i]))
                uvs.append((theta[j] / (2.0 * math.pi), vcoord[i]))
                norms.append((d[i, 0] * cos_t[j], d[i, 0] * sin_t[j], d[i, 1]))

    tris = []
    for i in range(n_rows - 1):
        a0, b0 = row_start[i], row_start[i + 1]
        if pole[i] and pole[i + 1]:
            continue
        for j in range(n_theta):
            if pole[i]:
                tris.append((a0, b0 + j, b0 + j + 1))
            elif pole[i + 1]:
                tris.append((a0 + j, b0, a0 + j + 1))
            else:
                tris.append((a0 + j, b0 + j, b0 + j + 1))
                tris.append((a0 + j, b0 + j + 1, a0 + j + 1))

    vertices = np.asarray(verts)
    normals = np.asarray(norms, dtype=np.float64)
    vertices[:, 0] *= stretch[0]
    vertices[:, 1] *= stretch[1]
    if stretch != (1.0, 1.0):
        normals[:, 0] /= stretch[0]
        normals[:, 1] /= stretch[1]
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    if not smooth_normals:
        normals = compute_vertex_normals(vertices, np.asarray(tris))
    triangles = _orient_outward(vertices, np.asarray(tris, dtype=np.int32), normals)
    return Mesh(
        vertices=vertices,
        triangles=triangles,
        uv=np.clip(np.asarray(uvs), 0.0, 1.0),
        normals=normals,
        watertight=is_watertight(vertices, triangles),
    )


# ---------------------------------------------------------------------------
# primitive families


def uv_sphere(radius: float = 1.0, n_theta: int = 32, n_phi: int = 20) -> Mesh:
    phi = np.linspace(0.0, math.pi, n_phi + 1)
    rs = radius * np.sin(phi)
    zs = radius * np.cos(phi)
    m = revolve_polyline(rs, zs, n_theta=n_theta)
    # analytic normals are exact for a sphere
    n = m.vertices / np.linalg.norm(m.vertices, axis=1, keepdims=True)
    return Mesh(m.vertices, _orient_outward(m.vertices, m.triangles, n), m.uv, n, m.watertight)


def box(size=(1.0, 1.0, 1.0)) -> Mesh:
    sx, sy, sz = [0.5 * s for s in np.broadcast_to(np.asarray(size, dtype=np.float64), (3,))]
    verts, uvs, norms, tris = [], [], [], []
    faces = [
        ((1, 0, 0), (0, 1, 0), (0, 0, 1)),
        ((-1, 0, 0), (0, -1, 0), (0, 0, 1)),
        ((0, 1, 0), (-1, 0, 0), (0, 0, 1)),
        ((0, -1, 0), (1, 0, 0), (0, 0, 1)),
        ((0, 0, 1), (1, 0, 0), (0, 1, 0)),
        ((0, 0, -1), (1, 0, 0), (0, -1, 0)),
    ]
    half = np.array([sx, sy, sz])
    for fn, fu, fv in faces:
        fn, fu, fv = np.asarray(fn, float), np.asarray(fu, float), np.asarray(fv, float)
        base = len(verts)
        for du, dv, u, v in ((-1, -1, 0, 0), (1, -1, 1, 0), (1, 1, 1, 1), (-1, 1, 0, 1)):
            verts.append((fn + du * fu + dv * fv) * half)
            uvs.append((u, v))
            norms.append(fn)
        tris.append((base, base + 1, base + 2))
        tris.append((base, base + 2, base + 3))
    vertices = np.asarray(verts)
    triangles = np.asarray(tris, dtype=np.int32)
    return Mesh(vertices, triangles, np.asarray(uvs, float), np.asarray(norms, float),
                watertight=is_watertight(vertices, triangles))


def torus(major: float = 1.0, minor: float = 0.35, n_u: int = 32, n_v: int = 20) -> Mesh:
    u = np.linspace(0.0, 2.0 * math.pi, n_u + 1)
    v = np.linspace(0.0, 2.0 * math.pi, n_v + 1)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    cx, cy = major * np.cos(uu), major * np.sin(uu)
    x = (major + minor * np.cos(vv)) * np.cos(uu)
    y = (major + minor * np.cos(vv)) * np.sin(uu)
    z = minor * np.sin(vv)
    verts = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    centers = np.stack([cx, cy, np.zeros_like(cx)], axis=-1).reshape(-1, 3)
    norms = verts - centers
    norms /= np.linalg.norm(norms, axis=1, keepdims=True)
    uvs = np.stack([uu / (2 * math.pi), vv / (2 * math.pi)], axis=-1).reshape(-1, 2)
    tris = []
    w = n_v + 1
    for i in range(n_u):
        for j in range(n_v):
            a = i * w + j
            b = (i + 1) * w + j
            tris.append((a, b, b + 1))
            tris.append((a, b + 1, a + 1))
    triangles = _orient_outward(verts, np.asarray(tris, dtype=np.int32), norms)
    return Mesh(verts, triangles, np.clip(uvs, 0, 1), norms,
                watertight=is_watertight(verts, triangles))


def superellipsoid(e1: float = 1.0, e2: float = 1.0, radius: float = 1.0,
                   n_theta: int = 32, n_phi: int = 20) -> Mesh:
    """Superellipsoid with shape exponents (e1, e2); (1, 1) is the sphere."""

    def spow(base, e):
        return np.sign(base) * np.power(np.abs(base), e)

    phi = np.linspace(-math.pi / 2, math.pi / 2, n_phi + 1)
    theta = np.linspace(-math.pi, math.pi, n_theta + 1)
    pp, tt = np.meshgrid(phi, theta, indexing="ij")
    x = radius * spow(np.cos(pp), e1) * spow(np.cos(tt), e2)
    y = radius * spow(np.cos(pp), e1) * spow(np.sin(tt), e2)
    z = radius * spow(np.sin(pp), e1)
    # collapse numerical fuzz at the poles so welding closes the shape
    x[0, :], y[0, :] = 0.0, 0.0
    x[-1, :], y[-1, :] = 0.0, 0.0
    verts = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    uvs = np.stack([(tt + math.pi) / (2 * math.pi), (pp + math.pi / 2) / math.pi],
                   axis=-1).reshape(-1, 2)
    tris = []
    w = n_theta + 1
    for i in range(n_phi):
        for j in range(n_theta):
            a = i * w + j
            b = (i + 1) * w + j
            if i > 0:
                tris.append((a, b, a + 1))
            if i < n_phi - 1:
                tris.append((a + 1, b, b + 1))
    tris = np.asarray(tris, dtype=np.int32)
    norms = compute_vertex_normals(verts, tris)
    # the grid winding is globally consistent; pick the outward sign using
    # the star-shape property dot(n, p) > 0
    if np.einsum("ij,ij->i", norms, verts).sum() < 0:
        norms = -norms
        tris = tris[:, [0, 2, 1]]
    triangles = _orient_outward(verts, tris, norms)
    return Mesh(verts, triangles, np.clip(uvs, 0, 1), norms,
                watertight=is_watertight(verts, triangles))


def ground_plane(height: float = 0.0, half_extent: float = 4.0) -> Mesh:
    """Large square ground quad at the given height (not watertight)."""
    e = half_extent
    verts = np.array([[-e, -e, height], [e, -e, height], [e, e, height], [-e, e, height]])
    tris = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    uvs = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    norms = np.tile([0.0, 0.0, 1.0], (4, 1))
    return Mesh(verts, tris, uvs, norms, watertight=False)


def transform_mesh(mesh: Mesh, matrix: np.ndarray) -> Mesh:
    """Apply a 4x4 affine transform; normals go through the inverse
    transpose of the linear part and are renormalized."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (4, 4):
        raise ValueError("expected a 4x4 matrix")
    lin, t = m[:3, :3], m[:3, 3]
    v = mesh.vertices @ lin.T + t
    n = mesh.normals @ np.linalg.inv(lin)
    n = n / np.linalg.norm(n, axis=1, keepdims=True)
    tris = mesh.triangles
    if np.linalg.det(lin) < 0:
        tris = tris[:, [0, 2, 1]]
    return Mesh(v, tris, mesh.uv, n, mesh.watertight)


def make_transform(translation=(0, 0, 0), rotation_z: float = 0.0, scale=(1, 1, 1),
                   rotation_x: float = 0.0) -> np.ndarray:
    """Compose scale, then x/z rotations, then translation into a 4x4."""
    s = np.diag(list(np.broadcast_to(np.asarray(scale, dtype=np.float64), (3,))) + [1.0])
    cz, sz = math.cos(rotation_z), math.sin(rotation_z)
    rz = np.array([[cz, -sz, 0, 0], [sz, cz, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1.0]])
    cx, sx = math.cos(rotation_x), math.sin(rotation_x)
    rx = np.array([[1, 0, 0, 0], [0, cx, -sx, 0], [0, sx, cx, 0], [0, 0, 0, 1.0]])
    t = np.eye(4)
    t[:3, 3] = translation
    return t @ rz @ rx @ s


PRIMITIVE_FAMILIES = ("sphere", "box", "torus", "superellipsoid", "revolved")


def generate_primitive_object(seed: int, base_radius: float = 0.07, detail: int = 28) -> Mesh:
    """Random procedural object: uniform pick among the five families,
    then a random nonuniform per-axis scale in [0.5, 2]."""
    rng = np.random.default_rng(seed)
    family = PRIMITIVE_FAMILIES[int(rng.integers(len(PRIMITIVE_FAMILIES)))]
    n_t = detail
    n_p = max(6, int(detail * 0.7))
    if family == "sphere":
        mesh = uv_sphere(base_radius, n_theta=n_t, n_phi=n_p)
    elif family == "box":
        mesh = box(2.0 * base_radius)
    elif family == "torus":
        mesh = torus(base_radius, base_radius * float(rng.uniform(0.2, 0.5)), n_u=n_t, n_v=n_p)
    elif family == "superellipsoid":
        e1 = float(rng.uniform(0.3, 2.2))
        e2 = float(rng.uniform(0.3, 2.2))
        mesh = superellipsoid(e1, e2, base_radius, n_theta=n_t, n_phi=n_p)
    else:
        u = np.linspace(0.0, 1.0, max(10, n_p))
        r = base_radius * (0.5 + 0.5 * rng.uniform(0.2, 1.0, size=u.shape))
        for _ in range(int(rng.integers(1, 3))):
            amp = float(rng.uniform(0.05, 0.3))
            freq = float(rng.uniform(1.0, 3.0))
            phase = float(rng.uniform(0.0, 2 * math.pi))
            r = r * (1.0 + amp * np.sin(2 * math.pi * freq * u + phase))
        r = np.clip(r, 0.15 * base_radius, 2.5 * base_radius)
        rs = np.concatenate([[0.0], r, [0.0]])
        zs = np.concatenate([[0.0], u * 2.2 * base_radius, [2.2 * base_radius]])
        zs[1:-1] = u * 2.2 * base_radius
        mesh = revolve_polyline(rs, zs, n_theta=n_t)
        c = 0.5 * (mesh.vertices.min(axis=0) + mesh.vertices.max(axis=0))
        mesh = transform_mesh(mesh, make_transform(translation=-c))
    scale = rng.uniform(0.5, 2.0, size=3)
    return transform_mesh(mesh, make_transform(scale=scale))


def export_obj(mesh: Mesh, path: str | Path, name: str = "mesh") -> None:
    """Write the mesh as Wavefront OBJ (v / vt / vn share indices)."""
    lines = [f"o {name}"]
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    for uv in mesh.uv:
        lines.append(f"vt {uv[0]:.9g} {uv[1]:.9g}")
    for n in mesh.normals:
        lines.append(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}")
    for t in mesh.triangles:
        a, b, c = (int(i) + 1 for i in t)
        lines.append(f"f {a}/{a}/{a} {b}/{b}/{b} {c}/{c}/{c}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
