"""Convex Lambertian scenes: surfaces, brightness maps, ray casting and distances.

The environment is the open interior of the surface and the camera lives
inside it looking outward, so a ray from inside meets the surface exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from plenoptic_observer.errors import NoIntersection
from plenoptic_observer.geometry import rotate_vector

RAY_T_MIN = 1e-9


# --------------------------------------------------------------------------- surfaces


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Triangle mesh with outward (counter-clockwise seen from outside) faces."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        f = np.asarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or f.ndim != 2 or f.shape[1] != 3:
            raise ValueError("vertices must be (V, 3) and faces (F, 3)")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    @property
    def face_normals(self) -> np.ndarray:
        t = self.triangles
        n = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @property
    def scale(self) -> float:
        return float(np.ptp(self.vertices, axis=0).max())

    def is_closed(self) -> bool:
        """Every undirected edge is shared by exactly two faces with opposite orientation."""
        f = self.faces
        directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        # opposite orientation means each directed edge appears once
        if len({tuple(e) for e in directed}) != len(directed):
            return False
        undirected = {tuple(sorted(e)) for e in directed}
        return 2 * len(undirected) == len(directed)

    def is_convex(self, tol: float = 1e-9) -> bool:
        """All vertices lie on or behind every face's supporting plane."""
        n = self.face_normals
        offsets = np.einsum("fi,fi->f", n, self.triangles[:, 0])
        signed = self.vertices @ n.T - offsets
        return bool(np.all(signed <= tol * max(self.scale, 1.0)))

    def is_outward(self) -> bool:
        centroid = self.vertices.mean(axis=0)
        face_centres = self.triangles.mean(axis=1)
        return bool(np.all(np.einsum("fi,fi->f", self.face_normals, face_centres - centroid) > 0))


def surface_contains(surface, p) -> np.ndarray:
    """True for points strictly inside the environment (the open interior)."""
    p = np.asarray(p, dtype=float)
    if isinstance(surface, Sphere):
        return np.linalg.norm(p - surface.center, axis=-1) < surface.radius
    n = surface.face_normals
    offsets = np.einsum("fi,fi->f", n, surface.triangles[:, 0])
    inside = np.all(p @ n.T < offsets, axis=-1)
    return bool(inside) if np.ndim(inside) == 0 else inside


# --------------------------------------------------------------------------- brightness maps


@dataclass(frozen=True)
class ConstantRGB:
    colour: tuple[float, float, float] = (0.5, 0.5, 0.5)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        c = np.clip(np.asarray(self.colour, dtype=float), 0.0, 1.0)
        return np.broadcast_to(c, x.shape[:-1] + (3,)).copy()

    lipschitz = 0.0


# unit directions and phases of the two plane waves per channel
_WAVE_U = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
_WAVE_W = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]) / np.sqrt(2.0)
_PHASE_U = np.array([0.3, 1.7, 4.1])
_PHASE_W = np.array([2.2, 5.0, 0.9])


@dataclass(frozen=True)
class CoordinateRGB:
    """Smooth colour texture built from two plane waves per channel.

    ``frequency`` is in cycles per metre and sets the texture density.
    """

    frequency: float = 2.5

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        k = 2.0 * np.pi * self.frequency
        return np.clip(
            0.5 + 0.25 * np.sin(k * x @ _WAVE_U.T + _PHASE_U) + 0.25 * np.sin(k * x @ _WAVE_W.T + _PHASE_W),
            0.0,
            1.0,
        )

    @property
    def lipschitz(self) -> float:
        """Bound on the Euclidean RGB change per metre of surface displacement."""
        return float(0.5 * 2.0 * np.pi * self.frequency * np.sqrt(3.0))


_RAMP_DIRECTION = np.array([1.0, 0.5, -1.0])


@dataclass(frozen=True)
class RadialMonotone:
    """Colour ramp that grows strictly with distance from ``anchor``.

    The ramp ``g(r) = r^2 / (r^2 + scale^2)`` is smooth at the anchor, so
    pixel interpolation near the anchor stays second-order accurate. Colour
    differences from the anchor colour are ``1.5 g(r)`` in Euclidean norm.
    """

    anchor: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 0.1

    def ramp(self, x) -> np.ndarray:
        r2 = np.sum((np.asarray(x, dtype=float) - np.asarray(self.anchor, dtype=float)) ** 2, axis=-1)
        return r2 / (r2 + self.scale**2)

    def __call__(self, x) -> np.ndarray:
        g = self.ramp(x)[..., None]
        return np.clip(np.array([0.0, 0.5, 1.0]) + g * _RAMP_DIRECTION, 0.0, 1.0)

    @property
    def lipschitz(self) -> float:
        # max of g'(r) = 2 r s^2 / (r^2 + s^2)^2 is at r = s / sqrt(3)
        return float(1.5 * 3.0 * np.sqrt(3.0) / (8.0 * self.scale))


@dataclass(frozen=True)
class SceneModel:
    surface: Sphere | TriangleMesh
    brightness: object = field(default_factory=CoordinateRGB)

    def colour(self, x) -> np.ndarray:
        return self.brightness(x)

    def contains(self, p):
        return surface_contains(self.surface, p)


# --------------------------------------------------------------------------- ray casting


def _intersect_sphere(sphere: Sphere, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    oc = origins - sphere.center
    b = np.einsum("...i,...i->...", oc, dirs)
    c = np.einsum("...i,...i->...", oc, oc) - sphere.radius**2
    disc = b * b - c
    with np.errstate(invalid="ignore"):
        root = np.sqrt(disc)
    t_near = -b - root
    t_far = -b + root
    t = np.where(t_near > RAY_T_MIN, t_near, np.where(t_far > RAY_T_MIN, t_far, np.nan))
    return np.where(disc >= 0, t, np.nan)


def _intersect_mesh(mesh: TriangleMesh, origins: np.ndarray, dirs: np.ndarray, chunk: int = 512) -> np.ndarray:
    tri = mesh.triangles
    v0 = tri[:, 0]
    e1 = tri[:, 1] - v0
    e2 = tri[:, 2] - v0
    flat_o = origins.reshape(-1, 3)
    flat_d = dirs.reshape(-1, 3)
    out = np.full(len(flat_o), np.nan)
    for start in range(0, len(flat_o), chunk):
        o = flat_o[start : start + chunk, None, :]
        d = flat_d[start : start + chunk, None, :]
        pvec = np.cross(d, e2)
        det = np.einsum("rfi,fi->rf", pvec, e1)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / det
            tvec = o - v0
            u = np.einsum("rfi,rfi->rf", tvec, pvec) * inv
            qvec = np.cross(tvec, e1)
            v = np.einsum("rfi,rfi->rf", np.broadcast_to(d, qvec.shape), qvec) * inv
            t = np.einsum("rfi,fi->rf", qvec, e2) * inv
        ok = (np.abs(det) > 1e-15) & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > RAY_T_MIN)
        t = np.where(ok, t, np.inf)
        best = t.min(axis=1)
        out[start : start + chunk] = np.where(np.isfinite(best), best, np.nan)
    return out.reshape(origins.shape[:-1])


def intersect_rays(surface, origins, dirs) -> np.ndarray:
    """Smallest hit parameter ``t > 1e-9`` per ray, NaN on a miss. Directions must be unit."""
    origins = np.asarray(origins, dtype=float)
    dirs = np.asarray(dirs, dtype=float)
    origins, dirs = np.broadcast_arrays(origins, dirs)
    if isinstance(surface, Sphere):
        return _intersect_sphere(surface, origins, dirs)
    return _intersect_mesh(surface, origins, dirs)


def intersect_ray(scene: SceneModel, origin, direction):
    """First hit of a single ray as ``(t, point)``, or ``None``."""
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    t = float(intersect_rays(scene.surface, origin, direction))
    if np.isnan(t):
        return None
    return t, origin + t * direction


def distance_map(scene: SceneModel, pose, camera, ell) -> float:
    """Distance from the optical centre to the scene along the central ray of ``ell``."""
    eta_world = rotate_vector(pose, camera.direction(ell))
    hit = intersect_ray(scene, pose.translation, eta_world)
    if hit is None:
        raise NoIntersection("central ray misses the scene")
    return hit[0]


# --------------------------------------------------------------------------- meshes


_PHI = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTICES = np.array(
    [
        [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
        [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
        [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
    ],
    dtype=float,
)
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
)


def make_icosphere(center=(0.0, 0.0, 0.0), radius: float = 1.0, subdivisions: int = 0) -> TriangleMesh:
    """Icosahedron with each face split into four ``subdivisions`` times, projected to the sphere."""
    if subdivisions < 0:
        raise ValueError("subdivisions must be >= 0")
    verts = [v / np.linalg.norm(v) for v in _ICO_VERTICES]
    faces = [tuple(f) for f in _ICO_FACES]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.asarray(center, dtype=float) + radius * np.array(verts)
    return TriangleMesh(v, np.array(faces))


def _closest_points_on_triangles(p: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Closest points for every (point, triangle) pair, shape ``(P, F, 3)``."""
    p = p[:, None, :]
    a, b, c = tri[None, :, 0], tri[None, :, 1], tri[None, :, 2]
    ab, ac = b - a, c - a
    ap, bp, cp = p - a, p - b, p - c

    def dot(u, v):
        return np.einsum("...i,...i->...", u, v)

    d1, d2 = dot(ab, ap), dot(ac, ap)
    d3, d4 = dot(ab, bp), dot(ac, bp)
    d5, d6 = dot(ab, cp), dot(ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = 1.0 / (va + vb + vc)
    interior = a + ab * (vb * denom)[..., None] + ac * (vc * denom)[..., None]
    conditions = [
        (d1 <= 0) & (d2 <= 0),
        (d3 >= 0) & (d4 <= d3),
        (vc <= 0) & (d1 >= 0) & (d3 <= 0),
        (d6 >= 0) & (d5 <= d6),
        (vb <= 0) & (d2 >= 0) & (d6 <= 0),
        (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
    ]
    choices = [
        np.broadcast_to(a, interior.shape),
        np.broadcast_to(b, interior.shape),
        a + ab * t_ab[..., None],
        np.broadcast_to(c, interior.shape),
        a + ac * t_ac[..., None],
        b + (c - b) * t_bc[..., None],
    ]
    out = interior
    # apply in reverse so earlier Voronoi regions take priority
    for cond, choice in reversed(list(zip(conditions, choices))):
        out = np.where(cond[..., None], choice, out)
    return out


def point_to_scene_distance(scene: SceneModel, p) -> np.ndarray | float:
    """Unsigned Euclidean distance from point(s) to the scene surface."""
    p = np.asarray(p, dtype=float)
    surface = scene.surface if isinstance(scene, SceneModel) else scene
    if isinstance(surface, Sphere):
        d = np.abs(np.linalg.norm(p - surface.center, axis=-1) - surface.radius)
    else:
        flat = p.reshape(-1, 3)
        tri = surface.triangles
        d = np.empty(len(flat))
        for start in range(0, len(flat), 256):
            cp = _closest_points_on_triangles(flat[start : start + 256], tri)
            d[start : start + 256] = np.linalg.norm(cp - flat[start : start + 256, None, :], axis=-1).min(axis=1)
        d = d.reshape(p.shape[:-1])
    return float(d) if np.ndim(d) == 0 else d


# --------------------------------------------------------------------------- PLY


def write_ply(path, vertices, colours=None, faces=None) -> None:
    """Write an ASCII PLY with optional 8-bit RGB vertex colours and triangle faces."""
    vertices = np.asarray(vertices, dtype=float)
    lines = ["ply", "format ascii 1.0", f"element vertex {len(vertices)}"]
    lines += ["property double x", "property double y", "property double z"]
    if colours is not None:
        rgb = np.clip(np.round(np.asarray(colours, dtype=float) * 255.0), 0, 255).astype(int)
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    if faces is not None:
        faces = np.asarray(faces, dtype=int)
        lines += [f"element face {len(faces)}", "property list uchar int vertex_indices"]
    lines.append("end_header")
    for k, v in enumerate(vertices):
        row = " ".join(repr(float(c)) for c in v)
        if colours is not None:
            row += " " + " ".join(str(c) for c in rgb[k])
        lines.append(row)
    if faces is not None:
        lines += ["3 " + " ".join(str(i) for i in f) for f in faces]
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path):
    """Read an ASCII PLY written by :func:`write_ply`: ``(vertices, colours | None, faces | None)``."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "ply":
        raise ValueError(f"{path} is not a PLY file")
    n_vert = n_face = 0
    vprops: list[str] = []
    current = None
    idx = 1
    while lines[idx] != "end_header":
        tok = lines[idx].split()
        if tok[0] == "format" and tok[1] != "ascii":
            raise ValueError("only ASCII PLY is supported")
        if tok[0] == "element":
            current = tok[1]
            if current == "vertex":
                n_vert = int(tok[2])
            elif current == "face":
                n_face = int(tok[2])
        elif tok[0] == "property" and current == "vertex":
            vprops.append(tok[-1])
        idx += 1
    body = lines[idx + 1 :]
    table = np.array([[float(x) for x in body[k].split()] for k in range(n_vert)]).reshape(n_vert, len(vprops))
    col = {name: table[:, k] for k, name in enumerate(vprops)}
    vertices = np.stack([col["x"], col["y"], col["z"]], axis=1)
    colours = None
    if "red" in col:
        colours = np.stack([col["red"], col["green"], col["blue"]], axis=1) / 255.0
    faces = None
    if n_face:
        faces = np.array([[int(x) for x in body[n_vert + k].split()[1:4]] for k in range(n_face)])
    return vertices, colours, faces
