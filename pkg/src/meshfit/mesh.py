"""Triangle mesh container, per-face geometry and graph operators."""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .errors import ConfigError, DegenerateFaceError, NoNeighborError, ShapeError

# ||e1 x e2|| below this marks a face as degenerate
AREA_EPS = 1e-12

ADJACENCY_MODES = ("raw", "row", "sym")


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangle mesh.

    Parameters
    ----------
    vertices : array_like, shape (N, 3)
        Vertex coordinates. 2D input is padded with z = 0.
    faces : array_like, shape (F, 3)
        Vertex indices per face. The order (v1, v2, v3) fixes the
        orientation used by :func:`face_normals`.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64)
        f = np.array(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] not in (2, 3):
            raise ShapeError(f"vertices must have shape (N, 3), got {v.shape}")
        if v.shape[1] == 2:
            v = np.column_stack([v, np.zeros(len(v))])
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise ShapeError(f"faces must have shape (F, 3), got {f.shape}")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ShapeError("face index out of range")
        if f.size and np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise ShapeError("face repeats a vertex index")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        # operators that depend on connectivity only, shared by with_vertices
        object.__setattr__(self, "_topology", {})

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def with_vertices(self, vertices):
        """Same connectivity, new coordinates."""
        vertices = np.asarray(vertices, dtype=np.float64)
        if vertices.shape != self.vertices.shape:
            raise ShapeError(f"expected {self.vertices.shape}, got {vertices.shape}")
        out = Mesh(vertices, self.faces)
        object.__setattr__(out, "_topology", self._topology)
        return out

    def same_topology(self, other):
        return (self.n_vertices == other.n_vertices
                and np.array_equal(self.faces, other.faces))

    @cached_property
    def triangles(self):
        """Face corner coordinates, shape (F, 3, 3)."""
        return self.vertices[self.faces]

    @property
    def edge_face_adjacency(self):
        return self._cached("face_adjacency", lambda: _face_neighbors(self.faces))

    def _cached(self, key, build):
        if key not in self._topology:
            self._topology[key] = build()
        return self._topology[key]

    def __repr__(self):
        return f"Mesh(n_vertices={self.n_vertices}, n_faces={self.n_faces})"


# ---------------------------------------------------------------------------
# per-face geometry

def face_cross(mesh):
    """Unnormalized normals (v1 - v2) x (v3 - v2), shape (F, 3)."""
    t = mesh.triangles
    return np.cross(t[:, 0] - t[:, 1], t[:, 2] - t[:, 1])


def face_areas(mesh):
    return 0.5 * np.linalg.norm(face_cross(mesh), axis=1)


def face_normals(mesh):
    """Unit normals of all faces.

    Raises
    ------
    DegenerateFaceError
        For the first face whose cross product norm is below ``AREA_EPS``.
    """
    c = face_cross(mesh)
    norm = np.linalg.norm(c, axis=1)
    bad = np.flatnonzero(norm < AREA_EPS)
    if bad.size:
        raise DegenerateFaceError(int(bad[0]))
    return c / norm[:, None]


def face_normal(mesh, face_idx):
    t = mesh.triangles[face_idx]
    c = np.cross(t[0] - t[1], t[2] - t[1])
    norm = np.linalg.norm(c)
    if norm < AREA_EPS:
        raise DegenerateFaceError(int(face_idx))
    return c / norm


def _face_neighbors(faces):
    """Faces sharing an edge with each face, as a CSR matrix of shape (F, F)."""
    nf = len(faces)
    if nf == 0:
        return sparse.csr_matrix((0, 0))
    e = np.sort(faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    owner = np.repeat(np.arange(nf), 3)
    _, edge_id = np.unique(e, axis=0, return_inverse=True)
    edge_id = edge_id.ravel()
    # face x edge incidence; F @ F.T counts shared edges
    inc = sparse.csr_matrix((np.ones(3 * nf), (owner, edge_id)))
    adj = (inc @ inc.T).tocsr()
    adj.setdiag(0)
    adj.eliminate_zeros()
    adj.data[:] = 1.0
    return adj


def face_neighbors(mesh, face_idx):
    adj = mesh.edge_face_adjacency
    return adj.indices[adj.indptr[face_idx]:adj.indptr[face_idx + 1]]


def face_curvature(mesh, face_idx):
    """Mean angle in degrees between a face normal and its edge-neighbors' normals."""
    nbrs = face_neighbors(mesh, face_idx)
    if nbrs.size == 0:
        raise NoNeighborError(f"face {face_idx} has no edge-neighbors")
    nf = face_normal(mesh, face_idx)
    dots = np.array([np.dot(nf, face_normal(mesh, j)) for j in nbrs])
    return float(np.degrees(np.arccos(np.clip(dots, -1.0, 1.0))).mean())


def face_curvatures(mesh):
    """Vectorized :func:`face_curvature`; faces without neighbors get NaN."""
    normals = face_normals(mesh)
    adj = mesh.edge_face_adjacency.tocoo()
    dots = np.einsum("ij,ij->i", normals[adj.row], normals[adj.col])
    ang = np.degrees(np.arccos(np.clip(dots, -1.0, 1.0)))
    total = np.bincount(adj.row, weights=ang, minlength=mesh.n_faces)
    count = np.bincount(adj.row, minlength=mesh.n_faces)
    with np.errstate(invalid="ignore", divide="ignore"):
        return total / count


# ---------------------------------------------------------------------------
# graph operators

def edges(mesh):
    """Distinct undirected edges as an (E, 2) array with i < j, lexicographically sorted."""
    return mesh._cached("edges", lambda: _edges(mesh.faces))


def _edges(faces):
    if len(faces) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    e = np.unique(np.sort(faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1), axis=0)
    e.setflags(write=False)
    return e


@dataclass(frozen=True, eq=False)
class AdjacencyOp:
    """Vertex adjacency matrix in one of three normalizations.

    ``raw`` is the 0/1 edge indicator, ``row`` is D^-1 (A + I) and ``sym``
    is D^-1/2 (A + I) D^-1/2 with D the degree of A + I.
    """

    mode: str
    matrix: sparse.csr_matrix

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, other):
        return self.matrix @ other


def adjacency(mesh, mode="sym"):
    if mode not in ADJACENCY_MODES:
        raise ConfigError(f"unknown adjacency mode {mode!r}; expected one of {ADJACENCY_MODES}")
    return mesh._cached(("adjacency", mode), lambda: _adjacency(mesh, mode))


def _adjacency(mesh, mode):
    n = mesh.n_vertices
    e = edges(mesh)
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    a = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    if mode == "raw":
        return AdjacencyOp(mode, a)
    a = (a + sparse.identity(n, format="csr")).tocsr()
    deg = np.asarray(a.sum(axis=1)).ravel()
    if mode == "row":
        m = sparse.diags(1.0 / deg) @ a
    else:
        d = sparse.diags(1.0 / np.sqrt(deg))
        m = d @ a @ d
    return AdjacencyOp(mode, sparse.csr_matrix(m))


def laplacian_operator(mesh):
    """Sparse L with (L @ V)[p] = v_p - mean of p's neighbors (uniform weights)."""
    return mesh._cached("laplacian", lambda: _laplacian(mesh))


def _laplacian(mesh):
    a = adjacency(mesh, "raw").matrix
    deg = np.asarray(a.sum(axis=1)).ravel()
    if np.any(deg == 0):
        raise NoNeighborError(f"vertex {int(np.flatnonzero(deg == 0)[0])} has no neighbors")
    return (sparse.identity(mesh.n_vertices, format="csr") - sparse.diags(1.0 / deg) @ a).tocsr()


def laplacian_coordinates(mesh):
    return laplacian_operator(mesh) @ mesh.vertices


# ---------------------------------------------------------------------------
# primitives

def _icosahedron():
    p = (1.0 + 5 ** 0.5) / 2.0
    v = np.array([
        [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
        [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
        [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
    ], dtype=np.float64)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def _midpoint_subdivide(v, f):
    e = np.sort(f[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    uniq, inv = np.unique(e, axis=0, return_inverse=True)
    mid = len(v) + inv.reshape(-1, 3)
    v = np.vstack([v, 0.5 * (v[uniq[:, 0]] + v[uniq[:, 1]])])
    a, b, c = f.T
    ab, bc, ca = mid.T
    f = np.concatenate([
        np.stack([a, ab, ca], 1), np.stack([b, bc, ab], 1),
        np.stack([c, ca, bc], 1), np.stack([ab, bc, ca], 1),
    ])
    return v, f


def ico_sphere(subdiv=0, radius=1.0):
    if subdiv < 0:
        raise ConfigError("subdiv must be >= 0")
    v, f = _icosahedron()
    for _ in range(subdiv):
        v, f = _midpoint_subdivide(v, f)
        v = v / np.linalg.norm(v, axis=1, keepdims=True)
    return Mesh(radius * v, f)


def ellipsoid(a=1.0, b=1.0, c=1.0, subdiv=2):
    m = ico_sphere(subdiv)
    return Mesh(m.vertices * np.array([a, b, c]), m.faces)


def cube(size=1.0):
    """Axis-aligned cube centered at the origin, two triangles per side."""
    v = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=np.float64)
    f = np.array([
        [0, 1, 3], [0, 3, 2],  # x = -1
        [4, 6, 7], [4, 7, 5],  # x = +1
        [0, 4, 5], [0, 5, 1],  # y = -1
        [2, 3, 7], [2, 7, 6],  # y = +1
        [0, 2, 6], [0, 6, 4],  # z = -1
        [1, 5, 7], [1, 7, 3],  # z = +1
    ])
    return Mesh(0.5 * size * v, f)


def tetrahedron():
    """Regular tetrahedron inscribed in the unit sphere."""
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64) / 3 ** 0.5
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return Mesh(v, f)


def torus(major=0.35, minor=0.15, n_major=24, n_minor=12):
    i, j = np.meshgrid(np.arange(n_major), np.arange(n_minor), indexing="ij")
    th = 2 * np.pi * i.ravel() / n_major
    ph = 2 * np.pi * j.ravel() / n_minor
    v = np.column_stack([
        (major + minor * np.cos(ph)) * np.cos(th),
        (major + minor * np.cos(ph)) * np.sin(th),
        minor * np.sin(ph),
    ])

    def idx(a, b):
        return (a % n_major) * n_minor + (b % n_minor)

    a, b = i.ravel(), j.ravel()
    f = np.concatenate([
        np.stack([idx(a, b), idx(a + 1, b), idx(a + 1, b + 1)], 1),
        np.stack([idx(a, b), idx(a + 1, b + 1), idx(a, b + 1)], 1),
    ])
    return Mesh(v, f)


def fan_polygon(corners):
    """Fan-triangulate a 2D polygon around its vertex centroid, embedded at z = 0.

    The boundary corners come first, the centroid is the last vertex.
    """
    corners = np.asarray(corners, dtype=np.float64)
    k = len(corners)
    v = np.vstack([corners, corners.mean(axis=0)])
    f = np.stack([np.arange(k), (np.arange(k) + 1) % k, np.full(k, k)], axis=1)
    return Mesh(v, f)


def square2d(size=1.0):
    h = 0.5 * size
    return fan_polygon([[-h, -h], [h, -h], [h, h], [-h, h]])


TOY_TRIANGLE = ((-0.6, -0.45), (0.6, -0.45), (0.0, 0.65))


def triangle2d(corners=TOY_TRIANGLE):
    return fan_polygon(corners)


def grid2d(nx=4, ny=4, size=1.0):
    """Flat triangulated grid in the z = 0 plane with (nx+1)(ny+1) vertices."""
    xs = np.linspace(-0.5 * size, 0.5 * size, nx + 1)
    ys = np.linspace(-0.5 * size, 0.5 * size, ny + 1)
    x, y = np.meshgrid(xs, ys, indexing="ij")
    v = np.column_stack([x.ravel(), y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    a = (i * (ny + 1) + j).ravel()
    b, c, d = a + ny + 1, a + ny + 2, a + 1
    f = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    return Mesh(v, f)


def primitive(kind, **kwargs):
    """Construct a named primitive mesh.

    ``kind`` is one of ``ico_sphere``, ``cube``, ``ellipsoid``, ``square2d``,
    ``triangle2d``, ``tetrahedron``, ``torus`` or ``grid2d``; keyword
    arguments go to the matching constructor.
    """
    table = {
        "ico_sphere": ico_sphere, "cube": cube, "ellipsoid": ellipsoid,
        "square2d": square2d, "triangle2d": triangle2d,
        "tetrahedron": tetrahedron, "torus": torus, "grid2d": grid2d,
    }
    try:
        return table[kind](**kwargs)
    except KeyError:
        raise ConfigError(f"unknown primitive {kind!r}") from None


def normalize_to_unit_cube(mesh):
    """Center at the bounding-box center and scale the longest side to 1."""
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    scale = float((hi - lo).max())
    if scale == 0:
        return mesh
    return mesh.with_vertices((mesh.vertices - 0.5 * (lo + hi)) / scale)


def permute_vertices(mesh, perm):
    """Relabel vertices so that new vertex k is old vertex ``perm[k]``."""
    perm = np.asarray(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return Mesh(mesh.vertices[perm], inv[mesh.faces])
