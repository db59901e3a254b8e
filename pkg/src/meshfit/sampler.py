"""Area-weighted surface sampling with the square-root barycentric map.

Each sample keeps its provenance (face index and the two uniform draws),
so its position is a fixed linear function of the face's three corners and
gradients can be pushed back onto mesh vertices.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ProvenanceError, ZeroAreaError
from .io import save_points_xyz, write_csv
from .mesh import face_areas

DEFAULT_SAMPLES = 2500


def derive_seed(seed, *tags):
    """Deterministic 63-bit child seed for ``(seed, *tags)``."""
    ss = np.random.SeedSequence([int(seed) & (2**63 - 1), *[int(t) for t in tags]])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def uniform_draws(seed, n, k=3):
    """``(n, k)`` uniforms in [0, 1); row i depends only on ``(seed, i)``.

    Philox is counter based: the stream is a pure function of the key and
    the position, so the first rows never change when ``n`` grows.
    """
    key = np.random.SeedSequence(int(seed)).generate_state(2, dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.random((n, k))


@dataclass(frozen=True)
class FaceDistribution:
    areas: np.ndarray
    total: float
    probs: np.ndarray
    cdf: np.ndarray

    def choose(self, x):
        """Inverse-CDF face choice for uniforms ``x``; zero-area faces are never picked."""
        idx = np.searchsorted(self.cdf, x, side="right")
        return np.minimum(idx, len(self.cdf) - 1)


def face_distribution(mesh):
    areas = face_areas(mesh)
    total = float(areas.sum())
    if not total > 0.0:
        raise ZeroAreaError("mesh has zero total surface area")
    probs = areas / total
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return FaceDistribution(areas, total, probs, cdf)


def barycentric_weights(u, w):
    """Weights of (v1, v2, v3) for draws (u, w); shape ``u.shape + (3,)``."""
    su = np.sqrt(u)
    return np.stack([1.0 - su, su * (1.0 - w), su * w], axis=-1)


@dataclass(frozen=True)
class SampledPointSet:
    face_idx: np.ndarray
    u: np.ndarray
    w: np.ndarray
    positions: np.ndarray
    seed: int

    def __len__(self):
        return len(self.positions)

    @property
    def weights(self):
        return barycentric_weights(self.u, self.w)

    def rows(self):
        return [(*p, int(f), u, w) for p, f, u, w in
                zip(self.positions.tolist(), self.face_idx, self.u.tolist(), self.w.tolist())]

    def to_csv(self, path):
        write_csv(path, ["x", "y", "z", "face_idx", "u", "w"], self.rows())

    def to_xyz(self, path):
        save_points_xyz(self.positions, path)


def sample_surface(mesh, n=DEFAULT_SAMPLES, seed=0):
    """Draw ``n`` points uniformly over the surface of ``mesh``."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    dist = face_distribution(mesh)
    r = uniform_draws(seed, n)
    face_idx = dist.choose(r[:, 0])
    u, w = r[:, 1], r[:, 2]
    pos = np.einsum("nk,nkd->nd", barycentric_weights(u, w), mesh.triangles[face_idx])
    return SampledPointSet(face_idx, u, w, pos, int(seed))


def check_provenance(point_set, mesh):
    if len(point_set) and (point_set.face_idx.min() < 0 or point_set.face_idx.max() >= mesh.n_faces):
        raise ProvenanceError("sample face index out of range for this mesh")


def sample_jacobian(point_set, mesh):
    """d(position)/d(face corners), shape (n, 3, 9).

    Column block k (columns 3k..3k+2) is the derivative with respect to
    corner k of the source face and equals ``weight_k * I``.
    """
    check_provenance(point_set, mesh)
    wts = point_set.weights
    return np.einsum("nk,ij->nikj", wts, np.eye(3)).reshape(len(wts), 3, 9)


def scatter_to_vertices(faces, face_idx, weights, grads, n_vertices):
    """Accumulate per-sample position gradients onto vertices.

    ``weights`` are the barycentric weights of each sample within its face,
    ``grads`` the loss gradient w.r.t. each sample position.
    """
    out = np.zeros((n_vertices, 3))
    corners = faces[face_idx]
    for k in range(3):
        np.add.at(out, corners[:, k], weights[:, k, None] * grads)
    return out


# ---------------------------------------------------------------------------
# batched variant: B vertex sets sharing one face list

def sample_batch(vertices, faces, draws):
    """Sample each of ``B`` meshes with its own draws.

    Parameters
    ----------
    vertices : (B, N, 3) array
    faces : (F, 3) int array shared by all meshes
    draws : (B, n, 3) uniforms

    Returns
    -------
    face_idx : (B, n), weights : (B, n, 3), points : (B, n, 3)
    """
    nb, nf = len(vertices), len(faces)
    tri = vertices[:, faces]  # (B, F, 3, 3)
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, :, 0] - tri[:, :, 1], tri[:, :, 2] - tri[:, :, 1]), axis=-1)
    total = areas.sum(axis=1, keepdims=True)
    if np.any(total <= 0.0):
        raise ZeroAreaError("mesh has zero total surface area")
    cdf = np.cumsum(areas / total, axis=1)
    cdf[:, -1] = 1.0
    # shift each row's cdf by its batch index so one searchsorted covers all rows
    offs = np.arange(nb)[:, None]
    flat = (cdf + offs).ravel()
    idx = np.searchsorted(flat, draws[..., 0] + offs, side="right") - offs * nf
    face_idx = np.clip(idx, 0, nf - 1)
    wts = barycentric_weights(draws[..., 1], draws[..., 2])
    corners = tri[offs, face_idx]  # (B, n, 3, 3)
    points = np.einsum("bnk,bnkd->bnd", wts, corners)
    return face_idx, wts, points
