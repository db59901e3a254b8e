"""Surface and regularizer losses with analytic vertex gradients.

Every loss returns a :class:`GradientBundle`. Nearest-neighbour pairings,
nearest faces and closest-point regions are held fixed while
differentiating, and the face picked for each surface sample is treated
as a constant; only the barycentric map from corners to sample position
carries gradient.
"""
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .errors import ConfigError, EmptyInputError, ShapeError
from .io import write_csv
from .mesh import edges, laplacian_operator
from .sampler import DEFAULT_SAMPLES, derive_seed, sample_surface, scatter_to_vertices
from .tridist import _closest, closest_params, points_mesh_sq_dist

SURFACE_MODES = ("ptp", "pts", "vtp")


@dataclass
class GradientBundle:
    """A loss value and its gradient w.r.t. the predicted mesh's vertices.

    ``pairing`` records the discrete choices made while evaluating the
    loss (nearest indices, nearest points, sampled faces). It only changes
    when a tie is crossed, which is what :func:`check_gradient` watches.
    """

    value: float
    d_vertices: np.ndarray
    pairing: tuple = field(default=(), repr=False)

    def __add__(self, other):
        return GradientBundle(self.value + other.value, self.d_vertices + other.d_vertices,
                              self.pairing + other.pairing)

    def scaled(self, k):
        return GradientBundle(k * self.value, k * self.d_vertices, self.pairing)


@dataclass(frozen=True)
class LossWeights:
    """Weights of the latent, surface, edge and Laplacian terms."""

    latent: float = 0.001
    surface: float = 1.0
    edge: float = 0.3
    laplacian: float = 1.0

    def __post_init__(self):
        if min(self.as_tuple()) < 0:
            raise ConfigError("loss weights must be nonnegative")

    def as_tuple(self):
        return (self.latent, self.surface, self.edge, self.laplacian)

    @classmethod
    def parse(cls, text):
        vals = [float(x) for x in text.split(",")]
        if len(vals) != 4:
            raise ConfigError("expected four comma-separated weights")
        return cls(*vals)


# ---------------------------------------------------------------------------
# nearest neighbours

_SCAN_LIMIT = 20_000_000


def nearest_neighbors(X, Y):
    """Index into ``Y`` of the nearest point for each row of ``X``.

    Small problems use an exact pairwise scan (ties go to the lowest
    index); large ones fall back to a k-d tree.
    """
    if len(X) * len(Y) <= _SCAN_LIMIT:
        X = np.ascontiguousarray(X, dtype=np.float64)[None]
        Y = np.ascontiguousarray(Y, dtype=np.float64)[None]
        return _masked_nn(X, Y, np.array([Y.shape[1]]))[0]
    return cKDTree(Y).query(X)[1]


def _segment_sum(index, values, size):
    return np.stack([np.bincount(index, weights=values[:, k], minlength=size) for k in range(3)], axis=1)


def chamfer_points(S, Sh):
    """Symmetric Chamfer sum between point sets ``S`` and ``Sh``.

    Returns
    -------
    value : float
    grad_S, grad_Sh : gradients w.r.t. each point set
    pairing : (nearest-in-Sh for S, nearest-in-S for Sh)
    """
    S = np.asarray(S, dtype=np.float64).reshape(-1, 3)
    Sh = np.asarray(Sh, dtype=np.float64).reshape(-1, 3)
    if len(S) == 0 or len(Sh) == 0:
        raise EmptyInputError("chamfer needs two non-empty point sets")
    fwd = nearest_neighbors(S, Sh)
    bwd = nearest_neighbors(Sh, S)
    r1 = S - Sh[fwd]
    r2 = Sh - S[bwd]
    value = float(np.einsum("ij,ij->", r1, r1) + np.einsum("ij,ij->", r2, r2))
    grad_S = 2.0 * r1 + _segment_sum(bwd, -2.0 * r2, len(S))
    grad_Sh = 2.0 * r2 + _segment_sum(fwd, -2.0 * r1, len(Sh))
    return value, grad_S, grad_Sh, (fwd, bwd)


# ---------------------------------------------------------------------------
# mesh losses

def sample_seeds(seed):
    """Seeds for the predicted and target surfaces drawn from one master seed."""
    return derive_seed(seed, 0), derive_seed(seed, 1)


def loss_vtp(pred_mesh, target_points):
    """Chamfer between the predicted vertices and fixed target samples."""
    value, _, g, pairing = chamfer_points(target_points, pred_mesh.vertices)
    return GradientBundle(value, g, pairing)


def _samples(pred_mesh, target_mesh, n, seed, shared_seed):
    sp, st = sample_seeds(seed)
    if shared_seed:
        st = sp
    return sample_surface(pred_mesh, n, sp), sample_surface(target_mesh, n, st)


def loss_ptp(pred_mesh, target_mesh, n=DEFAULT_SAMPLES, seed=0, shared_seed=False):
    """Chamfer between ``n`` samples drawn from each surface.

    With ``shared_seed`` both surfaces use the same draws, so identical
    meshes give exactly zero.
    """
    sp, st = _samples(pred_mesh, target_mesh, n, seed, shared_seed)
    value, _, g_pts, pairing = chamfer_points(st.positions, sp.positions)
    d = scatter_to_vertices(pred_mesh.faces, sp.face_idx, sp.weights, g_pts, pred_mesh.n_vertices)
    return GradientBundle(value, d, pairing + (sp.face_idx,))


def _surface_term_to_pred(points, pred_mesh):
    """sum over fixed points of squared distance to the predicted surface."""
    sq, face, s, t = points_mesh_sq_dist(points, pred_mesh)
    tri = pred_mesh.triangles[face]
    cp = (1.0 - s - t)[:, None] * tri[:, 0] + s[:, None] * tri[:, 1] + t[:, None] * tri[:, 2]
    g = 2.0 * (cp - points)
    wts = np.stack([1.0 - s - t, s, t], axis=1)
    d = scatter_to_vertices(pred_mesh.faces, face, wts, g, pred_mesh.n_vertices)
    return float(sq.sum()), d, cp


def _surface_term_from_pred(samples, pred_mesh, target_mesh):
    """sum over predicted samples of squared distance to the fixed target surface."""
    pts = samples.positions
    sq, face, s, t = points_mesh_sq_dist(pts, target_mesh)
    tri = target_mesh.triangles[face]
    cp = (1.0 - s - t)[:, None] * tri[:, 0] + s[:, None] * tri[:, 1] + t[:, None] * tri[:, 2]
    g = 2.0 * (pts - cp)
    d = scatter_to_vertices(pred_mesh.faces, samples.face_idx, samples.weights, g, pred_mesh.n_vertices)
    return float(sq.sum()), d, cp


def loss_pts(pred_mesh, target_mesh, n=DEFAULT_SAMPLES, seed=0, shared_seed=False):
    """Exact point-to-surface loss in both directions.

    Target samples are measured against the predicted faces and predicted
    samples against the target faces, using squared distances.
    """
    sp, st = _samples(pred_mesh, target_mesh, n, seed, shared_seed)
    v1, d1, cp1 = _surface_term_to_pred(st.positions, pred_mesh)
    v2, d2, cp2 = _surface_term_from_pred(sp, pred_mesh, target_mesh)
    return GradientBundle(v1 + v2, d1 + d2, (cp1, cp2, sp.face_idx))


def loss_edge(pred_mesh):
    e = edges(pred_mesh)
    diff = pred_mesh.vertices[e[:, 0]] - pred_mesh.vertices[e[:, 1]]
    d = np.zeros_like(pred_mesh.vertices)
    np.add.at(d, e[:, 0], 2.0 * diff)
    np.add.at(d, e[:, 1], -2.0 * diff)
    return GradientBundle(float(np.einsum("ij,ij->", diff, diff)), d)


def loss_laplacian(mesh_before, mesh_after):
    """Squared change of uniform Laplacian coordinates; gradient w.r.t. ``mesh_after``."""
    if not mesh_before.same_topology(mesh_after):
        raise ShapeError("Laplacian loss needs meshes with identical connectivity")
    L = laplacian_operator(mesh_after)
    r = L @ mesh_after.vertices - L @ mesh_before.vertices
    return GradientBundle(float(np.einsum("ij,ij->", r, r)), 2.0 * (L.T @ r))


def surface_loss(mode, pred_mesh, target_mesh, n, seed, target_points=None):
    if mode == "ptp":
        return loss_ptp(pred_mesh, target_mesh, n, seed)
    if mode == "pts":
        return loss_pts(pred_mesh, target_mesh, n, seed)
    if mode == "vtp":
        if target_points is None:
            target_points = sample_surface(target_mesh, n, sample_seeds(seed)[1]).positions
        return loss_vtp(pred_mesh, target_points)
    raise ConfigError(f"unknown surface mode {mode!r}; expected one of {SURFACE_MODES}")


@dataclass
class TotalLoss:
    value: float
    d_vertices: np.ndarray
    terms: dict
    weights: LossWeights

    @property
    def bundle(self):
        return GradientBundle(self.value, self.d_vertices)

    def breakdown(self):
        return {"total": self.value, **self.terms}


def total_loss(pred, target, before, weights=LossWeights(), n=DEFAULT_SAMPLES, seed=0,
               surface_mode="pts", encoder=None, target_embedding=None, target_points=None):
    """Weighted sum of latent, surface, edge and Laplacian terms.

    Terms with zero weight are skipped entirely. ``before`` is the mesh the
    Laplacian term compares against; ``encoder`` is required when the latent
    weight is positive.
    """
    d = np.zeros_like(pred.vertices)
    terms = {"latent": 0.0, "surface": 0.0, "edge": 0.0, "laplacian": 0.0}
    if weights.latent > 0:
        if encoder is None:
            raise ConfigError("latent weight > 0 needs an encoder")
        from .graphnet import loss_latent
        b = loss_latent(pred, target, encoder, target_embedding=target_embedding)
        terms["latent"] = b.value
        d += weights.latent * b.d_vertices
    if weights.surface > 0:
        b = surface_loss(surface_mode, pred, target, n, seed, target_points)
        terms["surface"] = b.value
        d += weights.surface * b.d_vertices
    if weights.edge > 0:
        b = loss_edge(pred)
        terms["edge"] = b.value
        d += weights.edge * b.d_vertices
    if weights.laplacian > 0:
        b = loss_laplacian(before, pred)
        terms["laplacian"] = b.value
        d += weights.laplacian * b.d_vertices
    value = sum(w * terms[k] for w, k in zip(weights.as_tuple(), ("latent", "surface", "edge", "laplacian")))
    return TotalLoss(float(value), d, terms, weights)


def write_breakdown_csv(path, rows):
    """Rows of (step, total, latent, surface, edge, laplacian)."""
    write_csv(path, ["step", "total", "latent", "surface", "edge", "laplacian"], rows)


# ---------------------------------------------------------------------------
# gradient verification

@dataclass
class GradCheckReport:
    max_rel_error: float
    max_abs_error: float
    analytic: np.ndarray = field(repr=False)
    numeric: np.ndarray = field(repr=False)
    tied: bool = False

    def passed(self, tolerance):
        return (not self.tied) and self.max_rel_error < tolerance


def _same_pairing(p, q, atol=1e-4):
    if len(p) != len(q):
        return False
    for a, b in zip(p, q):
        a, b = np.asarray(a), np.asarray(b)
        if a.shape != b.shape:
            return False
        if np.issubdtype(a.dtype, np.integer):
            if not np.array_equal(a, b):
                return False
        elif not np.allclose(a, b, atol=atol, rtol=0.0):
            return False
    return True


def check_gradient(loss_closure, mesh, step=1e-5, tolerance=1e-4):
    """Compare an analytic gradient with central finite differences.

    ``loss_closure(mesh) -> GradientBundle`` must be deterministic. The
    relative error is the largest coordinate discrepancy divided by the
    largest numeric gradient magnitude. If any perturbed evaluation changes
    the loss's discrete pairing the configuration sits within ``step`` of a
    tie and the report is flagged ``tied``.
    """
    base = loss_closure(mesh)
    analytic = np.asarray(base.d_vertices, dtype=np.float64)
    numeric = np.zeros_like(analytic)
    tied = False
    v0 = mesh.vertices
    for i in range(v0.shape[0]):
        for k in range(3):
            vals = []
            for sgn in (1.0, -1.0):
                v = v0.copy()
                v[i, k] += sgn * step
                b = loss_closure(mesh.with_vertices(v))
                vals.append(b.value)
                if not tied and not _same_pairing(base.pairing, b.pairing):
                    tied = True
            numeric[i, k] = (vals[0] - vals[1]) / (2.0 * step)
    err = np.abs(analytic - numeric)
    scale = max(np.abs(numeric).max(), 1e-12)
    return GradCheckReport(float(err.max() / scale), float(err.max()), analytic, numeric, tied)


# ---------------------------------------------------------------------------
# batched kernels: B vertex sets sharing one face list (used by the 2D study)
#
# Rows may use different sample counts: point i of row b takes part only
# when i < counts[b]; padded points contribute neither value nor gradient.

def _valid(counts, n):
    return np.arange(n)[None, :] < np.asarray(counts)[:, None]


@njit(cache=True)
def _masked_nn(X, Y, y_count):
    nb, n, m = X.shape[0], X.shape[1], Y.shape[1]
    out = np.zeros((nb, n), dtype=np.int64)
    for b in range(nb):
        for i in range(n):
            best, arg = np.inf, 0
            for j in range(min(m, y_count[b])):
                d0 = X[b, i, 0] - Y[b, j, 0]
                d1 = X[b, i, 1] - Y[b, j, 1]
                d2 = X[b, i, 2] - Y[b, j, 2]
                q = d0 * d0 + d1 * d1 + d2 * d2
                if q < best:
                    best, arg = q, j
            out[b, i] = arg
    return out


def _batch_nn(X, Y, y_valid):
    """Index of the nearest valid row of Y for every row of X, per batch (ties -> lowest)."""
    return _masked_nn(np.ascontiguousarray(X), np.ascontiguousarray(Y), y_valid.sum(axis=1))


def _gather(Y, idx):
    return np.take_along_axis(Y, idx[..., None], axis=1)


def _batch_chamfer(S, Sh, s_valid, sh_valid):
    """Masked Chamfer sums per row; returns value (B,) and the gradient w.r.t. Sh."""
    nb, m = Sh.shape[0], Sh.shape[1]
    fwd = _batch_nn(S, Sh, sh_valid)
    bwd = _batch_nn(Sh, S, s_valid)
    r1 = (S - _gather(Sh, fwd)) * s_valid[..., None]
    r2 = (Sh - _gather(S, bwd)) * sh_valid[..., None]
    value = np.einsum("bnd,bnd->b", r1, r1) + np.einsum("bmd,bmd->b", r2, r2)
    flat = (fwd + m * np.arange(nb)[:, None]).ravel()
    g = 2.0 * r2 + _segment_sum(flat, -2.0 * r1.reshape(-1, 3), nb * m).reshape(nb, m, 3)
    return value, g


@njit(cache=True)
def _batch_nearest_face(points, V, faces):
    nb, n, nf = points.shape[0], points.shape[1], faces.shape[0]
    sq = np.empty((nb, n))
    face = np.empty((nb, n), dtype=np.int64)
    s_out = np.empty((nb, n))
    t_out = np.empty((nb, n))
    E0 = np.empty((nf, 3))
    E1 = np.empty((nf, 3))
    for b in range(nb):
        Bv = V[b][faces[:, 0]]
        for j in range(nf):
            for d in range(3):
                E0[j, d] = V[b, faces[j, 1], d] - Bv[j, d]
                E1[j, d] = V[b, faces[j, 2], d] - Bv[j, d]
        for i in range(n):
            p = points[b, i]
            best, arg, bs, bt = np.inf, 0, 0.0, 0.0
            for j in range(nf):
                q, u, w = _closest(p, Bv[j], E0[j], E1[j])
                if q < best:
                    best, arg, bs, bt = q, j, u, w
            sq[b, i], face[b, i], s_out[b, i], t_out[b, i] = best, arg, bs, bt
    return sq, face, s_out, t_out


def _batch_point_surface(points, V, faces):
    """Brute-force nearest face of each point for every batch row (ties -> lowest index)."""
    return _batch_nearest_face(np.ascontiguousarray(points), np.ascontiguousarray(V), faces)


@njit(cache=True)
def _scatter_kernel(faces, face_idx, weights, grads, out):
    for b in range(face_idx.shape[0]):
        for i in range(face_idx.shape[1]):
            f = face_idx[b, i]
            for k in range(3):
                w = weights[b, i, k]
                for d in range(3):
                    out[b, faces[f, k], d] += w * grads[b, i, d]


def _batch_scatter(faces, face_idx, weights, grads, n_vertices):
    out = np.zeros((face_idx.shape[0], n_vertices, 3))
    _scatter_kernel(faces, face_idx, np.ascontiguousarray(weights), np.ascontiguousarray(grads), out)
    return out


def batch_surface_loss(mode, V, faces, target, pred_draws, target_draws, counts=None):
    """Per-row loss values and vertex gradients for a batch of predictions.

    Parameters
    ----------
    mode : 'vtp', 'ptp' or 'pts'
    V : (B, N, 3) predicted vertex sets sharing ``faces``
    target : Mesh
    pred_draws, target_draws : (B, n, 3) uniforms for sampling; ``vtp``
        ignores ``pred_draws``.
    counts : (B,) number of leading samples each row uses; all ``n`` if None.
    """
    from .sampler import sample_batch

    nb, nv = V.shape[0], V.shape[1]
    n = target_draws.shape[1]
    valid = _valid(np.full(nb, n) if counts is None else counts, n)
    tv = np.broadcast_to(target.vertices, (nb,) + target.vertices.shape)
    _, _, S = sample_batch(tv, target.faces, target_draws)
    if mode == "vtp":
        return _batch_chamfer(S, V, valid, np.ones((nb, nv), dtype=bool))
    fidx, wts, Sh = sample_batch(V, faces, pred_draws)
    if mode == "ptp":
        value, g_pts = _batch_chamfer(S, Sh, valid, valid)
        return value, _batch_scatter(faces, fidx, wts, g_pts, nv)
    if mode != "pts":
        raise ConfigError(f"unknown surface mode {mode!r}")
    mask = valid[..., None]
    # target samples against predicted faces
    sq1, f1, s1, t1 = _batch_point_surface(S, V, faces)
    corners = V[np.arange(nb)[:, None, None], faces[f1]]
    w1 = np.stack([1.0 - s1 - t1, s1, t1], axis=-1)
    cp1 = np.einsum("bnk,bnkd->bnd", w1, corners)
    grad = _batch_scatter(faces, f1, w1, 2.0 * (cp1 - S) * mask, nv)
    # predicted samples against target faces
    sq2, f2, s2, t2 = _batch_point_surface(Sh, tv, target.faces)
    w2 = np.stack([1.0 - s2 - t2, s2, t2], axis=-1)
    cp2 = np.einsum("bnk,bnkd->bnd", w2, target.triangles[f2])
    grad = grad + _batch_scatter(faces, fidx, wts, 2.0 * (Sh - cp2) * mask, nv)
    return (sq1 * valid).sum(axis=1) + (sq2 * valid).sum(axis=1), grad
