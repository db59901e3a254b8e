"""Surface F1 score and raster IoU for planar fan-triangulated shapes."""
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .errors import ConfigError, EmptyInputError, PlanarityError
from .io import write_csv
from .sampler import derive_seed, sample_surface

F1_TAU = 1e-4
# 1e4 samples cannot resolve a 0.01 radius on a unit cube (see README)
DEFAULT_EVAL_SAMPLES = 100_000
DEFAULT_RASTER = 512


@dataclass(frozen=True)
class MetricConfig:
    tau: float = F1_TAU
    n_eval: int = DEFAULT_EVAL_SAMPLES
    raster_resolution: int = DEFAULT_RASTER

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError("tau must be > 0")
        if self.n_eval < 1:
            raise ConfigError("n_eval must be >= 1")
        if self.raster_resolution < 64:
            raise ConfigError("raster_resolution must be >= 64")


def _precision(src, dst, tau):
    # points with no neighbor inside the (slightly padded) radius come back as inf
    d, _ = cKDTree(dst).query(src, distance_upper_bound=np.sqrt(tau) * (1 + 1e-9))
    return 100.0 * float(np.mean(d * d <= tau))


def f1_score(pred_points, target_points, tau=F1_TAU):
    """F1 (percent) where a point matches if its squared distance to the other set is <= tau."""
    pred = np.asarray(pred_points, dtype=np.float64).reshape(-1, 3)
    target = np.asarray(target_points, dtype=np.float64).reshape(-1, 3)
    if len(pred) == 0 or len(target) == 0:
        raise EmptyInputError("F1 needs two non-empty point sets")
    p = _precision(pred, target, tau)
    r = _precision(target, pred, tau)
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


def mesh_f1(pred_mesh, target_mesh, config=MetricConfig(), seed=0):
    """F1 between fresh surface samples of two meshes."""
    a = sample_surface(pred_mesh, config.n_eval, derive_seed(seed, 101)).positions
    b = sample_surface(target_mesh, config.n_eval, derive_seed(seed, 102)).positions
    return f1_score(a, b, config.tau)


def _check_planar(mesh, tol=1e-9):
    if np.abs(mesh.vertices[:, 2]).max(initial=0.0) > tol:
        raise PlanarityError("mesh does not lie in the z = 0 plane")


@njit(cache=True)
def _coverage(tris, xs, ys):
    inside = np.zeros((xs.shape[0], ys.shape[0]), dtype=np.bool_)
    for f in range(tris.shape[0]):
        a0, a1 = tris[f, 0, 0], tris[f, 0, 1]
        b0, b1 = tris[f, 1, 0], tris[f, 1, 1]
        c0, c1 = tris[f, 2, 0], tris[f, 2, 1]
        # zero-area faces cover nothing
        if (b0 - a0) * (c1 - a1) - (b1 - a1) * (c0 - a0) == 0:
            continue
        # cells outside the face's bounding box cannot be covered by it
        i0 = np.searchsorted(xs, min(a0, b0, c0))
        i1 = np.searchsorted(xs, max(a0, b0, c0), side="right")
        j0 = np.searchsorted(ys, min(a1, b1, c1))
        j1 = np.searchsorted(ys, max(a1, b1, c1), side="right")
        for i in range(i0, i1):
            x = xs[i]
            for j in range(j0, j1):
                if inside[i, j]:
                    continue
                y = ys[j]
                d1 = (b0 - a0) * (y - a1) - (b1 - a1) * (x - a0)
                d2 = (c0 - b0) * (y - b1) - (c1 - b1) * (x - b0)
                d3 = (a0 - c0) * (y - c1) - (a1 - c1) * (x - c0)
                neg = d1 < 0 or d2 < 0 or d3 < 0
                pos = d1 > 0 or d2 > 0 or d3 > 0
                inside[i, j] = not (neg and pos)
    return inside


def coverage_mask(mesh, xs, ys):
    """Boolean grid (len(xs), len(ys)) of cell centers covered by any face of a planar mesh."""
    return _coverage(np.ascontiguousarray(mesh.triangles), np.asarray(xs, dtype=np.float64),
                     np.asarray(ys, dtype=np.float64))


def polygon_iou_2d(mesh_a, mesh_b, raster_resolution=DEFAULT_RASTER):
    """IoU of two planar meshes' covered regions, rasterized over their joint bounding box."""
    _check_planar(mesh_a)
    _check_planar(mesh_b)
    pts = np.vstack([mesh_a.vertices[:, :2], mesh_b.vertices[:, :2]])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    n = raster_resolution
    xs = lo[0] + (np.arange(n) + 0.5) * (hi[0] - lo[0]) / n
    ys = lo[1] + (np.arange(n) + 0.5) * (hi[1] - lo[1]) / n
    a = coverage_mask(mesh_a, xs, ys)
    b = coverage_mask(mesh_b, xs, ys)
    union = np.count_nonzero(a | b)
    return 0.0 if union == 0 else np.count_nonzero(a & b) / union


def write_metric_csv(path, rows):
    """Rows of (metric, value, config)."""
    write_csv(path, ["metric", "value", "config"], rows)
