"""Optimization loops: cascaded deform-then-split fitting, the 2D loss study and ablations.

Vertices are optimized directly against a target mesh; each stage runs a
fixed number of optimizer steps on the total loss and then refines the
mesh, so later stages start from a denser surface where it bends most.
"""
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DivergenceError
from .graphnet import encode_mesh, init_encoder
from .io import write_csv
from .losses import LossWeights, batch_surface_loss, total_loss
from .mesh import Mesh, cube, ellipsoid, ico_sphere, square2d, torus, triangle2d
from .metrics import MetricConfig, mesh_f1, polygon_iou_2d
from .optim import make_optimizer
from .refine import SplitConfig, split_adaptive, split_uniform
from .sampler import DEFAULT_SAMPLES, derive_seed, sample_surface

log = logging.getLogger(__name__)

SPLIT_MODES = ("adaptive", "uniform", "none")


@dataclass(frozen=True)
class FitConfig:
    """Schedule for :func:`fit_mesh`.

    Within every stage, iterations before ``switch_iter`` use the
    point-to-point surface term and later ones the point-to-surface term
    (``surface_mode`` other than ``'schedule'`` pins one mode throughout).
    Iterations from ``decay_iter`` on run at ``lr * lr_decay``.
    """

    stages: int = 3
    iters_per_stage: int = 300
    optimizer: str = "adam"
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    lr: float = 1e-2
    lr_decay: float = 0.1
    decay_iter: int = 240
    stage_lr_scale: float = 1.0
    weights: LossWeights = LossWeights()
    surface_mode: str = "schedule"
    switch_iter: int = 200
    n_samples: int = DEFAULT_SAMPLES
    split: SplitConfig = SplitConfig()
    split_mode: str = "adaptive"
    split_after_last: bool = False
    seed: int = 0
    encoder_kind: str = "zn"
    metric: MetricConfig = MetricConfig()

    def __post_init__(self):
        if self.stages < 1 or self.iters_per_stage < 1 or self.n_samples < 1:
            raise ConfigError("stages, iters_per_stage and n_samples must be >= 1")
        if not self.lr >= 0:
            raise ConfigError("lr must be >= 0")
        if self.split_mode not in SPLIT_MODES:
            raise ConfigError(f"split_mode must be one of {SPLIT_MODES}")
        if self.surface_mode not in ("schedule", "ptp", "pts", "vtp"):
            raise ConfigError(f"unknown surface mode {self.surface_mode!r}")

    def mode_at(self, it):
        if self.surface_mode != "schedule":
            return self.surface_mode
        return "ptp" if it < self.switch_iter else "pts"


TRACE_HEADER = ["stage", "iter", "mode", "total", "latent", "surface", "edge", "laplacian",
                "n_vertices", "n_faces"]


@dataclass
class FitTrace:
    rows: list = field(default_factory=list)
    split_reports: list = field(default_factory=list)
    mesh: Mesh = None
    final_f1: float = float("nan")

    def losses(self):
        return np.array([r[3] for r in self.rows])

    def to_csv(self, path):
        write_csv(path, TRACE_HEADER, [[repr(x) if isinstance(x, float) else x for x in r]
                                        for r in self.rows])


def default_encoder(config):
    return init_encoder(seed=derive_seed(config.seed, 7), kind=config.encoder_kind)


def fit_mesh(init, target, config=FitConfig(), encoder=None, evaluate=True):
    """Deform ``init`` towards ``target`` over ``config.stages`` deform/split stages.

    Raises
    ------
    DivergenceError
        If the total loss becomes non-finite; the partial trace is attached.
    """
    if encoder is None and config.weights.latent > 0:
        encoder = default_encoder(config)
    target_emb = encode_mesh(target, encoder) if encoder is not None else None
    target_points = None
    if config.surface_mode == "vtp":
        target_points = sample_surface(target, config.n_samples, derive_seed(config.seed, 3)).positions

    trace = FitTrace()
    mesh = init
    for stage in range(config.stages):
        before = mesh
        lr = config.lr * config.stage_lr_scale ** stage
        opt = make_optimizer(config.optimizer, lr, config.betas, config.eps)
        state = opt.init([mesh.vertices.shape])
        V = mesh.vertices.copy()
        for it in range(config.iters_per_stage):
            opt.lr = lr * (config.lr_decay if it >= config.decay_iter else 1.0)
            mode = config.mode_at(it)
            res = total_loss(mesh, target, before, config.weights, config.n_samples,
                             derive_seed(config.seed, stage, it), mode, encoder, target_emb,
                             target_points)
            trace.rows.append([stage, it, mode, res.value, *(res.terms[k] for k in
                               ("latent", "surface", "edge", "laplacian")),
                               mesh.n_vertices, mesh.n_faces])
            if not (math.isfinite(res.value) and np.all(np.isfinite(res.d_vertices))):
                trace.mesh = mesh
                raise DivergenceError(f"non-finite loss at stage {stage}, iteration {it}", trace)
            V = V - opt.step([V], [res.d_vertices], state)[0]
            # squared distances overflow long before the coordinates do
            if not np.isfinite(np.square(V).sum()):
                trace.mesh = mesh
                raise DivergenceError(f"non-finite vertices after stage {stage}, iteration {it}", trace)
            mesh = mesh.with_vertices(V)
        log.info("stage %d done: loss %.6g, %d vertices", stage, trace.rows[-1][3], mesh.n_vertices)
        if stage < config.stages - 1 or config.split_after_last:
            if config.split_mode == "adaptive":
                mesh, report = split_adaptive(mesh, config.split)
            elif config.split_mode == "uniform":
                mesh, report = split_uniform(mesh)
            else:
                report = None
            if report is not None:
                trace.split_reports.append(report)
    trace.mesh = mesh
    if evaluate:
        trace.final_f1 = mesh_f1(mesh, target, config.metric, config.seed)
    return trace


# ---------------------------------------------------------------------------
# 2D square -> triangle loss study

TOY_LR = 0.01
TOY_ITERS = 2000
TOY_DECAY_AT = 0.75


class _BucketDraws:
    """Uniform draws for a group of (seed, n) runs, one iteration at a time.

    Each run owns a Philox stream keyed by (seed, n, tag); rows shorter than
    the bucket width are zero-padded and masked out by the loss.
    """

    def __init__(self, keys, width, tag, block=250):
        self.gens = []
        self.ns = []
        for seed, n in keys:
            key = np.random.SeedSequence(derive_seed(seed, n, tag)).generate_state(2, dtype=np.uint64)
            self.gens.append(np.random.Generator(np.random.Philox(key=key)))
            self.ns.append(n)
        self.width, self.block = width, block
        self.buf, self.pos = None, block

    def next(self):
        if self.pos == self.block:
            self.buf = np.zeros((self.block, len(self.gens), self.width, 3))
            for r, (g, n) in enumerate(zip(self.gens, self.ns)):
                self.buf[:, r, :n] = g.random((self.block, n, 3))
            self.pos = 0
        self.pos += 1
        return self.buf[self.pos - 1]


@dataclass
class ToyResult:
    loss_kind: str
    n_points: list
    seeds: list
    iou: np.ndarray  # (len(n_points), len(seeds))
    vertices: np.ndarray = field(repr=False, default=None)  # (len(n_points), len(seeds), 5, 3)

    def mean_iou(self):
        return self.iou.mean(axis=1)

    def rows(self):
        return [(self.loss_kind, n, s, float(self.iou[i, j]))
                for i, n in enumerate(self.n_points) for j, s in enumerate(self.seeds)]


def toy_square_triangle(loss_kind, n_points, iters=TOY_ITERS, lr=TOY_LR, seeds=range(20),
                        optimizer="adam", decay_at=TOY_DECAY_AT, raster_resolution=512,
                        bucket=10):
    """Fit the 2D square to the target triangle under one loss, for several sample counts.

    Every (n, seed) run is independent: its sampling streams are keyed by
    (seed, n), so how runs are grouped into batches does not change results.
    Runs are batched ``bucket`` sample counts at a time, all seeds together.
    """
    n_points = [n_points] if np.isscalar(n_points) else list(n_points)
    seeds = list(seeds)
    if any(n < 1 for n in n_points):
        raise ConfigError("n_points must be >= 1")
    init, target = square2d(), triangle2d()
    ious = np.zeros((len(n_points), len(seeds)))
    verts = np.zeros((len(n_points), len(seeds)) + init.vertices.shape)
    order = np.argsort(n_points, kind="stable")
    for lo in range(0, len(order), bucket):
        rows = [(i, j) for i in order[lo:lo + bucket] for j in range(len(seeds))]
        counts = np.array([n_points[i] for i, _ in rows])
        width = int(counts.max())
        keys = [(seeds[j], n_points[i]) for i, j in rows]
        pred_draws = _BucketDraws(keys, width, 1)
        tgt_draws = _BucketDraws(keys, width, 2)
        V = np.broadcast_to(init.vertices, (len(rows),) + init.vertices.shape).copy()
        opt = make_optimizer(optimizer, lr)
        state = opt.init([V.shape])
        for it in range(iters):
            opt.lr = lr * (0.1 if it >= decay_at * iters else 1.0)
            _, g = batch_surface_loss(loss_kind, V, init.faces, target, pred_draws.next(),
                                      tgt_draws.next(), counts)
            g[..., 2] = 0.0  # stay in the plane
            V -= opt.step([V], [g], state)[0]
        for (i, j), v in zip(rows, V):
            verts[i, j] = v
            ious[i, j] = polygon_iou_2d(Mesh(v, init.faces), target, raster_resolution)
    return ToyResult(loss_kind, n_points, seeds, ious, verts)


def toy_sweep(n_points=range(1, 101), seeds=range(20), kinds=("pts", "ptp", "vtp"), **kwargs):
    return {k: toy_square_triangle(k, n_points, seeds=seeds, **kwargs) for k in kinds}


def write_toy_csv(path, results):
    rows = [r for res in results.values() for r in res.rows()]
    write_csv(path, ["loss", "n_points", "seed", "iou"], [(k, n, s, repr(v)) for k, n, s, v in rows])


# ---------------------------------------------------------------------------
# ablations

ABLATION_VARIANTS = ("full", "gcn_encoder", "uniform_split", "no_latent", "vtp_loss")


def ablation_targets():
    """Synthetic targets: cube, anisotropic sphere and torus, all inside the unit cube."""
    return {
        "cube": cube(),
        "ellipsoid": ellipsoid(0.5, 0.3, 0.2, subdiv=1),
        "torus": torus(),
    }


def default_init():
    return ico_sphere(2, radius=0.5)


def variant_config(variant, config):
    if variant == "full":
        return config
    if variant == "gcn_encoder":
        return replace(config, encoder_kind="gcn")
    if variant == "uniform_split":
        return replace(config, split_mode="uniform")
    if variant == "no_latent":
        return replace(config, weights=replace(config.weights, latent=0.0))
    if variant == "vtp_loss":
        return replace(config, surface_mode="vtp")
    raise ConfigError(f"unknown ablation variant {variant!r}; expected one of {ABLATION_VARIANTS}")


@dataclass
class AblationTable:
    rows: list  # (variant, target, f1, n_vertices, n_faces)

    def mean_f1(self, variant):
        return float(np.mean([r[2] for r in self.rows if r[0] == variant]))

    def mean_vertices(self, variant):
        return float(np.mean([r[3] for r in self.rows if r[0] == variant]))

    def summary(self):
        variants = list(dict.fromkeys(r[0] for r in self.rows))
        return [(v, self.mean_f1(v), self.mean_vertices(v)) for v in variants]

    def to_csv(self, path):
        write_csv(path, ["variant", "target", "f1", "n_vertices", "n_faces"],
                  [(v, t, repr(f), nv, nf) for v, t, f, nv, nf in self.rows])


def ablation_run(variants, targets, config=FitConfig(), init=None):
    if len(targets) < 3:
        raise ConfigError("ablation needs at least 3 targets")
    init = default_init() if init is None else init
    variants = [variants] if isinstance(variants, str) else list(variants)
    rows = []
    for variant in variants:
        cfg = variant_config(variant, config)
        for name, target in targets.items():
            tr = fit_mesh(init, target, cfg)
            rows.append((variant, name, tr.final_f1, tr.mesh.n_vertices, tr.mesh.n_faces))
            log.info("%s/%s: F1 %.2f, %d vertices", variant, name, tr.final_f1, tr.mesh.n_vertices)
    return AblationTable(rows)
