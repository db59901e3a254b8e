"""Randomized finite-difference checks of every differentiable loss.

Each trial draws a jittered icosahedron as the prediction plus a random
target, freezes all sampling seeds, and compares the analytic vertex
gradient with central differences. Trials whose discrete choices flip under
the perturbation are redrawn.
"""
import numpy as np

from .errors import ConfigError
from .losses import check_gradient, loss_edge, loss_laplacian, loss_ptp, loss_pts, loss_vtp
from .mesh import Mesh, face_areas, ico_sphere

GRAD_LOSSES = ("vtp", "ptp", "pts", "edge", "laplacian", "latent")
GRAD_SAMPLES = 40
MAX_REDRAWS = 50


def random_mesh(rng, jitter=0.15, min_area=1e-3):
    """Icosahedron with random vertex noise, a random scale and offset; no thin faces."""
    base = ico_sphere(0)
    while True:
        v = base.vertices + rng.normal(0.0, jitter, base.vertices.shape)
        v = v * rng.uniform(0.3, 0.6) + rng.uniform(-0.1, 0.1, 3)
        mesh = Mesh(v, base.faces)
        if face_areas(mesh).min() > min_area:
            return mesh


def _tiny_encoder(seed):
    from .graphnet import init_encoder

    return init_encoder(widths=(3, 8, 8, 6), seed=seed)


def loss_closure(kind, rng):
    """(closure, mesh) for one random configuration of loss ``kind``."""
    pred = random_mesh(rng)
    target = random_mesh(rng)
    seed = int(rng.integers(2**31))
    if kind == "vtp":
        pts = rng.uniform(-0.5, 0.5, (GRAD_SAMPLES, 3))
        return (lambda m: loss_vtp(m, pts)), pred
    if kind == "ptp":
        return (lambda m: loss_ptp(m, target, GRAD_SAMPLES, seed)), pred
    if kind == "pts":
        return (lambda m: loss_pts(m, target, GRAD_SAMPLES, seed)), pred
    if kind == "edge":
        return loss_edge, pred
    if kind == "laplacian":
        return (lambda m: loss_laplacian(target, m)), pred
    if kind == "latent":
        from .graphnet import loss_latent

        enc = _tiny_encoder(seed)
        return (lambda m: loss_latent(m, target, enc)), pred
    raise ConfigError(f"unknown loss {kind!r}; expected one of {GRAD_LOSSES}")


def gradient_trials(kind, trials=100, seed=0, step=1e-5, tolerance=1e-4):
    """Run ``trials`` untied gradient checks; returns (reports, n_redrawn)."""
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    reports, redrawn = [], 0
    while len(reports) < trials:
        closure, mesh = loss_closure(kind, rng)
        rep = check_gradient(closure, mesh, step, tolerance)
        if rep.tied:
            redrawn += 1
            if redrawn > MAX_REDRAWS * trials:
                raise ConfigError(f"{kind}: too many tied configurations")
            continue
        reports.append(rep)
    return reports, redrawn
