"""End-to-end acceptance runs, one test per criterion.

Each test prints a single ``[criterion k] PASS|FAIL ...`` line before
asserting. The expensive runs (toy sweep, cube fits) are shared between
criteria through module fixtures. Run alone with ``pytest -m slow -s``.
"""
import time

import numpy as np
import pytest
from numba import njit

from meshfit.driver import FitConfig, ablation_run, ablation_targets, fit_mesh, toy_sweep, write_toy_csv
from meshfit.graphnet import (LayerParams, encode_mesh, gcn_layer, init_encoder, labeled_families,
                              loss_latent, train_toy_encoder, zn_gcn_layer)
from meshfit.gradsuite import GRAD_LOSSES, gradient_trials, random_mesh
from meshfit.losses import loss_pts
from meshfit.mesh import adjacency, cube, ico_sphere, permute_vertices
from meshfit.refine import split_adaptive, split_uniform
from meshfit.tridist import TriangleParam, point_triangle_sq_dist

from conftest import jittered_sphere, unit_square

pytestmark = pytest.mark.slow


def report(request, k, ok, detail):
    line = f"[criterion {k}] {'PASS' if ok else 'FAIL'} {detail}"
    with request.config.pluginmanager.getplugin("capturemanager").global_and_fixture_disabled():
        print("\n" + line)
    assert ok, line


def timed(fn, *args, **kwargs):
    t = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t


@pytest.fixture(scope="module")
def sweep():
    return timed(toy_sweep, range(1, 101), range(20))


@pytest.fixture(scope="module")
def cube_fits():
    init = ico_sphere(2, radius=0.5)
    adaptive, t = timed(fit_mesh, init, cube(), FitConfig(seed=0))
    uniform = fit_mesh(init, cube(), FitConfig(seed=0, split_mode="uniform"))
    return adaptive, uniform, t


def test_toy_study(request, sweep):
    res, secs = sweep
    pts, ptp, vtp = (res[k].mean_iou() for k in ("pts", "ptp", "vtp"))
    ns = np.asarray(res["pts"].n_points)
    hi = ns >= 30
    order = bool(np.all(pts[hi] > ptp[hi]) and np.all(ptp[hi] > vtp[hi]))
    rise = vtp[ns == 100][0] - vtp[ns == 1][0]
    pts50 = pts[ns == 50][0]
    ok = order and rise < 0.1 and pts50 >= 0.85 and secs < 600
    report(request, 1, ok, f"ordering(n>=30)={order} vtp_rise={rise:.3f}(<0.1) "
                           f"pts@50={pts50:.3f}(>=0.85) time={secs:.0f}s(<600)")


@njit(cache=True)
def _grid_min(P, B, E0, E1, k):
    best = np.inf
    h = 1.0 / (k - 1)
    for i in range(k):
        for j in range(k - i):  # i + j <= k - 1 keeps the hypotenuse exactly
            s, t = i * h, j * h
            d = 0.0
            for c in range(3):
                x = B[c] + s * E0[c] + t * E1[c] - P[c]
                d += x * x
            best = min(best, d)
    return best


def test_point_triangle_oracle(request):
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    bad_order = bad_gap = 0
    worst = 0.0
    for _ in range(10_000):
        v = rng.random((4, 3))
        tri = TriangleParam.from_vertices(*v[:3])
        exact = point_triangle_sq_dist(v[3], tri)[0]
        g = _grid_min(v[3], tri.B, tri.E0, tri.E1, 400)
        bad_order += exact > g
        bad_gap += g - exact > 1e-6
        worst = max(worst, g - exact)
    secs = time.perf_counter() - t0
    ok = bad_order == 0 and bad_gap == 0 and secs < 30
    report(request, 2, ok, f"exact>grid: {bad_order}, gap>1e-6: {bad_gap}, worst gap {worst:.2e}, "
                           f"time={secs:.1f}s(<30)")


def test_gradient_suite(request):
    t0 = time.perf_counter()
    worst, redrawn = {}, 0
    for kind in GRAD_LOSSES:
        reps, r = gradient_trials(kind, 100, seed=0)
        worst[kind] = max(rep.max_rel_error for rep in reps)
        redrawn += r
    secs = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and secs < 120
    detail = " ".join(f"{k}={v:.1e}" for k, v in worst.items())
    report(request, 3, ok, f"max rel err {detail} (<1e-4), {redrawn} redrawn, time={secs:.0f}s(<120)")


def test_closed_form_pts(request):
    n = 1000
    errs = []
    for d in (0.1, 0.25):
        v = loss_pts(unit_square(d), unit_square(0.0), n, 0).value
        errs.append(abs(v - 2 * n * d * d) / (2 * n * d * d))
    report(request, 4, max(errs) < 1e-9, f"relative errors {errs[0]:.1e}, {errs[1]:.1e} (<1e-9)")


def test_split_preservation(request):
    worst = 0.0
    for seed in range(20):
        m = random_mesh(np.random.default_rng(seed))
        for out in (split_adaptive(m)[0], split_uniform(m)[0]):
            worst = max(worst, loss_pts(m, out, seed=seed).value)
    report(request, 5, worst < 1e-9, f"max loss_pts {worst:.1e} (<1e-9) over 20 meshes x 2 splits")


def test_layer_equivalences(request):
    rng = np.random.default_rng(0)
    bitwise = local = 0
    for k in range(100):
        m = jittered_sphere(k)
        fin, fout = rng.integers(1, 8, 2)
        H = rng.normal(size=(m.n_vertices, fin))
        p = LayerParams(rng.normal(size=(fin, fout)), rng.normal(size=fout))
        A = adjacency(m, "sym")
        bitwise += np.array_equal(zn_gcn_layer(H, A, p), gcn_layer(H, A, p))
        p0 = LayerParams(p.W, p.b, 0)
        v = int(rng.integers(m.n_vertices))
        H2 = H + rng.normal(size=H.shape)
        H2[v] = H[v]
        local += np.array_equal(zn_gcn_layer(H2, A, p0)[v], zn_gcn_layer(H, A, p0)[v])
    m = jittered_sphere(0, subdiv=1)
    enc = init_encoder(seed=0)
    e0 = encode_mesh(m, enc)
    perm_err = max(np.abs(encode_mesh(permute_vertices(m, rng.permutation(m.n_vertices)), enc) - e0).max()
                   for _ in range(50))
    ok = bitwise == 100 and local == 100 and perm_err < 1e-9
    report(request, 6, ok, f"bitwise {bitwise}/100, locality {local}/100, "
                           f"permutation error {perm_err:.1e} (<1e-9)")


def test_cube_fit(request, cube_fits):
    adaptive, uniform, secs = cube_fits
    events = [(r.mean_curvature(True), r.mean_curvature(False)) for r in adaptive.split_reports]
    curv_ok = bool(events) and all(s > u for s, u in events)  # NaN (no split) compares False
    va, vu = adaptive.mesh.n_vertices, uniform.mesh.n_vertices
    gap = abs(adaptive.final_f1 - uniform.final_f1)
    ok = adaptive.final_f1 >= 60 and curv_ok and va < vu and gap <= 5 and secs < 300
    ev = ", ".join(f"{s:.1f}/{u:.1f}" for s, u in events)
    report(request, 7, ok, f"F1={adaptive.final_f1:.2f}(>=60) split/unsplit curvature [{ev}] "
                           f"vertices adaptive {va} < uniform {vu}: {va < vu}, "
                           f"F1 gap {gap:.2f}(<=5), time={secs:.0f}s(<300)")


def test_ablation_direction(request):
    table = ablation_run(["full", "vtp_loss"], ablation_targets(), FitConfig(seed=0))
    full, vtp = table.mean_f1("full"), table.mean_f1("vtp_loss")
    report(request, 8, full > vtp, f"mean F1 full {full:.2f} > vtp_loss {vtp:.2f}")


def test_encoder_surrogate(request):
    _, metrics = train_toy_encoder(labeled_families(8, 0), steps=500, seed=0,
                                   held_out=labeled_families(8, 1000))
    acc = metrics["heldout_accuracy"]
    rng = np.random.default_rng(0)
    enc = init_encoder(seed=0)
    zero = sum(loss_latent(m, m, enc).value == 0.0 for m in (random_mesh(rng) for _ in range(50)))
    report(request, 9, acc >= 0.9 and zero == 50, f"held-out accuracy {acc:.3f}(>=0.9), "
                                                   f"loss_latent(M, M)=0 for {zero}/50")


def test_determinism(request, sweep, cube_fits, tmp_path):
    write_toy_csv(tmp_path / "toy_a.csv", sweep[0])
    write_toy_csv(tmp_path / "toy_b.csv", toy_sweep(range(1, 101), range(20)))
    cube_fits[0].to_csv(tmp_path / "fit_a.csv")
    fit_mesh(ico_sphere(2, radius=0.5), cube(), FitConfig(seed=0)).to_csv(tmp_path / "fit_b.csv")
    toy_same = (tmp_path / "toy_a.csv").read_bytes() == (tmp_path / "toy_b.csv").read_bytes()
    fit_same = (tmp_path / "fit_a.csv").read_bytes() == (tmp_path / "fit_b.csv").read_bytes()
    report(request, 10, toy_same and fit_same, f"toy CSV identical: {toy_same}, fit CSV identical: {fit_same}")
