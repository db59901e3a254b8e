import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from meshfit.errors import EmptyInputError, ShapeError
from meshfit.gradsuite import GRAD_LOSSES, gradient_trials
from meshfit.graphnet import init_encoder
from meshfit.losses import (LossWeights, _surface_term_to_pred, batch_surface_loss, chamfer_points,
                            check_gradient, loss_edge, loss_laplacian, loss_ptp, loss_pts,
                            loss_vtp, nearest_neighbors, sample_seeds, total_loss, write_breakdown_csv)
from meshfit.mesh import Mesh, grid2d, ico_sphere, square2d, triangle2d
from meshfit.refine import SplitConfig, split_adaptive, split_uniform
from meshfit.sampler import sample_batch, sample_surface, uniform_draws

from conftest import jittered_sphere, unit_square

point_sets = st.integers(1, 30).flatmap(
    lambda n: st.lists(st.tuples(*[st.floats(-5, 5)] * 3), min_size=n, max_size=n))


def test_chamfer_examples():
    assert chamfer_points([[0, 0, 0]], [[1, 0, 0]])[0] == 2.0
    assert chamfer_points([[0, 0, 0], [1, 0, 0]], [[0, 0, 0]])[0] == 1.0
    S = np.random.default_rng(0).random((20, 3))
    assert chamfer_points(S, S)[0] == 0.0


def test_chamfer_empty():
    with pytest.raises(EmptyInputError):
        chamfer_points(np.zeros((0, 3)), [[0, 0, 0]])


@given(point_sets, point_sets)
def test_chamfer_symmetric_and_nonnegative(a, b):
    ab = chamfer_points(a, b)[0]
    assert ab == chamfer_points(b, a)[0]
    assert ab >= 0


def test_nearest_neighbors_paths_agree(rng):
    X, Y = rng.random((3000, 3)), rng.random((8000, 3))
    from scipy.spatial import cKDTree
    np.testing.assert_array_equal(nearest_neighbors(X[:500], Y), cKDTree(Y).query(X[:500])[1])
    # the k-d tree branch is used above the scan limit
    assert nearest_neighbors(X, Y).shape == (3000,)


def test_vtp_examples():
    single = Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    # the vertex at the origin pairs only with (0, 0, 1); the others sit on their targets
    pts = np.array([[0, 0, 1.0], [1, 0, 0], [0, 1, 0]])
    b = loss_vtp(single, pts)
    assert b.value == pytest.approx(2.0)
    np.testing.assert_allclose(b.d_vertices[0], [0, 0, -4])
    lone = loss_vtp(Mesh(np.zeros((1, 3)), np.zeros((0, 3), dtype=int)), [[0, 0, 1]])
    assert lone.value == 2.0
    np.testing.assert_allclose(lone.d_vertices, [[0, 0, -4]])
    assert loss_vtp(single, single.vertices).value == 0.0


def test_ptp_identical_with_shared_seed():
    m = ico_sphere(1)
    assert loss_ptp(m, m, 500, 3, shared_seed=True).value == 0.0
    assert loss_ptp(m, m, 500, 3).value > 0.0


def test_ptp_parallel_squares_converges():
    d = 0.2
    v = loss_ptp(unit_square(d), unit_square(0.0), 10_000, 1).value
    assert v / (2 * 10_000) == pytest.approx(d * d, rel=0.01)
    assert v / (2 * 10_000) >= d * d


@pytest.mark.parametrize("d", [0.1, 0.25, 0.7])
@pytest.mark.parametrize("n", [10, 1000])
def test_pts_closed_form(d, n):
    v = loss_pts(unit_square(d), unit_square(0.0), n, 5).value
    assert v == pytest.approx(2 * n * d * d, rel=1e-9)


def test_pts_zero_on_match():
    m = jittered_sphere(2)
    assert loss_pts(m, m, 400, 1).value < 1e-9


@given(st.integers(0, 2**31 - 1))
def test_pts_invariant_under_refinement(seed):
    m = jittered_sphere(seed)
    t = jittered_sphere(seed + 1)
    base = loss_pts(m, t, 100, seed)
    # refining the prediction leaves its surface, hence the exact distances, unchanged
    S = sample_surface(t, 100, 7).positions
    assert _surface_term_to_pred(S, split_uniform(m)[0])[0] == pytest.approx(
        _surface_term_to_pred(S, m)[0], abs=1e-9)
    assert base.value >= 0


def test_pts_term1_independent_of_prediction_density():
    # term 1 queries the exact predicted surface, so refinement of the prediction does not move it
    t = ico_sphere(1)
    m = jittered_sphere(4)
    S = sample_surface(t, 300, 2).positions
    ref = _surface_term_to_pred(S, m)[0]
    for refined in (split_uniform(m)[0], split_adaptive(m, SplitConfig(10))[0]):
        assert _surface_term_to_pred(S, refined)[0] == pytest.approx(ref, abs=1e-9)


def test_edge_examples():
    z = Mesh(np.zeros((3, 3)), [[0, 1, 2]])
    assert loss_edge(z).value == 0.0
    # triangle with one side of length 2 and two of length sqrt(2)
    m = Mesh([[0, 0, 0], [2, 0, 0], [1, 1, 0]], [[0, 1, 2]])
    assert loss_edge(m).value == pytest.approx(4.0 + 2.0 + 2.0)


@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10))
def test_edge_homogeneous(seed, k):
    m = jittered_sphere(seed)
    assert loss_edge(m.with_vertices(k * m.vertices)).value == pytest.approx(
        k * k * loss_edge(m).value, rel=1e-12)


def test_laplacian_examples():
    m = jittered_sphere(0)
    assert loss_laplacian(m, m).value == 0.0
    assert loss_laplacian(m, m.with_vertices(m.vertices + 3.0)).value < 1e-20
    with pytest.raises(ShapeError):
        loss_laplacian(m, ico_sphere(1))


def test_laplacian_quadratic_in_height():
    g = grid2d(5, 5)
    inner = int(np.argmin(np.linalg.norm(g.vertices[:, :2] - g.vertices[:, :2].mean(0), axis=1)))

    def bump(h):
        v = g.vertices.copy()
        v[inner, 2] += h
        return loss_laplacian(g, g.with_vertices(v)).value

    assert bump(0.1) / bump(0.05) == pytest.approx(4.0, rel=1e-9)


def test_total_loss():
    m = jittered_sphere(1)
    zero = total_loss(m, ico_sphere(0), m, LossWeights(0, 0, 0, 0), 100, 0)
    assert zero.value == 0.0 and not zero.d_vertices.any()
    same = total_loss(m, m, m, LossWeights(0, 1, 0, 0), 200, 0, "pts")
    assert same.value < 1e-9
    enc = init_encoder(seed=0)
    full = total_loss(m, ico_sphere(0), m, LossWeights(), 200, 0, "pts", encoder=enc)
    assert full.weights.as_tuple() == (0.001, 1.0, 0.3, 1.0)
    br = full.breakdown()
    assert set(br) == {"total", "latent", "surface", "edge", "laplacian"}
    assert br["total"] == pytest.approx(0.001 * br["latent"] + br["surface"] + 0.3 * br["edge"])
    with pytest.raises(ValueError):
        total_loss(m, m, m, LossWeights(), 10, 0, "pts")


def test_weights_parse():
    assert LossWeights.parse("0.001,1,0.3,1") == LossWeights()
    with pytest.raises(ValueError):
        LossWeights.parse("1,2")
    with pytest.raises(ValueError):
        LossWeights(-1, 1, 1, 1)


def test_breakdown_csv(tmp_path):
    write_breakdown_csv(tmp_path / "b.csv", [(0, 1.0, 0.1, 0.5, 0.2, 0.2)])
    assert (tmp_path / "b.csv").read_text().startswith("step,total,latent,surface,edge,laplacian")


def test_sample_seeds_distinct():
    a, b = sample_seeds(0)
    assert a != b and sample_seeds(0) == (a, b)


@pytest.mark.parametrize("kind,tol", [("edge", 1e-6), ("vtp", 1e-5), ("pts", 1e-4), ("ptp", 1e-4),
                                      ("laplacian", 1e-6), ("latent", 1e-4)])
def test_gradients_random(kind, tol):
    reports, _ = gradient_trials(kind, trials=8, seed=3)
    assert all(r.passed(tol) for r in reports), max(r.max_rel_error for r in reports)


def test_gradcheck_flags_ties():
    # the centre point is equidistant from many sphere vertices
    m = ico_sphere(0)
    rep = check_gradient(lambda x: loss_vtp(x, np.zeros((1, 3))), m)
    assert rep.tied


def test_gradsuite_unknown_loss():
    with pytest.raises(ValueError):
        gradient_trials("cosine", 1)
    assert set(GRAD_LOSSES) == {"vtp", "ptp", "pts", "edge", "laplacian", "latent"}


@pytest.mark.parametrize("mode", ["vtp", "ptp", "pts"])
def test_batch_matches_single(mode):
    # one batch row with full sample count equals the per-mesh loss on the same draws
    init, target = square2d(), triangle2d()
    V = init.vertices[None] * 0.9
    n = 25
    pd, td = uniform_draws(1, n)[None], uniform_draws(2, n)[None]
    val, g = batch_surface_loss(mode, V, init.faces, target, pd, td)
    # padding rows with masked samples must not change the valid ones
    val2, g2 = batch_surface_loss(mode, np.repeat(V, 2, 0), init.faces, target,
                                  np.concatenate([pd, np.pad(pd[:, :10], ((0, 0), (0, 15), (0, 0)))]),
                                  np.concatenate([td, np.pad(td[:, :10], ((0, 0), (0, 15), (0, 0)))]),
                                  counts=[n, 10])
    assert val2[0] == pytest.approx(val[0], rel=1e-12)
    np.testing.assert_allclose(g2[0], g[0], rtol=1e-12, atol=1e-14)
    _, _, S = sample_batch(target.vertices[None], target.faces, td)
    if mode == "vtp":
        ref = loss_vtp(Mesh(V[0], init.faces), S[0])
        assert val[0] == pytest.approx(ref.value, rel=1e-12)
        np.testing.assert_allclose(g[0], ref.d_vertices, atol=1e-12)
    assert val[0] >= 0

