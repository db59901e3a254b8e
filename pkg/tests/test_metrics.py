import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from meshfit.errors import EmptyInputError, PlanarityError
from meshfit.mesh import Mesh, cube, fan_polygon, ico_sphere, square2d
from meshfit.metrics import MetricConfig, f1_score, mesh_f1, polygon_iou_2d, write_metric_csv


def test_f1_examples():
    a = np.random.default_rng(0).random((50, 3))
    assert f1_score(a, a) == 100.0
    assert f1_score(a, a + 10.0) == 0.0
    # precision 50, recall 100
    assert f1_score([[0, 0, 0], [1, 0, 0]], [[0, 0, 0]]) == pytest.approx(200 / 3)


def test_f1_uses_squared_distance():
    # distance 0.009 is inside tau = 1e-4 only when squared
    assert f1_score([[0, 0, 0]], [[0.009, 0, 0]], tau=1e-4) == 100.0
    assert f1_score([[0, 0, 0]], [[0.011, 0, 0]], tau=1e-4) == 0.0


def test_f1_empty():
    with pytest.raises(EmptyInputError):
        f1_score(np.zeros((0, 3)), [[0, 0, 0]])


@given(st.integers(0, 2**31 - 1), st.floats(1e-4, 0.1), st.floats(1.0, 4.0))
def test_f1_symmetric_monotone(seed, tau, k):
    r = np.random.default_rng(seed)
    a, b = r.random((40, 3)), r.random((30, 3))
    assert f1_score(a, b, tau) == f1_score(b, a, tau)
    assert f1_score(a, b, tau * k) >= f1_score(a, b, tau)


def test_mesh_f1_self():
    cfg = MetricConfig(n_eval=100_000)
    assert mesh_f1(cube(), cube(), cfg, 0) > 99.0
    assert mesh_f1(cube(), cube().with_vertices(cube().vertices * 3), cfg, 0) == 0.0


def test_config_validation():
    with pytest.raises(ValueError):
        MetricConfig(tau=0)
    with pytest.raises(ValueError):
        MetricConfig(n_eval=0)


def test_iou_examples():
    sq = fan_polygon([[0, 0], [1, 0], [1, 1], [0, 1]])
    half = fan_polygon([[0, 0], [0.5, 0], [0.5, 1], [0, 1]])
    far = fan_polygon([[5, 5], [6, 5], [6, 6], [5, 6]])
    assert polygon_iou_2d(sq, sq) == 1.0
    assert polygon_iou_2d(sq, far) == 0.0
    for res in (256, 512):
        assert polygon_iou_2d(sq, half, res) == pytest.approx(0.5, abs=2 / res)
    a, b = polygon_iou_2d(sq, half, 256), polygon_iou_2d(sq, half, 512)
    assert abs(a - b) / b < 0.01


def test_iou_triangle_vs_square_analytic():
    # right triangle covering half of the square
    tri = Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    sq = fan_polygon([[0, 0], [1, 0], [1, 1], [0, 1]])
    assert polygon_iou_2d(tri, sq, 512) == pytest.approx(0.5, abs=4 / 512)


def test_iou_ignores_degenerate_faces():
    sq = square2d()
    collapsed = Mesh(np.vstack([sq.vertices[:4], [[0.3, 0.3, 0]]]), sq.faces)
    flat = Mesh([[0, 0, 0], [1, 1, 0], [2, 2, 0]], [[0, 1, 2]])
    assert polygon_iou_2d(flat, sq) == 0.0
    assert 0.0 <= polygon_iou_2d(collapsed, sq) <= 1.0


def test_iou_planarity():
    with pytest.raises(PlanarityError):
        polygon_iou_2d(ico_sphere(0), square2d())


@given(st.integers(0, 2**31 - 1))
def test_iou_range(seed):
    r = np.random.default_rng(seed)
    a = Mesh(np.column_stack([r.random((5, 2)), np.zeros(5)]), square2d().faces)
    b = square2d()
    v = polygon_iou_2d(a, b, 128)
    assert 0.0 <= v <= 1.0
    assert v == polygon_iou_2d(b, a, 128)


def test_metric_csv(tmp_path):
    write_metric_csv(tmp_path / "m.csv", [("f1", 1.0, "tau=1e-4")])
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "metric,value,config"
