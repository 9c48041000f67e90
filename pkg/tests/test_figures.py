import numpy as np
import pytest

from pearl.errors import ValidationError
from pearl.figures import (contour_data, demand_curve_data, elasticity_data, emit_figure_data,
                           loss_curve_data)
from pearl.sim import SimSpec, generate
from pearl.utility import CobbDouglasModel

TRUE = CobbDouglasModel.from_theta([0.4, 0.6])


def test_loss_curve_minimum_at_truth():
    d = generate(SimSpec(N=40, seed=1))
    header, rows = loss_curve_data(d)
    assert header == ("theta_1", "loss", "gradient")
    data = np.array(rows)
    best = data[np.argmin(data[:, 1])]
    assert best[0] == pytest.approx(0.4)
    assert best[1] < 1e-6 * d.m.sum()
    # slope changes sign exactly once, across the minimiser
    signs = np.sign(data[np.abs(data[:, 2]) > 1e-6, 2])
    assert np.count_nonzero(np.diff(signs)) == 1
    assert signs[0] < 0 < signs[-1]


def test_loss_curve_rejects_bad_input():
    with pytest.raises(ValidationError):
        loss_curve_data(generate(SimSpec(k=3, theta=(0.2, 0.3, 0.5), N=5)))
    with pytest.raises(ValidationError):
        loss_curve_data(generate(SimSpec(N=5)), grid=[0.0])


def test_contour_truth_column():
    header, rows = contour_data(TRUE, theta=[0.4, 0.6], n=5)
    data = np.array(rows)
    assert header == ("x_1", "x_2", "fitted", "truth") and data.shape == (25, 4)
    np.testing.assert_allclose(np.argsort(data[:, 2]), np.argsort(data[:, 3]))


def test_demand_curve_matches_truth():
    header, rows = demand_curve_data(TRUE, good=0, theta=[0.4, 0.6], prices=[1.0, 2.0, 8.0])
    data = np.array(rows)
    np.testing.assert_allclose(data[:, 1], data[:, 2], rtol=1e-5)
    np.testing.assert_allclose(data[:, 2], 0.4 * 20 / data[:, 0])
    with pytest.raises(ValidationError):
        demand_curve_data(TRUE, good=2)


def test_elasticity_long_format():
    header, rows = elasticity_data(TRUE, [5.5, 5.5], 100.0)
    assert header == ("good", "price", "elasticity") and len(rows) == 4
    e = {(i, j): v for i, j, v in rows}
    assert e[(1, 1)] == pytest.approx(-1.0, abs=1e-4)
    assert e[(1, 2)] == pytest.approx(0.0, abs=1e-4)


@pytest.mark.parametrize("kind, inputs", [
    ("contour", dict(model=TRUE, theta=[0.4, 0.6], n=9)),
    ("demand-curve", dict(report=TRUE, theta=[0.4, 0.6])),
    ("elasticity", dict(model=TRUE, p=[5.5, 5.5], m=100.0)),
])
def test_emit_writes_csv_and_png(tmp_path, kind, inputs):
    paths = emit_figure_data(kind, tmp_path, **inputs)
    assert [p.suffix for p in paths] == [".csv", ".png"]
    assert paths[1].read_bytes()[:4] == b"\x89PNG"
    assert paths[0].read_text().splitlines()[0].count(",") >= 2


def test_emit_without_plot(tmp_path):
    paths = emit_figure_data("elasticity", tmp_path, plot=False, stem="e",
                             model=TRUE, p=[5.5, 5.5], m=100.0)
    assert [p.name for p in paths] == ["e.csv"]
    with pytest.raises(ValidationError):
        emit_figure_data("histogram", tmp_path)
