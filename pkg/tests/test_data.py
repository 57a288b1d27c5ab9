import io

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from vbp.data import (
    DataError, ScalerParams, bundled, fit_column, fit_scaler, prepare, read_csv, read_scaler,
    split, validate, write_scaler,
)

MPG_INPUTS = ["cylinders", "displacement", "horsepower", "weight", "acceleration", "model_year",
              "usa", "europe", "japan"]


@pytest.fixture(scope="module")
def mpg():
    return read_csv(bundled("auto_mpg.csv"), MPG_INPUTS, ["mpg"])


def test_bundled_mpg_shape(mpg):
    assert len(mpg) == 398
    good, bad = validate(mpg)
    assert len(good) == 392 and len(bad) == 6
    assert all(r[mpg.columns.index("horsepower")] == "?" for r in bad.rows)


def test_in_sample_scaling_values(mpg):
    p = prepare(mpg, 360)
    raw = p.scaler.invert(p.train)
    means = dict(zip(p.scaler.columns, raw.mean(axis=0)))
    assert means["mpg"] == pytest.approx(22.75833, abs=1e-5)
    assert means["weight"] == pytest.approx(3021.286, abs=1e-3)
    # population standard deviation reproduces the published scale factors
    assert 1 / p.scaler.alpha[-1] == pytest.approx(7.567275, abs=1e-6)
    assert 1 / p.scaler.alpha[MPG_INPUTS.index("model_year")] == pytest.approx(3.36117539, abs=1e-8)
    assert raw[:, MPG_INPUTS.index("model_year")].max() == 81


def test_validation_rule():
    ds = read_csv(io.StringIO("a,b,t\n1,2,3\n1,x,3\n1,2,inf\n,2,3\n4,5,6\n"))
    good, bad = validate(ds)
    assert len(good) == 2 and len(bad) == 3


def test_ragged_csv_rejected():
    with pytest.raises(DataError, match="line 3"):
        read_csv(io.StringIO("a,b\n1,2\n3\n"))


def test_split_modes(mpg):
    good, _ = validate(mpg)
    a, b = split(good, 360)
    assert (len(a), len(b)) == (360, 32)
    assert a.rows[0] == good.rows[0]
    c, _ = split(good, 360, order="shuffle", seed=3)
    d, _ = split(good, 360, order="shuffle", seed=3)
    assert c.rows == d.rows != a.rows
    with pytest.raises(DataError):
        split(good, 392)


def test_range_scaler_maps_to_interval():
    x = np.array([3.0, 5.0, 11.0])
    a, b = fit_column(x, "range")
    assert np.allclose(a * x + b, [-1.0, -0.5, 1.0])


def test_constant_column_rejected():
    with pytest.raises(DataError):
        fit_column(np.ones(4), "zscore")


@given(hnp.arrays(np.float64, (6, 3), elements=st.floats(-1e3, 1e3, allow_nan=False)),
       st.sampled_from(["zscore", "range"]))
def test_scaling_roundtrip(x, kind):
    if np.any(np.ptp(x, axis=0) < 1e-3):
        return
    p = fit_scaler(x, ["a", "b", "c"], kind)
    assert np.allclose(p.invert(p.apply(x)), x, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(x))))


def test_scaler_sidecar_roundtrip(tmp_path):
    p = ScalerParams(["x", "mpg"], "zscore", [0.5, 1 / 7.567275], [-1.25, -3.0])
    path = tmp_path / "s.csv"
    write_scaler(p, path)
    assert path.read_text().splitlines()[0] == "column,kind,alpha,beta"
    q = read_scaler(path)
    assert q.columns == p.columns and q.kind == "zscore"
    assert np.array_equal(q.alpha, p.alpha) and np.array_equal(q.beta, p.beta)


def test_errors_in_original_units(mpg):
    p = prepare(mpg, 360)
    alpha = p.target_alpha()
    ys = p.train[:5, -1]
    out = ys + 0.3
    orig = np.abs(p.scaler.select(["mpg"]).invert(out[:, None]) -
                  p.scaler.select(["mpg"]).invert(ys[:, None]))
    assert np.allclose(orig.ravel(), np.abs(out - ys) / alpha, atol=1e-12)
