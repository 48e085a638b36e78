import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nnlrp.render import Heatmap, csv_text, ppm_bytes, read_csv, read_ppm, render, write_image

# scaling must not underflow, so tiny magnitudes are excluded
values = st.one_of(st.just(0.0), st.floats(1e-100, 1e3), st.floats(-1e3, -1e-100))
grids = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=values)


def test_all_zero_is_white():
    assert np.all(render(Heatmap(np.zeros((3, 4)))) == 255)


def test_extremes():
    img = render(Heatmap([[-2.0, 0.0, 2.0]]))
    assert img[0].tolist() == [[0, 0, 255], [255, 255, 255], [255, 0, 0]]


def test_upscale():
    img = render(Heatmap([[1.0, -1.0]]), scale=3)
    assert img.shape == (3, 6, 3)
    assert img[2, 5].tolist() == [0, 0, 255]


def test_fixed_range_clips():
    img = render(Heatmap([[5.0, -0.5, 0.0]], mode="fixed", lo=-1.0, hi=2.0))
    assert img[0, 0].tolist() == [255, 0, 0]
    # 255 * 0.5 rounds half-to-even to 128
    assert img[0, 1].tolist() == [127, 127, 255]
    assert img[0, 2].tolist() == [255, 255, 255]


def test_invalid_heatmaps():
    with pytest.raises(ValueError):
        Heatmap(np.zeros(3))
    with pytest.raises(ValueError):
        Heatmap([[np.nan]])
    with pytest.raises(ValueError):
        Heatmap([[1.0]], mode="fixed", lo=0.5, hi=1.0)


@settings(max_examples=100)
@given(grids)
def test_zero_is_neutral(grid):
    img = render(Heatmap(grid))
    assert np.all(img[grid == 0] == 255)


@settings(max_examples=100)
@given(grids)
def test_sign_antisymmetry(grid):
    a, b = render(Heatmap(grid)), render(Heatmap(-grid))
    assert np.array_equal(a[..., 0], b[..., 2])
    assert np.array_equal(a[..., 2], b[..., 0])
    assert np.array_equal(a[..., 1], b[..., 1])


@settings(max_examples=100)
@given(grids, st.floats(1e-3, 1e3))
def test_scale_covariance(grid, c):
    assert np.array_equal(render(Heatmap(c * grid)), render(Heatmap(grid)))


@settings(max_examples=100)
@given(grids)
def test_monotone_per_sign(grid):
    img = render(Heatmap(grid)).astype(int)
    pos = grid > 0
    order = np.argsort(grid[pos])
    assert np.all(np.diff(img[..., 1][pos][order]) <= 0)
    neg = grid < 0
    order = np.argsort(-grid[neg])
    assert np.all(np.diff(img[..., 1][neg][order]) <= 0)


def test_ppm_single_neutral_pixel(tmp_path):
    write_image(render(Heatmap([[0.0]])), tmp_path / "a.ppm", "PPM")
    assert (tmp_path / "a.ppm").read_bytes() == b"P6\n1 1\n255\n\xff\xff\xff"


def test_ppm_width_height_order(tmp_path):
    data = ppm_bytes(render(Heatmap(np.ones((2, 3)))))
    assert data.startswith(b"P6\n3 2\n255\n")
    write_image(render(Heatmap(np.ones((2, 3)))), tmp_path / "b.ppm")
    assert read_ppm(tmp_path / "b.ppm").shape == (2, 3, 3)


@settings(max_examples=50)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)),
              elements=st.floats(-1e300, 1e300, allow_nan=False, allow_subnormal=True)))
def test_csv_round_trip(grid):
    back = np.atleast_2d(np.array([[float(v) for v in line.split(",")]
                                   for line in csv_text(grid).splitlines()]))
    assert back.tobytes() == grid.tobytes()


def test_csv_file_round_trip(tmp_path, rng):
    grid = rng.normal(size=(4, 7)) * 1e-7
    write_image(grid, tmp_path / "g.csv", "CSV")
    assert read_csv(tmp_path / "g.csv").tobytes() == grid.tobytes()
