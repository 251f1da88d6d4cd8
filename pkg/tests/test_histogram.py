import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seriesunfold.errors import (
    ConfigurationError,
    DegenerateInputError,
    FileFormatError,
    KindMismatchError,
)
from seriesunfold.histogram import (
    Axis,
    GridHistogram,
    flat_centers,
    from_samples,
    histogram_from_csv_text,
    histogram_from_json_text,
    histogram_to_csv,
    histogram_to_json,
    load_histogram,
    normalize,
    poisson_covariance,
)

from conftest import normal_cdf


class TestAxis:
    def test_width_edges_centers(self):
        ax = Axis(0, 1, 4)
        assert ax.width == 0.25
        np.testing.assert_array_equal(ax.edges, [0, 0.25, 0.5, 0.75, 1.0])
        np.testing.assert_array_equal(ax.centers, [0.125, 0.375, 0.625, 0.875])

    def test_right_open_bins_and_top_edge(self):
        ax = Axis(0, 1, 2)
        np.testing.assert_array_equal(ax.index([0.0, 0.5, 0.999, 1.0, 1.0001, -0.1, np.nan]),
                                      [0, 1, 1, 1, -1, -1, -1])

    @pytest.mark.parametrize("args", [(1, 0, 3), (0, 1, 0), (0, 1, 2.5), (0, np.inf, 3)])
    def test_invalid(self, args):
        with pytest.raises(ConfigurationError):
            Axis(*args)


class TestFromSamples:
    def test_single_in_range(self):
        h = from_samples([0.5], Axis(0, 1, 2))
        np.testing.assert_array_equal(h.values, [0, 1])
        assert h.overflow == 0

    def test_out_of_range(self):
        h = from_samples([-1.0], Axis(0, 1, 2))
        np.testing.assert_array_equal(h.values, [0, 0])
        assert h.overflow == 1

    def test_empty_axes(self):
        with pytest.raises(ConfigurationError):
            from_samples([0.5])

    def test_normal_samples_match_erf(self):
        rng = np.random.default_rng(11)
        n = 10**6
        h = from_samples(rng.standard_normal(n), Axis(-5, 5, 100))
        i = int(h.axes[0].index(0.0))
        lo, hi = h.axes[0].edges[i], h.axes[0].edges[i + 1]
        expected = n * (normal_cdf(hi) - normal_cdf(lo))
        assert abs(h.values[i] - expected) < 5 * math.sqrt(expected)

    def test_two_dim_row_major(self):
        a0, a1 = Axis(0, 2, 2), Axis(0, 3, 3)
        h = from_samples([[1.5, 0.5], [0.5, 2.5]], a0, a1)
        # bin (1, 0) -> 3, bin (0, 2) -> 2
        np.testing.assert_array_equal(np.flatnonzero(h.values), [2, 3])
        np.testing.assert_array_equal(h.as_array()[1, 0], 1)
        np.testing.assert_allclose(flat_centers((a0, a1))[3], [1.5, 0.5])

    @given(st.lists(st.floats(-3, 3, allow_nan=False), max_size=200))
    def test_conserves_sample_count(self, xs):
        h = from_samples(xs, Axis(-1, 2, 7))
        assert h.total + h.overflow == len(xs)


class TestNormalize:
    def test_uniform(self):
        h = normalize(GridHistogram(Axis(0, 1, 2), [2, 2]))
        assert h.kind == "density"
        np.testing.assert_array_equal(h.values, [1, 1])

    def test_unequal(self):
        h = normalize(GridHistogram(Axis(0, 2, 2), [3, 1]))
        np.testing.assert_allclose(h.values, [0.75, 0.25], rtol=0, atol=1e-15)

    def test_zero_total(self):
        with pytest.raises(DegenerateInputError):
            normalize(GridHistogram(Axis(0, 1, 2), [0, 0]))

    @given(st.lists(st.integers(0, 1000), min_size=1, max_size=40).filter(lambda v: sum(v) > 0))
    def test_unit_mass_and_idempotent(self, counts):
        h = GridHistogram(Axis(-1.5, 4, len(counts)), counts)
        n1 = normalize(h)
        assert abs(n1.integral() - 1) < 1e-9
        np.testing.assert_allclose(normalize(n1).values, n1.values, rtol=1e-12, atol=0)


class TestPoissonCovariance:
    def test_diag(self):
        np.testing.assert_array_equal(poisson_covariance(GridHistogram(Axis(0, 1, 2), [4, 9])),
                                      np.diag([4.0, 9.0]))

    def test_zero(self):
        np.testing.assert_array_equal(poisson_covariance(GridHistogram(Axis(0, 1, 3), [0, 0, 0])),
                                      np.zeros((3, 3)))

    def test_partial(self):
        np.testing.assert_array_equal(poisson_covariance(GridHistogram(Axis(0, 1, 2), [100, 0])),
                                      np.diag([100.0, 0.0]))

    def test_density_rejected(self):
        with pytest.raises(KindMismatchError):
            poisson_covariance(GridHistogram(Axis(0, 1, 2), [0.5, 1.5], "density"))


class TestGridHistogram:
    def test_negative_counts_rejected(self):
        with pytest.raises(ConfigurationError):
            GridHistogram(Axis(0, 1, 2), [1, -1])

    def test_length_checked(self):
        with pytest.raises(ConfigurationError):
            GridHistogram(Axis(0, 1, 2), [1, 2, 3])

    def test_values_read_only(self):
        h = GridHistogram(Axis(0, 1, 2), [1, 2])
        with pytest.raises(ValueError):
            h.values[0] = 5


finite = st.floats(-1e300, 1e300, allow_nan=False, allow_infinity=False)


class TestTextFormats:
    @settings(max_examples=50)
    @given(st.lists(finite, min_size=1, max_size=30))
    def test_csv_and_json_round_trip_bitwise(self, vals):
        h = GridHistogram(Axis(-0.1, 1 / 3, len(vals)), vals, "density", meta={"tag": "x"})
        for back in (histogram_from_csv_text(histogram_to_csv(h)),
                     histogram_from_json_text(histogram_to_json(h))):
            assert back.kind == "density" and back.axes == h.axes
            np.testing.assert_array_equal(back.values, h.values)

    def test_two_dim_files(self, tmp_path):
        h = GridHistogram((Axis(0, 1, 2), Axis(-1, 1, 3)), np.arange(6.0))
        h.to_csv(tmp_path / "h.csv")
        h.to_json(tmp_path / "h.json")
        for name in ("h.csv", "h.json"):
            back = load_histogram(tmp_path / name)
            np.testing.assert_array_equal(back.values, h.values)
            assert back.axes == h.axes
        header = (tmp_path / "h.csv").read_text().splitlines()[0]
        assert header.startswith("# axis0 0 1 2 axis1 -1 1 3 kind=counts")

    @pytest.mark.parametrize("text", [
        "",
        "no header\n0,0.5,1\n",
        "# axis0 0 1 2 kind=counts\n0,0.25,1\n",
        "# axis0 0 1 2 kind=counts\n0,0.25,1\n1,x,y\n",
        "# axis0 0 1 two kind=counts\n0,0.25,1\n1,0.75,1\n",
    ])
    def test_malformed_csv(self, text):
        with pytest.raises(FileFormatError):
            histogram_from_csv_text(text)

    def test_malformed_json(self):
        with pytest.raises(FileFormatError):
            histogram_from_json_text('{"axes": []}')
