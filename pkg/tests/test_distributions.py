import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from m2fn.data.ava import load_ava_style, split_ids
from m2fn.data.distributions import ScoreDistribution, ctr_decile_edges, lognormal_distribution
from oracles import lognormal_bucket_quadrature

EDGES = np.array([0.0, 0.005, 0.01, 0.015, 0.02, 0.025, 0.03, 0.04, 0.05, 0.07, 0.1])


class TestLognormal:
    def test_sums_to_one(self):
        d = lognormal_distribution(0.02, 500, EDGES)
        assert abs(sum(d.buckets) - 1.0) < 1e-6

    def test_matches_quadrature_oracle(self):
        got = lognormal_distribution(0.02, 500, EDGES).as_array()
        expected = lognormal_bucket_quadrature(0.02, 500, EDGES)
        np.testing.assert_allclose(got, expected, atol=1e-4)

    @pytest.mark.parametrize("ctr,imp,width", [(0.012, 150, 1.0), (0.045, 20, 1.0), (0.033, 1000, 2.0)])
    def test_more_quadrature_cases(self, ctr, imp, width):
        got = lognormal_distribution(ctr, imp, EDGES, width).as_array()
        np.testing.assert_allclose(got, lognormal_bucket_quadrature(ctr, imp, EDGES, width), atol=1e-4)

    def test_zero_ctr_goes_to_first_bucket(self):
        assert lognormal_distribution(0.0, 100, EDGES).buckets[0] == 1.0

    def test_above_last_edge(self, caplog):
        with caplog.at_level(logging.WARNING):
            d = lognormal_distribution(0.5, 100, EDGES)
        assert d.buckets[9] == 1.0
        assert "top bucket" in caplog.text

    def test_more_impressions_sharper(self):
        wide = lognormal_distribution(0.02, 10, EDGES)
        sharp = lognormal_distribution(0.02, 10_000, EDGES)
        assert sharp.std < wide.std

    def test_bad_edges(self):
        with pytest.raises(ValueError):
            lognormal_distribution(0.02, 10, EDGES[::-1])
        with pytest.raises(ValueError):
            lognormal_distribution(0.02, 10, EDGES[:5])

    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e-6, 1.0), st.integers(1, 1_000_000))
    def test_always_normalised(self, ctr, imp):
        b = lognormal_distribution(ctr, imp, EDGES).as_array()
        assert abs(b.sum() - 1.0) < 1e-6
        assert np.all(b >= 0)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(1e-4, 0.1), st.floats(1e-4, 0.1), st.integers(1, 5000))
    def test_mean_monotone_in_ctr(self, c1, c2, imp):
        lo, hi = sorted((c1, c2))
        assert lognormal_distribution(hi, imp, EDGES).mean >= lognormal_distribution(lo, imp, EDGES).mean - 1e-9

    def test_decile_edges_ascending(self):
        rng = np.random.default_rng(0)
        ctrs = np.concatenate([np.zeros(30), rng.uniform(0, 0.2, 100)])
        e = ctr_decile_edges(ctrs)
        assert e.shape == (11,) and np.all(np.diff(e) > 0)
        assert e[-1] == pytest.approx(ctrs.max())


class TestScoreDistribution:
    def test_from_counts(self):
        d = ScoreDistribution.from_counts([0] * 9 + [10])
        assert d.buckets == (0.0,) * 9 + (1.0,)
        assert d.mean == 10.0 and d.std == 0.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            ScoreDistribution((0.5,) * 10)
        with pytest.raises(ValueError):
            ScoreDistribution.from_counts([0] * 10)


class TestAvaLoader:
    def test_parse_and_normalise(self, tmp_path):
        path = tmp_path / "ava.txt"
        path.write_text(
            "img1 0 0 0 0 0 0 0 0 0 10 nature;black and white\n"
            "img2 1 2 3 4 5 6 7 8 9 10\n"
            "img3 0 0 0 0 0 0 0 0 0 0 animal\n")
        items = load_ava_style(path)
        assert [i.image_id for i in items] == ["img1", "img2"]
        assert items[0].distribution.buckets == (0.0,) * 9 + (1.0,)
        assert items[0].tags == ("nature", "black and white")
        assert items[1].tags == ()
        counts = np.arange(1, 11)
        assert items[1].distribution.mean == pytest.approx(float(np.sum(np.arange(1, 11) * counts / counts.sum())),
                                                           abs=1e-12)

    def test_all_zero_row_warns(self, tmp_path, caplog):
        path = tmp_path / "ava.txt"
        path.write_text("a 0 0 0 0 0 0 0 0 0 0\nb 1 0 0 0 0 0 0 0 0 0\n")
        with caplog.at_level(logging.WARNING):
            items = load_ava_style(path)
        assert len(items) == 1 and "skipped" in caplog.text

    def test_malformed(self, tmp_path):
        path = tmp_path / "ava.txt"
        path.write_text("a 1 2 3\n")
        with pytest.raises(ValueError):
            load_ava_style(path)

    def test_split_is_exactly_8_to_2(self, tmp_path):
        ids = [f"id{i}" for i in range(1000)]
        train, test = split_ids(ids)
        assert len(train) == 800 and len(test) == 200
        assert split_ids(list(reversed(ids))) == (train, test)
        path = tmp_path / "ava.txt"
        path.write_text("".join(f"{i} 1 1 1 1 1 1 1 1 1 1\n" for i in ids))
        items = load_ava_style(path)
        assert sum(it.split == "train" for it in items) == 800
