import logging

import numpy as np
import pytest
from scipy.stats import f_oneway

from m2fn.data.color import ColorPalette, dominant_color
from m2fn.data.stats import anova_screen
from oracles import textbook_anova_f


def solid(rgb, h=20, w=20):
    return np.tile(np.array(rgb, np.uint8), (h, w, 1))


class TestDominantColor:
    def test_all_black(self):
        assert dominant_color(solid((0, 0, 0))) == "black"

    def test_all_red(self):
        assert dominant_color(solid((255, 0, 0))) == "red"

    def test_half_red_half_blue_is_multiple(self):
        img = solid((255, 0, 0), 20, 20)
        img[:, 10:] = (0, 0, 255)
        # oracle: exact pixel counting gives each colour a 0.5 share
        counts = {tuple(c): n for c, n in zip(*np.unique(img.reshape(-1, 3), axis=0, return_counts=True))}
        assert max(counts.values()) / img[..., 0].size == 0.5
        assert dominant_color(img, ColorPalette(dominance_threshold=0.6)) == "multiple"
        assert dominant_color(img, ColorPalette(dominance_threshold=0.4)) in ("red", "blue")

    def test_noisy_background_recovered(self):
        rng = np.random.default_rng(0)
        for name, rgb in [("yellow", (255, 255, 0)), ("green", (0, 128, 0)), ("white", (255, 255, 255))]:
            img = np.clip(np.array(rgb) + rng.normal(0, 6, (32, 32, 3)), 0, 255).astype(np.uint8)
            img[4:10, 3:29] = 0 if name != "green" else 255
            assert dominant_color(img) == name

    def test_permutation_invariant(self):
        rng = np.random.default_rng(1)
        img = np.clip(np.array((139, 69, 19)) + rng.normal(0, 20, (30, 30, 3)), 0, 255).astype(np.uint8)
        img[:8] = (255, 192, 203)
        label = dominant_color(img)
        for _ in range(5):
            flat = img.reshape(-1, 3)[rng.permutation(900)]
            assert dominant_color(flat.reshape(30, 30, 3)) == label
            assert dominant_color(flat.reshape(9, 100, 3)) == label

    def test_large_image_sampling(self):
        img = solid((0, 0, 255), 120, 120)
        img[:20] = (255, 255, 255)
        assert dominant_color(img) == "blue"

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            dominant_color(np.zeros((0, 4, 3), np.uint8))
        with pytest.raises(ValueError):
            dominant_color(solid((1, 2, 3)), k=1)

    def test_palette_labels_fixed(self):
        assert len(ColorPalette().anchors) == 10
        with pytest.raises(ValueError):
            ColorPalette(anchors={"red": (255, 0, 0)})


class TestAnova:
    def test_equal_means_not_kept(self):
        levels = ["a"] * 3 + ["b"] * 3
        ctrs = [0.1, 0.2, 0.3, 0.3, 0.2, 0.1]
        r = anova_screen(levels, ctrs)
        assert r.f_statistic == pytest.approx(0.0, abs=1e-12)
        assert not r.keep

    def test_separated_groups_kept(self):
        rng = np.random.default_rng(0)
        g1 = 0.1 + rng.normal(0, 1e-3, 3)
        g2 = 0.9 + rng.normal(0, 1e-3, 3)
        r = anova_screen(["lo"] * 3 + ["hi"] * 3, list(g1) + list(g2))
        assert r.f_statistic == pytest.approx(textbook_anova_f([list(g1), list(g2)]), rel=1e-9)
        assert r.keep and r.p_value < 0.05

    def test_matches_textbook_and_scipy(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            k = int(rng.integers(2, 5))
            sizes = rng.integers(2, 30 // k + 1, k)
            groups = [list(rng.normal(rng.uniform(0, 1), 0.3, s)) for s in sizes]
            levels = [i for i, g in enumerate(groups) for _ in g]
            r = anova_screen(levels, [v for g in groups for v in g])
            assert abs(r.f_statistic - textbook_anova_f(groups)) <= 1e-9 * max(1.0, abs(r.f_statistic))
            assert r.p_value == pytest.approx(f_oneway(*groups).pvalue, rel=1e-9, abs=1e-15)
            assert r.keep == (r.p_value < 0.05)

    def test_threshold_is_005(self):
        groups = [[0.0, 1.0, 2.0], [1.0, 2.0, 3.0], [2.5, 3.5, 4.5]]
        r = anova_screen([0] * 3 + [1] * 3 + [2] * 3, sum(groups, []))
        assert r.keep == (r.p_value < 0.05)
        assert anova_screen([0] * 3 + [1] * 3 + [2] * 3, sum(groups, []), alpha=r.p_value / 2).keep is False

    def test_single_observation_level_excluded(self, caplog):
        with caplog.at_level(logging.WARNING):
            r = anova_screen(["a", "a", "b", "b", "c"], [0.1, 0.2, 0.5, 0.6, 0.9])
        assert r.excluded_levels == ("c",)
        assert r.f_statistic == pytest.approx(textbook_anova_f([[0.1, 0.2], [0.5, 0.6]]), rel=1e-9)
        assert "excluding" in caplog.text

    def test_too_few_levels(self):
        with pytest.raises(ValueError):
            anova_screen(["a", "a", "b"], [0.1, 0.2, 0.3])
