"""Tests for counter-based stream splitting."""

import numpy as np
from hypothesis import given, settings, strategies as st

from dsmcs.rng import substream


class TestSubstream:
    def test_same_path_same_stream(self):
        a = substream(0, "epoch", 3, "noise", 1).standard_normal(8)
        b = substream(0, "epoch", 3, "noise", 1).standard_normal(8)
        np.testing.assert_array_equal(a, b)

    def test_different_paths_differ(self):
        base = substream(0, "epoch", 3).standard_normal(8)
        for other in [substream(0, "epoch", 4), substream(1, "epoch", 3),
                      substream(0, "epoch", "3"), substream(0, 3, "epoch")]:
            assert not np.array_equal(base, other.standard_normal(8))

    def test_string_int_paths_distinct(self):
        # "1" and 1 must key different streams
        a = substream(0, 1).standard_normal(4)
        b = substream(0, "1").standard_normal(4)
        assert not np.array_equal(a, b)

    def test_prefix_is_not_a_collision(self):
        # path hashing must not concatenate ambiguously
        a = substream(0, "ab").standard_normal(4)
        b = substream(0, "a", "b").standard_normal(4)
        assert not np.array_equal(a, b)

    def test_draw_size_does_not_perturb_stream_identity(self):
        # drawing more from one stream never changes another stream
        s1 = substream(0, "x")
        s1.standard_normal(1000)
        np.testing.assert_array_equal(substream(0, "y").standard_normal(4),
                                      substream(0, "y").standard_normal(4))

    def test_prefix_of_long_draw_matches_short_draw(self):
        long = substream(7, "z").standard_normal(64)
        short = substream(7, "z").standard_normal(16)
        np.testing.assert_array_equal(long[:16], short)

    @given(st.lists(st.one_of(st.integers(-2**40, 2**40),
                              st.text(max_size=6)), max_size=4))
    @settings(max_examples=50, deadline=None)
    def test_reproducible_for_arbitrary_paths(self, path):
        a = substream(0, *path).integers(0, 2**32, 4)
        b = substream(0, *path).integers(0, 2**32, 4)
        np.testing.assert_array_equal(a, b)

    def test_marginals_look_standard_normal(self):
        x = substream(0, "dist").standard_normal(200000)
        assert abs(x.mean()) < 0.01
        assert abs(x.std() - 1.0) < 0.01
