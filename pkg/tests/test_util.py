import numpy as np

from tensorhar.util import parallel_map, substream


def test_substream_is_deterministic():
    a = substream(7, "alpha").normal(size=5)
    b = substream(7, "alpha").normal(size=5)
    np.testing.assert_array_equal(a, b)


def test_substreams_differ_by_name_and_seed():
    base = substream(7, "alpha").normal(size=8)
    other_name = substream(7, "beta").normal(size=8)
    other_seed = substream(8, "alpha").normal(size=8)
    assert not np.allclose(base, other_name)
    assert not np.allclose(base, other_seed)


def test_substream_independent_of_draw_order():
    # draws from one stream must not perturb another
    s1 = substream(0, "first")
    s2 = substream(0, "second")
    interleaved = (s1.normal(), s2.normal(), s1.normal())
    fresh1 = substream(0, "first")
    fresh2 = substream(0, "second")
    assert interleaved[0] == fresh1.normal()
    assert interleaved[1] == fresh2.normal()
    assert interleaved[2] == fresh1.normal()


def _square(v):
    return v * v


def test_parallel_map_preserves_order():
    items = list(range(20))
    assert parallel_map(_square, items, jobs=1) == [v * v for v in items]


def test_parallel_map_jobs_equivalence():
    items = list(range(17))
    assert parallel_map(_square, items, jobs=4) == parallel_map(_square, items, jobs=1)


def test_parallel_map_edge_sizes():
    assert parallel_map(_square, [], jobs=4) == []
    assert parallel_map(_square, [3], jobs=4) == [9]
