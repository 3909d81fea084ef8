import itertools
import math

import numpy as np
import pytest

from hcrom.param import (INF, Box, DyadicRectangle, ParamVector, enumerate_cover, format_param,
                         level_for_degree, locate_rectangle, normalize, parse_param)


def test_param_vector_basics():
    y = ParamVector((1.0, INF, 3.0))
    assert y.infinite_set() == {1}
    assert y.finite_set() == {0, 2}
    assert np.array_equal(y.inverse(), [1.0, 0.0, 1 / 3])
    assert y.contrast() == INF
    assert ParamVector((2.0, 6.0)).contrast() == 3.0


@pytest.mark.parametrize("bad", [(0.0, 1.0), (-1.0,), (math.nan, 1.0), ()])
def test_param_vector_rejects(bad):
    with pytest.raises(ValueError):
        ParamVector(bad)


def test_parse_format_roundtrip():
    for text in ("inf,1,1,1", "1,2.5,INF", "0.1,∞", "1e-3,+inf"):
        y = parse_param(text)
        assert parse_param(format_param(y)) == y
    assert parse_param("inf,1").values == (INF, 1.0)
    assert format_param((INF, 0.1)) == "inf,0.1"


@pytest.mark.parametrize("y,t,expect", [
    ((2.0, 6.0), 2.0, (1.0, 3.0)),
    ((1.0, 1.0, 1.0, 1.0), 1.0, (1.0, 1.0, 1.0, 1.0)),
    ((5.0, INF), 5.0, (1.0, INF)),
])
def test_normalize(y, t, expect):
    tt, yn = normalize(y)
    assert tt == t and yn.values == expect


def test_normalize_rejects_all_inf():
    with pytest.raises(ValueError):
        normalize((INF, INF))


def test_level_for_degree_examples():
    assert level_for_degree(0) == 1
    assert level_for_degree(4) == 8
    alpha = math.log(3) / math.log(2)
    assert alpha * 4 <= 8
    for k in range(10):
        assert level_for_degree(k + 1) - level_for_degree(k) in (1, 2)
    # definition: smallest L >= 1 with C0 2^-L <= 3^-k / sqrt(3)
    for k in range(8):
        for C0 in (0.5, 1.0, 7.0):
            L = level_for_degree(k, C0)
            assert C0 * 2.0 ** -L <= 3.0 ** -k / math.sqrt(3) * (1 + 1e-12)
            assert L == 1 or C0 * 2.0 ** -(L - 1) > 3.0 ** -k / math.sqrt(3)


def test_level_rejects():
    with pytest.raises(ValueError):
        level_for_degree(-1)
    with pytest.raises(ValueError):
        level_for_degree(1, 0.0)


def test_locate_examples():
    assert locate_rectangle((1, 1), 3).ell == (0, 0)
    r = locate_rectangle((5, INF), 3)
    assert r.ell == (2, 3) and r.stiff_set() == {1}
    L = 4
    r = locate_rectangle((2.0 ** L, 1), L)
    assert r.ell == (L, 0) and r.stiff_set() == {0}


def test_locate_rejects_unnormalized():
    with pytest.raises(ValueError):
        locate_rectangle((0.5, 1), 3)


def test_locate_contains():
    rng = np.random.default_rng(0)
    for _ in range(500):
        y = 2.0 ** rng.uniform(0, 10, 3)
        r = locate_rectangle(y, 6)
        assert r.contains(y)


def test_cover_examples():
    c = enumerate_cover(0, d=2)
    assert c.L == 1 and set(c.ells) == {(0, 0), (0, 1), (1, 0)}
    # L = 3 at k = 1
    assert enumerate_cover(1, d=2).L == 3 and len(enumerate_cover(1, d=2)) == 7
    # k = 2 gives L = 4; use C0 to land on L = 2 for the d = 4 count
    c = enumerate_cover(0, C0=2.0, d=4)
    assert c.L == 2 and len(c) == 65
    for k in range(4):
        for d in (1, 2, 3):
            c = enumerate_cover(k, d=d)
            assert len(c) == (c.L + 1) ** d - c.L ** d
            assert len(enumerate_cover(k, d=d, full=True)) == (c.L + 1) ** d


def test_cover_property_randomized():
    rng = np.random.default_rng(1)
    for d, k in ((2, 2), (3, 1), (4, 0)):
        cover = enumerate_cover(k, d=d)
        ells = set(cover.ells)
        for _ in range(10_000 // 3):
            z = 10.0 ** (-6 * rng.random(d))  # log-uniform inverse entries
            y = 1.0 / z
            y = y / y.min()
            assert locate_rectangle(y, cover.L).ell in ells


def test_rectangles_disjoint_up_to_faces():
    cover = enumerate_cover(1, d=2)
    rects = cover.rectangles()
    for a, b in itertools.combinations(rects, 2):
        widths = []
        for (a0, a1), (b0, b1) in zip(a.bounds(), b.bounds()):
            widths.append(min(a1, b1) - max(a0, b0))
        # the intersection has an axis of non-positive width (measure zero)
        assert min(widths) <= 0


def test_dyadic_box_embedding():
    r = DyadicRectangle((1, 3), 3)
    box = r.box(4, axes=(0, 2))
    assert box.lower == (2.0, 1.0, 8.0, 1.0)
    assert box.upper == (4.0, 1.0, INF, 1.0)
    assert box.infinite_axes() == (2,) and box.varying_axes() == (0,)
    assert box.contains((3.0, 1.0, INF, 1.0))
    assert not box.contains((3.0, 1.0, 4.0, 1.0))
    assert r.label() == "(1,3)"


def test_box_sampling_and_center():
    box = Box((1.0, 2.0), (2.0, 2.0))
    assert box.center() == (1.5, 2.0)
    ys = box.sample(50, np.random.default_rng(0))
    assert all(box.contains(y) for y in ys)
    assert len(list(box.corners())) == 2


def test_dyadic_rejects_bad_index():
    with pytest.raises(ValueError):
        DyadicRectangle((0, 4), 3)
