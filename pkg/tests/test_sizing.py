import math

import pytest
from hypothesis import given, strategies as st

from aggsort import sizing
from aggsort.sizing import Grade

px = st.floats(-2000, 2000, allow_nan=False)


def test_three_four_five():
    m = sizing.mer_dimensions((0, 0), (3, 4))
    assert (m.a, m.b, m.c) == (4, 3, 5)


@given(px, px, px, px)
def test_corner_order_does_not_matter(x1, y1, x2, y2):
    a = sizing.mer_dimensions((x1, y1), (x2, y2))
    b = sizing.mer_dimensions((x2, y2), (x1, y1))
    c = sizing.mer_dimensions((x1, y2), (x2, y1))
    assert a == b == c
    assert a.c == pytest.approx(math.sqrt(a.a**2 + a.b**2))
    assert a.c >= max(a.a, a.b)


def test_degenerate_box_is_zero():
    assert sizing.mer_dimensions((5, 5), (5, 5)) == sizing.MerDimensions(0, 0, 0)
    with pytest.raises(ValueError):
        sizing.mer_dimensions((0, float("nan")), (1, 1))


def test_pixel_to_metric():
    assert sizing.pixel_to_metric(100, 1.0, 1000) == 0.1
    assert sizing.pixel_to_metric(50, 0.2, 250) == pytest.approx(0.04)
    with pytest.raises(ValueError):
        sizing.pixel_to_metric(10, 0.0, 1000)
    with pytest.raises(ValueError):
        sizing.pixel_to_metric(10, 1.0, -5)


@pytest.mark.parametrize(
    "diag, expected",
    [(0.0, Grade.REJECTED), (0.9999, Grade.REJECTED), (1.0, Grade.ONE), (1.9999, Grade.ONE), (2.0, Grade.TWO),
     (2.9999, Grade.TWO), (3.0, Grade.THREE), (4.0, Grade.THREE), (12.0, Grade.THREE)],
)
def test_half_open_bands(diag, expected):
    assert sizing.grade(diag) is expected


@given(st.floats(0, 100), st.floats(0, 100))
def test_grade_is_monotone(x, y):
    lo, hi = sorted((x, y))
    assert sizing.grade(lo).value <= sizing.grade(hi).value


def test_oversize_flag():
    assert not sizing.assess(4.0).oversize
    a = sizing.assess(4.5)
    assert a.oversize and a.grade is Grade.THREE
    with pytest.raises(ValueError):
        sizing.assess(-1.0)


def test_custom_bands():
    bands = sizing.GradeBands((0.5, 1.5, 2.5))
    assert sizing.grade(0.5, bands) is Grade.ONE
    with pytest.raises(ValueError):
        sizing.GradeBands((2.0, 1.0, 3.0))


def test_measure_box_scales_all_extents():
    m = sizing.measure_box((100, 100), (180, 160), 0.2, 1000)
    assert (m.a, m.b) == pytest.approx((0.012, 0.016))
    assert m.c == pytest.approx(0.02)
    assert str(Grade.REJECTED) == "rejected" and str(Grade.TWO) == "2"


def test_listed_vectors():
    assert sizing.pixel_to_metric(27, 1.0, 1000) == pytest.approx(0.027)
    assert sizing.grade(2.4) is Grade.TWO
    assert sizing.grade(1.0) is Grade.ONE
    assert sizing.grade(0.8) is Grade.REJECTED
    assert sizing.mer_dimensions((7, 2), (1, 9)) == sizing.mer_dimensions((1, 9), (7, 2))


@given(st.floats(0, 1000), st.floats(0.01, 10), st.floats(0.5, 10))
def test_pixel_to_metric_is_linear(length, depth, k):
    assert sizing.pixel_to_metric(k * length, depth, 800) == pytest.approx(k * sizing.pixel_to_metric(length, depth, 800))
    assert sizing.pixel_to_metric(length, k * depth, 800) == pytest.approx(k * sizing.pixel_to_metric(length, depth, 800))


@given(px, px, px, px)
def test_axis_reflection_invariance(x1, y1, x2, y2):
    a = sizing.mer_dimensions((x1, y1), (x2, y2))
    assert sizing.mer_dimensions((-x1, y1), (-x2, y2)) == a
    assert sizing.mer_dimensions((x1, -y1), (x2, -y2)) == a
