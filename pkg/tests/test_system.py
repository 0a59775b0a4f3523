"""Two-zone system layer: h, sliding field, region split, distance."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from filippov2d import (DegenerateDenominator, NotSliding, PwsSystem, Window,
                        WindowMismatch, decompose_sigma, h_value,
                        mirror_system, pseudo_equilibria,
                        sliding_convex_coefficient, sliding_field,
                        system_distance)
from conftest import make_sys


def test_h_value_examples():
    assert h_value(make_sys("1", "x", "1", "1"), 0.0) == 0.0
    assert h_value(make_sys("1", "-1", "1", "1"), 0.37) == -1.0
    assert h_value(make_sys("1", "x", "1", "x - 1"), 0.5) == pytest.approx(-0.25)


def test_sliding_field_arithmetic():
    s = make_sys("2", "-1", "4", "1")
    # (f+ g-  -  f- g+) / (g- - g+) = (2*1 - 4*(-1)) / 2 = 3
    assert sliding_field(s, 0.1) == pytest.approx(3.0, abs=1e-14)
    s2 = make_sys("1", "-2", "-1", "1")
    assert sliding_field(s2, 0.0) == pytest.approx(-1.0 / 3.0, abs=1e-14)


def test_sliding_field_equal_f_is_that_f():
    for c in (-2.0, 0.5, 3.25):
        s = make_sys(f"{c!r}", "-1 - x^2", f"{c!r}", "2 + x^4")
        for x in (-0.9, 0.0, 0.8):
            assert sliding_field(s, x) == pytest.approx(c, abs=1e-12)


def test_sliding_field_requires_sliding_region():
    s = make_sys("1", "1", "1", "1")  # h = 1 > 0: crossing
    with pytest.raises(NotSliding):
        sliding_field(s, 0.0)


def test_decompose_linear_fold():
    s = make_sys("1", "x", "1", "1")
    dec = decompose_sigma(s)
    assert len(dec.tangency_candidates) == 1
    assert dec.tangency_candidates[0] == pytest.approx(0.0, abs=1e-10)
    assert len(dec.sliding) == 1 and len(dec.crossing) == 1
    (a, b), (c, d) = dec.sliding[0], dec.crossing[0]
    assert (a, b) == pytest.approx((-1.0, 0.0), abs=1e-9)
    assert (c, d) == pytest.approx((0.0, 1.0), abs=1e-9)


def test_decompose_trivial_crossing():
    dec = decompose_sigma(make_sys("1", "1", "1", "1"))
    assert dec.tangency_candidates == []
    assert dec.sliding == []
    assert len(dec.crossing) == 1


def test_decompose_quadratic():
    s = make_sys("1", "x * (x - 0.5)", "1", "1")
    dec = decompose_sigma(s)
    assert [pytest.approx(c, abs=1e-9) for c in (0.0, 0.5)] \
        == dec.tangency_candidates
    assert len(dec.sliding) == 1
    assert dec.sliding[0] == (pytest.approx(0.0, abs=1e-9),
                              pytest.approx(0.5, abs=1e-9))
    spans = sorted(dec.crossing)
    assert spans[0][1] == pytest.approx(0.0, abs=1e-9)
    assert spans[1][0] == pytest.approx(0.5, abs=1e-9)


def test_decompose_kind_lookup():
    s = make_sys("1", "x", "1", "1")
    dec = decompose_sigma(s)
    assert dec.kind_at(-0.5) == "sliding"
    assert dec.kind_at(0.5) == "crossing"


def test_distance_identity_and_shift(win11):
    a = make_sys("1", "x", "1", "1")
    assert system_distance(a, a) == 0.0
    b = make_sys("1 + 0.3", "x", "1", "1")
    assert system_distance(a, b) == pytest.approx(0.3, abs=1e-12)


def test_distance_linear_perturbation():
    eps = 1e-3
    a = make_sys("1", "x", "1", "1")
    b = make_sys(f"1 + {eps!r} * x", "x", "1", "1")
    # max over the window of |eps x| plus the constant x-partial eps
    assert system_distance(a, b) == pytest.approx(2 * eps, rel=1e-12)


def test_distance_window_mismatch():
    a = make_sys("1", "x", "1", "1")
    b = make_sys("1", "x", "1", "1", window=Window(-2, 2, -1, 1))
    with pytest.raises(WindowMismatch):
        system_distance(a, b)


def test_pseudo_equilibrium_examples():
    s = make_sys("x", "-1", "x", "1")
    dec = decompose_sigma(s)
    roots = pseudo_equilibria(s, dec)
    assert len(roots) == 1
    assert roots[0] == pytest.approx(0.0, abs=1e-10)

    # sliding field (1*1 - (2x-1)(-1)) / 2 = x
    s2 = make_sys("1", "-1", "2*x - 1", "1")
    roots2 = pseudo_equilibria(s2, decompose_sigma(s2))
    assert len(roots2) == 1
    assert roots2[0] == pytest.approx(0.0, abs=1e-10)

    s3 = make_sys("1", "-1", "1", "1")  # sliding field 1: no roots
    assert pseudo_equilibria(s3, decompose_sigma(s3)) == []


small = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False)


@given(small, small, small, small, st.floats(-0.95, 0.95))
@settings(max_examples=150, deadline=None)
def test_convex_combination_on_random_sliding_systems(c0, c1, c2, c3, x):
    # g+ < 0 < g- everywhere, so all of Sigma slides
    s = make_sys(f"{c0!r} + x", f"-1 - {abs(c1)!r} - x^2",
                 f"{c2!r} - x", f"1 + {abs(c3)!r} + x^2")
    a = sliding_convex_coefficient(s, x)
    assert 0.0 <= a <= 1.0
    fp, gp = s.f_plus.value(x, 0.0), s.g_plus.value(x, 0.0)
    fm, gm = s.f_minus.value(x, 0.0), s.g_minus.value(x, 0.0)
    assert a * gp + (1 - a) * gm == pytest.approx(0.0, abs=1e-10)
    assert a * fp + (1 - a) * fm == pytest.approx(
        sliding_field(s, x), abs=1e-10)


@given(st.lists(small, min_size=6, max_size=6))
@settings(max_examples=40, deadline=None)
def test_distance_is_a_pseudometric_on_samples(cs):
    a = make_sys("1", f"x + {cs[0]!r}", "1", f"1 + {cs[1]!r} * x")
    b = make_sys("1", f"x + {cs[2]!r}", "1", f"1 + {cs[3]!r} * x")
    c = make_sys("1", f"x + {cs[4]!r}", "1", f"1 + {cs[5]!r} * x")
    n = 41  # coarse grid is fine for the metric axioms
    dab = system_distance(a, b, n)
    dba = system_distance(b, a, n)
    dac = system_distance(a, c, n)
    dbc = system_distance(b, c, n)
    assert system_distance(a, a, n) == 0.0
    assert dab == pytest.approx(dba, rel=1e-12, abs=1e-12)
    assert dac <= dab + dbc + 1e-12


def test_candidates_track_h_sign_changes():
    s = make_sys("1", "(x - 0.3) * (x + 0.62)", "1", "1 + x^2")
    dec = decompose_sigma(s)
    for c in dec.tangency_candidates:
        assert abs(h_value(s, c)) < 1e-8
    assert [pytest.approx(v, abs=1e-10) for v in (-0.62, 0.3)] \
        == dec.tangency_candidates


def test_mirror_is_an_involution():
    s = make_sys("1 + y", "x - y^2", "-1", "x^2 + y")
    m2 = mirror_system(mirror_system(s))
    for x in (-0.8, -0.1, 0.4):
        for y in (-0.5, 0.0, 0.7):
            for comp in ("f_plus", "g_plus", "f_minus", "g_minus"):
                assert getattr(m2, comp).value(x, y) == pytest.approx(
                    getattr(s, comp).value(x, y), rel=1e-12, abs=1e-12)


def test_mirror_preserves_h():
    s = make_sys("1 + y", "x - y^2", "-1", "x^2 + y")
    m = mirror_system(s)
    for x in (-0.8, 0.0, 0.55):
        assert h_value(m, x) == pytest.approx(h_value(s, x), rel=1e-12,
                                              abs=1e-12)


def test_window_validation():
    with pytest.raises(ValueError):
        Window(1.0, -1.0, -1.0, 1.0)
    with pytest.raises(ValueError):
        Window(-1.0, 1.0, 0.5, 1.0)  # Sigma must be interior
    w = Window(-1.0, 1.0, -1.0, 1.0)
    assert w.contains(0.0, 0.0)
    assert not w.contains(2.0, 0.0)
