"""Cutoff functions and the piecewise plateau bump psi."""

import math

import pytest
from hypothesis import given, settings, strategies as st

from filippov2d import (PsiSpec, cutoff_down, cutoff_up, psi, psi_dx,
                        psi_dxx, psi_sup_norms, zero_psi)
from filippov2d.cutoffs import cutoff_up_d1, cutoff_up_d2


def test_cutoff_plateau_values():
    assert cutoff_up(-1.0, 0.0, 1.0) == 0.0
    assert cutoff_up(0.0, 0.0, 1.0) == 0.0
    assert cutoff_up(1.0, 0.0, 1.0) == 1.0
    assert cutoff_up(2.0, 0.0, 1.0) == 1.0
    assert cutoff_up(0.5, 0.0, 1.0) == pytest.approx(0.5, abs=1e-15)


def test_cutoff_pair_sums_to_one_inside():
    for x in (0.1, 0.25, 0.5, 0.77, 0.9):
        assert cutoff_up(x, 0.0, 1.0) + cutoff_down(x, 0.0, 1.0) \
            == pytest.approx(1.0, abs=1e-15)


def test_cutoff_monotone():
    xs = [i / 50 for i in range(51)]
    vals = [cutoff_up(x, 0.0, 1.0) for x in xs]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


@given(st.floats(0.02, 0.98))
@settings(max_examples=80, deadline=None)
def test_cutoff_derivatives_match_finite_differences(x):
    h = 1e-6
    d1 = (cutoff_up(x + h, 0.0, 1.0) - cutoff_up(x - h, 0.0, 1.0)) / (2 * h)
    assert cutoff_up_d1(x, 0.0, 1.0) == pytest.approx(d1, rel=1e-5, abs=1e-7)
    # second derivative from the closed-form first derivative: a direct
    # second difference of values drowns in rounding noise (~1e-16/h^2)
    d2 = (cutoff_up_d1(x + h, 0.0, 1.0)
          - cutoff_up_d1(x - h, 0.0, 1.0)) / (2 * h)
    assert cutoff_up_d2(x, 0.0, 1.0) == pytest.approx(d2, rel=1e-4, abs=1e-6)


def test_psi_single_block_values():
    c = 0.37
    spec = PsiSpec(1, (0.0, 1.0, 2.0, c))
    assert psi(spec, 0.5) == pytest.approx(c / 2, abs=1e-15)
    assert psi(spec, 1.0) == pytest.approx(c, abs=1e-15)
    assert psi(spec, 1.5) == pytest.approx(c / 2, abs=1e-15)
    assert psi(spec, 3.0) == 0.0
    assert psi(spec, -1.0) == 0.0


def test_psi_zero_heights():
    spec = PsiSpec(2, (0.0, 0.5, 1.0, 1.5, 2.0, 0.0, 0.0))
    for x in (-0.5, 0.25, 1.0, 1.75, 2.5):
        assert psi(spec, x) == 0.0
        assert psi_dx(spec, x) == 0.0
    assert zero_psi(spec)
    assert zero_psi(None)
    assert not zero_psi(PsiSpec(1, (0.0, 1.0, 2.0, 1e-9)))


def test_psi_two_blocks_take_their_own_heights():
    spec = PsiSpec(2, (0.0, 0.5, 1.0, 1.5, 2.0, 0.2, -0.4))
    assert psi(spec, 0.5) == pytest.approx(0.2, abs=1e-15)
    assert psi(spec, 1.5) == pytest.approx(-0.4, abs=1e-15)
    assert psi(spec, 1.0) == pytest.approx(0.0, abs=1e-12)


def test_psi_slope_bound_on_first_rise():
    # max |psi'| on the rising half is bounded by 8|h| / gap^2
    delta, h = 0.2, 3e-3
    spec = PsiSpec(1, (0.0, delta, 2 * delta, h))
    bound = 8 * abs(h) / delta ** 2
    xs = [i * delta / 800 for i in range(801)]
    worst = max(abs(psi_dx(spec, x)) for x in xs)
    assert worst <= bound
    assert worst > 0.1 * bound  # the bound is tight up to a small factor


def test_psi_smooth_across_knots():
    spec = PsiSpec(1, (0.0, 0.6, 1.2, 0.05))
    h = 1e-5
    for knot in spec.knots:
        for fn in (psi, psi_dx, psi_dxx):
            left = (fn(spec, knot) - fn(spec, knot - h)) / h
            right = (fn(spec, knot + h) - fn(spec, knot)) / h
            assert left == pytest.approx(right, abs=2e-4)


@given(st.floats(-0.3, 1.5))
@settings(max_examples=100, deadline=None)
def test_psi_dx_matches_finite_difference(x):
    spec = PsiSpec(1, (0.0, 0.6, 1.2, 0.05))
    h = 1e-7
    fd = (psi(spec, x + h) - psi(spec, x - h)) / (2 * h)
    assert psi_dx(spec, x) == pytest.approx(fd, rel=1e-4, abs=1e-7)


def test_psi_sup_norms_scaling():
    big = PsiSpec(1, (0.0, 0.4, 0.8, 0.4 ** 5))
    small = PsiSpec(1, (0.0, 0.2, 0.4, 0.2 ** 5))
    s0, s1, s2 = psi_sup_norms(big)
    t0, t1, t2 = psi_sup_norms(small)
    assert t0 <= s0 / 30   # heights scale as gap^5
    assert t1 <= s1 / 7    # slopes as gap^3
    assert t2 <= s2        # curvatures as gap


def test_psi_fallback_branch():
    # non-ascending knots select the fallback bump over (r1, r2)
    spec = PsiSpec(1, (0.3, 0.3, 0.3, 0.25), r1=-1.0, r2=1.0)
    assert not spec.in_knot_domain()
    assert psi(spec, 2.0) == pytest.approx(0.25, abs=1e-15)
    assert psi(spec, -2.0) == 0.0
    assert psi(spec, 0.0) == pytest.approx(0.125, abs=1e-15)


def test_psi_spec_validation():
    with pytest.raises(ValueError):
        PsiSpec(0, (0.0, 1.0))
    with pytest.raises(ValueError):
        PsiSpec(1, (0.0, 1.0, 2.0))  # wrong length: needs 3d+1
    with pytest.raises(ValueError):
        PsiSpec(1, (0.3, 0.3, 0.3, 0.25), r1=1.0, r2=-1.0)
    with pytest.raises(ValueError):
        PsiSpec(1, (0.3, 0.3, 0.3, 0.25)).support()  # no fallback window


def test_psi_spec_support_and_heights():
    spec = PsiSpec(2, (0.0, 0.5, 1.0, 1.5, 2.0, 0.2, -0.4))
    assert spec.knots == (0.0, 0.5, 1.0, 1.5, 2.0)
    assert spec.heights == (0.2, -0.4)
    assert spec.in_knot_domain()
    assert spec.support() == (0.0, 2.0)
