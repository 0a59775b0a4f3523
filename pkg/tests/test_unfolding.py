"""Transition systems, sheared unfoldings, admissible plateau ladders."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from filippov2d import (CanonicalBase, PsiSpec, UnfoldingSpec, Window,
                        admissible_k_family, build_transition, build_unfolded,
                        psi, psi_dx, psi_sup_norms, shear_conjugacy_check,
                        system_distance)

W = Window(-1.0, 1.0, -1.0, 1.0)


def cubic_base():
    return CanonicalBase.from_strings("1", "1", 3, "-1", "-1", 0, W)


def grid_pts(n=9):
    for i in range(n):
        for j in range(n):
            yield (-0.9 + 1.8 * i / (n - 1), -0.9 + 1.8 * j / (n - 1))


def test_transition_identity_at_zero_lambda():
    base = cubic_base()
    hat = build_transition(UnfoldingSpec(base, (0.0, 0.0, 0.0)))
    ref = base.system()
    for x, y in grid_pts():
        for comp in ("f_plus", "g_plus", "f_minus", "g_minus"):
            assert getattr(hat, comp).value(x, y) \
                == getattr(ref, comp).value(x, y)


def test_transition_polynomial_expansion():
    delta = 0.2
    hat = build_transition(UnfoldingSpec(cubic_base(), (-delta, 0.0, delta)))
    for x in (-0.7, -0.2, 0.0, 0.33, 0.8):
        assert hat.g_plus.value(x, 0.0) == pytest.approx(
            x * (x ** 2 - delta ** 2), rel=1e-13, abs=1e-15)


def test_transition_empty_product_leaves_side_alone():
    hat = build_transition(UnfoldingSpec(cubic_base(), (0.1, -0.1, 0.0)))
    for x, y in grid_pts():
        assert hat.g_minus.value(x, y) == -1.0


def test_spec_validates_lambda_lengths():
    with pytest.raises(ValueError):
        UnfoldingSpec(cubic_base(), (0.0,))
    with pytest.raises(ValueError):
        UnfoldingSpec(cubic_base(), (0.0, 0.0, 0.0), (0.1,))


def test_unfolded_identity_at_zero():
    base = cubic_base()
    zero_bump = PsiSpec(1, (0.0, 0.1, 0.2, 0.0))
    unf = build_unfolded(UnfoldingSpec(base, (0.0,) * 3, (),
                                       psi_plus=zero_bump))
    ref = base.system()
    for x, y in grid_pts():
        for comp in ("f_plus", "g_plus", "f_minus", "g_minus"):
            assert getattr(unf, comp).value(x, y) \
                == getattr(ref, comp).value(x, y)


def test_unfolded_plateau_is_pure_shift():
    h = 0.01
    bump = PsiSpec(1, (-0.5, -0.3, -0.1, h))
    spec = UnfoldingSpec(cubic_base(), (0.0,) * 3, (), psi_plus=bump)
    unf = build_unfolded(spec)
    hat = build_transition(spec)
    for x in (0.0, 0.2, 0.6):       # on the plateau, psi' = 0
        for y in (-0.2, 0.1, 0.5):
            assert unf.g_plus.value(x, y) == pytest.approx(
                hat.g_plus.value(x, y + h), rel=1e-13, abs=1e-15)
            assert unf.f_plus.value(x, y) == hat.f_plus.value(x, y + h)


def test_unfolded_keeps_tangencies_at_lambda_knots():
    lam = (-0.4, -0.2, 0.0)
    # bump knots placed exactly on the lambda points: psi is infinitely
    # flat at knots, so the product zeros stay tangencies of the new field
    bump = PsiSpec(1, (-0.4, -0.2, 0.0, 2e-4))
    unf = build_unfolded(UnfoldingSpec(cubic_base(), lam, (), psi_plus=bump))
    for li in lam:
        assert psi_dx(bump, li) == 0.0
        assert unf.g_plus.value(li, 0.0) == pytest.approx(0.0, abs=1e-15)


def test_unfolded_partials_match_finite_differences():
    lam = (-0.3, 0.05, 0.4)
    bump = PsiSpec(1, (-0.2, 0.0, 0.2, 5e-3))
    unf = build_unfolded(UnfoldingSpec(cubic_base(), lam, (), psi_plus=bump))
    h = 1e-6
    for x, y in ((-0.1, 0.3), (0.1, -0.2), (0.35, 0.0), (-0.19, 0.44)):
        for fld in (unf.f_plus, unf.g_plus):
            fx = (fld.value(x + h, y) - fld.value(x - h, y)) / (2 * h)
            fy = (fld.value(x, y + h) - fld.value(x, y - h)) / (2 * h)
            assert fld.dx(x, y) == pytest.approx(fx, rel=2e-5, abs=1e-8)
            assert fld.dy(x, y) == pytest.approx(fy, rel=2e-5, abs=1e-8)


def test_conjugacy_zero_psi_is_integrator_noise():
    spec = UnfoldingSpec(cubic_base(), (0.0,) * 3, ())
    out = shear_conjugacy_check(spec, "upper", -0.5, 0.4, 1.0)
    assert out["residual"] <= 1e-9


def test_conjugacy_zero_time():
    bump = PsiSpec(1, (-0.2, 0.0, 0.2, 1e-3))
    spec = UnfoldingSpec(cubic_base(), (0.0,) * 3, (), psi_plus=bump)
    out = shear_conjugacy_check(spec, "upper", -0.1, 0.5, 0.0)
    assert out["residual"] == 0.0


def test_conjugacy_fallback_bump():
    bump = PsiSpec(1, (-0.2, 0.0, 0.2, 1e-3))
    spec = UnfoldingSpec(cubic_base(), (1e-3, 0.0, -1e-3), (),
                         psi_plus=bump)
    out = shear_conjugacy_check(spec, "upper", -0.1, 0.5, 1.0)
    assert out["residual"] <= 1e-6


def test_admissible_family_shrinks_fast():
    fam = admissible_k_family(1, 0.4, 0.5, steps=3)
    sups = [psi_sup_norms(s) for s in fam]
    assert sups[1][0] <= sups[0][0] / 30   # gap^5 height law
    assert sups[2][0] <= sups[1][0] / 30
    assert sups[1][1] <= sups[0][1]        # slopes decrease too
    assert sups[2][1] <= sups[1][1]


def test_admissible_family_slope_bound():
    C = 1.0
    for s, spec in enumerate(admissible_k_family(2, 0.4, 0.5, steps=5, C=C)):
        gap = 0.4 * 0.5 ** s
        _, s1, _ = psi_sup_norms(spec)
        assert s1 <= 8 * C * gap ** 3 + 1e-15


def test_admissible_family_zero_heights():
    fam = admissible_k_family(1, 0.4, 0.5, steps=3, C=0.0)
    for spec in fam:
        assert psi_sup_norms(spec) == (0.0, 0.0, 0.0)


def test_distance_to_base_decreases_along_family():
    base = cubic_base()
    ref = base.system()
    prev = None
    for spec in admissible_k_family(1, 0.2, 0.5, steps=4):
        unf = build_unfolded(UnfoldingSpec(base, (0.0,) * 3, (),
                                           psi_plus=spec))
        rho = system_distance(unf, ref, n_grid=61)
        if prev is not None:
            assert rho <= prev
        prev = rho
    assert prev < 1e-3
