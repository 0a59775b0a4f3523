"""Tangency detection: multiplicity, visibility, bifurcation counting."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from filippov2d import (BoundViolation, IndeterminateMultiplicity,
                        TangentPointRecord, ZeroLeadingCoefficient,
                        count_bifurcating, decompose_sigma,
                        find_tangent_points, multiplicity_at, visibility)
from filippov2d.fieldexpr import ScalarField
from conftest import make_sys


def test_multiplicity_monomials():
    assert multiplicity_at(ScalarField("x^3"), 1.0, 0.0) == 3
    assert multiplicity_at(ScalarField("sin(x)"), 1.0, 0.0) == 1
    g = ScalarField("x^2 * (x - 1)")
    assert multiplicity_at(g, 1.0, 0.0) == 2
    assert multiplicity_at(g, 1.0, 1.0) == 1


def test_multiplicity_zero_when_g_nonzero():
    assert multiplicity_at(ScalarField("1 + x"), 1.0, 0.0) == 0


def test_multiplicity_flat_is_indeterminate():
    with pytest.raises(IndeterminateMultiplicity):
        multiplicity_at(ScalarField("0"), 1.0, 0.0)


def test_visibility_fold_cases():
    # upper orbit through a simple fold: y ~ (g'/2f) x^2
    assert visibility("upper", 1, 1.0, 1.0) == "V"
    assert visibility("upper", 1, 1.0, -1.0) == "I"
    assert visibility("lower", 1, 1.0, -1.0) == "V"
    assert visibility("lower", 1, 1.0, 1.0) == "I"


def test_visibility_even_cases():
    assert visibility("upper", 2, 1.0, 2.0) == "R"
    assert visibility("upper", 2, 1.0, -2.0) == "L"
    assert visibility("lower", 2, 1.0, 2.0) == "L"
    assert visibility("lower", 2, 1.0, -2.0) == "R"


def test_visibility_guards():
    with pytest.raises(ZeroLeadingCoefficient):
        visibility("upper", 2, 1.0, 0.0)
    with pytest.raises(ValueError):
        visibility("upper", 0, 1.0, 1.0)
    with pytest.raises(ValueError):
        visibility("middle", 1, 1.0, 1.0)


def _branch_signs(fc, gc, side):
    """Integrate the orbit through (0,0); return sign of y on each x-branch."""
    out = {}
    for sgn in (1.0, -1.0):
        sol = solve_ivp(lambda t, s: [fc(*s), gc(*s)], (0.0, sgn * 1e-2),
                        [0.0, 0.0], rtol=1e-12, atol=1e-14, dense_output=True)
        xe, ye = sol.y[0][-1], sol.y[1][-1]
        out["right" if xe > 0 else "left"] = math.copysign(1.0, ye)
    return out


@given(st.integers(1, 4), st.floats(0.2, 3.0), st.booleans(), st.booleans(),
       st.floats(-0.3, 0.3))
@settings(max_examples=60, deadline=None)
def test_visibility_matches_integrated_branches(m, c, neg_c, neg_f, tilt):
    c = -c if neg_c else c
    f0 = -1.0 if neg_f else 1.0
    g = ScalarField(f"{c!r} * x^{m} * (1 + {tilt!r} * x)")
    f = ScalarField(f"{f0!r}")
    label = visibility("upper", m, f0, c * math.factorial(m))
    signs = _branch_signs(lambda x, y: f0,
                          lambda x, y: g.value(x, y), "upper")
    if label == "V":
        assert signs["left"] > 0 and signs["right"] > 0
    elif label == "I":
        assert signs["left"] < 0 and signs["right"] < 0
    elif label == "R":
        assert signs["right"] > 0 and signs["left"] < 0
    else:  # L
        assert signs["left"] > 0 and signs["right"] < 0


def test_find_single_sided_fold():
    s = make_sys("1", "x", "1", "1")
    scan = find_tangent_points(s)
    assert len(scan.records) == 1
    r = scan.records[0]
    assert (r.m_plus, r.m_minus) == (1, 0)
    assert r.vis_plus == "V" and r.vis_minus is None
    assert r.label == "V."
    assert r.x0 == pytest.approx(0.0, abs=1e-9)


def test_find_double_fold():
    s = make_sys("1", "x", "1", "0 - x")
    scan = find_tangent_points(s)
    assert len(scan.records) == 1
    r = scan.records[0]
    assert (r.m_plus, r.m_minus) == (1, 1)
    assert r.vis_plus == "V"   # upper orbit y = x^2/2
    assert r.vis_minus == "V"  # lower orbit y = -x^2/2 lies in y <= 0
    assert r.label == "VV"


def test_find_nothing_on_pure_crossing():
    scan = find_tangent_points(make_sys("1", "1", "1", "1"))
    assert scan.records == [] and scan.boundary_equilibria == []


def test_boundary_equilibrium_is_excluded():
    s = make_sys("x", "x", "1", "1")
    scan = find_tangent_points(s)
    assert scan.records == []
    assert len(scan.boundary_equilibria) == 1
    assert scan.boundary_equilibria[0].side == "upper"
    assert scan.boundary_equilibria[0].x0 == pytest.approx(0.0, abs=1e-9)


def _record(sys):
    recs = find_tangent_points(sys).records
    assert len(recs) == 1
    return recs[0]


def test_count_bifurcating_cubic_split():
    base = _record(make_sys("1", "x^3", "1", "1"))
    assert (base.m_plus, base.m_minus) == (3, 0)
    unf = make_sys("1", "(x + 0.1) * x * (x - 0.1)", "1", "1")
    ell, near = count_bifurcating(unf, base, 0.5)
    assert ell == 3
    assert [r.m_plus for r in near] == [1, 1, 1]
    assert [r.vis_plus for r in near] == ["V", "I", "V"]


def test_count_bifurcating_identity_and_double_root():
    base = _record(make_sys("1", "x^3", "1", "1"))
    ell, near = count_bifurcating(make_sys("1", "x^3", "1", "1"), base, 0.5)
    assert ell == 1 and (near[0].m_plus, near[0].m_minus) == (3, 0)

    base2 = _record(make_sys("1", "x^2", "1", "1"))
    unf2 = make_sys("1", "(x - 0.05)^2", "1", "1")
    ell2, near2 = count_bifurcating(unf2, base2, 0.5)
    assert ell2 == 1
    assert near2[0].x0 == pytest.approx(0.05, abs=1e-7)
    assert (near2[0].m_plus, near2[0].m_minus) == (2, 0)


def test_count_bifurcating_enforces_budget():
    fake = TangentPointRecord(0.0, 1, 0, "V", None, "V.")
    unf = make_sys("1", "(x + 0.1) * x * (x - 0.1)", "1", "1")
    with pytest.raises(BoundViolation):
        count_bifurcating(unf, fake, 0.5)


@given(st.lists(st.floats(-0.6, 0.6), min_size=4, max_size=4, unique=True))
@settings(max_examples=40, deadline=None)
def test_full_splits_alternate_visibility(lams):
    lams = sorted(lams)
    if min(b - a for a, b in zip(lams, lams[1:])) < 0.05:
        return  # roots too close for the default scan resolution
    prod = "*".join(f"(x - {v!r})" for v in lams)
    s = make_sys("1", prod, "1", "1")
    scan = find_tangent_points(s)
    vis = [r.vis_plus for r in scan.records]
    assert len(vis) == 4
    assert vis in (["V", "I", "V", "I"], ["I", "V", "I", "V"])
    # quartic with positive leading coefficient: rightmost fold is visible
    assert vis[-1] == "V"


def test_parity_rule_on_mixed_example():
    s = make_sys("1", "x^2 * (x - 0.4)", "1", "0 - x")
    for r in find_tangent_points(s).records:
        for m, v in ((r.m_plus, r.vis_plus), (r.m_minus, r.vis_minus)):
            if m == 0:
                assert v is None
            elif m % 2 == 1:
                assert v in ("V", "I")
            else:
                assert v in ("L", "R")
