"""Tangency detection and classification on the switching line.

A point x0 on Sigma is a tangency of one side when that side's normal
component g vanishes there while f does not. The multiplicity m is the
order of the first non-vanishing x-derivative of g(., 0); the local orbit
behaves like y ~ c (x - x0)^(m+1) with

    c = (1 / (m+1)) * (g^(m)(x0, 0) / m!) / f(x0, 0).

Odd m gives a fold-like visible/invisible tangency (V if the branch bends
into the subsystem's own closed half-plane, I otherwise); even m gives a
one-branch contact, labelled L or R by which branch lies in the own
half-plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

from .system import PwsSystem, SigmaDecomposition, decompose_sigma


class IndeterminateMultiplicity(ArithmeticError):
    """All x-derivatives up to max_order vanish below threshold."""


class ZeroLeadingCoefficient(ArithmeticError):
    pass


class BoundViolation(AssertionError):
    """An unfolding produced more tangencies than its budget allows."""


@dataclass(frozen=True)
class TangentPointRecord:
    x0: float
    m_plus: int
    m_minus: int
    vis_plus: Optional[str]   # 'V' | 'I' | 'L' | 'R' | None
    vis_minus: Optional[str]
    label: str


@dataclass(frozen=True)
class BoundaryEquilibrium:
    x0: float
    side: str


def _x_derivative(field, x0: float, y0: float, k: int) -> float:
    """k-th x-derivative of a component along the line y = y0.

    Exact (symbolic) when the field supports it; orders 0/1 fall back to
    value/dx; higher orders use central finite differences with Richardson
    extrapolation (documented as coarse: good to ~1e-9 relative).
    """
    if hasattr(field, "x_derivative_on_line"):
        return field.x_derivative_on_line(x0, y0, k)
    if k == 0:
        return field.value(x0, y0)
    if k == 1:
        return field.dx(x0, y0)
    # finite differences on dx (one exact derivative is available)
    def deriv(fn, x, h, order):
        if order == 1:
            return (fn(x + h) - fn(x - h)) / (2 * h)
        lower = lambda z: deriv(fn, z, h, order - 1)
        return (lower(x + h) - lower(x - h)) / (2 * h)

    fn = lambda z: field.dx(z, y0)
    order = k - 1
    h = max(1e-4, 10.0 ** (-8.0 / (order + 1)))
    a = deriv(fn, x0, h, order)
    b = deriv(fn, x0, h / 2.0, order)
    return (4.0 * b - a) / 3.0


def multiplicity_at(g_field, f_at: float, x0: float, *, y0: float = 0.0,
                    max_order: int = 12, eps: float = 1e-8) -> int:
    """Order of the first non-vanishing x-derivative of g at (x0, y0).

    Returns 0 when g itself is nonzero (no tangency). The threshold is
    eps scaled by max(1, |f|, derivative magnitudes seen so far) — scaling
    by *later* orders would let the enormous high-order derivatives of
    bump-type perturbations swallow a genuinely nonzero low-order one.
    Raises IndeterminateMultiplicity when everything up to max_order
    vanishes.
    """
    scale = max(1.0, abs(f_at))
    for k in range(max_order + 1):
        v = _x_derivative(g_field, x0, y0, k)
        if abs(v) > eps * scale:
            return k
        scale = max(scale, abs(v))
    raise IndeterminateMultiplicity(
        f"g and its first {max_order} x-derivatives vanish at x={x0}")


def visibility(side: str, m: int, f_val: float, g_m_val: float,
               eps: float = 1e-12) -> str:
    """Classify the tangency branch geometry from the leading coefficient.

    side is 'upper' or 'lower'; m >= 1 the multiplicity; g_m_val the m-th
    x-derivative of g at the tangent point.
    """
    if side not in ("upper", "lower"):
        raise ValueError("side must be 'upper' or 'lower'")
    if m < 1:
        raise ValueError("visibility needs multiplicity m >= 1")
    if f_val == 0.0:
        raise ZeroDivisionError("f vanishes: boundary equilibrium, not a tangency")
    scale = max(1.0, abs(f_val))
    if abs(g_m_val) <= eps * scale:
        raise ZeroLeadingCoefficient(
            f"leading x-derivative of g at order {m} is numerically zero")
    c = (g_m_val / math.factorial(m)) / ((m + 1) * f_val)
    if m % 2 == 1:  # fold-like: both branches on one side of Sigma
        if side == "upper":
            return "V" if c > 0 else "I"
        return "V" if c < 0 else "I"
    # even m: branches straddle Sigma; name the one in the own half-plane
    if side == "upper":
        return "R" if c > 0 else "L"
    return "L" if c > 0 else "R"


@dataclass
class TangencyScan:
    records: List[TangentPointRecord]
    boundary_equilibria: List[BoundaryEquilibrium]


def _side_data(sys: PwsSystem, which: str, x0: float, max_order: int,
               eps: float):
    f, g = sys.side(which)
    f_val = f.value(x0, 0.0)
    m = multiplicity_at(g, f_val, x0, max_order=max_order, eps=eps)
    vis = None
    if m >= 1 and f_val != 0.0:
        gm = _x_derivative(g, x0, 0.0, m)
        vis = visibility(which, m, f_val, gm)
    return f_val, m, vis


def find_tangent_points(sys: PwsSystem,
                        dec: SigmaDecomposition | None = None, *,
                        max_order: int = 12, eps: float = 1e-8,
                        merge_tol: float = 1e-10) -> TangencyScan:
    """Classify every tangency candidate of the Sigma decomposition.

    Candidates where the vanishing side's f also vanishes are reported as
    boundary equilibria and excluded from the tangency list. Candidates
    closer than merge_tol are merged at their mean (decompose_sigma already
    merges; this guards externally supplied decompositions).
    """
    if dec is None:
        dec = decompose_sigma(sys)
    xs: List[float] = []
    for c in sorted(dec.tangency_candidates):
        if xs and abs(c - xs[-1]) <= merge_tol:
            xs[-1] = 0.5 * (xs[-1] + c)
        else:
            xs.append(c)

    records: List[TangentPointRecord] = []
    boundary: List[BoundaryEquilibrium] = []
    for x0 in xs:
        skip = False
        for which in ("upper", "lower"):
            f, g = sys.side(which)
            g0 = g.value(x0, 0.0)
            f0 = f.value(x0, 0.0)
            gs = sys.sigma_g_scale(which)
            if abs(g0) <= 1e-7 * gs and abs(f0) <= 1e-9 * gs:
                boundary.append(BoundaryEquilibrium(x0, which))
                skip = True
        if skip:
            continue
        try:
            _, m_p, vis_p = _side_data(sys, "upper", x0, max_order, eps)
            _, m_m, vis_m = _side_data(sys, "lower", x0, max_order, eps)
        except IndeterminateMultiplicity:
            records.append(TangentPointRecord(x0, -1, -1, None, None, "??"))
            continue
        if m_p == 0 and m_m == 0:
            continue  # spurious candidate: neither g actually vanishes
        label = (vis_p or ".") + (vis_m or ".")
        records.append(TangentPointRecord(x0, m_p, m_m, vis_p, vis_m, label))
    return TangencyScan(records, boundary)


def count_bifurcating(sys_unfolded: PwsSystem, base: TangentPointRecord,
                      radius: float, *, dec: SigmaDecomposition | None = None,
                      max_order: int = 12,
                      eps: float = 1e-8) -> Tuple[int, List[TangentPointRecord]]:
    """Count tangent points of an unfolded system near a base tangency.

    Returns (ell, records) for the tangencies within |x - x0| <= radius and
    enforces the budget: ell <= m+ + m- and, side by side, the multiplicities
    of the bifurcating points sum to at most the base multiplicity.
    """
    scan = find_tangent_points(sys_unfolded, dec, max_order=max_order, eps=eps)
    near = [r for r in scan.records if abs(r.x0 - base.x0) <= radius]
    ell = len(near)
    budget = base.m_plus + base.m_minus
    if ell > budget:
        raise BoundViolation(
            f"{ell} tangencies bifurcated from a point with m+ + m- = {budget}")
    sum_p = sum(max(r.m_plus, 0) for r in near)
    sum_m = sum(max(r.m_minus, 0) for r in near)
    if sum_p > base.m_plus or sum_m > base.m_minus:
        raise BoundViolation(
            f"per-side multiplicity sums ({sum_p}, {sum_m}) exceed "
            f"({base.m_plus}, {base.m_minus})")
    return ell, near
