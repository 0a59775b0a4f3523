"""Unfoldings of canonical tangency systems.

A canonical base has components (f, phi * x^m) per side, i.e. a single
tangency of multiplicity m at the origin on each side with g-factor phi
bounded away from zero. Two perturbation layers are applied:

* transition: replace x^m by the product prod_i (x - lambda_i), splitting
  the base tangency into simple ones at the lambda values;
* shear: compose with the vertical shear y -> y + psi(x) built from smooth
  plateau profiles; the sheared upper g-component becomes

      g~(x, y) = phi(x, y + psi(x)) * prod(x - lambda_i)
                 - f(x, y + psi(x)) * psi'(x)

  and f~(x, y) = f(x, y + psi(x)).

The shear is an exact conjugacy between the transition flow and the
unfolded flow: gamma~(t; x0, y0 - psi(x0)) = gamma^(t; x0, y0) shifted by
(0, -psi(gamma^_1)). shear_conjugacy_check verifies this numerically;
residuals are pure integration error.

Because psi has vanishing derivatives at its knots, placing knots at the
lambda values keeps those points tangencies of the unfolded system with
their types intact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from .cutoffs import PsiSpec, _psi_core, psi as psi_value, zero_psi
from .fieldexpr import (Expr, Mul, Num, Pow, Sub, Var, ScalarField, as_field)
from .system import NormalFormMeta, PwsSystem, Window


@dataclass
class CanonicalBase:
    """Per-side data (f, phi, m) of a canonical two-tangency system."""

    f_plus: ScalarField
    phi_plus: ScalarField
    m_plus: int
    f_minus: ScalarField
    phi_minus: ScalarField
    m_minus: int
    window: Window

    @classmethod
    def from_strings(cls, f_plus, phi_plus, m_plus, f_minus, phi_minus,
                     m_minus, window) -> "CanonicalBase":
        return cls(as_field(f_plus), as_field(phi_plus), int(m_plus),
                   as_field(f_minus), as_field(phi_minus), int(m_minus),
                   window)

    def system(self) -> PwsSystem:
        gp = _g_expr(self.phi_plus, [0.0] * self.m_plus)
        gm = _g_expr(self.phi_minus, [0.0] * self.m_minus)
        return PwsSystem(self.f_plus, gp, self.f_minus, gm, self.window,
                         NormalFormMeta(self.m_plus, self.m_minus))


def _monic_product_expr(lambdas: Sequence[float]) -> Expr:
    """prod (x - lambda_i) as an expression; x^m when all lambdas vanish."""
    m = len(lambdas)
    x = Var("x")
    if m == 0:
        return Num(1.0)
    if all(l == 0.0 for l in lambdas):
        return x if m == 1 else Pow(x, m)
    out: Expr | None = None
    for l in lambdas:
        factor = x if l == 0.0 else Sub(x, Num(float(l)))
        out = factor if out is None else Mul(out, factor)
    return out


def _g_expr(phi: ScalarField, lambdas: Sequence[float]) -> ScalarField:
    return ScalarField(Mul(phi.expr, _monic_product_expr(lambdas))
                       if len(lambdas) else phi.expr)


@dataclass
class UnfoldingSpec:
    base: CanonicalBase
    lambda_plus: Tuple[float, ...] = ()
    lambda_minus: Tuple[float, ...] = ()
    psi_plus: Optional[PsiSpec] = None
    psi_minus: Optional[PsiSpec] = None

    def __post_init__(self):
        self.lambda_plus = tuple(float(v) for v in self.lambda_plus)
        self.lambda_minus = tuple(float(v) for v in self.lambda_minus)
        if len(self.lambda_plus) != self.base.m_plus:
            raise ValueError(f"lambda_plus needs {self.base.m_plus} entries")
        if len(self.lambda_minus) != self.base.m_minus:
            raise ValueError(f"lambda_minus needs {self.base.m_minus} entries")


def build_transition(spec: UnfoldingSpec) -> PwsSystem:
    """The lambda-layer only: g-sides become phi * prod(x - lambda_i)."""
    b = spec.base
    return PwsSystem(
        b.f_plus, _g_expr(b.phi_plus, spec.lambda_plus),
        b.f_minus, _g_expr(b.phi_minus, spec.lambda_minus),
        b.window, NormalFormMeta(b.m_plus, b.m_minus))


def _poly_prod(x: float, lambdas: Sequence[float]) -> Tuple[float, float]:
    """prod (x - l_i) and its derivative (sum of leave-one-out products)."""
    p = 1.0
    dp = 0.0
    for l in lambdas:
        diff = x - l
        dp = dp * diff + p
        p *= diff
    return p, dp


class ShearedField:
    """F(x, y) = base(x, y + psi(x)) with exact first partials."""

    def __init__(self, base, psi_spec: Optional[PsiSpec]):
        self._base = base
        self._psi = psi_spec

    def value(self, x: float, y: float) -> float:
        p = psi_value(self._psi, x) if self._psi is not None else 0.0
        return self._base.value(x, y + p)

    def dx(self, x: float, y: float) -> float:
        if self._psi is None:
            return self._base.dx(x, y)
        p, dp, _ = _psi_core(self._psi, x)
        u = y + p
        return self._base.dx(x, u) + self._base.dy(x, u) * dp

    def dy(self, x: float, y: float) -> float:
        p = psi_value(self._psi, x) if self._psi is not None else 0.0
        return self._base.dy(x, y + p)

    def max_exact_x_order(self) -> int:
        return 1


class UnfoldedG:
    """g~ = phi(x, y+psi) * P(x) - f(x, y+psi) * psi'(x), P = prod(x - l_i).

    First partials are exact via the chain rule (psi, psi', psi'' are in
    closed form); higher x-derivatives are not provided symbolically.
    """

    def __init__(self, phi, f, lambdas: Sequence[float],
                 psi_spec: Optional[PsiSpec]):
        self._phi = phi
        self._f = f
        self._lambdas = tuple(float(v) for v in lambdas)
        self._psi = psi_spec

    def _psi3(self, x: float) -> Tuple[float, float, float]:
        if self._psi is None:
            return 0.0, 0.0, 0.0
        return _psi_core(self._psi, x)

    def value(self, x: float, y: float) -> float:
        p, dp, _ = self._psi3(x)
        u = y + p
        P, _ = _poly_prod(x, self._lambdas)
        return self._phi.value(x, u) * P - self._f.value(x, u) * dp

    def dx(self, x: float, y: float) -> float:
        p, dp, ddp = self._psi3(x)
        u = y + p
        P, dP = _poly_prod(x, self._lambdas)
        phi_x = self._phi.dx(x, u) + self._phi.dy(x, u) * dp
        f_x = self._f.dx(x, u) + self._f.dy(x, u) * dp
        return (phi_x * P + self._phi.value(x, u) * dP
                - f_x * dp - self._f.value(x, u) * ddp)

    def dy(self, x: float, y: float) -> float:
        p, dp, _ = self._psi3(x)
        u = y + p
        P, _ = _poly_prod(x, self._lambdas)
        return self._phi.dy(x, u) * P - self._f.dy(x, u) * dp

    def max_exact_x_order(self) -> int:
        return 1


def build_unfolded(spec: UnfoldingSpec) -> PwsSystem:
    """Full unfolding (transition + shear).

    With zero shear profiles this returns the transition system itself
    (identical component objects), so a spec with lambda = 0 and zero psi
    reproduces the base system's values bit for bit.
    """
    b = spec.base
    trans = build_transition(spec)
    psi_p = None if zero_psi(spec.psi_plus) else spec.psi_plus
    psi_m = None if zero_psi(spec.psi_minus) else spec.psi_minus
    if psi_p is None and psi_m is None:
        return trans
    if psi_p is None:
        f_p, g_p = trans.f_plus, trans.g_plus
    else:
        f_p = ShearedField(b.f_plus, psi_p)
        g_p = UnfoldedG(b.phi_plus, b.f_plus, spec.lambda_plus, psi_p)
    if psi_m is None:
        f_m, g_m = trans.f_minus, trans.g_minus
    else:
        f_m = ShearedField(b.f_minus, psi_m)
        g_m = UnfoldedG(b.phi_minus, b.f_minus, spec.lambda_minus, psi_m)
    return PwsSystem(f_p, g_p, f_m, g_m, b.window,
                     NormalFormMeta(b.m_plus, b.m_minus))


def shear_conjugacy_check(spec: UnfoldingSpec, side: str, x0: float,
                          y0: float, t_span: float, *, rtol: float = 1e-10,
                          atol: float = 1e-12, n_samples: int = 60) -> dict:
    """Numerically verify the shear conjugacy along one smooth sub-flow.

    Integrates the transition field from (x0, y0) and the unfolded field
    from (x0, y0 - psi(x0)), then compares the unfolded trajectory with the
    shear image of the transition trajectory on a common time grid clipped
    to the window. Returns {'residual', 't_reached'}.
    """
    trans = build_transition(spec)
    unf = build_unfolded(spec)
    psi_spec = spec.psi_plus if side == "upper" else spec.psi_minus
    if zero_psi(psi_spec):
        psi_spec = None
    f_t, g_t = trans.side(side)
    f_u, g_u = unf.side(side)
    w = spec.base.window
    pad = 0.05 * max(w.width, w.y_hi - w.y_lo)

    def rhs(fld_pair):
        f, g = fld_pair
        return lambda t, s: (f.value(s[0], s[1]), g.value(s[0], s[1]))

    def exit_event(t, s):
        return min(s[0] - w.x_lo + pad, w.x_hi + pad - s[0],
                   s[1] - w.y_lo + pad, w.y_hi + pad - s[1])
    exit_event.terminal = True

    p0 = psi_value(psi_spec, x0) if psi_spec is not None else 0.0
    sol_t = solve_ivp(rhs((f_t, g_t)), (0.0, t_span), (x0, y0),
                      method="DOP853", rtol=rtol, atol=atol,
                      dense_output=True, events=exit_event)
    sol_u = solve_ivp(rhs((f_u, g_u)), (0.0, t_span), (x0, y0 - p0),
                      method="DOP853", rtol=rtol, atol=atol,
                      dense_output=True, events=exit_event)
    t_end = min(sol_t.t[-1], sol_u.t[-1])
    ts = np.linspace(0.0, t_end, n_samples)
    worst = 0.0
    for t in ts:
        xt, yt = sol_t.sol(t)
        xu, yu = sol_u.sol(t)
        pt = psi_value(psi_spec, xt) if psi_spec is not None else 0.0
        worst = max(worst, abs(xu - xt), abs(yu - (yt - pt)))
    return {"residual": worst, "t_reached": t_end}


def admissible_k_family(d: int, base_gap: float, shrink: float = 0.5,
                        steps: int = 8, C: float = 1.0,
                        x_start: float = 0.0) -> List[PsiSpec]:
    """Shrinking ladder of admissible plateau profiles.

    Step s uses equal knot gaps g_s = base_gap * shrink^s and plateau
    heights C * g_s^5, realizing heights = o(gap^4) along the ladder.
    """
    if not (0.0 < shrink < 1.0):
        raise ValueError("shrink must be in (0, 1)")
    out = []
    for s in range(steps):
        gap = base_gap * shrink ** s
        knots = tuple(x_start + i * gap for i in range(2 * d + 1))
        heights = tuple(C * gap ** 5 for _ in range(d))
        out.append(PsiSpec(d, knots + heights))
    return out
