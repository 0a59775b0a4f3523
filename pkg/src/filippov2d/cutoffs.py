"""Smooth cutoff steps and the piecewise plateau profile psi.

cutoff_up(x; r1, r2) is the C-infinity step that is exactly 0 for x <= r1,
exactly 1 for x >= r2 and 1 / (1 + exp(eta)) in between, with
eta = 1/(x - r1) + 1/(x - r2). All derivatives vanish at r1 and r2.
cutoff_down is its complement.

psi assembles d plateau bumps from a knot vector k of length 3d+1: knots
k_1 < ... < k_{2d+1}, then d plateau heights. Bump i rises on
(k_{2i-1}, k_{2i}] and falls on (k_{2i}, k_{2i+1}]. If the knots are not
strictly ascending, the fallback branch k_{2d+2} * cutoff_up(x; r1, r2)
is used instead (r1, r2 supplied separately).

Closed-form first and second derivatives are provided; with
q = s(1 - s), s = cutoff_up, nu2 = 1/(x-r1)^2 + 1/(x-r2)^2 and
nu3 = 2/(x-r1)^3 + 2/(x-r2)^3,

    s'  = nu2 * q
    s'' = q * (nu2^2 * (1 - 2 s) - nu3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

_ETA_SAT = 700.0  # exp saturation guard


def _cutoff_core(x: float, r1: float, r2: float) -> Tuple[float, float, float]:
    if not (r1 < r2):
        raise ValueError("cutoff needs r1 < r2")
    if x <= r1:
        return 0.0, 0.0, 0.0
    if x >= r2:
        return 1.0, 0.0, 0.0
    t1 = 1.0 / (x - r1)
    t2 = 1.0 / (x - r2)
    eta = t1 + t2
    if eta >= _ETA_SAT:
        return 0.0, 0.0, 0.0
    if eta <= -_ETA_SAT:
        return 1.0, 0.0, 0.0
    if eta >= 0.0:
        u = math.exp(-eta)
        s = u / (1.0 + u)
        q = u / (1.0 + u) ** 2
    else:
        e = math.exp(eta)
        s = 1.0 / (1.0 + e)
        q = e / (1.0 + e) ** 2
    nu2 = t1 * t1 + t2 * t2
    nu3 = 2.0 * (t1 ** 3 + t2 ** 3)
    d1 = nu2 * q
    d2 = q * (nu2 * nu2 * (1.0 - 2.0 * s) - nu3)
    return s, d1, d2


def cutoff_up(x: float, r1: float, r2: float) -> float:
    return _cutoff_core(x, r1, r2)[0]


def cutoff_up_d1(x: float, r1: float, r2: float) -> float:
    return _cutoff_core(x, r1, r2)[1]


def cutoff_up_d2(x: float, r1: float, r2: float) -> float:
    return _cutoff_core(x, r1, r2)[2]


def cutoff_down(x: float, r1: float, r2: float) -> float:
    return 1.0 - _cutoff_core(x, r1, r2)[0]


def cutoff_down_d1(x: float, r1: float, r2: float) -> float:
    return -_cutoff_core(x, r1, r2)[1]


def cutoff_down_d2(x: float, r1: float, r2: float) -> float:
    return -_cutoff_core(x, r1, r2)[2]


@dataclass(frozen=True)
class PsiSpec:
    """Plateau profile: d bumps, knot-and-height vector k (length 3d+1),
    optional fallback window (r1, r2) used when the knots are degenerate."""

    d: int
    k: Tuple[float, ...]
    r1: Optional[float] = None
    r2: Optional[float] = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("need d >= 1")
        if len(self.k) != 3 * self.d + 1:
            raise ValueError(
                f"k must have length 3d+1 = {3 * self.d + 1}, got {len(self.k)}")
        if self.r1 is not None and self.r2 is not None and not self.r1 < self.r2:
            raise ValueError("fallback window needs r1 < r2")

    @property
    def knots(self) -> Tuple[float, ...]:
        return self.k[: 2 * self.d + 1]

    @property
    def heights(self) -> Tuple[float, ...]:
        return self.k[2 * self.d + 1:]

    @property
    def fallback_height(self) -> float:
        return self.k[2 * self.d + 1]

    def in_knot_domain(self) -> bool:
        """Exact strict-ascending test on the knot part of k."""
        ks = self.knots
        return all(a < b for a, b in zip(ks[:-1], ks[1:]))

    def support(self) -> Tuple[float, float]:
        if self.in_knot_domain():
            return self.knots[0], self.knots[-1]
        if self.r1 is None or self.r2 is None:
            raise ValueError("degenerate knots need a fallback (r1, r2) window")
        return self.r1, self.r2

    def with_heights(self, heights) -> "PsiSpec":
        heights = tuple(float(h) for h in heights)
        if len(heights) != self.d:
            raise ValueError(f"need {self.d} heights")
        return PsiSpec(self.d, self.knots + heights, self.r1, self.r2)


_KNOT_TOL = 1e-14


def _psi_core(spec: PsiSpec, x: float) -> Tuple[float, float, float]:
    if not spec.in_knot_domain():
        if spec.r1 is None or spec.r2 is None:
            raise ValueError("degenerate knots need a fallback (r1, r2) window")
        h = spec.fallback_height
        s, d1, d2 = _cutoff_core(x, spec.r1, spec.r2)
        return h * s, h * d1, h * d2
    ks = spec.knots
    hs = spec.heights
    # snap to knots: all psi derivatives vanish there, peaks hit exactly
    for j, kj in enumerate(ks):
        if abs(x - kj) <= _KNOT_TOL * max(1.0, abs(kj)):
            if j % 2 == 1:
                return hs[j // 2], 0.0, 0.0
            return 0.0, 0.0, 0.0
    if x <= ks[0] or x >= ks[-1]:
        return 0.0, 0.0, 0.0
    for i in range(spec.d):
        left, peak, right = ks[2 * i], ks[2 * i + 1], ks[2 * i + 2]
        if left < x <= peak:
            s, d1, d2 = _cutoff_core(x, left, peak)
            return hs[i] * s, hs[i] * d1, hs[i] * d2
        if peak < x <= right:
            s, d1, d2 = _cutoff_core(x, peak, right)
            return hs[i] * (1.0 - s), -hs[i] * d1, -hs[i] * d2
    return 0.0, 0.0, 0.0  # pragma: no cover


def psi(spec: PsiSpec, x: float) -> float:
    return _psi_core(spec, x)[0]


def psi_dx(spec: PsiSpec, x: float) -> float:
    return _psi_core(spec, x)[1]


def psi_dxx(spec: PsiSpec, x: float) -> float:
    return _psi_core(spec, x)[2]


def psi_sup_norms(spec: PsiSpec, n: int = 4001) -> Tuple[float, float, float]:
    """Sampled sup of |psi|, |psi'|, |psi''| over the support."""
    a, b = spec.support()
    s0 = s1 = s2 = 0.0
    for i in range(n + 1):
        x = a + (b - a) * i / n
        v, d1, d2 = _psi_core(spec, x)
        s0 = max(s0, abs(v))
        s1 = max(s1, abs(d1))
        s2 = max(s2, abs(d2))
    return s0, s1, s2


def zero_psi(spec_like: Optional[PsiSpec]) -> bool:
    """True when the profile is identically zero (None or all-zero heights)."""
    if spec_like is None:
        return True
    if spec_like.in_knot_domain():
        return all(h == 0.0 for h in spec_like.heights)
    return spec_like.fallback_height == 0.0
