"""Closed orbits: assembly, classification, and counting scenarios.

Loops are stitched from arcs produced by the flow engine (upper/lower
transits, sliding stretches), validated for closure, and classified by how
they meet the switching line. On top of that sit the census builders:

* canonical_critical_loop -- the two-arc loop joining a transversal
  crossing to an odd tangency on each side;
* find_crossing_cycles -- sign-change scan of the sigma displacement with
  integration-verified witnesses;
* scenario_thm2 .. scenario_thm5 -- preconfigured unfoldings realising
  prescribed counts of tangent orbits, nonsliding/critical loops, sliding
  loops and crossing limit cycles.

Nothing here is synthesised from closed-form orbit formulas: every record
returned carries a trajectory that was actually integrated, so a successful
return certifies the advertised geometry up to the stated tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .cutoffs import PsiSpec
from .flow import (DEFAULT_ATOL, DEFAULT_RTOL, Arc, Event, Trajectory,
                   integrate_smooth, sliding_arc)
from .maps import NoArrival, Section, TangentialArrival, _flow_to_section, \
    displacement_sigma
from .system import PwsSystem, Window, h_value
from .tangency import multiplicity_at
from .unfolding import (CanonicalBase, UnfoldingSpec, build_transition,
                        build_unfolded)

CLOSURE_TOL = 1e-8


class NotClosed(Exception):
    """Trajectory endpoints do not coincide within the closure tolerance."""


class VerificationFailed(Exception):
    """An assembled loop failed one of its integration checks."""


class RangeError(Exception):
    """Scenario parameter outside the range the construction supports."""


class HarvestFailure(Exception):
    """Orbit data needed to size a perturbation could not be collected."""


class RootNotBracketed(Exception):
    """An expected displacement sign change was not found."""


class CensusMismatch(Exception):
    """Assembled loop counts disagree with the scenario targets."""


# --------------------------------------------------------------------------
# records


@dataclass
class LoopRecord:
    """A verified closed orbit plus its switching-line fingerprint."""

    trajectory: Trajectory
    kind: str
    switching_points: Tuple[Tuple[float, str], ...]
    tangent_touch_count: int
    closure_residual: float
    stability: str = "unknown"


@dataclass
class LoopCensus:
    """Loop counts of one scenario run, with integrated witnesses."""

    scenario: str
    m_plus: int
    m_minus: int
    ell: int
    beta_c: int = 0
    beta_s: int = 0
    beta_cro: Dict[int, int] = field(default_factory=dict)
    beta_cri: Dict[int, int] = field(default_factory=dict)
    witnesses: List[Tuple[str, LoopRecord]] = field(default_factory=list)
    notes: Dict[str, object] = field(default_factory=dict)


@dataclass
class TangentOrbitCensus:
    """Orbits through visible tangencies, grouped by contact count."""

    counts: Dict[int, int]
    orbits: List[Trajectory]
    visible_points: Tuple[float, ...]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


# --------------------------------------------------------------------------
# classification


def _dedup_sorted(xs: Sequence[float], tol: float) -> List[float]:
    out: List[float] = []
    for x in sorted(xs):
        if not out or x - out[-1] > tol:
            out.append(x)
    return out


def _grazes(g_field, x: float, scale: float, x_tol: float) -> bool:
    """True when x sits within x_tol of a zero of g along the line.

    Uses the first-order distance |g| / |g'|, which separates junctions
    localized onto a tangency (distance ~ solver precision) from shallow
    transversal crossings near one (distance ~ the dip width) far more
    reliably than any fixed threshold on |g| itself.
    """
    g0 = g_field.value(x, 0.0)
    h = 1e-6 * max(1.0, abs(x))
    g1 = (g_field.value(x + h, 0.0) - g_field.value(x - h, 0.0)) / (2.0 * h)
    return abs(g0) <= max(abs(g1) * x_tol, 1e-12 * scale)


def classify_loop(traj: Trajectory, *, closure_tol: float = CLOSURE_TOL,
                  tangent_x_tol: float = 1e-6,
                  dedup_tol: float = 1e-6) -> LoopRecord:
    """Validate closure and classify a loop by its switching-line contacts.

    Kind precedence: any sliding arc makes a sliding-loop; otherwise a
    tangent switching point makes the loop critical; tangential touches
    without a tangent switching point give crossing-nonsliding; purely
    transversal loops come back crossing-periodic (find_crossing_cycles
    upgrades isolated ones to crossing-limit-cycle); loops that never
    change half-plane are grazing. Raises NotClosed when the endpoints
    differ by more than closure_tol. A junction counts as tangent when it
    sits within tangent_x_tol (in x) of a zero of the active side's g.
    """
    sys = traj.system
    if sys is None:
        raise ValueError("classify_loop needs trajectory.system to be set")
    arcs = traj.arcs
    if not arcs:
        raise NotClosed("trajectory has no arcs")
    x0, y0 = traj.start()
    x1, y1 = traj.end()
    residual = math.hypot(x1 - x0, y1 - y0)
    if residual > closure_tol:
        raise NotClosed(
            f"endpoints ({x0:.12g}, {y0:.3e}) vs ({x1:.12g}, {y1:.3e}) "
            f"differ by {residual:.3e} > {closure_tol:.1e}")
    scale_up = sys.sigma_g_scale("upper")
    scale_dn = sys.sigma_g_scale("lower")
    switching: List[Tuple[float, str]] = []
    touch_xs: List[float] = [ev.x for ev in traj.touch_events()]
    n = len(arcs)
    for i in range(n):
        a, b = arcs[i], arcs[(i + 1) % n]
        xj = float(a.x[-1])
        if a.kind == b.kind:
            # consecutive same-side arcs meet in a grazing contact
            if a.kind in ("upper", "lower") and abs(float(a.y[-1])) <= 1e-7:
                touch_xs.append(xj)
            continue
        involved = {a.kind, b.kind}
        tangent = False
        if "upper" in involved:
            tangent |= _grazes(sys.g_plus, xj, scale_up, tangent_x_tol)
        if "lower" in involved:
            tangent |= _grazes(sys.g_minus, xj, scale_dn, tangent_x_tol)
        switching.append((xj, "tangent" if tangent else "crossing"))
    touch_xs.extend(x for x, lbl in switching if lbl == "tangent")
    ell = len(_dedup_sorted(touch_xs, dedup_tol))
    if any(a.kind == "sliding" for a in arcs):
        kind = "sliding-loop"
    elif not switching:
        kind = "grazing"
    elif any(lbl == "tangent" for _, lbl in switching):
        kind = "critical"
    elif ell > 0:
        kind = "crossing-nonsliding"
    else:
        kind = "crossing-periodic"
    return LoopRecord(traj, kind, tuple(switching), ell, residual)


# --------------------------------------------------------------------------
# transit helpers


def _transit_budget(window: Window) -> float:
    return 6.0 * window.width + 30.0


def _upper_chain(sys: PwsSystem, x0: float, *, t_leg: float,
                 time_sign: float = 1.0, stop_at: Optional[float] = None,
                 stop_tol: float = 1e-6, x_cap: Optional[float] = None,
                 max_touches: int = 24, t_offset: float = 0.0,
                 rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL):
    """Upper transit from (x0, 0) grazing through tangential contacts.

    Returns (arcs, touch_events, terminal_event); arc times are offset to
    run consecutively starting at t_offset. If stop_at is given the chain
    terminates with kind 'tangent-arrival' at the first touch within
    stop_tol of it. If x_cap is given the forward window is cut there and
    hitting the cap terminates the chain with kind 'cap-reached' (the
    orbit's height at the cap rides along in the event): that pins down
    crossings so shallow the integrator would step right over them.
    Otherwise the terminal is whatever ends the transit (sigma-cross,
    window-exit, time-end).
    """
    w = sys.window
    if x_cap is not None:
        w = Window(w.x_lo, min(w.x_hi, float(x_cap)), w.y_lo, w.y_hi)
    arcs: List[Arc] = []
    touches: List[Event] = []
    t_off = float(t_offset)
    cur = (float(x0), 0.0)
    for _ in range(max_touches + 1):
        run = integrate_smooth(sys.f_plus, sys.g_plus, cur, "upper",
                               t_max=t_leg, window=w,
                               time_sign=time_sign, stop_on_touch=True,
                               rtol=rtol, atol=atol)
        arcs.append(Arc("upper", np.asarray(run.t) + t_off,
                        np.asarray(run.x), np.asarray(run.y)))
        for ev in run.touches:
            touches.append(Event(ev.t + t_off, ev.x, 0.0, "tangency-touch"))
        t_end = t_off + (float(run.t[-1]) if len(run.t) else 0.0)
        term = run.terminal
        if term.kind == "tangent-arrival":
            # the engine already logs the terminal touch; don't double-count
            if not touches or abs(touches[-1].t - t_end) > 1e-12:
                touches.append(Event(t_end, term.x, 0.0, "tangency-touch"))
            if stop_at is not None and abs(term.x - stop_at) <= stop_tol:
                return arcs, touches, Event(t_end, term.x, 0.0,
                                            "tangent-arrival")
            cur = (float(term.x), 0.0)
            t_off = t_end
            continue
        if (x_cap is not None and term.kind == "window-exit"
                and abs(term.x - x_cap) <= 1e-6 * w.width):
            return arcs, touches, Event(t_end, term.x, term.y, "cap-reached")
        return arcs, touches, Event(t_end, term.x, term.y, term.kind)
    raise HarvestFailure(
        f"upper transit from x={x0:.6g} exceeded {max_touches} contacts")


def _lower_landing(sys: PwsSystem, x0: float, *, t_leg: float,
                   rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL):
    """Forward lower transit from (x0, 0); must return to the line."""
    run = integrate_smooth(sys.f_minus, sys.g_minus, (float(x0), 0.0),
                           "lower", t_max=t_leg, window=sys.window,
                           rtol=rtol, atol=atol)
    if run.terminal.kind != "sigma-cross":
        raise HarvestFailure(
            f"lower transit from x={x0:.6g} ended with {run.terminal.kind}")
    return float(run.terminal.x), run


def _height_over(f, g, start: Tuple[float, float], line_x: float, *,
                 t_budget: float, rtol: float = DEFAULT_RTOL,
                 atol: float = DEFAULT_ATOL) -> float:
    """Height at which the smooth upper flow crosses a vertical line."""
    try:
        arr = _flow_to_section(f, g, start, Section.vertical(float(line_x)),
                               t_budget=t_budget, rtol=rtol, atol=atol)
    except NoArrival as exc:
        raise HarvestFailure(
            f"orbit from {start[0]:.6g} never reached x={line_x:.6g}: "
            f"{exc}") from exc
    return float(arr.y)


def _signed_area(arcs: Sequence[Arc]) -> float:
    x = np.concatenate([np.asarray(a.x) for a in arcs])
    y = np.concatenate([np.asarray(a.y) for a in arcs])
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


# --------------------------------------------------------------------------
# return map


def sigma_return_map(sys: PwsSystem, x: float, *, t_leg: float = 400.0,
                     max_step: Optional[float] = None,
                     rtol: float = DEFAULT_RTOL,
                     atol: float = DEFAULT_ATOL) -> float:
    """First return to the switching line: upper transit, then lower.

    Tangential grazes along the way are flown through. Raises NoArrival
    when either transit fails to come back to the line transversally.
    Orbits shadowing a nearby closed orbit recross in a shallow, narrow
    excursion; cap max_step below its width or the crossing gets missed.
    """
    run = integrate_smooth(sys.f_plus, sys.g_plus, (float(x), 0.0), "upper",
                           t_max=t_leg, window=sys.window, rtol=rtol,
                           atol=atol, max_step=max_step)
    if run.terminal.kind != "sigma-cross":
        raise NoArrival(f"upper transit ended with {run.terminal.kind}")
    try:
        back, _ = _lower_landing(sys, run.terminal.x, t_leg=t_leg,
                                 rtol=rtol, atol=atol)
    except HarvestFailure as exc:
        raise NoArrival(str(exc)) from exc
    return back


def one_sided_return_slope(sys: PwsSystem, x_star: float, *, h: float,
                           t_leg: float = 400.0,
                           max_step: Optional[float] = None,
                           rtol: float = DEFAULT_RTOL,
                           atol: float = DEFAULT_ATOL) -> float:
    """(R(x* + h) - x*) / h for the first-return map; sign of h picks the side."""
    if h == 0.0:
        raise ValueError("h must be nonzero")
    r = sigma_return_map(sys, x_star + h, t_leg=t_leg, max_step=max_step,
                         rtol=rtol, atol=atol)
    return (r - x_star) / h


# --------------------------------------------------------------------------
# canonical loop


def _hill_height(m: int, a: float, k: float) -> float:
    xh = -(m + 1) * a / (m + 2)
    return abs(k * xh ** (m + 1) * (xh + a))


def canonical_base(m_plus: int = 1, m_minus: int = 1, a: float = 1.0,
                   k1: float = 1.0, k2: float = -1.0,
                   window: Optional[Window] = None) -> CanonicalBase:
    """Base system with one odd tangency per side at O and a crossing at -a.

    Upper orbits are graphs of k1 * x^(m+1) * (x + a) + const with f = +1;
    lower orbits mirror them with k2 < 0 and f = -1, so the arcs through
    (-a, 0) and the origin bound a closed two-arc loop.
    """
    if m_plus < 1 or m_plus % 2 == 0 or m_minus < 1 or m_minus % 2 == 0:
        raise ValueError("multiplicities must be odd and >= 1")
    if not (a > 0.0 and k1 > 0.0 and k2 < 0.0):
        raise ValueError("need a > 0, k1 > 0, k2 < 0")
    if window is None:
        amp = max(_hill_height(m_plus, a, k1), _hill_height(m_minus, a, -k2))
        pad = 4.0 * amp + 0.05 * a
        window = Window(-1.75 * a, 0.75 * a, -pad, pad)
    phi_p = f"{k1!r} * ({m_plus + 2}*x + {(m_plus + 1) * a!r})"
    phi_m = f"{-k2!r} * ({m_minus + 2}*x + {(m_minus + 1) * a!r})"
    return CanonicalBase.from_strings("1", phi_p, m_plus,
                                      "-1", phi_m, m_minus, window)


def canonical_critical_loop(m_plus: int = 1, m_minus: int = 1, a: float = 1.0,
                            k1: float = 1.0, k2: float = -1.0,
                            window: Optional[Window] = None, *,
                            rtol: float = DEFAULT_RTOL,
                            atol: float = DEFAULT_ATOL,
                            ) -> Tuple[PwsSystem, LoopRecord]:
    """Assemble and verify the two-arc loop through (-a, 0) and the origin.

    The upper leg must arrive tangentially at the origin, the lower leg
    must cross back at -a, the circuit must run clockwise, and the origin
    multiplicities must come out as requested; any failure raises
    VerificationFailed with the offending measurement.
    """
    base = canonical_base(m_plus, m_minus, a, k1, k2, window)
    sys = base.system()
    t_leg = _transit_budget(sys.window)
    up = integrate_smooth(sys.f_plus, sys.g_plus, (-a, 0.0), "upper",
                          t_max=t_leg, window=sys.window, stop_on_touch=True,
                          rtol=rtol, atol=atol)
    if up.terminal.kind != "tangent-arrival" or abs(up.terminal.x) > 1e-6:
        raise VerificationFailed(
            f"upper arc ended with {up.terminal.kind} at x={up.terminal.x:.6g}"
            f"; expected a tangential arrival at 0")
    down = integrate_smooth(sys.f_minus, sys.g_minus, (up.terminal.x, 0.0),
                            "lower", t_max=t_leg, window=sys.window,
                            rtol=rtol, atol=atol)
    if down.terminal.kind != "sigma-cross":
        raise VerificationFailed(
            f"lower arc ended with {down.terminal.kind}; expected a crossing")
    gap = abs(down.terminal.x + a)
    if gap > CLOSURE_TOL:
        raise VerificationFailed(
            f"lower arc lands at {down.terminal.x:.12g}, {gap:.2e} from -a")
    if h_value(sys, -a) <= 0.0:
        raise VerificationFailed("the point -a is not a crossing point")
    mp = multiplicity_at(sys.g_plus, 1.0, 0.0)
    mm = multiplicity_at(sys.g_minus, -1.0, 0.0)
    if (mp, mm) != (m_plus, m_minus):
        raise VerificationFailed(
            f"origin multiplicities ({mp}, {mm}) != ({m_plus}, {m_minus})")
    t1 = float(up.t[-1])
    arcs = [Arc("upper", np.asarray(up.t), np.asarray(up.x), np.asarray(up.y)),
            Arc("lower", np.asarray(down.t) + t1, np.asarray(down.x),
                np.asarray(down.y))]
    if _signed_area(arcs) >= 0.0:
        raise VerificationFailed("loop is not traversed clockwise")
    events = [Event(t1, up.terminal.x, 0.0, "tangency-touch"),
              Event(t1 + float(down.t[-1]), down.terminal.x, 0.0,
                    "sigma-cross")]
    rec = classify_loop(Trajectory(arcs, events, system=sys))
    if rec.kind != "critical" or rec.tangent_touch_count != 1:
        raise VerificationFailed(
            f"classified {rec.kind} with {rec.tangent_touch_count} contacts;"
            f" expected critical with exactly one")
    if k2 == -k1 and m_plus == m_minus:
        rec.stability = "neutral"  # member of a continuum of closed orbits
    return sys, rec


# --------------------------------------------------------------------------
# crossing cycles


def _crossing_cycle_witness(sys: PwsSystem, q: float, *, t_leg: float,
                            closure_tol: float = CLOSURE_TOL,
                            rtol: float = DEFAULT_RTOL,
                            atol: float = DEFAULT_ATOL) -> LoopRecord:
    """Integrate the closed orbit seeded at the crossing point (q, 0).

    The seed normally comes from a displacement sign change, whose noise
    floor can put it a few 1e-9 off the true cycle; where the return
    crossing is shallow that error is amplified far beyond the closure
    tolerance, so the seed is secant-polished against the integrated
    loop's own signed miss before giving up.
    """

    def legs(qq: float):
        land, low = _lower_landing(sys, qq, t_leg=t_leg, rtol=rtol,
                                   atol=atol)
        up_arcs, touches, term = _upper_chain(sys, land, t_leg=t_leg,
                                              t_offset=float(low.t[-1]),
                                              x_cap=qq, rtol=rtol, atol=atol)
        if term.kind not in ("sigma-cross", "cap-reached"):
            raise VerificationFailed(
                f"upper return from x={land:.9g} ended with {term.kind}")
        if term.kind == "sigma-cross":
            miss = term.x - qq
        else:
            # still above Sigma at the cap: convert the riding height to
            # abscissa units through the local upper slope
            gp = sys.g_plus.value(qq, 0.0)
            miss = term.y / max(abs(gp), 1e-30)
        return (land, low, up_arcs, touches, term), miss

    best, f0 = legs(q)
    if abs(f0) > 0.5 * closure_tol:
        qa, fa = q, f0
        qb = q - 0.5 * f0
        for _ in range(6):
            try:
                cand, fb = legs(qb)
            except (VerificationFailed, NoArrival, TangentialArrival):
                break
            if abs(fb) < abs(f0):
                best, f0, q = cand, fb, qb
            if abs(fb) <= 0.25 * closure_tol or fb == fa:
                break
            qa, fa, qb = qb, fb, qb - fb * (qb - qa) / (fb - fa)

    land, low, up_arcs, touches, term = best
    gap = math.hypot(term.x - q, term.y)
    if gap > closure_tol:
        raise VerificationFailed(
            f"cycle through x={q:.9g} fails to close: gap {gap:.2e}")
    t1 = float(low.t[-1])
    arcs = [Arc("lower", np.asarray(low.t), np.asarray(low.x),
                np.asarray(low.y))]
    events = [Event(t1, land, 0.0, "sigma-cross")]
    events.extend(touches)
    events.append(Event(term.t, term.x, 0.0, "sigma-cross"))
    events.sort(key=lambda ev: ev.t)
    rec = classify_loop(Trajectory(arcs + up_arcs, events, system=sys),
                        closure_tol=closure_tol)
    if rec.kind == "crossing-periodic":
        rec.kind = "crossing-limit-cycle"
    return rec


def find_crossing_cycles(sys: PwsSystem,
                         x_range: Optional[Tuple[float, float]] = None, *,
                         scan_points: Optional[Sequence[float]] = None,
                         n_grid: int = 301, max_roots: int = 64,
                         continuum_tol: float = 1e-11,
                         closure_tol: float = CLOSURE_TOL,
                         t_leg: float = 400.0, rtol: float = DEFAULT_RTOL,
                         atol: float = DEFAULT_ATOL) -> List[LoopRecord]:
    """Isolated crossing cycles found as sign changes of the displacement.

    The displacement at x is the height gap, over the vertical line at x,
    between the upper orbit continuing the lower transit from (x, 0) and
    the line itself; its transversal zeros are cycles. Grid points that are
    not down-crossings are skipped, a profile that is numerically zero on
    most of the grid is treated as a continuum of closed orbits (no
    isolated cycles), and every polished root is certified by integrating
    the actual loop. Returned cycles that graze a tangency stay classified
    crossing-nonsliding; plain ones are upgraded to crossing-limit-cycle.
    """
    w = sys.window
    if scan_points is None:
        if x_range is None:
            span = w.x_hi - w.x_lo
            x_range = (w.x_lo + 0.05 * span, w.x_hi - 0.05 * span)
        scan_points = np.linspace(float(x_range[0]), float(x_range[1]),
                                  int(n_grid))
    pts = np.unique(np.asarray([float(p) for p in scan_points]))
    vals = np.full(pts.shape, np.nan)
    for i, x in enumerate(pts):
        if h_value(sys, x) <= 0.0 or sys.g_minus.value(x, 0.0) >= 0.0:
            continue
        try:
            vals[i] = displacement_sigma(sys, x, t_budget=t_leg,
                                         rtol=rtol, atol=atol).value
        except (NoArrival, TangentialArrival, HarvestFailure):
            continue
    finite = np.isfinite(vals)
    if not finite.any():
        return []
    if np.mean(np.abs(vals[finite]) < continuum_tol) > 0.9:
        return []

    def disp(x: float) -> float:
        return displacement_sigma(sys, float(x), t_budget=t_leg,
                                  rtol=rtol, atol=atol).value

    roots: List[float] = []
    for a_i in range(len(pts) - 1):
        if len(roots) >= max_roots:
            break
        # only adjacent grid points may bracket: a pair spanning a filtered
        # (sliding) stretch would hand brentq a zero that is not a cycle
        if not (finite[a_i] and finite[a_i + 1]):
            continue
        va, vb = vals[a_i], vals[a_i + 1]
        if va == 0.0 or va * vb >= 0.0:
            continue
        try:
            root = float(brentq(disp, pts[a_i], pts[a_i + 1],
                                xtol=1e-13, rtol=4e-15))
        except (NoArrival, TangentialArrival, ValueError):
            continue
        if h_value(sys, root) <= 0.0 or sys.g_minus.value(root, 0.0) >= 0.0:
            continue
        if roots and abs(root - roots[-1]) < 1e-10:
            continue
        roots.append(root)
    return [_crossing_cycle_witness(sys, q, t_leg=t_leg,
                                    closure_tol=closure_tol, rtol=rtol,
                                    atol=atol) for q in roots]


# --------------------------------------------------------------------------
# cluster scaffolding shared by the unfolding scenarios


def _positive_cluster(m: int, delta: float) -> Tuple[float, ...]:
    return tuple(i * delta for i in range(1, m + 1))


def _negative_cluster(m: int, delta: float) -> Tuple[float, ...]:
    return tuple((i - m - 1) * delta for i in range(1, m + 1))


def _pinned_knots(lam: Sequence[float], delta: float) -> Tuple[float, ...]:
    # one plateau bump per odd-indexed split point, peaks at lam[0], lam[2], ...
    return (lam[0] - 2.0 * delta,) + tuple(lam) + (0.0,)


@dataclass
class _Pin:
    tp: float        # tangency the bump peaks at
    conj: float      # landing of the lower transit from the tangency
    height: float    # upper orbit height over its own tangency
    anchor: float    # same orbit's height over the first split point


def _pin_data(hat: PwsSystem, lam: Sequence[float], *, t_leg: float,
              rtol: float, atol: float) -> List[_Pin]:
    """Per-bump pin heights measured on the transition system."""
    d = (len(lam) + 1) // 2
    pins: List[_Pin] = []
    for i in range(1, d + 1):
        tp = lam[2 * i - 2]
        conj, _ = _lower_landing(hat, tp, t_leg=t_leg, rtol=rtol, atol=atol)
        y = _height_over(hat.f_plus, hat.g_plus, (conj, 0.0), tp,
                         t_budget=t_leg, rtol=rtol, atol=atol)
        anchor = y if i == 1 else _height_over(hat.f_plus, hat.g_plus,
                                               (conj, 0.0), lam[0],
                                               t_budget=t_leg, rtol=rtol,
                                               atol=atol)
        if y <= 0.0 or anchor <= 0.0:
            raise HarvestFailure(
                f"pin at {tp:.6g}: orbit heights not positive "
                f"({y:.3e}, {anchor:.3e})")
        pins.append(_Pin(tp, conj, y, anchor))
    return pins


def _critical_witness(sys: PwsSystem, tp: float, *, t_leg: float,
                      closure_tol: float = CLOSURE_TOL, stop_tol: float = 1e-6,
                      rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                      ) -> Tuple[LoopRecord, float]:
    """Loop dropping at the tangency tp: lower transit out, upper back in.

    Returns (record, crossing abscissa). The upper leg may graze earlier
    tangencies; it must arrive tangentially at tp itself.
    """
    conj, low = _lower_landing(sys, tp, t_leg=t_leg, rtol=rtol, atol=atol)
    t1 = float(low.t[-1])
    up_arcs, touches, term = _upper_chain(sys, conj, t_leg=t_leg, stop_at=tp,
                                          stop_tol=stop_tol, t_offset=t1,
                                          rtol=rtol, atol=atol)
    if term.kind != "tangent-arrival":
        raise VerificationFailed(
            f"upper leg from {conj:.9g} ended with {term.kind} at "
            f"x={term.x:.9g} instead of reaching the tangency at {tp:.6g}")
    gap = abs(term.x - tp)
    if gap > closure_tol:
        raise VerificationFailed(
            f"loop at {tp:.6g} fails to close: gap {gap:.2e}")
    arcs = [Arc("lower", np.asarray(low.t), np.asarray(low.x),
                np.asarray(low.y))] + up_arcs
    events = [Event(t1, conj, 0.0, "sigma-cross")] + touches
    events.sort(key=lambda ev: ev.t)
    rec = classify_loop(Trajectory(arcs, events, system=sys),
                        closure_tol=closure_tol)
    if rec.kind != "critical":
        raise VerificationFailed(
            f"loop at {tp:.6g} classified {rec.kind}, expected critical")
    return rec, conj


def _sliding_witness(sys: PwsSystem, tp: float, gap_hi: float, *,
                     t_leg: float, exit_scale: Optional[float] = None,
                     closure_tol: float = CLOSURE_TOL,
                     rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                     ) -> Tuple[LoopRecord, float]:
    """Sliding loop whose sliding arc starts at the visible tangency tp.

    The upper arc enters tangentially at tp, slides right through the
    repelling segment to the exit point (solved so the lower transit
    returns to the upper arc's entry crossing), and the lower arc closes.
    exit_scale, when given, estimates the exit's distance from tp and
    shapes the bracket; the root can sit anywhere from a hair right of tp
    to most of the gap, so fixed endpoints are not reliable.
    Returns (record, sliding exit abscissa).
    """
    bw_arcs, bw_touch, bw_term = _upper_chain(sys, tp, t_leg=t_leg,
                                              time_sign=-1.0, rtol=rtol,
                                              atol=atol)
    if bw_term.kind != "sigma-cross":
        raise VerificationFailed(
            f"backward upper leg from {tp:.6g} ended with {bw_term.kind}")
    if bw_touch:
        raise VerificationFailed(
            "backward upper leg grazed other tangencies; clearances too thin")
    x_left = float(bw_term.x)

    def land_gap(q: float) -> float:
        land, _ = _lower_landing(sys, q, t_leg=t_leg, rtol=rtol, atol=atol)
        return land - x_left

    eps = (gap_hi - tp) * 1e-6
    hi = gap_hi - eps
    if exit_scale is not None and exit_scale > 0.0:
        a = tp + min(eps, max(0.02 * exit_scale, 1e-12))
        b = min(hi, tp + 50.0 * exit_scale)
    else:
        a, b = tp + eps, hi
    ga = land_gap(a)
    for _ in range(4):
        if ga > 0.0 or (a - tp) <= 4e-13:
            break
        a = tp + 0.02 * (a - tp)
        ga = land_gap(a)
    gb = land_gap(b)
    while gb >= 0.0 and b < hi:
        b = min(hi, tp + 8.0 * (b - tp))
        gb = land_gap(b)
    if not (ga > 0.0 > gb):
        raise RootNotBracketed(
            f"sliding exit not bracketed in ({a:.9g}, {b:.9g}): "
            f"{ga:.3e}, {gb:.3e}")
    q_s = float(brentq(land_gap, a, b, xtol=1e-13, rtol=4e-15))
    if h_value(sys, q_s) >= 0.0:
        raise VerificationFailed(
            f"exit point {q_s:.9g} is not inside the sliding segment")
    up = integrate_smooth(sys.f_plus, sys.g_plus, (x_left, 0.0), "upper",
                          t_max=t_leg, window=sys.window, stop_on_touch=True,
                          rtol=rtol, atol=atol)
    if up.terminal.kind != "tangent-arrival" or abs(up.terminal.x - tp) > 1e-6:
        raise VerificationFailed(
            f"upper leg ended with {up.terminal.kind} at x={up.terminal.x:.9g}"
            f" instead of the tangency at {tp:.6g}")
    nudge = min(1e-9, (q_s - tp) * 1e-3)
    ts, xs, sl_term = sliding_arc(sys, tp + nudge, t_max=t_leg, x_stop=q_s,
                                  rtol=rtol, atol=atol)
    if sl_term.kind != "target-reached":
        raise VerificationFailed(
            f"sliding leg ended with {sl_term.kind} at x={sl_term.x:.9g} "
            f"before reaching {q_s:.9g}")
    land, low = _lower_landing(sys, q_s, t_leg=t_leg, rtol=rtol, atol=atol)
    if abs(land - x_left) > closure_tol:
        raise VerificationFailed(
            f"sliding loop at {tp:.6g} fails to close: "
            f"{abs(land - x_left):.2e}")
    t1 = float(up.t[-1])
    t2 = t1 + float(ts[-1])
    xs = np.asarray(xs)
    arcs = [Arc("upper", np.asarray(up.t), np.asarray(up.x),
                np.asarray(up.y)),
            Arc("sliding", np.asarray(ts) + t1, xs, np.zeros_like(xs)),
            Arc("lower", np.asarray(low.t) + t2, np.asarray(low.x),
                np.asarray(low.y))]
    events = [Event(t1, up.terminal.x, 0.0, "tangency-touch"),
              Event(t2, q_s, 0.0, "sliding-exit"),
              Event(t2 + float(low.t[-1]), land, 0.0, "sigma-cross")]
    rec = classify_loop(Trajectory(arcs, events, system=sys),
                        closure_tol=closure_tol)
    if rec.kind != "sliding-loop":
        raise VerificationFailed(
            f"loop at {tp:.6g} classified {rec.kind}, expected sliding-loop")
    return rec, q_s


def _displacement_root(sys: PwsSystem, a: float, b: float, *, t_leg: float,
                       n_coarse: int = 25, rtol: float = DEFAULT_RTOL,
                       atol: float = DEFAULT_ATOL) -> float:
    """First sign change of the displacement on (a, b), fine-tailed near b.

    The profile typically stays positive across the gap and only dips below
    zero in a narrow well against the right endpoint, so the grid mixes a
    coarse sweep with a geometric tail clustering toward b.
    """
    gap = b - a
    xs = np.unique(np.concatenate([
        np.linspace(a + 0.02 * gap, b - 0.05 * gap, n_coarse),
        b - np.geomspace(0.05 * gap, 2e-5 * gap, 30),
    ]))

    def disp(x: float) -> float:
        return displacement_sigma(sys, float(x), t_budget=t_leg,
                                  rtol=rtol, atol=atol).value

    prev_x: Optional[float] = None
    prev_v: Optional[float] = None
    for x in xs:
        try:
            v = disp(x)
        except (NoArrival, TangentialArrival):
            continue
        if prev_v is not None and prev_v * v < 0.0:
            return float(brentq(disp, prev_x, x, xtol=1e-13, rtol=4e-15))
        prev_x, prev_v = float(x), v
    raise RootNotBracketed(
        f"no displacement sign change in ({a:.6g}, {b:.6g})")


def _flank_dip(sys: PwsSystem, left: float, peak: float, *, t_leg: float,
               n_pts: int = 48, rtol: float = DEFAULT_RTOL,
               atol: float = DEFAULT_ATOL) -> float:
    """Most negative displacement value on the approach to a pinned peak."""
    span = peak - left
    best = math.inf
    for off in np.geomspace(0.5 * span, 1e-5 * span, n_pts):
        try:
            v = displacement_sigma(sys, float(peak - off), t_budget=t_leg,
                                   rtol=rtol, atol=atol).value
        except (NoArrival, TangentialArrival):
            continue
        best = min(best, v)
    if not math.isfinite(best):
        raise HarvestFailure(
            f"displacement not evaluable left of the peak at {peak:.6g}")
    return best


# --------------------------------------------------------------------------
# scenario: grouped tangent orbits of a one-sided cluster


def scenario_thm2(m_plus: int, visibility_of_O: str = "I", ell: int = 1, *,
                  delta: float = 0.4, window: Optional[Window] = None,
                  rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                  ) -> Tuple[UnfoldingSpec, TangentOrbitCensus]:
    """Unfold (1, +-x^m) into a positive cluster with grouped tangent orbits.

    The tangency splits into simple points at i*delta. A plateau shear pins
    one reference orbit per group of ell consecutive visible points, so the
    orbit grazes exactly those; bumps past the last full group are raised
    high enough to force separate single-contact orbits. The census walks
    every visible point, follows its orbit both ways through grazes, and
    groups the deduplicated orbits by contact count.

    Supports the invisible case fully and the visible one on a best-effort
    basis; the half-plane cases of even multiplicity are out of range.
    """
    if m_plus < 1 or m_plus % 2 == 0:
        raise RangeError(f"odd m_plus required, got {m_plus}")
    if visibility_of_O in ("L", "R"):
        raise RangeError("visibility case not supported by this construction")
    if visibility_of_O not in ("I", "V"):
        raise ValueError(f"unknown visibility {visibility_of_O!r}")
    invis = visibility_of_O == "I"
    d = (m_plus - 1) // 2 if invis else (m_plus + 1) // 2
    if ell < 1 or (d > 0 and ell > d):
        raise RangeError(f"ell={ell} outside 1..{max(d, 1)}")
    lam = _positive_cluster(m_plus, delta)
    if window is None:
        ymax = 2.0 + (m_plus + 3) * delta
        window = Window(-(m_plus + 1) * delta, (m_plus + 3) * delta,
                        -ymax, ymax)
    phi = "-1" if invis else "1"
    base = CanonicalBase.from_strings("1", phi, m_plus, "-1", "-1", 0, window)
    if d == 0:
        # multiplicity 1, invisible: the lone split point stays invisible
        return UnfoldingSpec(base, lam, ()), TangentOrbitCensus({}, [], ())
    hat = build_transition(UnfoldingSpec(base, lam, ()))
    t_leg = _transit_budget(window)
    vis_pts = tuple(lam[2 * i - 1] for i in range(1, d + 1)) if invis \
        else tuple(lam[2 * i - 2] for i in range(1, d + 1))
    anchor = vis_pts[0]
    if invis:
        knots = tuple(lam)
    else:
        knots = (0.5 * delta,) + tuple(lam) + (lam[-1] + 0.5 * delta,)
    seeds = [delta ** m_plus * (1.0 + n * delta) for n in range(1, d + 1)]
    full = (d // ell) * ell
    heights: List[float] = []
    for n in range(1, d + 1):
        if n > full:
            heights.append(2.0 * delta ** m_plus)
            continue
        j = (n - 1) // ell + 1
        if vis_pts[n - 1] == anchor:
            h_n = seeds[j - 1]
        else:
            h_n = _height_over(hat.f_plus, hat.g_plus,
                               (anchor, seeds[j - 1]), vis_pts[n - 1],
                               t_budget=t_leg, rtol=rtol, atol=atol)
        if h_n <= 0.0:
            raise HarvestFailure(
                f"reference orbit {j} dips to {h_n:.3e} over "
                f"x={vis_pts[n - 1]:.6g}")
        heights.append(h_n)
    psi = PsiSpec(d, knots + tuple(heights))
    spec = UnfoldingSpec(base, lam, (), psi_plus=psi)
    sys4 = build_unfolded(spec)

    counts: Dict[int, int] = {}
    orbits: List[Trajectory] = []
    seen: set = set()
    for v in vis_pts:
        touch_xs = {float(v)}
        fw_arcs, fw_touch, fw_term = _upper_chain(sys4, v, t_leg=t_leg,
                                                  rtol=rtol, atol=atol)
        if fw_term.kind not in ("sigma-cross", "window-exit"):
            raise HarvestFailure(
                f"orbit through {v:.6g} ended forward with {fw_term.kind}")
        touch_xs.update(float(ev.x) for ev in fw_touch)
        bw_arcs, bw_touch, bw_term = _upper_chain(sys4, v, t_leg=t_leg,
                                                  time_sign=-1.0,
                                                  rtol=rtol, atol=atol)
        if bw_term.kind not in ("sigma-cross", "window-exit"):
            raise HarvestFailure(
                f"orbit through {v:.6g} ended backward with {bw_term.kind}")
        touch_xs.update(float(ev.x) for ev in bw_touch)
        key_idx = []
        for tx in touch_xs:
            k = int(np.argmin([abs(tx - l) for l in lam]))
            if abs(tx - lam[k]) > 0.25 * delta:
                raise HarvestFailure(
                    f"contact at {tx:.6g} is not near any split point")
            key_idx.append(k)
        key = tuple(sorted(set(key_idx)))
        if key in seen:
            continue
        seen.add(key)
        counts[len(key)] = counts.get(len(key), 0) + 1
        orbits.append(_stitch_orbit(sys4, bw_arcs, fw_arcs, sorted(touch_xs)))
    return spec, TangentOrbitCensus(counts, orbits, vis_pts)


def _stitch_orbit(sys: PwsSystem, bw_arcs: List[Arc], fw_arcs: List[Arc],
                  touch_xs: Sequence[float]) -> Trajectory:
    """Join a backward and a forward transit into one forward trajectory."""
    arcs: List[Arc] = []
    t0 = 0.0
    for a in reversed(bw_arcs):
        t_loc = np.asarray(a.t) - float(a.t[0])
        tt = t0 + (t_loc[-1] - t_loc)[::-1]
        arcs.append(Arc(a.kind, tt, np.asarray(a.x)[::-1],
                        np.asarray(a.y)[::-1]))
        t0 = float(tt[-1])
    for a in fw_arcs:
        t_loc = np.asarray(a.t) - float(fw_arcs[0].t[0])
        arcs.append(Arc(a.kind, t_loc + t0, np.asarray(a.x),
                        np.asarray(a.y)))
    events = []
    for tx in touch_xs:
        best_t, best_gap = 0.0, math.inf
        for a in arcs:
            i = int(np.argmin(np.abs(np.asarray(a.x) - tx)))
            g = abs(float(a.x[i]) - tx) + abs(float(a.y[i]))
            if g < best_gap:
                best_gap, best_t = g, float(a.t[i])
        events.append(Event(best_t, float(tx), 0.0, "tangency-touch"))
    events.sort(key=lambda ev: ev.t)
    return Trajectory(arcs, events, system=sys)


# --------------------------------------------------------------------------
# scenario: a single loop with ell tangential contacts


def _plateau_psi(height: float, p_x: float) -> PsiSpec:
    """Step shear: exactly `height` right of p_x/3, zero left of 2*p_x/3."""
    if p_x >= 0.0:
        raise ValueError("plateau anchor must be negative")
    return PsiSpec(1, (0.0, 0.0, 0.0, float(height)),
                   r1=2.0 * p_x / 3.0, r2=p_x / 3.0)


def _solve_lower_shear(landing_for: Callable[[float], float], target: float,
                       *, step: float, max_doublings: int = 40,
                       xtol: float = 1e-13) -> float:
    """Height of the lower plateau shear that lands the drop on target.

    The landing moves monotonically with the shear height, so expand in the
    direction the initial gap demands and polish with brentq.
    """
    def gap(y: float) -> float:
        return landing_for(y) - target

    g0 = gap(0.0)
    if abs(g0) <= 1e-12:
        return 0.0
    direction = 1.0 if g0 < 0.0 else -1.0
    prev = 0.0
    y = 0.0
    for k in range(max_doublings):
        y = direction * step * (2.0 ** k)
        try:
            gy = gap(y)
        except HarvestFailure as exc:
            raise RootNotBracketed(
                f"landing lost while expanding to y={y:.3e}: {exc}") from exc
        if g0 * gy < 0.0:
            a, b = (prev, y) if prev < y else (y, prev)
            return float(brentq(gap, a, b, xtol=xtol, rtol=4e-15))
        prev = y
    raise RootNotBracketed(
        f"no landing match within |shear| <= {abs(y):.3e}")


def scenario_thm3(base: CanonicalBase, ell: int, kind: str, *,
                  delta: float = 0.08, rtol: float = DEFAULT_RTOL,
                  atol: float = DEFAULT_ATOL,
                  ) -> Tuple[UnfoldingSpec, LoopRecord]:
    """One nonsliding loop with exactly ell tangential contacts.

    Splits the upper tangency into a negative cluster and pins the first
    ell plateau bumps to the single reference orbit through the first
    split point (the remaining bumps are forced high so the orbit drops
    past them). kind='crossing' lets the orbit cross transversally after
    its last graze; kind='critical' drops it at the ell-th contact. A
    lower plateau shear, solved by bracketed bisection on the landing
    mismatch, closes the loop at the upper orbit's backward crossing.
    """
    m = base.m_plus
    if m < 1 or m % 2 == 0:
        raise RangeError("odd upper multiplicity required")
    if kind == "crossing":
        if m < 2 or not (1 <= ell <= m // 2):
            raise RangeError(
                f"crossing loops need 1 <= ell <= {m // 2}, got {ell}")
    elif kind == "critical":
        if not (1 <= ell <= (m + 1) // 2):
            raise RangeError(
                f"critical loops need 1 <= ell <= {(m + 1) // 2}, got {ell}")
    else:
        raise ValueError("kind must be 'crossing' or 'critical'")
    lam = _negative_cluster(m, delta)
    lam_m = (0.0,) * base.m_minus
    hat = build_transition(UnfoldingSpec(base, lam, lam_m))
    t_leg = _transit_budget(base.window)
    p_ref, _ = _lower_landing(hat, lam[0], t_leg=t_leg, rtol=rtol, atol=atol)
    d = (m + 1) // 2
    knots = _pinned_knots(lam, delta)
    heights = []
    for i in range(1, d + 1):
        h_ref = _height_over(hat.f_plus, hat.g_plus, (p_ref, 0.0),
                             lam[2 * i - 2], t_budget=t_leg,
                             rtol=rtol, atol=atol)
        if h_ref <= 0.0:
            raise HarvestFailure(
                f"reference orbit height {h_ref:.3e} over "
                f"x={lam[2 * i - 2]:.6g} is not positive")
        heights.append(h_ref if i <= ell else 2.0 * h_ref)
    psi_p = PsiSpec(d, knots + tuple(heights))
    up_sys = build_unfolded(UnfoldingSpec(base, lam, lam_m, psi_plus=psi_p))

    _, bw_touch, bw_term = _upper_chain(up_sys, lam[0], t_leg=t_leg,
                                        time_sign=-1.0, rtol=rtol, atol=atol)
    if bw_term.kind != "sigma-cross":
        raise VerificationFailed(
            f"backward upper leg ended with {bw_term.kind}")
    if bw_touch:
        raise VerificationFailed("backward upper leg grazed the cluster")
    p_plus = float(bw_term.x)

    if kind == "crossing":
        _, fw_touch, fw_term = _upper_chain(up_sys, lam[0], t_leg=t_leg,
                                            rtol=rtol, atol=atol)
        if fw_term.kind != "sigma-cross":
            raise VerificationFailed(
                f"forward upper leg ended with {fw_term.kind}")
        x_drop = float(fw_term.x)
        lo = lam[2 * ell - 1]
        hi = lam[2 * ell] if 2 * ell < m else 0.0
        if not (lo < x_drop < hi):
            raise VerificationFailed(
                f"forward crossing {x_drop:.9g} outside ({lo:.6g}, {hi:.6g})")
        if 1 + len(fw_touch) != ell:
            raise VerificationFailed(
                f"forward leg made {1 + len(fw_touch)} contacts, "
                f"expected {ell}")
    else:
        x_drop = lam[2 * ell - 2]

    def landing_for(y0: float) -> float:
        spec_y = UnfoldingSpec(base, lam, lam_m, psi_p,
                               _plateau_psi(y0, p_plus))
        land, _ = _lower_landing(build_unfolded(spec_y), x_drop,
                                 t_leg=t_leg, rtol=rtol, atol=atol)
        return land

    gap0 = abs(landing_for(0.0) - p_plus)
    y0 = _solve_lower_shear(landing_for, p_plus,
                            step=max(1e-9, 0.25 * gap0))
    spec4 = UnfoldingSpec(base, lam, lam_m, psi_p, _plateau_psi(y0, p_plus))
    sys4 = build_unfolded(spec4)

    if kind == "crossing":
        up_arcs, touches, term = _upper_chain(sys4, p_plus, t_leg=t_leg,
                                              rtol=rtol, atol=atol)
        if term.kind != "sigma-cross":
            raise VerificationFailed(
                f"witness upper leg ended with {term.kind}")
        if len(touches) != ell:
            raise VerificationFailed(
                f"witness made {len(touches)} contacts, expected {ell}")
    else:
        up_arcs, touches, term = _upper_chain(sys4, p_plus, t_leg=t_leg,
                                              stop_at=x_drop,
                                              stop_tol=0.25 * delta,
                                              rtol=rtol, atol=atol)
        if term.kind != "tangent-arrival" or len(touches) != ell:
            raise VerificationFailed(
                f"witness upper leg: {term.kind} after {len(touches)} "
                f"contacts, expected tangent arrival after {ell}")
    land, low = _lower_landing(sys4, term.x, t_leg=t_leg, rtol=rtol,
                               atol=atol)
    if abs(land - p_plus) > CLOSURE_TOL:
        raise VerificationFailed(
            f"loop fails to close: landing gap {abs(land - p_plus):.2e}")
    t_up = float(term.t)
    arcs = up_arcs + [Arc("lower", np.asarray(low.t) + t_up,
                          np.asarray(low.x), np.asarray(low.y))]
    events = list(touches) + [Event(t_up + float(low.t[-1]), land, 0.0,
                                    "sigma-cross")]
    if kind == "crossing":
        events.append(Event(t_up, term.x, 0.0, "sigma-cross"))
    events.sort(key=lambda ev: ev.t)
    rec = classify_loop(Trajectory(arcs, events, system=sys4))
    want = "crossing-nonsliding" if kind == "crossing" else "critical"
    if rec.kind != want or rec.tangent_touch_count != ell:
        raise VerificationFailed(
            f"classified {rec.kind} with {rec.tangent_touch_count} contacts,"
            f" expected {want} with {ell}")
    return spec4, rec


# --------------------------------------------------------------------------
# scenario: simultaneous critical and crossing loops


def scenario_thm4(base: CanonicalBase, ell: int, *, delta: float = 0.1,
                  rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                  ) -> LoopCensus:
    """Census with ell+1 single-contact critical loops and the rest of the
    bumps converted into single-contact crossing loops.

    The last ell+1 plateau bumps are pinned to their own conjugate orbits.
    Walking leftward, each remaining bump is re-pinned to the orbit of the
    crossing cycle that bifurcates in the gap to its right, which turns
    that cycle into a crossing loop grazing the bump's peak.
    """
    m = base.m_plus
    if m < 3 or m % 2 == 0:
        raise RangeError("odd upper multiplicity >= 3 required")
    dmax = (m - 1) // 2
    if not (0 <= ell <= dmax):
        raise RangeError(f"ell={ell} outside 0..{dmax}")
    d = (m + 1) // 2
    n = d - ell
    lam = _negative_cluster(m, delta)
    lam_m = (0.0,) * base.m_minus
    hat = build_transition(UnfoldingSpec(base, lam, lam_m))
    t_leg = _transit_budget(base.window)
    pins = _pin_data(hat, lam, t_leg=t_leg, rtol=rtol, atol=atol)
    knots = _pinned_knots(lam, delta)
    heights = [0.0] * d
    for i in range(n, d + 1):
        heights[i - 1] = pins[i - 1].height

    qs: List[float] = []
    for j in range(n - 1, 0, -1):
        sys_j = build_unfolded(UnfoldingSpec(
            base, lam, lam_m, PsiSpec(d, knots + tuple(heights))))
        q = _displacement_root(sys_j, lam[2 * j - 1], lam[2 * j],
                               t_leg=t_leg, rtol=rtol, atol=atol)
        qs.append(q)
        p_q, _ = _lower_landing(hat, q, t_leg=t_leg, rtol=rtol, atol=atol)
        heights[j - 1] = _height_over(hat.f_plus, hat.g_plus, (p_q, 0.0),
                                      lam[2 * j - 2], t_budget=t_leg,
                                      rtol=rtol, atol=atol)

    spec4 = UnfoldingSpec(base, lam, lam_m, PsiSpec(d, knots + tuple(heights)))
    sys4 = build_unfolded(spec4)
    census = LoopCensus("thm4", m, base.m_minus, ell)
    census.notes["delta"] = delta
    census.notes["spec"] = spec4

    tangencies: List[float] = []
    crossings: List[float] = []
    slopes: List[float] = []
    for i in range(n, d + 1):
        tp = lam[2 * i - 2]
        rec, conj = _critical_witness(sys4, tp, t_leg=t_leg,
                                      rtol=rtol, atol=atol)
        if rec.tangent_touch_count != 1:
            raise CensusMismatch(
                f"critical loop at {tp:.6g} has "
                f"{rec.tangent_touch_count} contacts, expected 1")
        slope = one_sided_return_slope(sys4, conj, h=1e-4 * delta,
                                       t_leg=t_leg, max_step=1e-2 * delta,
                                       rtol=rtol, atol=atol)
        rec.stability = "unstable" if slope > 1.0 else "stable"
        slopes.append(slope)
        tangencies.append(tp)
        crossings.append(conj)
        census.witnesses.append((f"critical@x={tp:.6g}", rec))
    census.beta_cri[1] = d - n + 1

    for j, q in zip(range(n - 1, 0, -1), qs):
        rec = _crossing_cycle_witness(sys4, q, t_leg=t_leg,
                                      rtol=rtol, atol=atol)
        if rec.kind != "crossing-nonsliding" or rec.tangent_touch_count != 1:
            raise CensusMismatch(
                f"converted loop at {q:.9g} came back {rec.kind} with "
                f"{rec.tangent_touch_count} contacts")
        census.witnesses.append((f"crossing@x={q:.9g}", rec))
    if n > 1:
        census.beta_cro[1] = n - 1

    got = (census.beta_cro.get(1, 0), census.beta_cri.get(1, 0))
    want = (dmax - ell, ell + 1)
    if got != want:
        raise CensusMismatch(
            f"(crossing, critical) loop counts {got}, expected {want}")
    if len(tangencies) >= 2:
        nested = (all(a < b for a, b in zip(tangencies, tangencies[1:]))
                  and all(a > b for a, b in zip(crossings, crossings[1:])))
        if not nested:
            raise CensusMismatch("critical loops are not nested")
        census.notes["nested"] = True
    census.notes["return_slopes"] = tuple(slopes)
    return census


# --------------------------------------------------------------------------
# scenario: sliding loops and crossing limit cycles


def scenario_thm5(base: CanonicalBase, ell: int, *, delta: float = 0.1,
                  alpha: Optional[float] = None,
                  rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                  ) -> LoopCensus:
    """Census of sliding loops and crossing limit cycles.

    Starting from the all-pinned configuration, the first (m+1)/2 - ell
    bump heights are raised (each pinned orbit then enters a repelling
    sliding segment: one sliding loop per bump, plus one crossing cycle
    where the displacement goes negative on the approach flank) and the
    last ell are lowered (the graze detaches, leaving a pair of crossing
    cycles in the displacement dip). The dips shrink by orders of
    magnitude from bump to bump, so a single margin cannot serve both
    moves: by default each lowered bump gives up a fraction of its own
    dip, while the raise is sized from the conjugate-point geometry so
    every sliding exit stays well inside its own gap. Passing alpha
    applies that one margin to every bump instead.
    """
    m = base.m_plus
    if m < 3 or m % 2 == 0:
        raise RangeError("odd upper multiplicity >= 3 required")
    d = (m + 1) // 2
    if not (0 <= ell <= d):
        raise RangeError(f"ell={ell} outside 0..{d}")
    n = d - ell
    lam = _negative_cluster(m, delta)
    lam_m = (0.0,) * base.m_minus
    hat = build_transition(UnfoldingSpec(base, lam, lam_m))
    t_leg = _transit_budget(base.window)
    pins = _pin_data(hat, lam, t_leg=t_leg, rtol=rtol, atol=atol)
    knots = _pinned_knots(lam, delta)

    pinned = build_unfolded(UnfoldingSpec(
        base, lam, lam_m,
        PsiSpec(d, knots + tuple(p.height for p in pins))))
    dips = [_flank_dip(pinned, knots[2 * i - 2], lam[2 * i - 2],
                       t_leg=t_leg, rtol=rtol, atol=atol)
            for i in range(1, d + 1)]

    # d(exit)/d(raise) for each raised bump: raising the peak lowers the
    # entry crossing by raise/g(conj), and the exit must drag the lower
    # landing down with it, at |dP/dx| per unit of abscissa
    rates: List[float] = []
    for i in range(1, n + 1):
        tp = lam[2 * i - 2]
        g_conj = hat.g_plus.value(pins[i - 1].conj, 0.0)
        h_fd = 0.02 * delta
        p_hi, _ = _lower_landing(hat, tp + h_fd, t_leg=t_leg, rtol=rtol,
                                 atol=atol)
        p_lo, _ = _lower_landing(hat, tp - h_fd, t_leg=t_leg, rtol=rtol,
                                 atol=atol)
        slope = abs(p_hi - p_lo) / (2.0 * h_fd)
        if g_conj <= 0.0 or slope <= 0.0:
            raise HarvestFailure(
                f"conjugate-point geometry degenerate at x={tp:.6g}")
        rates.append(1.0 / (g_conj * slope))

    def _exit_span(i: int) -> float:
        # usable sliding span right of the peak: to the gap's far knot or to
        # the first pseudo-equilibrium, where the sliding flow would stall
        # before reaching any exit past it (the last bump always has one:
        # the lower field's own cluster kills g- at the origin)
        tp, hi = lam[2 * i - 2], knots[2 * i]
        pad = 1e-4 * (hi - tp)

        def num(x: float) -> float:
            return (pinned.f_plus.value(x, 0.0)
                    * pinned.g_minus.value(x, 0.0)
                    - pinned.f_minus.value(x, 0.0)
                    * pinned.g_plus.value(x, 0.0))

        xs = np.linspace(tp + pad, hi - pad, 160)
        vs = [num(float(x)) for x in xs]
        for k in range(len(xs) - 1):
            if vs[k] * vs[k + 1] < 0.0:
                x_pe = float(brentq(num, float(xs[k]), float(xs[k + 1]),
                                    xtol=1e-13, rtol=4e-15))
                return x_pe - tp
        return hi - tp

    if alpha is not None:
        if alpha <= 0.0:
            raise ValueError("alpha must be positive")
        raise_by = [alpha] * n
        lower_by = [alpha] * (d - n)
    else:
        raise_by = []
        if n:
            cap = min(_exit_span(i) / rates[i - 1] for i in range(1, n + 1))
            raise_by = [0.1 * cap] * n
        lower_by = []
        for i in range(n + 1, d + 1):
            if dips[i - 1] >= 0.0:
                raise HarvestFailure(
                    f"no displacement dip resolved at the peak "
                    f"x={lam[2 * i - 2]:.6g} (min {dips[i - 1]:.3e})")
            lower_by.append(0.35 * abs(dips[i - 1]))

    heights = []
    for i, p in enumerate(pins, start=1):
        h_i = p.height + (raise_by[i - 1] if i <= n
                          else -lower_by[i - n - 1])
        if h_i <= 0.0:
            raise HarvestFailure(
                f"perturbed height at x={p.tp:.6g} is not positive")
        heights.append(h_i)
    spec5 = UnfoldingSpec(base, lam, lam_m, PsiSpec(d, knots + tuple(heights)))
    sys4 = build_unfolded(spec5)

    census = LoopCensus("thm5", m, base.m_minus, ell)
    census.notes["delta"] = delta
    census.notes["spec"] = spec5
    census.notes["raise_by"] = tuple(raise_by)
    census.notes["lower_by"] = tuple(lower_by)
    census.notes["dips"] = tuple(dips)

    for i in range(1, n + 1):
        tp = lam[2 * i - 2]
        rec, q_s = _sliding_witness(sys4, tp, knots[2 * i], t_leg=t_leg,
                                    exit_scale=rates[i - 1] * raise_by[i - 1],
                                    rtol=rtol, atol=atol)
        census.witnesses.append((f"sliding@x={tp:.6g}", rec))
    census.beta_s = n

    scan = [np.linspace(knots[0] + 0.02 * delta, lam[-1] - 0.02 * delta,
                        8 * m)]
    for i in range(1, d + 1):
        peak = lam[2 * i - 2]
        span = peak - knots[2 * i - 2]
        scan.append(peak - np.geomspace(0.6 * span, 1e-6 * span, 80))
    cycles = find_crossing_cycles(sys4, scan_points=np.concatenate(scan),
                                  t_leg=t_leg, rtol=rtol, atol=atol)
    for rec in cycles:
        x_c = rec.switching_points[0][0] if rec.switching_points else 0.0
        census.witnesses.append((f"cycle@x={x_c:.9g}", rec))
    census.beta_c = len(cycles)

    want_c = m - n
    if census.beta_s != n or census.beta_c < want_c:
        raise CensusMismatch(
            f"(beta_s, beta_c) = ({census.beta_s}, {census.beta_c}), "
            f"expected ({n}, >= {want_c})")
    return census


# --------------------------------------------------------------------------
# census files


CENSUS_CSV_HEADER = "# filippov2d-census-v1"
_CENSUS_COLUMNS = ("scenario", "m_plus", "m_minus", "ell", "beta_c",
                   "beta_s", "beta_cro_1", "beta_cri_1", "witnesses_path")


def write_census_csv(path, censuses: Sequence[LoopCensus], *,
                     witnesses_paths: Optional[Sequence[str]] = None) -> None:
    lines = [CENSUS_CSV_HEADER, ",".join(_CENSUS_COLUMNS)]
    for i, c in enumerate(censuses):
        wp = witnesses_paths[i] if witnesses_paths else ""
        lines.append(",".join(str(v) for v in (
            c.scenario, c.m_plus, c.m_minus, c.ell, c.beta_c, c.beta_s,
            c.beta_cro.get(1, 0), c.beta_cri.get(1, 0), wp)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_census_csv(path) -> List[Dict[str, object]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith(CENSUS_CSV_HEADER):
        raise ValueError(f"{path}: missing census header line")
    names = lines[1].split(",")
    out: List[Dict[str, object]] = []
    for ln in lines[2:]:
        row: Dict[str, object] = dict(zip(names, ln.split(",")))
        for key in ("m_plus", "m_minus", "ell", "beta_c", "beta_s",
                    "beta_cro_1", "beta_cri_1"):
            row[key] = int(row[key])  # type: ignore[arg-type]
        out.append(row)
    return out
