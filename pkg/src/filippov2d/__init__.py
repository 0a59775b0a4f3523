"""Planar two-zone piecewise-smooth vector fields.

Tangency classification, plateau unfoldings, Filippov flows with sliding,
transition maps and loop censuses on a rectangular window split by the
switching line y = 0.
"""

__version__ = "0.1.0"

from .fieldexpr import (EvalDomainError, ParseError, ScalarField, as_field,
                        compile_expr, differentiate, evaluate, parse_expr,
                        to_str)
from .system import (DegenerateDenominator, NormalFormMeta, NotSliding,
                     PwsSystem, SigmaDecomposition, Window, WindowMismatch,
                     decompose_sigma, h_value, mirror_system,
                     pseudo_equilibria, sliding_convex_coefficient,
                     sliding_field, system_distance)
from .tangency import (BoundViolation, IndeterminateMultiplicity,
                       TangencyScan, TangentPointRecord,
                       ZeroLeadingCoefficient, count_bifurcating,
                       find_tangent_points, multiplicity_at, visibility)
from .cutoffs import (PsiSpec, cutoff_down, cutoff_up, psi, psi_dx, psi_dxx,
                      psi_sup_norms, zero_psi)
from .unfolding import (CanonicalBase, UnfoldingSpec, admissible_k_family,
                        build_transition, build_unfolded,
                        shear_conjugacy_check)
from .flow import (Arc, Event, SmoothRun, Trajectory, integrate_pws,
                   integrate_smooth, read_trajectory_csv, sliding_arc,
                   trajectory_to_csv)
from .maps import (NoArrival, OrderMismatch, Section, TangentialArrival,
                   TangentialDeparture, displacement_sigma,
                   fit_leading_order, regular_leading_coefficient,
                   sample_transition_map, tangent_leading_coefficient,
                   transition_map)
from .loops import (CensusMismatch, HarvestFailure, LoopCensus, LoopRecord,
                    NotClosed, RangeError, RootNotBracketed,
                    TangentOrbitCensus, VerificationFailed, canonical_base,
                    canonical_critical_loop, classify_loop,
                    find_crossing_cycles, one_sided_return_slope,
                    read_census_csv, scenario_thm2, scenario_thm3,
                    scenario_thm4, scenario_thm5, sigma_return_map,
                    write_census_csv)
from .cli import (ConfigError, RunConfig, load_config, render_portrait,
                  run_scenario)

__all__ = [name for name in dir() if not name.startswith("_")]
