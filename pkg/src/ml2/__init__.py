"""Weighted-L2 polynomial approximation engine.

Numerics for square-integrable approximation against e^{-phi} dm with
logarithmic-pole weights: arc and area integration with singularity-graded
quadrature and an integrability classifier, Lelong-number queries, the
phi = psi + rho log|Q| factorization with a continuous square-root branch,
plain and zero-restricted least-squares fits, union and finite-window
experiments, and the rectifiable comb arc on which no nonzero polynomial is
square integrable.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, DeltaTooLarge, DivergentNorm, EmptyCurve,
                     EndpointMismatch, LengthMismatch, ML2Error,
                     NonFiniteIntegrand, NonIncreasingKnots, RadiusTooLarge,
                     SampleOnZero, TangencyViolated)
from .geometry import (CounterexampleArc, Disk, LipschitzGraph, Polygon,
                       Polyline, arc_length, counterexample_arc, curve_from_csv,
                       curve_to_csv, flat_graph, graph_from_knots)
from .weights import (AtomicLogWeight, KiselmanEstimate, QFactorization,
                      decompose_q, lelong_at, lelong_kiselman, sqrt_q_along,
                      weight_from_json, weight_to_json, zero_weight)
from .quadrature import (QuadratureOutcome, abs2, integrate_curve,
                         integrate_domain, integrate_region, one,
                         poly_integrand, profile_integrand, sqrt_q_integrand,
                         verify_lemma27, weighted_inner)
from .approx import (CarlemanReport, PolyApprox, best_poly, carleman_window,
                     clamp_target, density_curve, mergelyan_union, peak_modify,
                     sqrt_q_approx, target_abs_power, target_cos, target_exp,
                     target_poly, target_profile, target_sqrt_q,
                     target_over_sqrt_q, target_vanishing_step)
from .scenarios import RunReport, counterexample_suite, run
