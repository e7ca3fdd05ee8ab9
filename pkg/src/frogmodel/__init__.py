"""Simulation and estimation toolkit for the discrete-time frog model on Z^d."""

from .engine import (AGGREGATE, IDENTITY, FrogState, InvariantViolation, PassageRecord, ResourceLimitError,
                     active_count, check_record, resume, run, visited_at)
from .lattice import diamond_size, l1_norm, octahedral_orbit
from .oracle import FiniteConfig, OracleBudgetError, enumerate_outcomes, exact_passage_distribution
from .passage import (CensoredTime, Verdict, occupied_ray, passage_time, subadditivity_check, t_single,
                      wake_transit)
from .randomness import InitialConfigSpec, eta_at, heavy_tail_quantile, step_at
from .shape import (MuEstimate, Polytope, RescaledSet, ShapeMetrics, estimate_mu, estimate_mu_many, hausdorff_l1,
                    metrics, rescale, shape_from_mu, shape_svg)

__version__ = "0.1.0"

__all__ = [
    "AGGREGATE", "IDENTITY", "CensoredTime", "FiniteConfig", "FrogState", "InitialConfigSpec",
    "InvariantViolation", "MuEstimate", "OracleBudgetError", "PassageRecord", "Polytope", "RescaledSet",
    "ResourceLimitError", "ShapeMetrics", "Verdict", "active_count", "check_record", "diamond_size",
    "enumerate_outcomes", "estimate_mu", "estimate_mu_many", "eta_at", "exact_passage_distribution",
    "hausdorff_l1", "heavy_tail_quantile", "l1_norm", "metrics", "occupied_ray", "octahedral_orbit",
    "passage_time", "rescale", "resume", "run", "shape_from_mu", "shape_svg", "step_at",
    "subadditivity_check", "t_single", "visited_at", "wake_transit",
]
