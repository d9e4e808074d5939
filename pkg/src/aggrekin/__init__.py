"""Two-species aggregation dynamics in one dimension.

Three solvers for the same nonlocal transport model -- a finite-volume
upwind scheme, an event-driven aggregate (sticky particle) solver with
the cross-species synchronising rule, and a two-velocity kinetic solver
whose stiff relaxation limit recovers the aggregation dynamics --
together with Wasserstein-metric and conservation diagnostics and a
scenario-driven command line interface.
"""

from .kernel import PointyKernel, exponential_kernel, pointy_kernel, regularize
from .measures import (
    DiscreteMeasure,
    ModelParams,
    SpeciesPair,
    bump_mass_unit,
    coupled_w2,
    moments,
    quantile,
    sample_gaussian_bumps,
    wasserstein2,
    weighted_center,
)
from .fv import FluxField, GridState, assemble_velocity, cfl_dt, extract_peaks
from .particles import Cluster, ClusterSet, Event, external_attraction, glued_selection, sync_condition
from .kinetic import ChemoField, KineticState, check_positivity_condition, solve_chemo_field

__all__ = [
    "PointyKernel",
    "exponential_kernel",
    "pointy_kernel",
    "regularize",
    "DiscreteMeasure",
    "SpeciesPair",
    "ModelParams",
    "bump_mass_unit",
    "quantile",
    "wasserstein2",
    "coupled_w2",
    "weighted_center",
    "moments",
    "sample_gaussian_bumps",
    "GridState",
    "FluxField",
    "assemble_velocity",
    "cfl_dt",
    "extract_peaks",
    "Cluster",
    "ClusterSet",
    "Event",
    "external_attraction",
    "sync_condition",
    "glued_selection",
    "KineticState",
    "ChemoField",
    "solve_chemo_field",
    "check_positivity_condition",
]

__version__ = "0.1.0"
