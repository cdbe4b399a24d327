"""Budgeted stochastic utility maximization with replication test scores."""
from __future__ import annotations

from .errors import (
    CapacityError,
    DomainError,
    DumpParseError,
    InfeasibleItemError,
    InvalidParameterError,
    ProtocolError,
    TestScoreError,
    UnboundedSupportError,
    UndefinedBoundError,
)
from .instance import (
    Bernoulli,
    Deterministic,
    Empirical,
    Exponential,
    Instance,
    Item,
    ParetoI,
    dist_mean,
    load_instance,
    pareto_from_mean,
    replication_count,
    sample_values,
    save_instance,
)
from .rng import Streams
from .sampling import (
    AccuracySpec,
    BetaCosts,
    Curvature,
    General,
    curvature_samples,
    gap_samples,
    guarantee_factor,
    hoeffding_samples,
    mcdiarmid_samples,
    topset_samples,
)
from .scores import (
    ScoreTable,
    SketchReport,
    curvature_sketch_factors,
    estimate_scores,
    exact_score,
    exact_score_table,
    relative_cost,
    score_sketch,
    verify_sandwich,
)
from .solvers import Solution, StreamStats, brute_force, celf, epsilon_diagnostic, streaming_tsg, tsg
from .utility import ExactUtility, MonteCarloUtility, exact_utility, mc_utility
from .valuefns import (
    CES,
    Modular,
    Power,
    Saturating,
    SuccessProbability,
    TopR,
    check_dr_property,
    curvature_of,
    evaluate,
    g_sup_norms,
    marginal,
    parse_value_fn,
)

__version__ = "0.1.0"
