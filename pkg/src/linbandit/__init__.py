"""Adaptive ε-greedy bandits driven by linearized reward densities."""
from .density import (
    Line,
    LinearClass,
    LiaisonSegment,
    PiecewiseDensity,
    connect_classes,
    deviation_error,
    estimate_density,
    evaluate_density,
    fit_least_squares,
    linearize,
    normalize_density,
    tail_probability,
)
from .harness import (
    ContextualAgent,
    EventRecord,
    RunReport,
    SyntheticConfig,
    generate_synthetic_log,
    load_event_log,
    replay_evaluate,
    simulate_evaluate,
    write_log,
    write_report,
)
from .policies import Decision, PolicyConfig, make_policy
from .reward import DocumentStats, PointSeries, RewardSample, StatsStore, build_point_series, ctr
from .situation import Ontology, OntologySet, Situation, SituationStore, lcs, wu_palmer_sim
from .utility import PopulationCounts, TradeoffResult, UtilityParams, optimize_threshold, utility_value

__version__ = "0.1.0"
