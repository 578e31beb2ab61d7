"""Preference-weighted household object arrangement planning."""

from .constructs import (
    CommonsensePriorTable,
    ConstructScores,
    PreferenceWeights,
    PriorBundle,
    SemanticAffinities,
    SpatialPriors,
    commonsense_score,
    habitual_score,
    reward,
    semantic_score,
    spatial_score,
)
from .errors import ArrangementError
from .planner import PlannerConfig, PlanResult, plan, select_ucb, solve_exact
from .scene import (
    Arrangement,
    ObjectSpec,
    Placement,
    ReceptacleSpec,
    SceneDescription,
    Surface,
    admissible_actions,
    candidate_slots,
    jaccard_similarity,
    validate_arrangement,
)

__version__ = "0.1.0"
