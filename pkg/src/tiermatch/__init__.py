"""Tiered deferred acceptance mechanisms and exhaustive equilibrium analysis
for small school-choice markets."""

from .core import (
    GuardExceeded,
    Matching,
    Preference,
    Problem,
    ProblemValidationError,
    TierStructure,
    canonicalize,
    load_problem,
    matching_to_json,
    parse_matching,
    parse_problem,
    parse_profile,
    problem_to_json,
    restrict_preference,
    validate_problem,
)
from .mechanisms import (
    TdaRound,
    TdaTrace,
    apply_mechanism,
    deferred_acceptance,
    finest_tiers,
    flat_tiers,
    tiered_deferred_acceptance,
)
from .analysis import (
    BlockingPair,
    Cycle,
    find_blocking_pairs,
    find_cycles,
    is_refinement,
    is_stable,
    is_stable_wrt_tiers,
    is_within_tier_acyclic,
    responsive_dominates,
    sosm,
    stable_set,
    unacceptable_assignments,
    within_tier_acyclic,
)
from .game import (
    EquilibriumReport,
    OutcomeTable,
    check_aligned_domain_strategyproofness,
    construct_cycle_counterexample,
    construct_welfare_counterexample,
    enumerate_nash_outcomes,
    enumerate_undominated_nash_outcomes,
    guarantee_audit,
    audit_true_profile,
    is_aligned,
    is_manipulable_at,
    is_nash,
    is_weakly_dominated,
    outcome_table,
    reshuffle,
    strategy_space,
    verify_theorems,
    within_tier_consistent,
)
from .bayes import (
    BayesianProblem,
    BayesState,
    enumerate_bne_outcomes,
    expected_utility,
    is_bayes_nash,
    parse_bayesian_problem,
    validate_bayesian_problem,
)
from .fixtures import fixture, fixture_names

__version__ = "0.1.0"
