import random
from fractions import Fraction

import pytest

from tiermatch.analysis import find_blocking_pairs, is_stable, within_tier_acyclic
from tiermatch.bayes import (
    enumerate_bne_outcomes,
    expected_utility,
    is_bayes_nash,
    parse_bayesian_problem,
    validate_bayesian_problem,
)
from tiermatch.core import Matching, Preference, ProblemValidationError
from tiermatch.fixtures import fixture
from tiermatch.game import enumerate_nash_outcomes, strategy_space
from tiermatch.reference_checks import (
    PREFUN_EQUILIBRIUM,
    PRIOUN2_EQUILIBRIUM,
    PRIOUN_EQUILIBRIUM,
)


def _match(**kw):
    return Matching({i: (None if s == "self" else s) for i, s in kw.items()})


def test_truthful_preferences_derived_from_utilities():
    bp = fixture("exp-prioun")
    assert bp.preference_of("1") == Preference(("b", "a", "c"))
    b3 = fixture("expB3-prefun")
    assert b3.preference_of("1", 0) == Preference(("b", "c", "a"))
    assert b3.preference_of("1", 1) == Preference(("c", "b", "a"))
    assert b3.preference_of("2", 0) == Preference(("b", "a", "c"))


def test_expected_utility_printed_value():
    bp = fixture("exp-prioun")
    # per-state assignments under the documented equilibrium: c then b
    assert bp.outcome(PRIOUN_EQUILIBRIUM, 0)["2"] == "c"
    assert bp.outcome(PRIOUN_EQUILIBRIUM, 1)["2"] == "b"
    value = expected_utility(bp, PRIOUN_EQUILIBRIUM, "2")
    assert value == Fraction(1, 5) * 1 + Fraction(4, 5) * 3 == Fraction(13, 5)


def test_expected_utility_degenerate_lottery():
    raw = {
        "students": ["1"],
        "schools": ["a"],
        "quotas": {"a": 1},
        "tiers": {"a": 1},
        "utilities": {"1": {"a": "2", "self": "0"}},
        "states": [{"prob": "1", "priorities": {"a": ["1"]}}],
    }
    bp = validate_bayesian_problem(raw)
    profile = {"1": Preference(("a",))}
    assert expected_utility(bp, profile, "1") == 2


def test_unmatched_everywhere_gets_self_utility():
    bp = fixture("exp-prioun")
    stay_out = {i: Preference((), ("a", "b", "c")) for i in bp.students}
    assert expected_utility(bp, stay_out, "1") == 0


def test_bayes_nash_examples():
    bp = fixture("exp-prioun")
    assert is_bayes_nash(bp, "tda", PRIOUN_EQUILIBRIUM)
    assert is_bayes_nash(bp, "da", bp.truthful_profile())
    assert not is_bayes_nash(bp, "tda", bp.truthful_profile())


def test_bne_outcomes_priority_uncertainty():
    bp = fixture("exp-prioun")
    expected = (
        _match(**{"1": "b", "2": "c", "3": "a"}),
        _match(**{"1": "c", "2": "b", "3": "a"}),
    )
    report = enumerate_bne_outcomes(bp, "tda")
    assert report.outcome_tuples == frozenset({expected})
    assert report.equilibrium_count > 0


def test_bne_outcomes_preference_uncertainty():
    bp = fixture("expB3-prefun")
    expected = (
        _match(**{"1": "b", "2": "c", "3": "a"}),
        _match(**{"1": "c", "2": "b", "3": "a"}),
    )
    assert is_bayes_nash(bp, "tda", PREFUN_EQUILIBRIUM)
    report = enumerate_bne_outcomes(bp, "tda")
    assert report.outcome_tuples == frozenset({expected})


def test_bne_outcomes_priority_uncertainty_without_alignment():
    bp = fixture("expB4-prioun2")
    expected = (
        _match(**{"1": "a", "2": "b", "3": "c"}),
        _match(**{"1": "b", "2": "a", "3": "c"}),
    )
    assert is_bayes_nash(bp, "tda", PRIOUN2_EQUILIBRIUM)
    report = enumerate_bne_outcomes(bp, "tda")
    assert report.outcome_tuples == frozenset({expected})
    # the tier-1 school ends up with the lowest-priority student in one state
    assert expected[0]["3"] == "c"


def test_failure_exhibits():
    bp = fixture("exp-prioun")
    state0 = bp.state_problem(0)
    tda_state0 = _match(**{"1": "b", "2": "c", "3": "a"})
    assert not is_stable(state0, tda_state0)
    pairs = {(p.student, p.school) for p in find_blocking_pairs(state0, tda_state0)}
    assert ("2", "a") in pairs
    for k in range(2):
        assert within_tier_acyclic(bp.quotas, bp.state_priorities(k), bp.tiers)
    expected = (tda_state0, _match(**{"1": "c", "2": "b", "3": "a"}))
    assert expected not in enumerate_bne_outcomes(bp, "da").outcome_tuples


def _ordinal_utilities(pref, schools):
    order = list(pref.acceptable) + [None] + list(pref.unacceptable)
    return {
        ("self" if x is None else x): str(len(order) - k) for k, x in enumerate(order)
    }


def test_one_state_problem_collapses_to_complete_information():
    rng = random.Random(17)
    schools = ["a", "b", "c"]
    strategies = strategy_space(tuple(schools))
    for _ in range(5):
        priorities = {s: [str(k) for k in rng.sample([1, 2, 3], 3)] for s in schools}
        prefs = {str(i): rng.choice(strategies) for i in (1, 2, 3)}
        raw = {
            "students": ["1", "2", "3"],
            "schools": schools,
            "quotas": {s: 1 for s in schools},
            "tiers": {"a": 1, "b": 2, "c": 2},
            "utilities": {i: _ordinal_utilities(prefs[i], schools) for i in prefs},
            "states": [{"prob": "1", "priorities": priorities}],
        }
        bp = validate_bayesian_problem(raw)
        problem = bp.state_problem(0)
        assert problem.preferences == prefs
        bne = enumerate_bne_outcomes(bp, "tda")
        ne = enumerate_nash_outcomes(problem)
        assert {t[0] for t in bne.outcome_tuples} == set(ne.outcomes)


def test_expected_utility_affine_in_probabilities():
    def with_probability(p: str, q: str):
        raw = {
            "students": ["1", "2", "3"],
            "schools": ["a", "b", "c"],
            "quotas": {"a": 1, "b": 1, "c": 1},
            "tiers": {"a": 1, "b": 2, "c": 2},
            "utilities": {
                i: {"a": "2", "b": "3", "c": "1", "self": "0"} for i in ("1", "2", "3")
            },
            "states": [
                {"prob": p, "priorities": {s: ["1", "2", "3"] for s in "abc"}},
                {"prob": q, "priorities": {s: ["2", "3", "1"] for s in "abc"}},
            ],
        }
        return validate_bayesian_problem(raw)

    profile = PRIOUN_EQUILIBRIUM
    lo = expected_utility(with_probability("1/5", "4/5"), profile, "2")
    hi = expected_utility(with_probability("3/5", "2/5"), profile, "2")
    mid = expected_utility(with_probability("2/5", "3/5"), profile, "2")
    assert mid == (lo + hi) / 2


def test_validation_rejects_bad_probabilities_and_ties():
    base = {
        "students": ["1"],
        "schools": ["a"],
        "quotas": {"a": 1},
        "tiers": {"a": 1},
        "utilities": {"1": {"a": "1", "self": "0"}},
    }
    with pytest.raises(ProblemValidationError):
        validate_bayesian_problem(
            base | {"states": [{"prob": "1/2", "priorities": {"a": ["1"]}}]}
        )
    with pytest.raises(ProblemValidationError):
        validate_bayesian_problem(
            base
            | {
                "utilities": {"1": {"a": "0", "self": "0"}},
                "states": [{"prob": "1", "priorities": {"a": ["1"]}}],
            }
        )
    with pytest.raises(ProblemValidationError):
        validate_bayesian_problem(base)  # neither states nor private_types


def test_floats_are_rejected():
    raw = {
        "students": ["1"],
        "schools": ["a"],
        "quotas": {"a": 1},
        "tiers": {"a": 1},
        "utilities": {"1": {"a": 0.5, "self": "0"}},
        "states": [{"prob": "1", "priorities": {"a": ["1"]}}],
    }
    with pytest.raises(ProblemValidationError):
        validate_bayesian_problem(raw)


def test_bne_enumeration_guard():
    import pytest as _pytest
    from tiermatch.core import GuardExceeded

    with _pytest.raises(GuardExceeded):
        enumerate_bne_outcomes(fixture("expB3-prefun"), "tda", max_profiles=1000)


def test_parse_bayesian_problem_from_json_text():
    import json

    raw = {
        "students": ["1"],
        "schools": ["a"],
        "quotas": {"a": 1},
        "tiers": {"a": 1},
        "utilities": {"1": {"a": "3/2", "self": "0"}},
        "states": [{"prob": "1", "priorities": {"a": ["1"]}}],
    }
    bp = parse_bayesian_problem(json.dumps(raw))
    assert bp.states[0].utilities["1"]["a"] == Fraction(3, 2)
