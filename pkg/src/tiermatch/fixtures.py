"""Built-in scenarios reproducing the documented worked examples.

Deterministic fixtures are full problems; the three ``exp*-un`` fixtures are
Bayesian (priority or preference uncertainty). ``expB2`` only pins a priority
structure, so its preference profile is a placeholder: the guarantee audit
that uses it traverses every true profile anyway.
"""

from __future__ import annotations

from typing import Union

from .bayes import BayesianProblem, validate_bayesian_problem
from .core import Problem, validate_problem


def _exp1() -> Problem:
    return validate_problem(
        {
            "students": ["1", "2", "3"],
            "schools": ["a", "b", "c"],
            "quotas": {"a": 1, "b": 1, "c": 1},
            "priorities": {"a": ["1", "3", "2"], "b": ["1", "2", "3"], "c": ["3", "1", "2"]},
            "tiers": {"a": 1, "b": 2, "c": 2},
            "preferences": {
                "1": {"acceptable": ["c", "b", "a"]},
                "2": {"acceptable": ["b", "c", "a"]},
                "3": {"acceptable": ["b", "a", "c"]},
            },
        }
    )


def _exp2() -> Problem:
    return validate_problem(
        {
            "students": ["1", "2", "3"],
            "schools": ["a", "b", "c"],
            "quotas": {"a": 1, "b": 1, "c": 1},
            "priorities": {"a": ["3", "2", "1"], "b": ["2", "1", "3"], "c": ["1", "2", "3"]},
            "tiers": {"a": 1, "b": 2, "c": 3},
            "preferences": {
                "1": {"acceptable": ["c", "b", "a"]},
                "2": {"acceptable": ["b", "c", "a"]},
                "3": {"acceptable": ["b", "a", "c"]},
            },
        }
    )


def _exp3() -> Problem:
    return validate_problem(
        {
            "students": ["1", "2", "3"],
            "schools": ["a", "b", "c"],
            "quotas": {"a": 1, "b": 1, "c": 1},
            "priorities": {"a": ["1", "2", "3"], "b": ["2", "3", "1"], "c": ["3", "1", "2"]},
            "tiers": {"a": 1, "b": 2, "c": 3},
            "preferences": {
                "1": {"acceptable": ["c", "a", "b"]},
                "2": {"acceptable": ["c", "b"], "unacceptable": ["a"]},
                "3": {"acceptable": ["b", "c"], "unacceptable": ["a"]},
            },
        }
    )


def _expB1() -> Problem:
    return validate_problem(
        {
            "students": ["1", "2", "3"],
            "schools": ["a", "b", "c"],
            "quotas": {"a": 1, "b": 1, "c": 1},
            "priorities": {"a": ["3", "1", "2"], "b": ["1", "2", "3"], "c": ["3", "2", "1"]},
            "tiers": {"a": 1, "b": 2, "c": 2},
            "preferences": {
                "1": {"acceptable": ["a", "b", "c"]},
                "2": {"acceptable": ["b", "a", "c"]},
                "3": {"acceptable": ["b", "c", "a"]},
            },
        }
    )


def _expB2() -> Problem:
    return validate_problem(
        {
            "students": ["1", "2", "3"],
            "schools": ["a", "b", "c"],
            "quotas": {"a": 1, "b": 1, "c": 1},
            "priorities": {"a": ["2", "1", "3"], "b": ["1", "2", "3"], "c": ["3", "2", "1"]},
            "tiers": {"a": 1, "b": 2, "c": 2},
            "preferences": {
                "1": {"acceptable": ["a", "b", "c"]},
                "2": {"acceptable": ["a", "b", "c"]},
                "3": {"acceptable": ["a", "b", "c"]},
            },
        }
    )


def _exp_prioun() -> BayesianProblem:
    utilities = {"a": "2", "b": "3", "c": "1", "self": "0"}
    return validate_bayesian_problem(
        {
            "students": ["1", "2", "3"],
            "schools": ["a", "b", "c"],
            "quotas": {"a": 1, "b": 1, "c": 1},
            "tiers": {"a": 1, "b": 2, "c": 2},
            "utilities": {"1": utilities, "2": utilities, "3": utilities},
            "states": [
                {
                    "prob": "1/5",
                    "priorities": {
                        "a": ["1", "2", "3"],
                        "b": ["1", "2", "3"],
                        "c": ["1", "2", "3"],
                    },
                },
                {
                    "prob": "4/5",
                    "priorities": {
                        "a": ["2", "3", "1"],
                        "b": ["2", "3", "1"],
                        "c": ["2", "3", "1"],
                    },
                },
            ],
        }
    )


def _expB3_prefun() -> BayesianProblem:
    return validate_bayesian_problem(
        {
            "students": ["1", "2", "3"],
            "schools": ["a", "b", "c"],
            "quotas": {"a": 1, "b": 1, "c": 1},
            "tiers": {"a": 1, "b": 2, "c": 2},
            "priorities": {"a": ["1", "2", "3"], "b": ["1", "2", "3"], "c": ["2", "1", "3"]},
            "utilities": {
                "2": {"a": "2", "b": "3", "c": "1", "self": "0"},
                "3": {"a": "1", "b": "3", "c": "2", "self": "0"},
            },
            "private_types": {
                "student": "1",
                "types": [
                    {"prob": "1/5", "utilities": {"a": "1", "b": "3", "c": "2", "self": "0"}},
                    {"prob": "4/5", "utilities": {"a": "1", "b": "2", "c": "3", "self": "0"}},
                ],
            },
        }
    )


def _expB4_prioun2() -> BayesianProblem:
    return validate_bayesian_problem(
        {
            "students": ["1", "2", "3"],
            "schools": ["a", "b", "c"],
            "quotas": {"a": 1, "b": 1, "c": 1},
            "tiers": {"a": 2, "b": 2, "c": 1},
            "priorities": {"b": ["1", "2", "3"], "c": ["1", "2", "3"]},
            "utilities": {
                "1": {"a": "3", "b": "2", "c": "1", "self": "0"},
                "2": {"a": "3", "b": "1", "c": "2", "self": "0"},
                "3": {"a": "2", "b": "3", "c": "1", "self": "0"},
            },
            "states": [
                {"prob": "1/5", "priorities": {"a": ["1", "2", "3"]}},
                {"prob": "4/5", "priorities": {"a": ["2", "1", "3"]}},
            ],
        }
    )


FIXTURES = {
    "exp1": _exp1,
    "exp2": _exp2,
    "exp3": _exp3,
    "expB1": _expB1,
    "expB2": _expB2,
    "exp-prioun": _exp_prioun,
    "expB3-prefun": _expB3_prefun,
    "expB4-prioun2": _expB4_prioun2,
}

BAYESIAN_FIXTURES = {"exp-prioun", "expB3-prefun", "expB4-prioun2"}


def fixture_names() -> list[str]:
    return list(FIXTURES)


def fixture(name: str) -> Union[Problem, BayesianProblem]:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; available: {', '.join(FIXTURES)}")
