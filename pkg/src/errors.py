"""
Exception hierarchy for the NatPATL model checker

Every error raised on purpose by the checker derives from NatpatlError and
carries a stable ``error_code`` plus an optional ``location`` naming the
offending model element, formula position or strategy line. The command line
front end turns these into ErrorResponse payloads and exit status 3; anything
else is treated as an internal error.
"""

from typing import Any, Optional


class NatpatlError(Exception):
    """Base class for all checker errors."""

    error_code = "NATPATL_ERROR"

    def __init__(self, message: str, location: Optional[Any] = None):
        super().__init__(message)
        self.message = message
        self.location = location

    def __str__(self) -> str:
        if self.location is None:
            return self.message
        return f"{self.message} (at {self.location})"


# --- MODEL ERRORS ---

class ModelError(NatpatlError):
    error_code = "MODEL_ERROR"


class ModelSyntaxError(ModelError):
    error_code = "MODEL_SYNTAX"


class EmptyLegality(ModelError):
    error_code = "EMPTY_LEGALITY"

    def __init__(self, state: str, agent: str):
        super().__init__(f"agent {agent!r} has no legal action in state {state!r}", (state, agent))
        self.state = state
        self.agent = agent


class UnnormalizedDistribution(ModelError):
    error_code = "UNNORMALIZED_DISTRIBUTION"

    def __init__(self, state: str, profile: tuple, total):
        super().__init__(
            f"transition from {state!r} under {profile} sums to {total}, expected 1",
            (state, profile),
        )
        self.state = state
        self.profile = profile
        self.total = total


class TransitionForIllegalProfile(ModelError):
    error_code = "TRANSITION_FOR_ILLEGAL_PROFILE"

    def __init__(self, state: str, profile: tuple, agent: str):
        super().__init__(
            f"transition declared for {profile} in {state!r} but agent {agent!r} may not play it",
            (state, profile),
        )
        self.state = state
        self.profile = profile
        self.agent = agent


class MissingTransition(ModelError):
    error_code = "MISSING_TRANSITION"

    def __init__(self, state: str, profile: tuple):
        super().__init__(f"no transition for legal profile {profile} in {state!r}", (state, profile))
        self.state = state
        self.profile = profile


class DanglingStateReference(ModelError):
    error_code = "DANGLING_REFERENCE"

    def __init__(self, kind: str, name: str, where: str):
        super().__init__(f"unknown {kind} {name!r} referenced in {where}", where)
        self.kind = kind
        self.name = name


class IllegalProfile(ModelError):
    error_code = "ILLEGAL_PROFILE"

    def __init__(self, state: str, profile: tuple, agent: Optional[str] = None):
        if agent is None:
            message = f"joint action {profile} does not give one action per agent in {state!r}"
        else:
            message = f"agent {agent!r} cannot play its part of {profile} in {state!r}"
        super().__init__(message, (state, profile))
        self.state = state
        self.profile = profile
        self.agent = agent


class InvalidHistory(ModelError):
    error_code = "INVALID_HISTORY"


# --- FORMULA ERRORS ---

class FormulaError(NatpatlError):
    error_code = "FORMULA_ERROR"


class FormulaSyntaxError(FormulaError):
    error_code = "FORMULA_SYNTAX"

    def __init__(self, message: str, position: Optional[int] = None):
        super().__init__(message, position)
        self.position = position


class UnknownAgent(FormulaError):
    error_code = "UNKNOWN_AGENT"


class ThresholdOutOfRange(FormulaError):
    error_code = "THRESHOLD_OUT_OF_RANGE"


class UnknownAtom(FormulaError):
    error_code = "UNKNOWN_ATOM"


# --- STRATEGY ERRORS ---

class StrategyError(NatpatlError):
    error_code = "STRATEGY_ERROR"


class StrategySyntaxError(StrategyError):
    error_code = "STRATEGY_SYNTAX"


class InvalidStrategy(StrategyError):
    error_code = "INVALID_STRATEGY"


class NoMatch(StrategyError):
    error_code = "NO_MATCH"


class StrategyAgentMismatch(StrategyError):
    error_code = "STRATEGY_AGENT_MISMATCH"


class MissingAgentStrategy(StrategyError):
    error_code = "MISSING_AGENT_STRATEGY"


class VocabularyEmpty(StrategyError):
    error_code = "VOCABULARY_EMPTY"


# --- SOLVER ERRORS ---

class SolverError(NatpatlError):
    error_code = "SOLVER_ERROR"


class NonConvergence(SolverError):
    error_code = "NON_CONVERGENCE"


class StateBudgetExceeded(SolverError):
    error_code = "STATE_BUDGET_EXCEEDED"

    def __init__(self, limit: int, what: str = "states"):
        super().__init__(f"construction exceeded the budget of {limit} {what}", what)
        self.limit = limit


# --- CHECKING / ENCODING ERRORS ---

class UnknownVerdict(NatpatlError):
    error_code = "UNKNOWN_VERDICT"


class NotPositiveFragment(NatpatlError):
    error_code = "NOT_POSITIVE_FRAGMENT"


class BodyNotNatPatl(NatpatlError):
    error_code = "BODY_NOT_NATPATL"


class UsageError(NatpatlError):
    error_code = "USAGE_ERROR"
