"""
Pydantic models for configuration and report schemas

This module defines the data models exchanged between the command line, the
service layer and the JSON reports. All models use Pydantic for validation
and serialization, so a report can be re-read and its embedded configuration
replayed.

Model Categories:
    - Error Models: ErrorResponse
    - Configuration Models: CheckConfig, SimulationConfig
    - Report Models: WitnessReport, FormulaReport, Estimate, RunReport
    - Enums: Verdict

Probabilities are carried as exact fraction strings ("1/2"); floats appear
only in simulation estimates.
"""

from enum import Enum
from fractions import Fraction
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, field_validator

from config import DEFAULT_MAX_PRODUCT_STATES
from natstrat import Setting
from utils import parse_fraction

SCHEMA_VERSION = "1.0"

# --- ERROR MODELS ---

class ErrorResponse(BaseModel):
    """
    Standard error payload of the command line front end.

    Attributes:
        detail (str): Human-readable message describing what went wrong,
            including the offending location when one is known.
        error_code (Optional[str]): Stable machine-readable code taken from the
            raised NatpatlError, or INTERNAL_ERROR for unexpected failures.
        timestamp (Optional[str]): Local time the error was reported, useful
            for correlating with log output.
    """
    detail: str = Field(..., description="Error message")
    error_code: Optional[str] = Field(None, description="Error code")
    timestamp: Optional[str] = Field(None, description="Error timestamp")


# --- VERDICTS ---

class Verdict(str, Enum):
    """
    Three-valued truth of a state formula.

    Values:
        TRUE: The formula holds.
        FALSE: The formula does not hold.
        UNKNOWN: An iterative solve could not separate the value from the
            threshold, or an inner predicate was itself unknown.
    """
    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"

    def negate(self) -> "Verdict":
        if self is Verdict.UNKNOWN:
            return self
        return Verdict.FALSE if self is Verdict.TRUE else Verdict.TRUE

    def both(self, other: "Verdict") -> "Verdict":
        if Verdict.FALSE in (self, other):
            return Verdict.FALSE
        if Verdict.UNKNOWN in (self, other):
            return Verdict.UNKNOWN
        return Verdict.TRUE

    def either(self, other: "Verdict") -> "Verdict":
        if Verdict.TRUE in (self, other):
            return Verdict.TRUE
        if Verdict.UNKNOWN in (self, other):
            return Verdict.UNKNOWN
        return Verdict.FALSE

    @classmethod
    def of(cls, value: bool) -> "Verdict":
        return cls.TRUE if value else cls.FALSE


# --- CONFIGURATION MODELS ---

class CheckConfig(BaseModel):
    """
    Checker configuration, echoed into every report.

    Attributes:
        setting (Setting): Strategy setting, ``r`` (memoryless) or ``R`` (recall).
        vocab (str): Guard vocabulary: ``literals``, ``minterms`` or a path to
            a vocabulary file (one Boolean condition per line).
        opponent (str): ``mdp`` resolves free agents as MDP adversaries;
            ``enumerate:N`` ranges them over deterministic natural strategies
            of complexity at most N.
        solve (str): ``exact`` or ``iter:TOL`` with a fraction tolerance.
        jobs (int): Worker threads evaluating candidate profiles.
        strict_support (bool): Enforce the literal availability reading when
            validating user-supplied strategies.
        max_product_states (int): Budget for product and automaton states.
    """
    setting: Setting = Field(Setting.MEMORYLESS, description="Strategy setting r or R")
    vocab: str = Field("literals", description="literals | minterms | vocabulary file")
    opponent: str = Field("mdp", description="mdp | enumerate:BOUND")
    solve: str = Field("exact", description="exact | iter:TOL")
    jobs: int = Field(1, ge=1, description="Worker threads")
    strict_support: bool = Field(False, description="Literal availability reading")
    max_product_states: int = Field(DEFAULT_MAX_PRODUCT_STATES, ge=1, description="State budget")

    @field_validator("opponent")
    @classmethod
    def _check_opponent(cls, value: str) -> str:
        if value == "mdp":
            return value
        kind, _, bound = value.partition(":")
        if kind != "enumerate" or not bound.isdigit() or int(bound) < 1:
            raise ValueError("opponent must be 'mdp' or 'enumerate:N' with N >= 1")
        return value

    @field_validator("solve")
    @classmethod
    def _check_solve(cls, value: str) -> str:
        if value == "exact":
            return value
        kind, _, tolerance = value.partition(":")
        if kind != "iter":
            raise ValueError("solve must be 'exact' or 'iter:TOL'")
        parsed = parse_fraction(tolerance)
        if not 0 < parsed < 1:
            raise ValueError("tolerance must lie strictly between 0 and 1")
        return value

    @property
    def opponent_bound(self) -> Optional[int]:
        return None if self.opponent == "mdp" else int(self.opponent.partition(":")[2])

    @property
    def tolerance(self) -> Optional[Fraction]:
        return None if self.solve == "exact" else parse_fraction(self.solve.partition(":")[2])


class SimulationConfig(BaseModel):
    """
    Monte-Carlo run parameters.

    Attributes:
        samples (int): Number of simulated plays.
        horizon (Optional[int]): Step bound; None escalates the horizon until
            the undecided mass is below ``tolerance``.
        seed (int): Root seed of the generator.
        batches (int): Fixed number of independently seeded batches.
        tolerance (float): Undecided-mass bound for unbounded estimation.
    """
    samples: int = Field(100_000, ge=1, description="Simulated plays")
    horizon: Optional[int] = Field(None, ge=0, description="Step bound")
    seed: int = Field(0, ge=0, description="Root seed")
    batches: int = Field(16, ge=1, description="Seeded batches")
    tolerance: float = Field(1e-3, gt=0, lt=1, description="Undecided-mass bound")


# --- REPORT MODELS ---

class WitnessReport(BaseModel):
    state: str = Field(..., description="State where the coalition operator was decided")
    formula: str = Field(..., description="Coalition subformula")
    strategies: Dict[str, str] = Field(..., description="Strategy text per coalition agent")
    lower: str = Field(..., description="Lower end of the achieved probability")
    upper: str = Field(..., description="Upper end of the achieved probability")


class FormulaReport(BaseModel):
    """
    Outcome of one formula at the initial state.

    Attributes:
        formula (str): Formula text as printed back from the AST.
        fragment (str): NatPATL or NatPATL*.
        positive (bool): No negation occurs in the formula.
        verdict (Verdict): Truth at the initial state.
        value (Optional[str]): Best probability found for an outermost
            coalition operator, as a fraction or an interval ``[lo, hi]``.
        witnesses (List[WitnessReport]): Witness profiles of true coalition
            subformulas.
        stats (Dict[str, Any]): Enumeration counts and solver timings.
    """
    formula: str = Field(..., description="Formula text")
    fragment: str = Field(..., description="Logic fragment")
    positive: bool = Field(..., description="Positive fragment membership")
    verdict: Verdict = Field(..., description="Truth at the initial state")
    value: Optional[str] = Field(None, description="Probability of the outermost coalition operator")
    witnesses: List[WitnessReport] = Field(default_factory=list, description="Witness profiles")
    stats: Dict[str, Any] = Field(default_factory=dict, description="Statistics")


class Estimate(BaseModel):
    """
    Monte-Carlo estimate of a path probability.

    The interval is p̂ ± z·sqrt(p̂(1−p̂)/n) with z = 2.5758 (two-sided 99%
    normal quantile), clipped to [0, 1].

    Attributes:
        value (float): Fraction of sampled plays satisfying the objective.
        lower (float): Lower end of the 99% interval.
        upper (float): Upper end of the 99% interval.
        samples (int): Number of plays.
        horizon (int): Step bound used for every play.
        undecided (float): Fraction of plays still undecided at the horizon.
    """
    value: float = Field(..., ge=0, le=1, description="Point estimate")
    lower: float = Field(..., ge=0, le=1, description="Lower 99% bound")
    upper: float = Field(..., ge=0, le=1, description="Upper 99% bound")
    samples: int = Field(..., ge=1, description="Sample count")
    horizon: int = Field(..., ge=0, description="Step bound")
    undecided: float = Field(0.0, ge=0, le=1, description="Undecided fraction at the horizon")

    @property
    def half_width(self) -> float:
        return (self.upper - self.lower) / 2


class RunReport(BaseModel):
    """
    Self-contained report of one command run.

    Attributes:
        schema_version (str): Version of this schema.
        tool (str): Tool name and version.
        command (str): Sub-command that produced the report.
        run_id (str): Identifier assigned by the logging middleware.
        model (str): Model file.
        initial (str): Initial state.
        config (Dict[str, Any]): Echo of the effective configuration.
        results (List[FormulaReport]): One entry per checked formula.
        estimate (Optional[Estimate]): Simulation result.
        output (Optional[str]): Text payload of enumerate, encode and export.
        warnings (List[str]): Lint findings.
        elapsed_seconds (float): Wall-clock time of the command.
    """
    schema_version: str = Field(SCHEMA_VERSION, description="Report schema version")
    tool: str = Field(..., description="Tool name and version")
    command: str = Field(..., description="Sub-command")
    run_id: str = Field("", description="Run identifier")
    model: str = Field(..., description="Model file")
    initial: str = Field(..., description="Initial state")
    config: Dict[str, Any] = Field(default_factory=dict, description="Effective configuration")
    results: List[FormulaReport] = Field(default_factory=list, description="Formula outcomes")
    estimate: Optional[Estimate] = Field(None, description="Simulation estimate")
    output: Optional[str] = Field(None, description="Text payload")
    warnings: List[str] = Field(default_factory=list, description="Lint warnings")
    elapsed_seconds: float = Field(0.0, description="Elapsed wall-clock time")
