"""
Service layer for model checking operations
"""

import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from cgs import Cgs, unreachable_states
from checker import CheckResult, ModelChecker, vocabulary_for
from config import Settings, load_settings
from dsl import load_model
from errors import FormulaError, NatpatlError
from logic import Coalition, Formula, classify, parse_formula, to_text
from models import CheckConfig, Estimate, FormulaReport, SimulationConfig, Verdict, WitnessReport
from natstrat import (NatStrategy, Setting, Vocabulary, complexity, enumerate_det, enumerate_skeletons, format_pairs,
                      load_strategy, used_props, validate_strategy)
from omega import ltl_to_dra, ltl_to_nba, to_hoa
from oracle import estimate_until, estimate_until_unbounded, simulate_traces, state_objective
from probsolve import Interval
from product import fix_coalition, format_transitions
from rarith import encode, run_external
from utils import format_fraction

logger = logging.getLogger(__name__)


def format_interval(value: Interval) -> str:
    if value.exact:
        return format_fraction(value.lower)
    return f"[{format_fraction(value.lower)}, {format_fraction(value.upper)}]"


def read_formulas(path: str) -> List[str]:
    """Formula lines of a ``.nf`` file; ``#`` starts a comment."""
    lines = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    return lines


class ModelCheckingService:
    """
    Service class for loading models and running checker, oracle and encoder operations
    """

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings
        self.is_initialized = False
        self.warnings: List[str] = []

    def initialize(self):
        """
        Initialize the service and read environment settings
        """
        try:
            logger.info("Initializing model checking service...")
            if self.settings is None:
                self.settings = load_settings()
            self.is_initialized = True
            logger.info("Model checking service initialized successfully")
        except Exception as e:
            logger.error(f"Failed to initialize model checking service: {str(e)}")
            raise

    def cleanup(self):
        """
        Cleanup resources
        """
        try:
            logger.info("Cleaning up model checking service...")
            self.warnings = []
            self.is_initialized = False
        except Exception as e:
            logger.error(f"Error during cleanup: {str(e)}")

    def _require_initialized(self) -> None:
        if not self.is_initialized:
            raise RuntimeError("Service not initialized")

    # --- inputs ---

    def load(self, model_path: str, initial: Optional[str] = None) -> Tuple[Cgs, str]:
        """
        Load a model and resolve the initial state, recording lint warnings

        Args:
            model_path: Path of a ``.cgs`` file
            initial: Explicit initial state; defaults to the model's ``init``

        Returns:
            The validated model and the initial state
        """
        self._require_initialized()
        try:
            cgs = load_model(model_path)
            start = initial or cgs.initial
            if start is None:
                raise FormulaError("no initial state: pass --initial or declare 'init' in the model", model_path)
            if start not in cgs.states:
                raise FormulaError(f"unknown initial state {start!r}", start)
            unreachable = unreachable_states(cgs, start)
            if unreachable:
                self.warn(f"states unreachable from {start}: {', '.join(unreachable)}")
            unused = [prop for prop in cgs.props if prop not in used_props(cgs)]
            if unused:
                self.warn(f"propositions labelling no state: {', '.join(unused)}")
            return cgs, start
        except Exception as e:
            logger.error(f"Error loading model {model_path}: {str(e)}")
            raise

    def warn(self, message: str) -> None:
        logger.warning(message)
        self.warnings.append(message)

    def load_profile(self, cgs: Cgs, paths: Sequence[str], setting: Optional[Setting] = None,
                     strict: bool = False) -> Dict[str, NatStrategy]:
        """Strategy files keyed by the agent named in their header."""
        profile: Dict[str, NatStrategy] = {}
        for path in paths:
            strategy = load_strategy(path, setting=setting)
            if strategy.agent in profile:
                raise NatpatlError(f"two strategies given for agent {strategy.agent!r}", path)
            for warning in validate_strategy(strategy, cgs, strict):
                self.warn(f"{path}: {warning}")
            profile[strategy.agent] = strategy
        return profile

    # --- check ---

    def check_formulas(self, cgs: Cgs, initial: str, formulas: Sequence[str], cfg: CheckConfig,
                       profile: Optional[Mapping[str, NatStrategy]] = None) -> List[FormulaReport]:
        """
        Decide each formula at the initial state

        Args:
            cgs: Model
            initial: State the formulas are decided at
            formulas: Formula texts
            cfg: Checker configuration
            profile: Optional coalition profile to verify instead of searching

        Returns:
            One FormulaReport per formula, in input order
        """
        self._require_initialized()
        try:
            logger.info(f"Checking {len(formulas)} formula(s) at {initial}")
            checker = ModelChecker(cgs, cfg)
            reports = []
            for text in formulas:
                f = parse_formula(text, cgs.agents)
                if profile:
                    reports.append(self._verify(checker, initial, f, profile))
                else:
                    reports.append(self._report(checker.check(initial, f)))
            return reports
        except Exception as e:
            logger.error(f"Error checking formulas: {str(e)}")
            raise

    def _report(self, result: CheckResult) -> FormulaReport:
        cls = classify(result.formula)
        key = (result.initial, result.formula)
        value = result.values.get(key)
        witnesses = [
            WitnessReport(state=witness.state, formula=to_text(witness.formula),
                          strategies={agent: format_pairs(s) for agent, s in witness.profile.items()},
                          lower=format_fraction(witness.value.lower), upper=format_fraction(witness.value.upper))
            for witness in result.witnesses.values()
        ]
        return FormulaReport(formula=to_text(result.formula), fragment=cls.fragment.value, positive=cls.positive,
                             verdict=result.verdict, value=format_interval(value) if value is not None else None,
                             witnesses=witnesses, stats=result.stats.as_dict())

    def _verify(self, checker: ModelChecker, initial: str, f: Formula,
                profile: Mapping[str, NatStrategy]) -> FormulaReport:
        if not isinstance(f, Coalition):
            raise FormulaError("--profile needs a formula whose outermost operator is a coalition", f.span)
        chosen = {agent: profile[agent] for agent in f.agents if agent in profile}
        verdict, value = checker.verify_profile(initial, f, chosen)
        cls = classify(f)
        return FormulaReport(formula=to_text(f), fragment=cls.fragment.value, positive=cls.positive,
                             verdict=verdict, value=format_interval(value),
                             stats={"verified_profile": sorted(chosen)})

    # --- simulate ---

    def simulate(self, cgs: Cgs, initial: str, profile: Mapping[str, NatStrategy], until: str,
                 sim: SimulationConfig, jobs: int = 1) -> Estimate:
        """Estimate Pr(until) under a full profile with the Monte-Carlo oracle."""
        self._require_initialized()
        try:
            objective = state_objective(cgs, parse_formula(until, cgs.agents))
            logger.info(f"Simulating {sim.samples} plays from {initial} with seed {sim.seed}")
            if sim.horizon is None:
                return estimate_until_unbounded(cgs, profile, initial, objective, sim.samples, sim.seed,
                                                sim.tolerance, batches=sim.batches, jobs=jobs)
            return estimate_until(cgs, profile, initial, objective, sim.horizon, sim.samples, sim.seed,
                                  sim.batches, jobs)
        except Exception as e:
            logger.error(f"Error simulating: {str(e)}")
            raise

    def traces(self, cgs: Cgs, initial: str, profile: Mapping[str, NatStrategy], horizon: int, count: int,
               seed: int) -> str:
        self._require_initialized()
        return "\n".join(simulate_traces(cgs, profile, initial, horizon, count, seed)) + "\n"

    # --- enumerate ---

    def enumerate(self, cgs: Cgs, agent: str, k: int, setting: Setting, vocab: str,
                  behavioral: bool = False) -> Tuple[str, int]:
        """
        List the bounded-complexity strategies of one agent

        Returns:
            The listing text and the number of strategies listed
        """
        self._require_initialized()
        try:
            vocabulary: Vocabulary = vocabulary_for(vocab, cgs)
            blocks = []
            if behavioral:
                for skeleton in enumerate_skeletons(agent, k, setting, vocabulary, cgs):
                    blocks.append(f"# complexity {skeleton.complexity}\n{skeleton.describe()}")
            else:
                for strategy in enumerate_det(agent, k, setting, vocabulary, cgs):
                    blocks.append(f"# complexity {complexity(strategy)}\n{format_pairs(strategy)}")
            logger.info(f"Enumerated {len(blocks)} strategies for {agent} at k={k}")
            return "\n\n".join(blocks) + ("\n" if blocks else ""), len(blocks)
        except Exception as e:
            logger.error(f"Error enumerating strategies: {str(e)}")
            raise

    # --- encode ---

    def encode(self, cgs: Cgs, initial: str, formula: str, cfg: CheckConfig,
               metadata_path: Optional[str] = None, external: Optional[str] = None,
               script_path: Optional[str] = None) -> str:
        """
        Real-arithmetic script for a coalition formula over behavioral strategies

        Args:
            external: Solver command; when set the script is written to
                ``script_path`` and the solver's answer is appended as a comment

        Returns:
            SMT-LIB2 text
        """
        self._require_initialized()
        try:
            f = parse_formula(formula, cgs.agents)
            if not isinstance(f, Coalition):
                raise FormulaError("encode needs a formula whose outermost operator is a coalition", f.span)
            script = encode(cgs, initial, f, cfg)
            if script.trivially_unsat():
                self.warn("threshold lies outside [0, 1]; the query is unsatisfiable")
            if metadata_path:
                Path(metadata_path).write_text(script.metadata_json() + "\n", encoding="utf-8")
            text = script.to_smtlib()
            if external:
                answer = run_external(script, external, script_path or "natpatl_query.smt2")
                text += f"; solver: {answer}\n"
            return text
        except Exception as e:
            logger.error(f"Error encoding formula: {str(e)}")
            raise

    # --- export ---

    def export_product(self, cgs: Cgs, initial: str, profile: Mapping[str, NatStrategy],
                       max_states: int) -> str:
        """Explicit-state dump of the game with the given strategies fixed."""
        self._require_initialized()
        try:
            mdp = fix_coalition(cgs, list(profile), profile, initial, max_states)
            logger.info(f"Exporting product with {mdp.size} states")
            return format_transitions(mdp)
        except Exception as e:
            logger.error(f"Error exporting product: {str(e)}")
            raise

    def export_automaton(self, ltl: str, kind: str, max_states: int) -> str:
        """HOA dump of the Büchi or Rabin automaton of a path formula."""
        self._require_initialized()
        try:
            f = parse_formula(ltl)
            automaton = ltl_to_nba(f, max_states) if kind == "nba" else ltl_to_dra(f, max_states)
            return to_hoa(automaton, to_text(f))
        except Exception as e:
            logger.error(f"Error exporting automaton: {str(e)}")
            raise


def aggregate_verdict(reports: Sequence[FormulaReport]) -> Verdict:
    """False if any formula is false, else unknown if any is unknown, else true."""
    verdicts = [report.verdict for report in reports]
    if Verdict.FALSE in verdicts:
        return Verdict.FALSE
    if Verdict.UNKNOWN in verdicts:
        return Verdict.UNKNOWN
    return Verdict.TRUE
