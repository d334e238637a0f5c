"""
Command line front end for the NatPATL model checker
"""

import argparse
import logging
import sys
import time
from typing import List, Optional, Sequence

from pydantic import ValidationError

from config import VERSION, Settings, load_settings
from errors import NatpatlError, UsageError
from middleware import Command, CommandApp, LoggingMiddleware, SeedMiddleware
from models import CheckConfig, ErrorResponse, RunReport, SimulationConfig, Verdict
from natstrat import Setting
from services import ModelCheckingService, aggregate_verdict, read_formulas

logger = logging.getLogger(__name__)

TOOL = f"natpatl {VERSION}"

EXIT_TRUE = 0
EXIT_FALSE = 1
EXIT_UNKNOWN = 2
EXIT_USER_ERROR = 3
EXIT_INTERNAL_ERROR = 4

_VERDICT_STATUS = {Verdict.TRUE: EXIT_TRUE, Verdict.FALSE: EXIT_FALSE, Verdict.UNKNOWN: EXIT_UNKNOWN}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message, self.prog)


def _checker_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--setting", choices=[s.value for s in Setting], default=Setting.MEMORYLESS.value,
                        help="strategy setting: r (memoryless) or R (recall)")
    parser.add_argument("--vocab", default="literals", help="literals | minterms | vocabulary file")
    parser.add_argument("--solve", default="exact", help="exact | iter:TOL")
    parser.add_argument("--opponent", default="mdp", help="mdp | enumerate:BOUND")
    parser.add_argument("--jobs", type=int, default=None, help="worker threads")
    parser.add_argument("--strict-support", action="store_true", help="literal availability reading")
    parser.add_argument("--max-product-states", type=int, default=None, help="state budget")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="natpatl", description="Model checker for NatPATL and NatPATL* over stochastic games")
    parser.add_argument("--version", action="version", version=TOOL)
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("model", help="model file (.cgs)")
        sub.add_argument("--initial", help="initial state (default: the model's init)")
        sub.add_argument("--json", action="store_true", help="print the JSON report")
        sub.add_argument("--log-level", default=None, help="logging level")
        return sub

    check = command("check", "decide formulas at the initial state")
    source = check.add_mutually_exclusive_group(required=True)
    source.add_argument("--formula", action="append", help="formula text (repeatable)")
    source.add_argument("--formulas", help="formula list file (.nf)")
    check.add_argument("--profile", help="comma-separated strategy files to verify instead of searching")
    _checker_flags(check)

    simulate = command("simulate", "Monte-Carlo estimate under a full strategy profile")
    simulate.add_argument("--profile", required=True, help="comma-separated strategy files, one per agent")
    simulate.add_argument("--until", help="path formula 'safe U target' over Boolean conditions")
    simulate.add_argument("--n", type=int, default=100_000, help="number of plays")
    simulate.add_argument("--seed", type=int, default=0, help="root seed (NATPATL_SEED overrides)")
    simulate.add_argument("--horizon", type=int, default=None, help="step bound (default: escalate)")
    simulate.add_argument("--batches", type=int, default=16, help="independently seeded batches")
    simulate.add_argument("--tolerance", type=float, default=1e-3, help="undecided-mass bound")
    simulate.add_argument("--traces", type=int, default=None, help="print this many traces instead")
    simulate.add_argument("--jobs", type=int, default=None, help="worker threads")

    enumerate_ = command("enumerate", "list bounded-complexity strategies of one agent")
    enumerate_.add_argument("--agent", required=True)
    enumerate_.add_argument("--k", type=int, required=True, help="complexity bound")
    enumerate_.add_argument("--setting", choices=[s.value for s in Setting], default=Setting.MEMORYLESS.value)
    enumerate_.add_argument("--vocab", default="literals")
    enumerate_.add_argument("--behavioral", action="store_true", help="list action supports instead")

    encode = command("encode", "real-arithmetic script for behavioral strategies")
    encode.add_argument("--formula", required=True, help="coalition formula")
    encode.add_argument("--metadata", help="write the variable map as JSON to this file")
    encode.add_argument("--solve-with-external", nargs="?", const="", default=None,
                        help="run the solver command (default: NATPATL_SMT_SOLVER) on the script")
    encode.add_argument("--script", help="script path handed to the external solver")
    _checker_flags(encode)

    export = command("export", "dump a product or an automaton")
    target = export.add_mutually_exclusive_group(required=True)
    target.add_argument("--profile", help="comma-separated strategy files to fix")
    target.add_argument("--ltl", help="path formula to translate")
    export.add_argument("--automaton", choices=["dra", "nba"], default="dra")
    export.add_argument("--max-product-states", type=int, default=None)
    return parser


def _paths(value: Optional[str]) -> List[str]:
    return [part.strip() for part in value.split(",") if part.strip()] if value else []


def _check_config(args: argparse.Namespace, settings: Settings) -> CheckConfig:
    return CheckConfig(setting=Setting(args.setting), vocab=args.vocab, opponent=args.opponent, solve=args.solve,
                       jobs=args.jobs or settings.jobs, strict_support=args.strict_support,
                       max_product_states=args.max_product_states or settings.max_product_states)


def make_handler(service: ModelCheckingService):
    """Command dispatch over the service."""

    def handle(command: Command) -> RunReport:
        args, settings = command.args, command.settings
        cgs, initial = service.load(args.model, args.initial)
        report = RunReport(tool=TOOL, command=command.name, model=args.model, initial=initial)

        if command.name == "check":
            cfg = _check_config(args, settings)
            formulas = args.formula or read_formulas(args.formulas)
            profile = service.load_profile(cgs, _paths(args.profile), strict=cfg.strict_support) or None
            report.config = cfg.model_dump(mode="json")
            report.results = service.check_formulas(cgs, initial, formulas, cfg, profile)
        elif command.name == "simulate":
            profile = service.load_profile(cgs, _paths(args.profile))
            sim = SimulationConfig(samples=args.n, horizon=args.horizon, seed=args.seed, batches=args.batches,
                                   tolerance=args.tolerance)
            report.config = sim.model_dump(mode="json")
            if args.traces is not None:
                report.output = service.traces(cgs, initial, profile, args.horizon or 10, args.traces, args.seed)
            else:
                if not args.until:
                    raise UsageError("simulate needs --until unless --traces is given", "--until")
                report.config["until"] = args.until
                report.estimate = service.simulate(cgs, initial, profile, args.until, sim,
                                                   args.jobs or settings.jobs)
        elif command.name == "enumerate":
            report.config = {"agent": args.agent, "k": args.k, "setting": args.setting, "vocab": args.vocab,
                             "behavioral": args.behavioral}
            report.output, count = service.enumerate(cgs, args.agent, args.k, Setting(args.setting), args.vocab,
                                                     args.behavioral)
            report.config["count"] = count
        elif command.name == "encode":
            cfg = _check_config(args, settings)
            report.config = cfg.model_dump(mode="json")
            external = args.solve_with_external
            if external == "":
                external = settings.smt_solver
                if not external:
                    raise UsageError("no solver command: pass one or set NATPATL_SMT_SOLVER", "--solve-with-external")
            report.output = service.encode(cgs, initial, args.formula, cfg, args.metadata, external, args.script)
        elif command.name == "export":
            budget = args.max_product_states or settings.max_product_states
            if args.ltl:
                report.config = {"ltl": args.ltl, "automaton": args.automaton}
                report.output = service.export_automaton(args.ltl, args.automaton, budget)
            else:
                profile = service.load_profile(cgs, _paths(args.profile))
                report.config = {"profile": sorted(profile)}
                report.output = service.export_product(cgs, initial, profile, budget)
        report.warnings = list(service.warnings)
        return report

    return handle


def exit_status(report: RunReport) -> int:
    if report.command != "check":
        return EXIT_TRUE
    return _VERDICT_STATUS[aggregate_verdict(report.results)]


def render(report: RunReport) -> str:
    """Human-readable rendering of a report."""
    if report.command == "check":
        lines = []
        width = max((len(result.formula) for result in report.results), default=0)
        for result in report.results:
            value = f"  p={result.value}" if result.value is not None else ""
            lines.append(f"{result.formula.ljust(width)}  {result.verdict.value.upper()}{value}")
            for witness in result.witnesses:
                lines.append(f"  witness at {witness.state} for {witness.formula}:")
                for agent, text in witness.strategies.items():
                    for pair in text.splitlines():
                        lines.append(f"    {agent}: {pair}")
        return "\n".join(lines) + "\n"
    if report.estimate is not None:
        e = report.estimate
        return (f"estimate {e.value:.6f}  99% [{e.lower:.6f}, {e.upper:.6f}]  n={e.samples} "
                f"horizon={e.horizon} undecided={e.undecided:.6f}\n")
    return report.output or ""


def _error(code: str, detail: str, as_json: bool) -> None:
    response = ErrorResponse(detail=detail, error_code=code, timestamp=time.strftime("%Y-%m-%d %H:%M:%S"))
    if as_json:
        print(response.model_dump_json(indent=2))
    else:
        print(f"natpatl: error [{code}]: {detail}", file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    as_json = "--json" in (argv if argv is not None else sys.argv[1:])
    try:
        settings = load_settings()
    except ValidationError as e:
        _error("INVALID_ENVIRONMENT", str(e), as_json)
        return EXIT_USER_ERROR

    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        _error(e.error_code, e.message, as_json)
        return EXIT_USER_ERROR
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(level=(args.log_level or settings.log_level).upper(), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    service = ModelCheckingService(settings)
    app = CommandApp(make_handler(service))
    app.add_middleware(SeedMiddleware)
    app.add_middleware(LoggingMiddleware)

    service.initialize()
    try:
        report = app(Command(args.command, args, settings))
    except (NatpatlError, ValidationError, OSError) as e:
        code = e.error_code if isinstance(e, NatpatlError) else type(e).__name__.upper()
        _error(code, str(e), args.json)
        return EXIT_USER_ERROR
    except Exception as e:
        logger.exception(f"Unhandled exception: {str(e)}")
        _error("INTERNAL_ERROR", "internal error", args.json)
        return EXIT_INTERNAL_ERROR
    finally:
        service.cleanup()

    if args.json:
        print(report.model_dump_json(indent=2))
    else:
        sys.stdout.write(render(report))
    return exit_status(report)
