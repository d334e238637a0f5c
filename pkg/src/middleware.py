"""
Command middleware for the NatPATL command line
"""

import time
import logging
import uuid
from argparse import Namespace
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Type

from config import Settings
from models import RunReport

logger = logging.getLogger(__name__)


@dataclass
class Command:
    """One command invocation travelling through the middleware stack."""
    name: str
    args: Namespace
    settings: Settings
    state: Dict[str, Any] = field(default_factory=dict)


Handler = Callable[[Command], RunReport]


class CommandMiddleware:
    """
    Base class: wraps the next handler, like an HTTP middleware wraps the app
    """

    def __init__(self, app: Handler):
        self.app = app

    def __call__(self, command: Command) -> RunReport:
        return self.dispatch(command, self.app)

    def dispatch(self, command: Command, call_next: Handler) -> RunReport:
        return call_next(command)


class LoggingMiddleware(CommandMiddleware):
    """
    Middleware for logging command runs and stamping reports with run id and timing
    """

    def dispatch(self, command: Command, call_next: Handler) -> RunReport:
        run_id = str(uuid.uuid4())
        start_time = time.time()
        logger.info(f"Run {run_id}: {command.name} {getattr(command.args, 'model', '')}")
        command.state["run_id"] = run_id

        try:
            report = call_next(command)
            process_time = time.time() - start_time
            logger.info(f"Run {run_id}: {command.name} finished in {process_time:.4f}s")
            report.run_id = run_id
            report.elapsed_seconds = round(process_time, 6)
            return report
        except Exception as e:
            process_time = time.time() - start_time
            logger.error(f"Run {run_id}: {str(e)} failed after {process_time:.4f}s")
            raise


class SeedMiddleware(CommandMiddleware):
    """
    NATPATL_SEED takes precedence over --seed so CI pins every simulation from one place
    """

    def dispatch(self, command: Command, call_next: Handler) -> RunReport:
        forced = command.settings.seed
        if forced is not None and hasattr(command.args, "seed"):
            if command.args.seed != forced:
                logger.info(f"NATPATL_SEED={forced} overrides --seed {command.args.seed}")
            command.args.seed = forced
        return call_next(command)


class CommandApp:
    """Dispatcher with a middleware stack; the last added middleware runs first."""

    def __init__(self, handler: Handler):
        self.handler = handler
        self.middleware: List[Type[CommandMiddleware]] = []

    def add_middleware(self, middleware: Type[CommandMiddleware]) -> None:
        self.middleware.insert(0, middleware)

    def __call__(self, command: Command) -> RunReport:
        app: Handler = self.handler
        for middleware in reversed(self.middleware):
            app = middleware(app)
        return app(command)
