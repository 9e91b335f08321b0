"""Exception hierarchy. Each error knows the CLI exit code it maps to."""

from typing import List, Optional


class MgtLabError(Exception):
    exit_code = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ConfigError(MgtLabError):
    exit_code = 2

    def __init__(self, detail: str, key: Optional[str] = None):
        super().__init__(f"{key}: {detail}" if key else detail)
        self.key = key


class PreconditionError(MgtLabError):
    """An operation was called outside its contract."""

    exit_code = 2


class AssumptionViolation(MgtLabError):
    exit_code = 3

    def __init__(self, reports: list):
        self.reports = reports
        clauses: List[str] = [v for r in reports for v in r.violations]
        super().__init__("assumption violated: " + ", ".join(clauses))
        self.clauses = clauses


class NumericalFailure(MgtLabError):
    exit_code = 4

    def __init__(self, step: int, detail: str = "non-finite state"):
        super().__init__(f"{detail} at step {step}")
        self.step = step


class DomainError(MgtLabError, ValueError):
    exit_code = 2


class FitError(MgtLabError, ValueError):
    exit_code = 1
