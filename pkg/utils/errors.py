"""
Exception tree shared by every backend module.

Each class carries a machine-readable `code` and the process exit status
that main.py maps it to.
"""


class FlockError(Exception):
    code = "error"
    exit_status = 1


class DomainError(FlockError, ValueError):
    code = "domain"
    exit_status = 2


class ParameterError(FlockError, ValueError):
    code = "parameter"
    exit_status = 2


class UsageError(FlockError, ValueError):
    code = "usage"
    exit_status = 2


class ConfigError(FlockError, ValueError):
    """Raised with every violation found while loading a run file, not just the first."""

    code = "config"
    exit_status = 2

    def __init__(self, violations: list[str], path: str | None = None):
        self.violations = list(violations)
        self.path = path
        where = f" in {path}" if path else ""
        lines = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(f"{len(self.violations)} config violation(s){where}:\n{lines}")


class HistoryUnderflowError(FlockError, LookupError):
    code = "history_underflow"
    exit_status = 1

    def __init__(self, message: str, required_window: float | None = None):
        self.required_window = required_window
        if required_window is not None:
            message = f"{message} (required window S(T) = {required_window:.6g})"
        super().__init__(message)


class InvariantViolationError(FlockError, RuntimeError):
    code = "invariant"
    exit_status = 1


class ConfigurationError(FlockError, RuntimeError):
    """Picard iteration failed to contract; the time window must shrink."""

    code = "picard_configuration"
    exit_status = 1


class InfeasibleError(FlockError, RuntimeError):
    code = "infeasible"
    exit_status = 3

    def __init__(self, message: str, report: dict | None = None):
        self.report = report or {}
        super().__init__(message)
