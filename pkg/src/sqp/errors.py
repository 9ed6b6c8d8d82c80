"""Exception hierarchy. Each class maps to a CLI exit code."""


class SQPError(Exception):
    exit_code = 1


class ConfigError(SQPError):
    exit_code = 3


class FormatError(SQPError):
    """Malformed input file; carries the 1-based line number when known."""

    exit_code = 4

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.path = path
        self.line = line


class IndexBuildError(SQPError):
    exit_code = 4


class GridError(SQPError, KeyError):
    exit_code = 4

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class TimingError(SQPError):
    exit_code = 5


class PhaseError(SQPError):
    """A phase of ``run_experiment`` failed; names the phase, trial and fold."""

    exit_code = 5

    def __init__(self, phase: str, trial: int, fold: int, cause: BaseException):
        super().__init__(f"{phase} phase failed (trial {trial}, fold {fold}): {cause}")
        self.phase = phase
        self.trial = trial
        self.fold = fold
