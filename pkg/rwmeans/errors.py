"""Exception types shared by the rwmeans library and CLI."""

from typing import List


class RwmError(Exception):
    """Base class for every error raised on purpose by rwmeans."""


class InvalidArgumentError(RwmError, ValueError):
    """An input violates a documented precondition."""


class ConfigError(RwmError):
    """An experiment config failed validation.

    Carries every problem found so the CLI can report them all at once.
    """

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems) or "invalid config")
