"""Exception types shared across the package."""


class AssumptionError(ValueError):
    """A standing model assumption or regime condition does not hold.

    The message names the violated condition verbatim so that the CLI can
    echo it and refuse to run (exit code 2).
    """


class QuadratureError(RuntimeError):
    """Numerical integration did not reach the requested tolerance."""


class ConfigError(ValueError):
    """Experiment configuration failed schema validation."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))
