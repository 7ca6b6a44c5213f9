"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition (shape, finiteness, symmetry, ...)."""


class SingularityError(ArithmeticError):
    """A factorization target is (numerically) rank deficient or not positive definite."""


class FormatError(ValueError):
    """A file does not parse under the declared format."""


class ConfigError(ValueError):
    """An experiment configuration is missing or inconsistent; names the offending key."""


class TubeViolationError(RuntimeError):
    """A run produced a stacked mean outside the projection tube.

    Signals that the iterates left the neighborhood where the nearest-point
    projection is single valued, typically because the initial agents were too
    spread out or the step size too large.
    """

    def __init__(self, iteration, agent, message=""):
        self.iteration = iteration
        self.agent = agent
        detail = message or "projection target is rank deficient"
        super().__init__(
            f"projection tube violated at iteration {iteration}"
            + (f", agent {agent}" if agent is not None else "")
            + f": {detail}"
        )
        # Partial results attached by the run loop so callers can persist them.
        self.records = []
