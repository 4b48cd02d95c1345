"""Exception types raised across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class RecurrentError(DomainError):
    """The walk with these (d, alpha) is recurrent, so G(0) is infinite."""

    def __init__(self, d, alpha, what="this quantity"):
        self.d = d
        self.alpha = alpha
        super().__init__(
            f"(d={d}, alpha={alpha}) is recurrent: the walk is transient only for "
            f"d=1 with alpha<1, d=2 with alpha<2, or d>=3; {what} is undefined"
        )


class DivergentError(DomainError):
    """A requested integral diverges on this parameter branch."""


class GridTooSmall(ValueError):
    """Fourier grid cannot hold the spread of the walk at the requested time."""


class GuardViolation(ValueError):
    """Finite-size guard of a torus simulation is violated."""

    def __init__(self, msg, suggested_L=None):
        self.suggested_L = suggested_L
        super().__init__(msg)


class ConfigError(ValueError):
    """Invalid experiment configuration."""
