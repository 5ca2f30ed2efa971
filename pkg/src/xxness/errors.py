"""Exception hierarchy shared by every module of the package."""


class XXNessError(Exception):
    """Base class; ``exit_code`` is what the CLI returns when it escapes."""

    exit_code = 1


class InvalidSizeError(XXNessError, ValueError):
    pass


class InvalidParameterError(XXNessError, ValueError):
    pass


class DomainError(XXNessError, ValueError):
    pass


class GapError(XXNessError, ValueError):
    """Lowest single-excitation energy ``x_0 + delta`` is not positive."""

    def __init__(self, energy):
        self.energy = float(energy)
        super().__init__(
            f"gap condition violated: lowest mode energy x_0 + delta = {self.energy!r} <= 0"
        )


class NumericError(XXNessError, ArithmeticError):
    exit_code = 2


class SymmetryError(XXNessError, ValueError):
    pass


class CapacityError(XXNessError, ValueError):
    pass


class PlanError(XXNessError, ValueError):
    pass


class FitError(XXNessError, ValueError):
    exit_code = 2


class ConfigError(XXNessError, ValueError):
    pass
