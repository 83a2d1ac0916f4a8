"""Exception hierarchy shared by the solvers and the sweep driver."""


class LLHMMError(Exception):
    """Base class for all errors raised by this package."""


class NumericalError(LLHMMError):
    """A numerical procedure failed; the CLI maps these to exit code 3."""


class GridTooCoarse(NumericalError):
    pass


class GridMismatch(LLHMMError):
    pass


class IllConditioned(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class FixedPointDiverged(NumericalError):
    pass


class DegenerateData(NumericalError):
    pass


class TooLarge(LLHMMError):
    pass


class WindowExceedsDomain(LLHMMError):
    pass


class Degenerate(NumericalError):
    """Rate fit impossible, e.g. non-positive error values."""


class ConfigInvalid(LLHMMError):
    """Sweep configuration rejected; ``problems`` lists field-level diagnostics."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
