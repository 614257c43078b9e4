"""Exception types shared across the package."""


class SingpropError(Exception):
    """Base class for every error raised by this package."""


class ZeroFrequency(SingpropError, ValueError):
    """A homogeneous symbol was differentiated or evaluated at xi = 0."""


class OrderExceeded(SingpropError, ValueError):
    """Requested derivative or expansion order is beyond what is supported."""


class SymbolError(SingpropError, ValueError):
    """A symbol does not satisfy the structural requirements of an operation."""


class InvalidSteps(SingpropError, ValueError):
    """Number of path steps is not a power of two (or is too small)."""


class InvalidFactor(SingpropError, ValueError):
    """Coarsening factor is not a power of two dividing the step count."""


class BlowUp(SingpropError, ArithmeticError):
    """Phase-space state left the admissible region |x| + |xi| <= 1e12.

    Attributes
    ----------
    step : int or None
        Time step at which the threshold was crossed.
    sample : int or None
        Monte Carlo sample index, when raised from an ensemble.
    """

    def __init__(self, message, step=None, sample=None):
        super().__init__(message)
        self.step = step
        self.sample = sample


class GridTooLarge(SingpropError, ValueError):
    """Direct quantization requested on a grid beyond the supported size."""


class Instability(SingpropError, ArithmeticError):
    """Explicit time stepping violated the stability heuristic.

    Attributes
    ----------
    step : int or None
        Offending step index.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class EmptyBand(SingpropError, ValueError):
    """No grid frequencies fall inside the requested cone and band."""


class ConfigError(SingpropError, ValueError):
    """Scenario configuration failed validation.

    Attributes
    ----------
    path : str
        Dotted path of the offending field.
    """

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
