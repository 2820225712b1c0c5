"""Exception hierarchy shared by all solver components."""


class MildNSError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(MildNSError):
    """Invalid parameters, mismatched grids or unsupported option combinations."""


class DomainError(MildNSError):
    """An operator was applied outside its domain (e.g. nonzero mean for an inverse)."""


class InputError(MildNSError):
    """Malformed runtime input such as an inconsistent velocity history."""


class DensityBandError(MildNSError):
    """The density perturbation left the admissible band."""


class NumericalError(MildNSError):
    """An iterative solve failed to reach its tolerance."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class DivergenceError(MildNSError):
    """The fixed-point iteration stopped contracting."""

    def __init__(self, message: str, level: int, ratios: list):
        super().__init__(f"{message} at level {level}; ratios={ratios}")
        self.level = level
        self.ratios = list(ratios)


class NumericalBlowup(MildNSError):
    """Non-finite values appeared in the state."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} at step {step}")
        self.step = step


class MarchError(MildNSError):
    """The global restart procedure could not continue."""

    def __init__(self, message: str, k0: float = float("nan")):
        super().__init__(f"{message} (K0={k0:.4g})")
        self.k0 = k0
