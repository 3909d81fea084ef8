"""Exception and warning types shared across the package."""


class HcromError(Exception):
    """Base class for all errors raised by hcrom."""


class ConfigError(HcromError, ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class NumericalError(HcromError, ArithmeticError):
    """A numerical routine failed (CLI exit code 3)."""


class SolverError(NumericalError):
    """Linear solve did not reach the requested residual.

    Attributes
    ----------
    residual : float
        Relative residual ``||Mx - b|| / ||b||`` at termination.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class InfiniteEnergyError(NumericalError):
    """A field with energy on an infinite-diffusivity subdomain was measured in the y-norm."""


class StabilityError(NumericalError):
    """PBDW saddle system is singular (mu_n is infinite)."""


class ResolutionWarning(UserWarning):
    """Mesh too coarse to resolve a requested quantity."""


class LimitSpaceWarning(UserWarning):
    """The reduced space contains no function constant on the infinite subdomains."""
