"""
Error types
Exception hierarchy shared by the numerics, beam, tomography and entropy services.
Each class carries the process exit code the CLI reports for it.
"""


class BeamTomoError(Exception):
    """Base class for every error raised by the beam tomography services"""

    exit_code = 1


class ValidationError(BeamTomoError, ValueError):
    """Bad input: flags, files, parameters outside their domain"""

    exit_code = 1


class ConfigurationError(ValidationError):
    """Malformed BEAMTOMO_* environment setting"""


class DegenerateQueryError(ValidationError):
    """A tomogram query with (mu, nu) = (0, 0) on some axis"""


class GridTooSmallError(ValidationError):
    """Sampling grid does not cover the mode's turning points plus tail"""


class ConvergenceError(BeamTomoError, ArithmeticError):
    """Numerical result failed its refinement check"""

    exit_code = 2


class AliasingError(ConvergenceError):
    """Propagated field wraps around the periodic grid"""


class DegenerateBranchError(ConvergenceError):
    """Closed-form Hermite-Gaussian integral evaluated at 1 - alpha**2 ~ 0"""


class InvariantViolation(BeamTomoError):
    """A verified identity or inequality does not hold"""

    exit_code = 3
