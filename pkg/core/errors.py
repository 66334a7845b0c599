"""Exception and warning types shared by every demirage module.

Errors carry a short machine-readable ``kind`` so the CLI can report them as
JSON. Recoverable numerical conditions are warnings, not errors.
"""


class DemirageError(Exception):
    """Base class for all demirage failures."""
    kind = "error"


class ConfigError(DemirageError, ValueError):
    """Invalid or unknown configuration value."""
    kind = "config"


class GeometryError(DemirageError, ValueError):
    """Invalid curve parameters or discretization."""
    kind = "geometry"


class KernelError(DemirageError, ValueError):
    """Fundamental solution evaluated at the singularity or with a bad wavenumber."""
    kind = "kernel"


class QuadratureError(DemirageError, ValueError):
    """Operator assembly or evaluation precondition violated."""
    kind = "quadrature"


class SpectrumError(DemirageError):
    """Neumann-Poincaré eigensolve or dispersion evaluation failed."""
    kind = "spectrum"


class ForwardSolveError(DemirageError):
    """Transmission problem could not be solved reliably."""
    kind = "forward"


class ImagingError(DemirageError, ValueError):
    """Bad input to the imaging functional."""
    kind = "imaging"


class LocalizationError(DemirageError, ValueError):
    """Bad localization problem setup."""
    kind = "localize"


class AccuracyWarning(UserWarning):
    """A result was computed but with degraded accuracy."""


class ResonanceNotice(UserWarning):
    """A mode has no resonance in the requested frequency range."""


class RegularizationNotice(UserWarning):
    """A least-squares solve needed regularization."""
