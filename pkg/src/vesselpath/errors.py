"""Exception hierarchy shared by the library, CLI and service.

Each error class carries a process exit code so the CLI can map failures
to distinct, documented return values.
"""


class VesselPathError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ParameterError(VesselPathError, ValueError):
    """Invalid parameter or configuration value."""

    exit_code = 2


class IngestionError(VesselPathError, ValueError):
    """Unreadable or inconsistent input files."""

    exit_code = 3


class DomainError(VesselPathError, ValueError):
    """A point or path left the image domain."""

    exit_code = 4


class ConstructionError(VesselPathError, ValueError):
    """A tensor or frame failed a structural check (PSD, orthonormality)."""

    exit_code = 5


class DegenerateFeatureRangeError(ConstructionError):
    """The feature map is flat (max 0); the lifted metric is undefined.

    Callers should fall back to the plain 2D anisotropic solve.
    """

    exit_code = 5


class PropagationExhaustedError(VesselPathError, RuntimeError):
    """Front propagation ran out of reachable nodes before the target."""

    exit_code = 6


class TraceError(VesselPathError, RuntimeError):
    """Geodesic backtracking failed."""

    exit_code = 7


class TraceDivergedError(TraceError):
    """Backtracking exceeded its step budget without reaching the seed."""


class StationaryPointError(TraceError):
    """The action-map gradient vanished away from the seed."""


class RefinementFailedError(VesselPathError, RuntimeError):
    """The refinement tube does not connect the path endpoints."""

    exit_code = 8
