"""Exception types shared across the toolkit."""


class DexforgeError(Exception):
    """Base class for all toolkit errors."""


class ParseError(DexforgeError):
    """Malformed input document (syntax level)."""


class ValidationError(DexforgeError):
    """Structurally valid input that violates a model constraint."""


class DimensionMismatch(DexforgeError):
    """Inputs whose shapes or lengths disagree."""


class SingularUpdate(DexforgeError):
    """IK step produced a non-finite update (damping too small or degenerate Jacobian)."""


SolverError = SingularUpdate  # name used at the session/service boundary


class InvalidRotation(DexforgeError):
    """Matrix is not orthonormal with determinant +1."""


class DegenerateInput(DexforgeError):
    """6d rotation input too close to degenerate to orthonormalize."""


class MissingProvenance(DexforgeError):
    """Pointcloud operation requires per-point source pixels."""


class NoGeometry(DexforgeError):
    """Link has no visual primitive (strict sampling mode)."""


class ShapeMismatch(DexforgeError):
    """Network and batch shapes disagree."""


class NonFiniteState(DexforgeError):
    """Sampler iterate became non-finite (divergent vector field)."""


class CorruptShard(DexforgeError):
    """Shard failed checksum or structural checks."""


class VersionMismatch(DexforgeError):
    """Shard written by an incompatible format version."""


class InvalidRate(DexforgeError):
    """Resampling rate outside the valid range."""


class InsufficientData(DexforgeError):
    """Not enough trajectories to satisfy a mix specification."""


class SessionConflict(DexforgeError):
    """Concurrent mutation attempted on a busy session."""
