"""Exception types shared across the package."""


class GeometryMismatchError(ValueError):
    """Data was produced for a different grid/scan than requested."""


class CacheMismatchError(GeometryMismatchError):
    """A projection cache file does not match the requested geometry."""


class QuadratureError(RuntimeError):
    """A quadrature did not converge or an internal consistency check failed."""


class SolverError(RuntimeError):
    """Base class for optimizer failures."""


class StalledStepError(SolverError):
    """Every Gauss-Newton block was degenerate; no step direction exists."""


class InadmissibleStepError(SolverError):
    """Step could not be damped into the admissible region 1 + gamma > 0."""


class LineSearchError(SolverError):
    """Backtracking exhausted without sufficient decrease."""
