"""Exception hierarchy for the library.

Every error that callers are expected to handle programmatically gets its own
class; all inherit from :class:`TeichstabError` so a bare ``except
TeichstabError`` catches anything raised by this package on purpose.
"""


class TeichstabError(Exception):
    """Base class for all library errors."""


# ---------------------------------------------------------------- boundary
class MeanNotZero(TeichstabError):
    """Antiderivative requested for a function with nonzero mean."""


class GridMismatch(TeichstabError):
    """Two objects live on different boundary grids."""


# ---------------------------------------------------------------- dn maps
class WrongLength(TeichstabError):
    """Operation requires a specific boundary length (e.g. 2*pi for the disc)."""


class DegenerateImmersion(TeichstabError):
    """|F'| vanishes (or nearly vanishes) somewhere it must not."""


class NotInjective(TeichstabError):
    """Surface series fails the injectivity / immersion checks."""


# ---------------------------------------------------------------- traces
class AmbiguousRank(TeichstabError):
    """Singular values cluster at the rank threshold; projector ill-defined."""


class InducedTraceInvalid(TeichstabError):
    """A transferred trace fails verification against the target DN map."""


# ---------------------------------------------------------------- contour
class TooCloseToContour(TeichstabError):
    """Evaluation point violates the quadrature separation floor."""


class NonIntegerWinding(TeichstabError):
    """Winding integral does not round cleanly to an integer."""


class NotProjective(TeichstabError):
    """Cylinder condition (unique simple zero) fails at the queried point."""


class ChartTooLarge(TeichstabError):
    """Rectified chart window breaks monotonicity of the boundary abscissa."""


class ChartExceeded(TeichstabError):
    """Point lies outside the rectangle of a rectified chart."""


# ---------------------------------------------------------------- geodesics
class CausticDetected(TeichstabError):
    """Geodesic bundle Jacobian degenerates before the requested depth."""


class ChartExit(TeichstabError):
    """A geodesic leaves the chart rectangle before the requested depth."""


# ---------------------------------------------------------------- fixed point
class ContractionFailed(TeichstabError):
    """Frozen-Jacobian iteration is not a contraction on the given data."""


class NoConvergence(TeichstabError):
    """Iteration exceeded its step budget without meeting tolerance."""


# ---------------------------------------------------------------- qc map
class GlueMismatch(TeichstabError):
    """Two covering charts disagree about the map value beyond glue_tol."""


class MinimizationDiverged(TeichstabError):
    """Local minimization of the matching functional left its basin."""


class OrientationViolated(TeichstabError):
    """|mu| >= 1 at a probe: the map is not orientation preserving there."""


class InvalidDilatation(TeichstabError):
    """Dilatation K < 1 passed where K >= 1 is required."""


class EmptyCloud(TeichstabError):
    """Hausdorff distance of an empty point cloud requested."""
