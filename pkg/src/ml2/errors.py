"""Exception types shared across the package."""


class ML2Error(Exception):
    """Base class for all package-specific errors."""


class NonIncreasingKnots(ML2Error, ValueError):
    """Graph knots must be strictly increasing."""


class LengthMismatch(ML2Error, ValueError):
    """Knot and value lists must have equal length."""


class EmptyCurve(ML2Error, ValueError):
    """A curve with no segments cannot be integrated."""


class NonFiniteIntegrand(ML2Error, ArithmeticError):
    """The integrand returned NaN at a point away from every atom."""


class RadiusTooLarge(ML2Error, ValueError):
    """A probe circle reached another atom of the weight."""


class SampleOnZero(ML2Error, ValueError):
    """A sample point coincides with an odd-multiplicity zero and nonzero
    values were requested."""


class DivergentNorm(ML2Error, ArithmeticError):
    """A weighted L2 norm needed by a fit failed to converge.

    Carries the offending region and integrand description.
    """

    def __init__(self, region, what=""):
        self.region = region
        self.what = what
        super().__init__(f"divergent weighted norm of {what or 'integrand'} on {region}")


class DeltaTooLarge(ML2Error, ValueError):
    """Cut-off arcs around zeros overlap or leave the curve."""


class TangencyViolated(ML2Error, ValueError):
    """The externally tangent disk condition fails at a sampled point."""


class EndpointMismatch(ML2Error, ValueError):
    """Targets of union components disagree at a shared point."""


class ConfigError(ML2Error, ValueError):
    """A scenario configuration is malformed or inconsistent."""
