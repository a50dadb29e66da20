"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class RadialBoundsError(Exception):
    """Base class; ``module`` names the pipeline stage that raised."""

    module = "radialbounds"


class ProfileError(RadialBoundsError, ValueError):
    module = "profile"


class NonPositiveRadius(ProfileError):
    pass


class DimensionMismatch(ProfileError):
    pass


class NonMonotoneTable(ProfileError):
    pass


class NegativeHEnvelope(ProfileError):
    pass


class EvalOutsideTable(ProfileError):
    pass


class JacobiError(RadialBoundsError):
    module = "jacobi"


class SigmaVanished(JacobiError):
    """The warping function reached zero at ``r_star`` before the requested radius."""

    def __init__(self, r_star: float, message: str | None = None):
        self.r_star = float(r_star)
        super().__init__(message or f"sigma vanishes at r* = {r_star:.12g}")


class StepUnderflow(JacobiError):
    def __init__(self, last_good: float, message: str | None = None):
        self.last_good = float(last_good)
        super().__init__(message or f"integrator step underflow after r = {last_good:.12g}")


class SigmaNotPositive(RadialBoundsError):
    module = "isoperimetric"


class MonteCarloError(RadialBoundsError, ValueError):
    module = "montecarlo"


class DriftBlowup(MonteCarloError):

    def __init__(self, radius: float, drift: float, dt: float):
        self.radius = float(radius)
        self.drift = float(drift)
        self.dt = float(dt)
        super().__init__(
            f"regular drift {drift:.6g} at rho = {radius:.6g} exceeds 1/sqrt(dt) = "
            f"{dt ** -0.5:.6g}; shrink dt or enable adaptive stepping"
        )


class ParseError(RadialBoundsError):
    module = "cli"


class UnknownParameter(RadialBoundsError):
    module = "cli"
