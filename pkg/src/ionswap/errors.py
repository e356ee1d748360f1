"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Bad configuration: unknown channel, missing file, invalid parameter."""


class CalibrationError(ConfigurationError):
    """Trap calibration could not bracket or converge to the targets."""


class PhysicsError(RuntimeError):
    """Simulation entered an unphysical regime (escape, instability)."""


class IonEscapeError(PhysicsError):
    def __init__(self, time_us: float, ion_index: int):
        super().__init__(
            f"ion {ion_index} left the trapping region at t = {time_us:.3f} us")
        self.time_us = time_us
        self.ion_index = ion_index


class UnstableConfigurationError(PhysicsError):
    """Normal-mode analysis found a negative curvature direction."""


class FitError(RuntimeError):
    """Non-convergent or degenerate fit."""
