"""Exception hierarchy shared across the simulator."""


class SimulationError(Exception):
    """Base class for all simulator errors."""


class InvalidSeedError(SimulationError):
    """PRBS seed is degenerate (all zeros)."""


class UnsupportedOrderError(SimulationError):
    """Requested PRBS or QAM order is not supported."""


class ParameterError(SimulationError):
    """A numeric parameter is out of its valid range."""


class AlignmentError(SimulationError):
    """Two sequences that must be compared have incompatible lengths."""


class FramingError(SimulationError):
    """Bit count does not fit an integer number of symbols/frames."""


class RateError(SimulationError):
    """Sample rates are not integer-related where they must be."""


class BandwidthError(SimulationError):
    """Channel plan does not fit into the composite simulation bandwidth."""


class DivergenceError(SimulationError):
    """Adaptive equalizer failed to converge during training."""

    def __init__(self, message, final_mse):
        super().__init__(message)
        self.final_mse = final_mse


class InfeasibleError(SimulationError):
    """Bit-loading target cannot be met on the given SNR profile."""

    def __init__(self, message, max_achievable_bits):
        super().__init__(message)
        self.max_achievable_bits = max_achievable_bits


class ConfigError(SimulationError):
    """Experiment configuration failed validation."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
