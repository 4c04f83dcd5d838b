"""Exception types raised by the simulator."""

import numpy as np


class ConfigurationError(ValueError):
    """Invalid system, geometry, placement or experiment configuration."""


class DomainError(ValueError):
    """An input lies outside the validity domain of a model."""


class SingularChannelError(np.linalg.LinAlgError):
    """The stacked channel matrix is rank deficient beyond tolerance."""
