"""Self-learned manifold priors for free-breathing dynamic MRI at desk scale.

A denoising autoencoder is trained on k-space navigator time profiles and its
residual regularizes a multi-coil radial reconstruction. A linear temporal
subspace model serves as the baseline.
"""

from .errors import (ConfigError, DegenerateInputError, DimensionError, NumericalError,
                     ReconError)

__version__ = "0.1.0"

__all__ = ["ConfigError", "DegenerateInputError", "DimensionError", "NumericalError",
           "ReconError", "__version__"]
