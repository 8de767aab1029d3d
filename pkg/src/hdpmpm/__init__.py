"""Hierarchical Dirichlet process mixture of products of multinomials.

A truncated stick-breaking Gibbs sampler for mixed-membership categorical
data with missing cells imputed inside the sampler, plus posterior profile
analysis and a synthetic-data / missingness laboratory.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DataError,
    HDPMPMError,
    InitializationError,
    NumericalError,
    ParameterError,
    PreconditionError,
    SaturationError,
    SchemaError,
)
from .model import (  # noqa: E402
    ChainConfig,
    Dataset,
    Hyperparameters,
    ModelState,
    init_state,
    sample_prior,
    stick_break,
    validate_dataset,
)
from .rng import RandomStream  # noqa: E402
from .sampler import Draw, PosteriorDraws, relabel_state, run_chain, sweep  # noqa: E402
from .validation import JointTestDims, validate_sampler  # noqa: E402

__all__ = [
    "__version__",
    "HDPMPMError", "DataError", "InitializationError", "NumericalError", "ParameterError",
    "PreconditionError", "SaturationError", "SchemaError",
    "ChainConfig", "Dataset", "Hyperparameters", "ModelState", "init_state", "sample_prior",
    "stick_break", "validate_dataset",
    "RandomStream",
    "Draw", "PosteriorDraws", "relabel_state", "run_chain", "sweep",
    "JointTestDims", "validate_sampler",
]
