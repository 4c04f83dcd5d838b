"""Monte-Carlo simulator for near-field SWIPT with very large planar arrays."""

__version__ = "0.1.0"

from .errors import ConfigurationError, DomainError, SingularChannelError
from .experiments import ExperimentSpec, default_spec, run_experiment
from .records import ExperimentRecord, read_csv, summarize, write_csv

__all__ = [
    "ConfigurationError", "DomainError", "SingularChannelError",
    "ExperimentSpec", "default_spec", "run_experiment",
    "ExperimentRecord", "read_csv", "summarize", "write_csv",
    "__version__",
]
