"""clmsep: chain-ladder reserving and large-exposure Monte Carlo verification.

Library layout:

    triangle     run-off triangle data model and CSV I/O
    models       model specification (exposure, intensities, delay/size law)
    simulate     compound-Poisson and renewal claims-square simulation
    mack         development factors, variance estimators, Mack's MSEP
    asymptotics  closed-form large-exposure limits and derived parameters
    oracle       exact standardized conditional MSEP and its decomposition
    harness      Monte Carlo experiments with deterministic parallel runs
    cli          command-line entry point (``clmsep``)

The per-replication estimator chains run on a compiled Cython kernel when
available, with a bit-identical pure-Python fallback selected at import
(see ``clmsep._kernels.active_backend``).
"""

from ._kernels import active_backend
from ._version import __version__
from .exceptions import ClmsepError, DataError, EstimationError, SpecError
from .mack import DevEstimates, MsepReport, TailRule
from .models import ClaimSize, Interarrival, JointAtom, ModelSpec, dist_moments
from .oracle import OracleResult
from .simulate import SimulatedSquare
from .triangle import Triangle, from_incremental, load_csv, save_csv, to_incremental

__all__ = [
    "ClaimSize",
    "ClmsepError",
    "DataError",
    "DevEstimates",
    "EstimationError",
    "Interarrival",
    "JointAtom",
    "ModelSpec",
    "MsepReport",
    "OracleResult",
    "SimulatedSquare",
    "SpecError",
    "TailRule",
    "Triangle",
    "__version__",
    "active_backend",
    "dist_moments",
    "from_incremental",
    "load_csv",
    "save_csv",
    "to_incremental",
]
