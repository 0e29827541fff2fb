"""Online non-parametric forecasting with adaptively partitioned trees.

The package provides, bottom-up:

* :mod:`egtree.losses`          bounded convex losses on [0,1]^2
* :mod:`egtree.eg`              constant-tracking exponentiated-gradient forecaster
* :mod:`egtree.tree`            the adaptive partition tree over [0,1]^d
* :mod:`egtree.autoregressive`  lag-window wrappers and their growing mixture
* :mod:`egtree.oracles`         offline comparators (constant / histogram / Lipschitz)
* :mod:`egtree.processes`       seeded ergodic generators with a computable loss floor
* :mod:`egtree.harness`         experiment runner, logs, and bound verification
* :mod:`egtree.cli`             the ``egtree`` command
"""

from .autoregressive import LaggedForecaster, MetaForecaster, default_schedule
from .eg import EgState
from .errors import ContractViolationError, RejectedInputError
from .harness import RunConfig, RunLog, run, verify_bounds
from .losses import LossSpec
from .oracles import best_constant, best_histogram, best_lipschitz_1d
from .processes import ProcessSpec, generate, minimal_expected_loss
from .tree import PartitionTree

__all__ = [
    "ContractViolationError",
    "EgState",
    "LaggedForecaster",
    "LossSpec",
    "MetaForecaster",
    "PartitionTree",
    "ProcessSpec",
    "RejectedInputError",
    "RunConfig",
    "RunLog",
    "best_constant",
    "best_histogram",
    "best_lipschitz_1d",
    "default_schedule",
    "generate",
    "minimal_expected_loss",
    "run",
    "verify_bounds",
]

__version__ = "0.1.0"
