"""High-order time discretisations of the nonlinear filtering problem.

Monte Carlo estimators for the discretised filter, their pathwise (robust)
counterparts, reference oracles and an experiment harness.
"""

from .errors import CapabilityError, FilterError, NumericBlowUp, PathParseError, RejectedInput
from .likelihood import (FilterEstimate, Functional, estimate_filter, gamma_bound, gamma_min_slope,
                         gamma_sup, gamma_trunc, make_functional)
from .model import InitialLaw, ModelSpec, bounded_sensor, linear_gaussian, make_model
from .oracle import iterated_moment_oracle, kalman_bucy, reference_filter
from .paths import (FineGrid, ObservationRecord, Partition, read_path, simulate_scenario,
                    uniform_grid, write_path)
from .robust import (ObservationPath, RobustBank, RobustEstimate, estimate_robust,
                     lipschitz_probe)

__all__ = [
    "CapabilityError", "FilterError", "NumericBlowUp", "PathParseError", "RejectedInput",
    "FilterEstimate", "Functional", "estimate_filter", "gamma_bound", "gamma_min_slope",
    "gamma_sup", "gamma_trunc", "make_functional", "InitialLaw", "ModelSpec", "bounded_sensor", "linear_gaussian",
    "make_model", "iterated_moment_oracle", "kalman_bucy", "reference_filter", "FineGrid",
    "ObservationRecord", "Partition", "read_path", "simulate_scenario", "uniform_grid",
    "write_path", "ObservationPath", "RobustBank", "RobustEstimate", "estimate_robust",
    "lipschitz_probe",
]
