"""Continuous-time spatial capture-recapture with detection memory.

The memory model (MSCR) makes an individual's detection rate depend on its
latent activity center and on the trap and time of its previous detection
through an Ornstein-Uhlenbeck-type hazard; the standard continuous-time
SCR model is its memoryless limiting case. The package simulates such
data, fits both models by maximum likelihood with midpoint time quadrature
and a uniform spatial mesh, estimates abundance with a Horvitz-Thompson
step and delta-method variance, and maps activity-center densities.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    DataError,
    DomainError,
    InitializationError,
    MscrError,
    NumericalError,
)
from .geometry import (
    SpatialMesh,
    SurveyWindow,
    TrapArray,
    build_mesh,
    default_trap_grid,
    region_from_traps,
)
from .hazard import (
    MSCR,
    SCR,
    MemoryState,
    ModelParams,
    TimeGrid,
    cumulative_hazard,
    cumulative_limiting_hazard,
    hazard,
    limiting_hazard,
    n_subintervals,
    ou_mean,
    ou_variance,
    survival,
)
from .likelihood import (
    CaptureHistory,
    Dataset,
    LikelihoodEvaluator,
    detect_prob,
    detect_prob_given_ac,
    history_density_given_ac,
    log_history_density_given_ac,
    marginal_history_density,
    neg_log_likelihood,
)
from .inference import (
    AcSurface,
    FitResult,
    ac_surface,
    aic_value,
    default_init,
    fit,
    ht_abundance,
    ht_variance,
    lognormal_ci_N,
    wald_ci_N,
)
from .simulation import (
    SimMscrConfig,
    SimOuConfig,
    SimStudyReport,
    SimulatedData,
    StudyConfig,
    run_sim_study,
    simulate_mscr,
    simulate_ou,
)

__all__ = [name for name in dir() if not name.startswith("_")]
