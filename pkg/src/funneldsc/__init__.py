"""Prescribed-time funnel tracking control for strict-feedback systems."""

from .perf import (
    ErrorTransform,
    FunnelBreachError,
    PerfFunction,
    TransformKind,
    perf_from_terminal,
)
from .fuzzy import AdaptiveWeights, GaussianGrid
from .plants import (
    PlantBounds,
    ReferenceSignal,
    StrictFeedbackPlant,
    make_electromechanical,
    make_single_link,
)
from .controller import (
    ControlMode,
    ControllerChain,
    ControllerState,
    StageGains,
    StageSignals,
)
from .sim import (
    SimConfig,
    SimulationDivergenceError,
    Trajectory,
    VerificationReport,
    convergence_check,
    export_trajectory,
    run,
    step,
)

__version__ = "0.1.0"
