"""Low-rank Strang splitting for the strongly damped semilinear wave equation."""
from .linalg import LowRankFactor, expm, thin_qr, truncated_svd
from .model import (
    GridSpec,
    ModelParams,
    NonlinearPair,
    PairState,
    ProblemPreset,
    TimeGrid,
    get_preset,
    sample_initial,
)
from .splitting import BlowUpError, integrate_fullrank
from .lowrank import LowRankPair, lowrank_integrate, truncate_state

__version__ = "0.1.0"
