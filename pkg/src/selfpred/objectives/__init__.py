"""Self-prediction objectives, their tabular ideal counterparts and target handling."""

from .ideal import (
    NodeEmbedding,
    NotTabularError,
    StationarityResult,
    ZPComparison,
    belief_embedding,
    ezp_stationarity,
    ideal_zp_loss,
)
from .losses import (
    Batch,
    LossBreakdown,
    combine,
    gaussian_kl,
    gaussian_kl_np,
    op_loss,
    rp_loss,
    squared_error,
    zp_loss_kl,
    zp_loss_l2,
)
from .models import (
    TARGET_MODES,
    Encoder,
    EncoderSpec,
    LatentModel,
    RewardHead,
    TargetMode,
    clone_module,
    ema_update,
    param_distance,
)

__all__ = [
    "TARGET_MODES", "Batch", "Encoder", "EncoderSpec", "LatentModel", "LossBreakdown",
    "NodeEmbedding", "NotTabularError", "RewardHead", "StationarityResult", "TargetMode",
    "ZPComparison", "belief_embedding", "clone_module", "combine", "ema_update",
    "ezp_stationarity", "gaussian_kl", "gaussian_kl_np", "ideal_zp_loss", "op_loss",
    "param_distance", "rp_loss", "squared_error", "zp_loss_kl", "zp_loss_l2",
]
