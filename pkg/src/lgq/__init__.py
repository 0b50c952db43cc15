"""Temperature-annealed soft-to-hard vector quantization with learnable codebooks."""

__version__ = "0.1.0"

from .assignment import AnnealSchedule, AssignmentMatrix, pairwise_energy, soft_assign, tau_at_epoch
from .codebook import Codebook, drift_report, init_codebook, load_checkpoint, save_checkpoint
from .losses import Instance, LossBreakdown, loss_gradients
from .metrics import TrainRecord, usage_stats
from .quantizer import QuantizeResult, quantize, ste_backward
from .trainer import DataConfig, TrainConfig, make_dataset, train

__all__ = [
    "AnnealSchedule", "AssignmentMatrix", "Codebook", "DataConfig", "Instance", "LossBreakdown",
    "QuantizeResult", "TrainConfig", "TrainRecord", "drift_report", "init_codebook", "load_checkpoint",
    "loss_gradients", "make_dataset", "pairwise_energy", "quantize", "save_checkpoint", "soft_assign",
    "ste_backward", "tau_at_epoch", "train", "usage_stats",
]
