"""Style-based generator, residual critic, losses and the training loop."""

from .config import GanConfig
from .training import ModelState, TrainingDiverged, init_state, train, train_step

__all__ = ["GanConfig", "ModelState", "TrainingDiverged", "init_state", "train", "train_step"]
