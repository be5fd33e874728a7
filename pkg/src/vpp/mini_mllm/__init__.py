"""Desk-scale grounding model with global and local position prompts."""

from .checkpoint import (
    CheckpointError,
    config_from_dict,
    config_to_dict,
    load_checkpoint,
    read_loss_csv,
    save_checkpoint,
    write_loss_csv,
)
from .gradcheck import CoordCheck, GradCheckReport, check_gradients, grad_check
from .model import GROUPS, ContractError, Fusion, LossOutput, ModelConfig, VPPModel, images_tensor
from .train import DEFAULT_LR, Example, Schedule, TrainingError, TrainResult, build_vocab, make_examples, predict, train
from .vocab import COORDS, Vocab
