from .autograd import DiffTensor
from .model import ModelConfig, VssModel, init_model, model_forward, patch_embed, predict_proba, vss_block_forward
from .train import DEFAULT_LR, DEFAULT_MOMENTUM, fit, grad_check, train_step

__all__ = [
    "DEFAULT_LR", "DEFAULT_MOMENTUM", "DiffTensor", "ModelConfig", "VssModel", "fit", "grad_check",
    "init_model", "model_forward", "patch_embed", "predict_proba", "train_step", "vss_block_forward",
]
