"""Numpy autoencoders with hand-written backpropagation."""

from .layers import Dense, ParamSpace, dense_backward, dense_forward, mlp_backward, mlp_forward
from .models import (
    MASK_COUNT, VARIANTS, MaskedAutoencoder, VariationalAutoencoder, build_model, kl_loss,
    loss_mae, mask_batch, mask_input, mse_loss, reparameterize,
)
from .optim import AdamState, ReduceOnPlateau, adam_step
from .training import (
    CheckpointRecord, TrainConfig, TrainingData, denoise, denoise_features, denoise_series, fit,
    load_checkpoint, reconstruction_rmse, save_checkpoint,
)

__all__ = [
    "Dense", "ParamSpace", "dense_forward", "dense_backward", "mlp_forward", "mlp_backward",
    "MASK_COUNT", "VARIANTS", "MaskedAutoencoder", "VariationalAutoencoder", "build_model",
    "kl_loss", "loss_mae", "mask_batch", "mask_input", "mse_loss", "reparameterize",
    "AdamState", "ReduceOnPlateau", "adam_step", "CheckpointRecord", "TrainConfig",
    "TrainingData", "denoise", "denoise_features", "denoise_series", "fit", "load_checkpoint",
    "reconstruction_rmse", "save_checkpoint",
]
