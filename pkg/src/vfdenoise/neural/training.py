"""Training loop, checkpoints and inference for the denoising networks."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import (
    DB_MAX, DB_MIN, N_LOCATIONS, SCALE_DB, NormativeModel, VisualField, encode_arrays,
    encode_input,
)
from .models import build_model, mask_batch, variant_in_dim
from .optim import AdamState, ReduceOnPlateau, adam_step

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "vfdenoise-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 1e-4
    lr_factor: float = 0.1
    lr_patience: int = 5
    max_epochs: int = 200
    seed: int = 42
    split: tuple[float, float, float] = (0.70, 0.15, 0.15)
    kl_weight: float = 1.0
    textbook_kl: bool = False
    mask_count: int = 10
    # stop once the learning rate has been cut this many times (None: never)
    max_lr_reductions: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "split", tuple(float(f) for f in self.split))
        if abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ValueError("split fractions must be non-negative and sum to 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split"] = list(self.split)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class TrainingData:
    """Exams pooled for training: sensitivities (dB), categories, owning eye."""

    sensitivities: np.ndarray
    categories: np.ndarray
    eye_ids: np.ndarray

    @classmethod
    def from_series(cls, eyes) -> "TrainingData":
        sens = np.concatenate([e.sensitivities for e in eyes])
        cats = np.concatenate([np.stack([x.p_categories for x in e.exams]) for e in eyes])
        ids = np.concatenate([[e.eye_id] * len(e.exams) for e in eyes])
        return cls(sens, cats, ids)

    def features(self, variant: str) -> np.ndarray:
        with_p = variant_in_dim(variant) == 104
        return encode_arrays(self.sensitivities, self.categories if with_p else None)

    def split(self, fractions, seed: int):
        """Boolean row masks (train, val, test); every eye lands in one split."""
        eyes = np.unique(self.eye_ids)
        perm = np.random.default_rng([seed, 1]).permutation(len(eyes))
        n_train = int(round(fractions[0] * len(eyes)))
        n_val = int(round(fractions[1] * len(eyes)))
        groups = (perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:])
        masks = tuple(np.isin(self.eye_ids, eyes[g]) for g in groups)
        for name, m in zip(("train", "validation"), masks):
            if not m.any():
                raise ValueError(f"empty {name} split ({len(eyes)} eyes)")
        return masks


@dataclass
class CheckpointRecord:
    variant: str
    params: np.ndarray
    epoch: int
    val_loss: float
    config: TrainConfig
    history: list = field(default_factory=list)

    @property
    def config_hash(self) -> str:
        return self.config.digest()

    def model(self):
        m = build_model(self.variant, self.config.kl_weight, self.config.textbook_kl,
                        self.config.mask_count)
        m.params.flat[...] = self.params
        return m


def fit(variant: str, data: TrainingData, config: TrainConfig = TrainConfig()) -> CheckpointRecord:
    """Train one network and return the checkpoint with the lowest validation loss.

    The learning rate is cut by ``lr_factor`` whenever validation loss has
    not improved for more than ``lr_patience`` epochs.  Results depend only
    on ``config.seed`` and the data.
    """
    x_all = data.features(variant)
    y_all = data.sensitivities / SCALE_DB
    train_m, val_m, _ = data.split(config.split, config.seed)
    x_tr, y_tr = x_all[train_m], y_all[train_m]
    x_va, y_va = x_all[val_m], y_all[val_m]

    model = build_model(variant, config.kl_weight, config.textbook_kl, config.mask_count)
    model.params.init_glorot(np.random.default_rng([config.seed, 2]))
    x_va_in, aux_va = model.prepare(x_va, np.random.default_rng([config.seed, 3]))
    rng = np.random.default_rng([config.seed, 4])

    state = AdamState.zeros(model.params.size)
    sched = ReduceOnPlateau(config.learning_rate, config.lr_factor, config.lr_patience)
    best = None
    history = []
    n, bs = len(x_tr), config.batch_size
    reductions = 0
    for epoch in range(1, config.max_epochs + 1):
        lr = sched.lr
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            xb, aux = model.prepare(x_tr[idx], rng)
            loss, _, grad = model.loss_and_grad(xb, y_tr[idx], aux)
            model.params.flat[...], state = adam_step(model.params.flat, grad, state, lr)
            total += loss * len(idx)
        val, parts, _ = model.loss_and_grad(x_va_in, y_va, aux_va)
        row = {"epoch": epoch, "lr": lr, "train_loss": total / n, "val_loss": val,
               **{f"val_{k}": v for k, v in parts.items()}}
        history.append(row)
        log.debug("%s epoch %d: %s", variant, epoch, row)
        if best is None or val < best.val_loss:
            best = CheckpointRecord(variant, model.params.flat.copy(), epoch, val, config)
        if sched.step(val) < lr:
            reductions += 1
            if config.max_lr_reductions is not None and reductions > config.max_lr_reductions:
                break
    best.history = history
    return best


# --- persistence ----------------------------------------------------------------

def save_checkpoint(record: CheckpointRecord, path) -> None:
    model = record.model()
    layers = []
    for stack, j, layer in model.params.layer_names():
        layers.append({
            "stack": stack, "index": j, "in": layer.in_dim, "out": layer.out_dim,
            "activation": layer.activation,
            "weights": layer.weights.ravel().tolist(), "bias": layer.bias.tolist(),
        })
    doc = {
        "format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
        "variant": record.variant, "config": record.config.to_dict(),
        "config_hash": record.config_hash, "epoch": record.epoch,
        "val_loss": record.val_loss, "layers": layers,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> CheckpointRecord:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} checkpoint")
    cfg = TrainConfig(**doc["config"])
    if cfg.digest() != doc["config_hash"]:
        raise ValueError(f"{path}: config hash mismatch")
    rec = CheckpointRecord(doc["variant"], None, doc["epoch"], doc["val_loss"], cfg)
    model = build_model(rec.variant, cfg.kl_weight, cfg.textbook_kl, cfg.mask_count)
    stored = doc["layers"]
    expected = list(model.params.layer_names())
    if len(stored) != len(expected):
        raise ValueError(f"{path}: layer count mismatch")
    for entry, (stack, j, layer) in zip(stored, expected):
        if (entry["stack"], entry["index"], entry["in"], entry["out"]) != \
                (stack, j, layer.in_dim, layer.out_dim):
            raise ValueError(f"{path}: layer {stack}[{j}] shape mismatch")
        layer.weights[...] = np.array(entry["weights"]).reshape(layer.weights.shape)
        layer.bias[...] = entry["bias"]
    rec.params = model.params.flat.copy()
    return rec


# --- inference ------------------------------------------------------------------

def denoise_features(model, features: np.ndarray) -> np.ndarray:
    """Reconstructed sensitivities (dB, clamped) for a (batch, in) feature array."""
    features = np.atleast_2d(features)
    if features.shape[-1] != model.in_dim:
        raise ValueError(f"checkpoint expects {model.in_dim} input features, got "
                         f"{features.shape[-1]}")
    return np.clip(model.predict(features) * SCALE_DB, DB_MIN, DB_MAX)


def reconstruction_rmse(checkpoint: CheckpointRecord, data: TrainingData, seed: int = 0) -> float:
    """RMS error (dB) of reconstructions from the inputs the network is trained on.

    For the MAE that is the masked input (one seeded mask draw per exam);
    the VAE decodes its posterior mean.
    """
    model = checkpoint.model()
    x = data.features(checkpoint.variant)
    if model.kind == "mae":
        x = mask_batch(x, model.mask_count, np.random.default_rng(seed))
    diff = denoise_features(model, x) - data.sensitivities
    return float(np.sqrt(np.mean(diff * diff)))


def denoise(checkpoint: CheckpointRecord, field, norm: NormativeModel | None = None):
    """Denoise one exam without masking or sampling.

    ``field`` is a :class:`VisualField` (encoded to match the checkpoint) or
    a prepared feature vector, in which case the reconstructed 52
    sensitivities are returned as an array.
    """
    model = checkpoint.model()
    if isinstance(field, VisualField):
        x = encode_input(field, model.in_dim == 104)
        sens = denoise_features(model, x)[0]
        return VisualField.from_sensitivities(sens, field.exam_time, field.age_at_exam, norm)
    return denoise_features(model, np.asarray(field, dtype=float))[0]


def denoise_series(checkpoint: CheckpointRecord, sens: np.ndarray, categories: np.ndarray):
    """Denoise stacked exams (..., 52) given their sensitivities and categories."""
    model = checkpoint.model()
    shape = sens.shape
    with_p = model.in_dim == 104
    x = encode_arrays(sens.reshape(-1, N_LOCATIONS),
                      categories.reshape(-1, N_LOCATIONS) if with_p else None)
    return denoise_features(model, x).reshape(shape)
