"""Masked and variational autoencoders for 52-location visual fields."""

from __future__ import annotations

import numpy as np

from ..core import N_LOCATIONS
from .layers import IDENTITY, RELU, ParamSpace, mlp_backward, mlp_forward

VARIANTS = ("mae", "mae+p", "vae", "vae+p")
MASK_COUNT = 10


def variant_in_dim(variant: str) -> int:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    return 104 if variant.endswith("+p") else 52


# --- losses -------------------------------------------------------------------

def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over every entry; returns ``(loss, dL/dpred)``."""
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def loss_mae(pred, premask_target) -> float:
    """MSE over all 52 locations between prediction and unmasked input."""
    return mse_loss(np.asarray(pred, dtype=float), np.asarray(premask_target, dtype=float))[0]


def kl_loss(mu, sigma, textbook: bool = False):
    """Batch-mean KL penalty; returns ``(loss, dL/dmu, dL/dsigma)``.

    By default the penalty per latent entry is ``sigma**2 + mu**2 - log(sigma) - 1/2``
    summed over latent dimensions and averaged over the batch.  With
    ``textbook`` the Gaussian KL ``(sigma**2 + mu**2 - log(sigma**2) - 1) / 2``
    is used instead.
    """
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if np.any(sigma <= 0):
        raise ValueError("sigma must be strictly positive")
    n = mu.shape[0]
    if textbook:
        terms = 0.5 * (sigma**2 + mu**2 - 2.0 * np.log(sigma) - 1.0)
        return float(terms.sum() / n), mu / n, (sigma - 1.0 / sigma) / n
    terms = sigma**2 + mu**2 - np.log(sigma) - 0.5
    return float(terms.sum() / n), 2.0 * mu / n, (2.0 * sigma - 1.0 / sigma) / n


def reparameterize(mu, sigma, rng: np.random.Generator | None = None, eps=None):
    """Draw ``z = mu + sigma * eps`` with standard-normal ``eps``; returns ``(z, eps)``."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if eps is None:
        eps = rng.standard_normal(mu.shape)
    return mu + sigma * eps, eps


# --- masking ------------------------------------------------------------------

def mask_input(features, mask_count: int = MASK_COUNT, rng: np.random.Generator | None = None):
    """Zero ``mask_count`` distinct sensitivity entries of one feature vector.

    Returns the masked copy and the sorted masked indices.  Entries past the
    52-value sensitivity block are never touched.
    """
    features = np.asarray(features, dtype=float)
    if mask_count >= N_LOCATIONS:
        raise ValueError("mask_count must be below 52")
    idx = np.sort(rng.choice(N_LOCATIONS, size=mask_count, replace=False)) if mask_count else \
        np.array([], dtype=int)
    out = features.copy()
    out[idx] = 0.0
    return out, idx


def mask_batch(features: np.ndarray, mask_count: int, rng: np.random.Generator) -> np.ndarray:
    """Row-wise version of :func:`mask_input` for a (batch, in) array."""
    out = features.copy()
    if mask_count:
        idx = np.argsort(rng.random((features.shape[0], N_LOCATIONS)), axis=1)[:, :mask_count]
        np.put_along_axis(out, idx, 0.0, axis=1)
    return out


# --- models -------------------------------------------------------------------

class MaskedAutoencoder:
    """in -> 32 -> 16 -> 16 -> 32 -> 52, ReLU between layers, linear output."""

    kind = "mae"

    def __init__(self, in_dim: int = 52, mask_count: int = MASK_COUNT,
                 params: ParamSpace | None = None):
        self.in_dim = in_dim
        self.mask_count = mask_count
        self.params = params or ParamSpace({
            "encoder": [(in_dim, 32, RELU), (32, 16, RELU)],
            "bottleneck": [(16, 16, RELU)],
            "decoder": [(16, 32, RELU), (32, N_LOCATIONS, IDENTITY)],
        })

    @property
    def layers(self):
        s = self.params.stacks
        return s["encoder"] + s["bottleneck"] + s["decoder"]

    @property
    def grad_views(self):
        g = self.params.grad_views
        return g["encoder"] + g["bottleneck"] + g["decoder"]

    def forward(self, x):
        return mlp_forward(self.layers, np.atleast_2d(x))

    def backward(self, caches, grad_out) -> np.ndarray:
        """Gradient of the loss w.r.t. the flat parameter vector."""
        self.params.zero_grad()
        mlp_backward(self.layers, self.grad_views, caches, grad_out)
        return self.params.grad

    def predict(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def loss_and_grad(self, x, target, aux=None):
        """Loss on an already prepared (masked) batch; returns ``(loss, parts, grad)``."""
        out, caches = self.forward(x)
        loss, g = mse_loss(out, target)
        return loss, {"recon": loss}, self.backward(caches, g)

    def prepare(self, x, rng):
        """Training-time input corruption and the auxiliary draw (none for the MAE)."""
        return mask_batch(x, self.mask_count, rng), None


class VariationalAutoencoder:
    """in -> 32 -> 16, heads for mu and log sigma (16 each), 16 -> 32 -> 52."""

    kind = "vae"

    def __init__(self, in_dim: int = 52, kl_weight: float = 1.0, textbook_kl: bool = False,
                 params: ParamSpace | None = None):
        self.in_dim = in_dim
        self.kl_weight = kl_weight
        self.textbook_kl = textbook_kl
        self.params = params or ParamSpace({
            "encoder": [(in_dim, 32, RELU), (32, 16, RELU)],
            "mu_head": [(16, 16, IDENTITY)],
            "log_sigma_head": [(16, 16, IDENTITY)],
            "decoder": [(16, 32, RELU), (32, N_LOCATIONS, IDENTITY)],
        })

    def encode(self, x):
        s = self.params.stacks
        h, enc_c = mlp_forward(s["encoder"], np.atleast_2d(x))
        mu, mu_c = mlp_forward(s["mu_head"], h)
        log_sigma, ls_c = mlp_forward(s["log_sigma_head"], h)
        return mu, np.exp(log_sigma), (enc_c, mu_c, ls_c)

    def forward(self, x, eps=None):
        """Decode ``z = mu + sigma * eps``; ``eps=None`` decodes the mean."""
        mu, sigma, enc = self.encode(x)
        z = mu if eps is None else mu + sigma * eps
        out, dec_c = mlp_forward(self.params.stacks["decoder"], z)
        return out, (mu, sigma, eps, enc, dec_c)

    def backward(self, cache, grad_out, grad_mu=0.0, grad_sigma=0.0) -> np.ndarray:
        """Backpropagate through decoder, sampling step and both heads.

        ``grad_mu``/``grad_sigma`` carry extra loss terms (the KL penalty)
        that act on the latent statistics directly.
        """
        mu, sigma, eps, (enc_c, mu_c, ls_c), dec_c = cache
        s, g = self.params.stacks, self.params.grad_views
        self.params.zero_grad()
        gz = mlp_backward(s["decoder"], g["decoder"], dec_c, grad_out)
        gmu = gz + grad_mu
        gsigma = (gz * eps if eps is not None else 0.0) + grad_sigma
        glog_sigma = np.broadcast_to(gsigma * sigma, sigma.shape)
        gh = mlp_backward(s["mu_head"], g["mu_head"], mu_c, gmu)
        gh = gh + mlp_backward(s["log_sigma_head"], g["log_sigma_head"], ls_c, glog_sigma)
        mlp_backward(s["encoder"], g["encoder"], enc_c, gh)
        return self.params.grad

    def predict(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def loss_and_grad(self, x, target, aux):
        out, cache = self.forward(x, aux)
        recon, g_out = mse_loss(out, target)
        mu, sigma = cache[0], cache[1]
        kl, g_mu, g_sigma = kl_loss(mu, sigma, self.textbook_kl)
        w = self.kl_weight
        grad = self.backward(cache, g_out, w * g_mu, w * g_sigma)
        return recon + w * kl, {"recon": recon, "kl": kl}, grad

    def prepare(self, x, rng):
        return x, rng.standard_normal((x.shape[0], 16))


def build_model(variant: str, kl_weight: float = 1.0, textbook_kl: bool = False,
                mask_count: int = MASK_COUNT, params: ParamSpace | None = None):
    in_dim = variant_in_dim(variant)
    if variant.startswith("mae"):
        return MaskedAutoencoder(in_dim, mask_count, params)
    return VariationalAutoencoder(in_dim, kl_weight, textbook_kl, params)
