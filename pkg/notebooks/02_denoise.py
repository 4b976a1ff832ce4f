"""
Training the denoisers
======================

A masked autoencoder and a variational autoencoder are fitted to pooled
simulated exams, then used to reconstruct a noisy series.  Epochs are
kept low so the script runs in well under a minute; the CLI default is
200.
"""

# %%
import numpy as np

from vfdenoise.neural import TrainConfig, TrainingData, denoise_series, fit
from vfdenoise.simulator import SCENARIOS, ScenarioSpec, simulate_cohort

eyes = [e for sc in SCENARIOS
        for e in simulate_cohort(ScenarioSpec(sc, n_eyes=60, factorial=True), seed=7)]
data = TrainingData.from_series(eyes)
print(data.sensitivities.shape[0], "exams from", len(eyes), "eyes")

# %%
# Masked autoencoder: ten random locations are zeroed in every training
# example; the loss compares the output against the unmasked field.
cfg = TrainConfig(max_epochs=40, learning_rate=1e-3)
mae = fit("mae", data, cfg)
print(f"MAE best epoch {mae.epoch}, validation MSE {mae.val_loss:.5f}")

# %%
# Variational autoencoder with the configured KL weight.  The validation
# history shows how much of the loss the KL term takes.
vae = fit("vae", data, cfg)
last = vae.history[vae.epoch - 1]
print(f"VAE best epoch {vae.epoch}: recon {last['val_recon']:.5f}, KL {last['val_kl']:.3f}")

# %%
# Reconstructing fresh eyes and comparing against the noise-free truth.
sims = simulate_cohort(ScenarioSpec(SCENARIOS[3], n_eyes=24, factorial=True), seed=99,
                       as_series=False)
truth = np.stack([s.true_sens for s in sims])
raw = np.stack([s.sens for s in sims])
series = [s.to_series() for s in sims]
cats = np.stack([np.stack([x.p_categories for x in e.exams]) for e in series])


def report(name, est):
    err = est - truth
    print(f"{name:16s} RMS {np.sqrt(np.mean(err ** 2)):5.2f} dB, mean bias {err.mean():+5.2f} dB")


report("raw", raw)
for name, rec in (("MAE", mae), ("VAE", vae)):
    report(name, denoise_series(rec, raw, cats))

# %%
# Inference skips the masking step, so the MAE sees 52 live inputs where
# training always showed it 42.  Averaging reconstructions over random
# masks, as in training, shows how much of the error that shift causes.
from vfdenoise.core import encode_arrays
from vfdenoise.neural import denoise_features
from vfdenoise.neural.models import mask_batch

model = mae.model()
x = encode_arrays(raw.reshape(-1, 52))
avg = np.mean([denoise_features(model, mask_batch(x, 10, np.random.default_rng(i)))
               for i in range(10)], axis=0)
report("MAE, mask-avg", avg.reshape(raw.shape))
