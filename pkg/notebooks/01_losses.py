# %% [markdown]
# # Losses for present and absent targets
#
# A thresholded SNR handles trials where the enrolled speaker talks. When the
# reference is absent the loss instead measures how much energy the output
# keeps relative to the mixture. Both saturate, which is what stops an
# extractor from chasing an unbounded objective on easy examples.

# %%
import numpy as np

from inactive_tse import loss_active, loss_composite, loss_inactive, loss_si_snr
from inactive_tse.harness import loss_check

rng = np.random.default_rng(0)
s = rng.normal(size=4000)
y = s + rng.normal(size=4000)

# %% [markdown]
# The active loss bottoms out at -30 dB once the error is below the soft
# threshold. SI-SNR ignores gain, so a scaled estimate scores as well as the
# reference itself, while the thresholded SNR does not.

# %%
for gain in (1.0, 0.5, 2.0):
    print(f"gain {gain:3.1f}  snr loss {loss_active(gain * s, s).value:8.3f}"
          f"  si-snr loss {loss_si_snr(gain * s, s).value:8.3f}")

# %% [markdown]
# The inactive loss is the output energy plus a small fraction of the mixture
# energy, in dB. With a unit-energy mixture silence reaches -20 dB, and the
# dispatcher picks the branch from whether a reference is given.

# %%
y = y / np.sqrt(np.dot(y, y))
for gain in (1.0, 0.1, 0.01, 0.0):
    print(f"output = {gain:4.2f} * mixture  ->  {loss_inactive(gain * y, y).value:7.3f} dB")
print("composite, reference absent:", loss_composite(np.zeros_like(y), None, y).value)
print("composite, reference given: ", loss_composite(s, s, y).value)

# %% [markdown]
# Analytic gradients against central differences on random points.

# %%
rep = loss_check(seed=0, n_points=200)
print({k: f"{v:.2e}" for k, v in rep["max_relative_error"].items()}, "passed:", rep["passed"])
