# %% [markdown]
# # Telling present from absent speakers
#
# Two scores separate the trials. Attenuation measures how much quieter the
# output is than the mixture. The cosine score compares an embedding of the
# output with one of the enrollment. Here the embedding is a mean log-mel
# vector, which is crude, and the numbers below show its limits.

# %%
import numpy as np

from inactive_tse import CorpusSpec, IsAwareOracleConfig, build_corpus, evaluate, get_extractor
from inactive_tse.harness import sweep_enrollment

spec = CorpusSpec(n_mixtures=40)
trials = build_corpus(spec)

# %% [markdown]
# An extractor that was never trained on absent speakers pulls some voice out
# of every mixture, so its attenuation carries no information. The cosine
# score keeps some.

# %%
s = evaluate(trials, get_extractor("irm"), "cos").summary
print(f"EER attenuation {s['eer_att']:.3f}   EER cosine {s['eer_cos']:.3f}")

# %% [markdown]
# An extractor that does handle absent speakers makes attenuation decisive.
# This one errs with fixed probabilities, so the union of failures and
# misses should land near the miss probability.

# %%
cfg = IsAwareOracleConfig(miss_prob=0.1, false_alarm_prob=0.05, seed=11)
s = evaluate(trials, get_extractor("is-aware", cfg=cfg), "att").summary
print(f"EER attenuation {s['eer_att']:.3f}  Fail {s['fail']:.3f}  Fail&Miss {s['fail_and_miss']:.3f}")

# %% [markdown]
# Longer enrollments average over more frames. With this embedder the gain is
# small and not monotone.

# %%
for row in sweep_enrollment(spec, [1, 3, 5], get_extractor("irm"), "cos"):
    print(f"{row['count']} utterances, {row['mean_duration_s']:5.2f} s  EER {row['eer']:.3f}")
