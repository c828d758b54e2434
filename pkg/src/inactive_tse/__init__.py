"""Inactive-speaker handling for target speech extraction.

Training losses for active and inactive targets, attenuation and
verification classifiers, DET/EER analysis, extraction metrics with failure
accounting, seeded synthetic corpora and reference extractors.
"""

from .detection import (
    ATTENUATION_FLOOR_DB,
    Decision,
    DetCurve,
    DetUndefinedError,
    TrialScore,
    attenuation,
    classify,
    det_curve,
    gate,
)
from .dsp import Spectrogram, StftConfig, Waveform, istft, mel_filterbank, read_wav, stft, write_wav
from .embedding import EmbedderConfig, Embedding, cosine, embed
from .extractors import (
    IsAwareOracleConfig,
    get_extractor,
    irm_extract,
    is_aware_oracle_extract,
    oracle_extract,
)
from .harness import evaluate, loss_check, sweep_enrollment
from .losses import LossConfig, check_gradient, loss_active, loss_composite, loss_inactive, loss_si_snr
from .manifest import read_manifest, write_manifest
from .metrics import SdrConfig, TrialMetrics, fail_and_miss_rate, fail_rate, sdr, sdri, sdri_after
from .scenarios import CorpusSpec, Trial, build_corpus

__version__ = "0.1.0"
