"""melforge: deterministic audio augmentation, log-mel features and a
small numpy CNN stack for binary audio classification."""

from .audio import WORKING_RATE, Waveform, read_wav, resample_linear, write_wav
from .augment import (
    AugmentationPlan,
    LoudnessStep,
    MaskStep,
    NoiseStep,
    ShiftStep,
    SpeedStep,
    apply_plan,
    loudness,
    mask,
    noise,
    shift,
    speed_perturb,
)
from .features import (
    GrayImage,
    MelFilterBank,
    MelSpectrogram,
    build_mel_filterbank,
    dequantize,
    extract_log_mel,
    normalize_local,
    quantize_u8,
    stft_power,
    to_log_mel,
)
from .metrics import ConfusionMatrix, confusion, uar
from .rng import RandomStream

__version__ = "0.1.0"
