"""The five training-time augmentations and their composition.

Speed perturbation operates on raw audio before feature extraction; the
other four (loudness, shift, noise, masking) operate on log-mel
spectrograms, before local normalization.  Each sampled magnitude comes
from a caller-supplied RandomStream so augmented samples are exactly
reproducible from (seed, stream id).

Default magnitudes: speed factor U(0.7, 1.7) over a window of up to 30%
of the clip, loudness U(0, 0.4), shift up to 30% of the frames, noise
N(0, 0.4) per cell, mask windows up to 20% per axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .audio import Waveform, fit_length, interp_resample
from .features import MelSpectrogram, extract_log_mel, normalize_local
from .rng import RandomStream

FILL_ZERO = "zero"
FILL_GAUSSIAN = "gaussian"
DEFAULT_FILL_SIGMA = 0.4


class InvalidPlanError(ValueError):
    """Augmentation plan violates its ordering or range invariants."""


# ---------------------------------------------------------------------------
# deterministic cores (no sampling; exercised directly by tests)

def stretch_window(w: Waveform, start: int, win_len: int, factor: float) -> Waveform:
    """Time-scale the window [start, start+win_len) by `factor`.

    The window is resampled to round(len/factor) samples by linear
    interpolation; audio outside the window is untouched, so the output
    length is len(w) - win_len + round(win_len/factor).
    """
    if factor <= 0:
        raise ValueError(f"speed factor must be positive, got {factor}")
    n = len(w)
    start = max(0, min(start, n))
    end = min(start + max(win_len, 0), n)
    seg = w.samples[start:end]
    if len(seg) == 0 or factor == 1.0:
        return Waveform(w.samples.copy(), w.sample_rate)
    new_len = max(1, int(round(len(seg) / factor)))
    stretched = interp_resample(seg, new_len)
    out = np.concatenate([w.samples[:start], stretched, w.samples[end:]])
    return Waveform(out, w.sample_rate)


def _fill_block(shape, fill: str, sigma: float, rs: RandomStream | None) -> np.ndarray:
    if fill == FILL_ZERO:
        return np.zeros(shape, dtype=np.float64)
    if fill == FILL_GAUSSIAN:
        if rs is None:
            raise ValueError("gaussian fill requires a RandomStream")
        return rs.gaussian(0.0, sigma, size=shape)
    raise ValueError(f"unknown fill mode {fill!r}")


def shift_columns(
    m: MelSpectrogram,
    k: int,
    direction: int,
    fill: str = FILL_ZERO,
    fill_sigma: float = DEFAULT_FILL_SIGMA,
    rs: RandomStream | None = None,
) -> MelSpectrogram:
    """Move content k columns right (direction=1) or left (direction=0)."""
    n_mels, n_frames = m.values.shape
    k = max(0, min(k, n_frames))
    if k == 0:
        return MelSpectrogram(m.values.copy(), m.scale_tag)
    out = np.empty_like(m.values)
    block = _fill_block((n_mels, k), fill, fill_sigma, rs)
    if direction:
        out[:, k:] = m.values[:, : n_frames - k]
        out[:, :k] = block
    else:
        out[:, : n_frames - k] = m.values[:, k:]
        out[:, n_frames - k :] = block
    return MelSpectrogram(out, m.scale_tag)


def mask_block(
    m: MelSpectrogram,
    axis: int,
    start: int,
    width: int,
    fill: str = FILL_ZERO,
    fill_sigma: float = DEFAULT_FILL_SIGMA,
    rs: RandomStream | None = None,
) -> MelSpectrogram:
    """Overwrite `width` rows (axis=0) or columns (axis=1) from `start`.

    Windows reaching past the edge are clamped, not wrapped.
    """
    out = m.values.copy()
    extent = out.shape[axis]
    start = max(0, min(start, extent))
    stop = min(start + max(width, 0), extent)
    if stop > start:
        if axis == 0:
            out[start:stop, :] = _fill_block((stop - start, out.shape[1]), fill, fill_sigma, rs)
        else:
            out[:, start:stop] = _fill_block((out.shape[0], stop - start), fill, fill_sigma, rs)
    return MelSpectrogram(out, m.scale_tag)


# ---------------------------------------------------------------------------
# sampled operations

def speed_perturb(
    w: Waveform,
    rs: RandomStream,
    factor_lo: float = 0.7,
    factor_hi: float = 1.7,
    window_ratio_max: float = 0.3,
) -> Waveform:
    """Randomly speed a window of the clip up or down.

    Draws, in order: start ~ U(0, T), window fraction ~ U(0, max), and
    factor ~ U(lo, hi); factors above 1 shorten the window.
    """
    if not 0.0 <= window_ratio_max <= 1.0:
        raise ValueError(f"window_ratio_max must be in [0, 1], got {window_ratio_max}")
    if not 0.0 < factor_lo <= factor_hi:
        raise ValueError(f"bad factor bounds: [{factor_lo}, {factor_hi}]")
    t = len(w)
    start = int(rs.uniform(0.0, float(t)))
    win_frac = rs.uniform(0.0, window_ratio_max)
    factor = rs.uniform(factor_lo, factor_hi)
    return stretch_window(w, start, math.floor(win_frac * t), factor)


def loudness(m: MelSpectrogram, rs: RandomStream, ratio_max: float = 0.4) -> MelSpectrogram:
    """Scale every cell by (1 + l) with l ~ U(0, ratio_max)."""
    l = rs.uniform(0.0, ratio_max)
    return MelSpectrogram(m.values * (1.0 + l), m.scale_tag)


def shift(
    m: MelSpectrogram,
    rs: RandomStream,
    ratio_max: float = 0.3,
    fill: str = FILL_ZERO,
    fill_sigma: float = DEFAULT_FILL_SIGMA,
) -> MelSpectrogram:
    """Shift content along time by up to ratio_max of the frame count.

    Shift fraction ~ U(0, ratio_max); direction ~ Bernoulli(0.5)
    (1 = right); vacated columns take the fill value.
    """
    frac = rs.uniform(0.0, ratio_max)
    direction = rs.bernoulli(0.5)
    k = math.floor(frac * m.n_frames)
    return shift_columns(m, k, direction, fill, fill_sigma, rs)


def noise(m: MelSpectrogram, rs: RandomStream, sigma: float = 0.4) -> MelSpectrogram:
    """Per-cell multiplicative Gaussian noise: v -> v * (1 + g), g ~ N(0, sigma)."""
    g = rs.gaussian(0.0, sigma, size=m.values.shape)
    return MelSpectrogram(m.values * (1.0 + g), m.scale_tag)


def mask(
    m: MelSpectrogram,
    rs: RandomStream,
    ratio_max: float = 0.2,
    fill: str = FILL_ZERO,
    fill_sigma: float = DEFAULT_FILL_SIGMA,
) -> MelSpectrogram:
    """Mask one window per axis (time, then frequency).

    For each axis: start ~ U(0, extent), width = floor(U(0, ratio_max) *
    extent); the window is clamped at the edge.
    """
    out = m
    for axis, extent in ((1, m.n_frames), (0, m.n_mels)):
        start = int(rs.uniform(0.0, float(extent)))
        width = math.floor(rs.uniform(0.0, ratio_max) * extent)
        out = mask_block(out, axis, start, width, fill, fill_sigma, rs)
    return out


# ---------------------------------------------------------------------------
# plans

@dataclass
class SpeedStep:
    kind: str = field(default="speed", init=False)
    factor_lo: float = 0.7
    factor_hi: float = 1.7
    ratio: float = 0.3  # window_ratio_max


@dataclass
class LoudnessStep:
    kind: str = field(default="loudness", init=False)
    ratio: float = 0.4

    def apply(self, m, rs):
        return loudness(m, rs, self.ratio)


@dataclass
class ShiftStep:
    kind: str = field(default="shift", init=False)
    ratio: float = 0.3
    fill: str = FILL_ZERO
    fill_sigma: float = DEFAULT_FILL_SIGMA

    def apply(self, m, rs):
        return shift(m, rs, self.ratio, self.fill, self.fill_sigma)


@dataclass
class NoiseStep:
    kind: str = field(default="noise", init=False)
    sigma: float = 0.4

    def apply(self, m, rs):
        return noise(m, rs, self.sigma)


@dataclass
class MaskStep:
    kind: str = field(default="mask", init=False)
    ratio: float = 0.2
    fill: str = FILL_ZERO
    fill_sigma: float = DEFAULT_FILL_SIGMA

    def apply(self, m, rs):
        return mask(m, rs, self.ratio, self.fill, self.fill_sigma)


@dataclass
class AugmentationPlan:
    """Ordered augmentation steps; at most one speed step, always first."""

    steps: list

    def __post_init__(self):
        speed_positions = [i for i, s in enumerate(self.steps) if s.kind == "speed"]
        if len(speed_positions) > 1:
            raise InvalidPlanError("plan may contain at most one speed step")
        if speed_positions and speed_positions[0] != 0:
            raise InvalidPlanError("the speed step must come first (it runs on raw audio)")
        for s in self.steps:
            ratio = getattr(s, "ratio", None)
            if ratio is not None and not 0.0 <= ratio <= 1.0:
                raise InvalidPlanError(f"{s.kind} ratio {ratio} outside [0, 1]")
            sigma = getattr(s, "sigma", None)
            if sigma is not None and sigma < 0.0:
                raise InvalidPlanError(f"{s.kind} sigma {sigma} must be nonnegative")

    @property
    def speed(self) -> SpeedStep | None:
        return self.steps[0] if self.steps and self.steps[0].kind == "speed" else None

    @property
    def spectrogram_steps(self) -> list:
        return [s for s in self.steps if s.kind != "speed"]


def apply_spectrogram_steps(m: MelSpectrogram, steps, rs: RandomStream) -> MelSpectrogram:
    """Run the spectrogram-domain steps in order.

    Step i draws from the substream (i, kind), so sequences stay
    reproducible however the surrounding code consumes `rs`.
    """
    for i, step in enumerate(steps):
        m = step.apply(m, rs.substream(i, step.kind))
    return m


def apply_plan(clip: Waveform, plan: AugmentationPlan, rs: RandomStream) -> MelSpectrogram:
    """Full augmentation pipeline for one clip, ending in normalization.

    Speed (when present) perturbs the raw audio and the result is
    cropped/zero-padded back to the clip's original length so the
    spectrogram shape is stable; the remaining steps run on the log-mel;
    local normalization always runs last.  An empty plan is the plain
    extract + normalize pipeline.
    """
    w = clip
    sp = plan.speed
    if sp is not None:
        w = speed_perturb(w, rs.substream(0, "speed"), sp.factor_lo, sp.factor_hi, sp.ratio)
        w = fit_length(w, len(clip))
    m = extract_log_mel(w)
    offset = 1 if sp is not None else 0
    for i, step in enumerate(plan.spectrogram_steps):
        m = step.apply(m, rs.substream(i + offset, step.kind))
    return normalize_local(m)
