"""Log-mel spectrogram extraction and the 8-bit cache image format.

The extraction chain is stft_power -> mel filterbank -> natural log,
with the defaults n_fft=512, hop=256, n_mels=64.  A one second clip at
the 22050 Hz working rate therefore comes out as a 64 x 87 matrix.
Spectrograms are cached on disk as binary PGM (P5) images quantized to
8 bits per cell, with a text sidecar recording the quantization range
so training can reconstruct the log-mel values.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .audio import Waveform

N_FFT = 512
HOP = 256
N_MELS = 64
LOG_FLOOR = 1e-10


class InvalidRangeError(ValueError):
    """fmin/fmax do not describe a usable frequency band."""


class ShapeMismatchError(ValueError):
    """Operands do not conform."""


class NonFiniteError(ValueError):
    """Input contains NaN or infinity."""


@dataclass
class MelSpectrogram:
    """n_mels x n_frames matrix tagged with its scale (power/log/normalized)."""

    values: np.ndarray
    scale_tag: str = "log"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"expected 2-D matrix, got shape {self.values.shape}")
        if self.scale_tag not in ("power", "log", "normalized"):
            raise ValueError(f"unknown scale_tag {self.scale_tag!r}")

    @property
    def n_mels(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


@dataclass
class GrayImage:
    """8-bit image plus the value range it was quantized from."""

    pixels: np.ndarray
    min_value: float
    max_value: float

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 2:
            raise ValueError(f"expected 2-D image, got shape {self.pixels.shape}")
        if self.max_value < self.min_value:
            raise ValueError("max_value must be >= min_value")


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window of length n."""
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def stft_power(w: Waveform, n_fft: int = N_FFT, hop: int = HOP) -> np.ndarray:
    """Power spectrogram of Hann-windowed, centered frames.

    Frames are centered by reflect-padding n_fft//2 samples on each
    side, so n_frames = 1 + len(w) // hop.  Cells are squared DFT
    magnitudes; shape is (n_fft//2 + 1, n_frames).
    """
    x = np.pad(w.samples, n_fft // 2, mode="reflect")
    n_frames = 1 + len(w) // hop
    window = hann_window(n_fft)
    frames = np.empty((n_frames, n_fft), dtype=np.float64)
    for t in range(n_frames):
        frames[t] = x[t * hop : t * hop + n_fft]
    spectrum = np.fft.rfft(frames * window, axis=1)
    return (spectrum.real**2 + spectrum.imag**2).T


def hz_to_mel(hz):
    """Perceptual frequency scale: linear below 1 kHz, logarithmic above."""
    hz = np.asarray(hz, dtype=np.float64)
    mel = 3.0 * hz / 200.0
    log_region = hz >= 1000.0
    log_step = np.log(6.4) / 27.0
    mel = np.where(log_region, 15.0 + np.log(np.maximum(hz, 1000.0) / 1000.0) / log_step, mel)
    return mel if mel.ndim else float(mel)


def mel_to_hz(mel):
    mel = np.asarray(mel, dtype=np.float64)
    hz = 200.0 * mel / 3.0
    log_step = np.log(6.4) / 27.0
    hz = np.where(mel >= 15.0, 1000.0 * np.exp((mel - 15.0) * log_step), hz)
    return hz if hz.ndim else float(hz)


@dataclass
class MelFilterBank:
    """Triangular mel filters over DFT bins, area-normalized."""

    weights: np.ndarray  # (n_mels, n_fft//2 + 1)
    peak_hz: np.ndarray  # center frequency of each triangle
    sample_rate: int
    n_fft: int
    fmin: float
    fmax: float

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]


def build_mel_filterbank(
    sample_rate: int,
    n_fft: int = N_FFT,
    n_mels: int = N_MELS,
    fmin: float = 0.0,
    fmax: float | None = None,
) -> MelFilterBank:
    """Triangular filters with peaks equally spaced on the mel scale.

    Each triangle spans its two neighbouring peaks and is scaled by
    2 / (width in Hz) so filter area is independent of bandwidth.
    """
    if fmax is None:
        fmax = sample_rate / 2.0
    if fmin >= fmax:
        raise InvalidRangeError(f"fmin={fmin} must be below fmax={fmax}")
    if fmax > sample_rate / 2.0 + 1e-9:
        raise InvalidRangeError(f"fmax={fmax} above Nyquist {sample_rate / 2.0}")
    if n_mels < 1:
        raise ValueError(f"n_mels must be >= 1, got {n_mels}")

    # n_mels + 2 breakpoints: left foot, n_mels peaks, right foot
    mel_points = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bin_hz = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)

    weights = np.zeros((n_mels, n_fft // 2 + 1), dtype=np.float64)
    for j in range(n_mels):
        left, center, right = hz_points[j], hz_points[j + 1], hz_points[j + 2]
        up = (bin_hz - left) / (center - left)
        down = (right - bin_hz) / (right - center)
        tri = np.maximum(0.0, np.minimum(up, down))
        weights[j] = tri * (2.0 / (right - left))
    return MelFilterBank(weights, hz_points[1:-1].copy(), sample_rate, n_fft, fmin, fmax)


@lru_cache(maxsize=8)
def _cached_filterbank(sample_rate, n_fft, n_mels, fmin, fmax):
    return build_mel_filterbank(sample_rate, n_fft, n_mels, fmin, fmax)


def to_log_mel(power_spec: np.ndarray, fb: MelFilterBank) -> MelSpectrogram:
    """Apply the filterbank and take the natural log, floored at 1e-10."""
    power_spec = np.asarray(power_spec, dtype=np.float64)
    if power_spec.ndim != 2 or power_spec.shape[0] != fb.weights.shape[1]:
        raise ShapeMismatchError(
            f"power spectrogram has {power_spec.shape} rows/cols, "
            f"filterbank expects {fb.weights.shape[1]} frequency bins"
        )
    mel = fb.weights @ power_spec
    return MelSpectrogram(np.log(np.maximum(mel, LOG_FLOOR)), scale_tag="log")


def extract_log_mel(
    w: Waveform, n_fft: int = N_FFT, hop: int = HOP, n_mels: int = N_MELS
) -> MelSpectrogram:
    """Full chain: STFT power -> mel filterbank -> log scale."""
    fb = _cached_filterbank(w.sample_rate, n_fft, n_mels, 0.0, w.sample_rate / 2.0)
    return to_log_mel(stft_power(w, n_fft, hop), fb)


def quantize_u8(m: MelSpectrogram) -> GrayImage:
    """Per-sample min-max quantization to 8 bits; low energy maps to 0 (dark)."""
    v = m.values
    if not np.isfinite(v).all():
        raise NonFiniteError("spectrogram contains non-finite cells")
    lo = float(v.min())
    hi = float(v.max())
    if hi == lo:
        return GrayImage(np.zeros(v.shape, dtype=np.uint8), lo, hi)
    pixels = np.rint(255.0 * (v - lo) / (hi - lo))
    return GrayImage(np.clip(pixels, 0, 255).astype(np.uint8), lo, hi)


def dequantize(g: GrayImage, scale_tag: str = "log") -> MelSpectrogram:
    """Invert quantize_u8 using the recorded range (up to half a step)."""
    span = g.max_value - g.min_value
    values = g.min_value + g.pixels.astype(np.float64) / 255.0 * span
    return MelSpectrogram(values, scale_tag=scale_tag)


def normalize_local(m: MelSpectrogram) -> MelSpectrogram:
    """Standardize to zero mean and unit population std (per sample).

    A (near-)constant input has no scale to normalize by and becomes
    the zero matrix.
    """
    mean = m.values.mean()
    std = m.values.std()
    if std < 1e-12:
        return MelSpectrogram(np.zeros_like(m.values), scale_tag="normalized")
    return MelSpectrogram((m.values - mean) / std, scale_tag="normalized")


def write_gray_image(path, g: GrayImage) -> None:
    """Binary PGM (P5) plus a `min=... max=...` sidecar next to it."""
    path = Path(path)
    h, w = g.pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(g.pixels.tobytes())
    sidecar = path.with_suffix(".meta")
    sidecar.write_text(f"min={g.min_value!r} max={g.max_value!r}\n", encoding="ascii")


def read_gray_image(path) -> GrayImage:
    path = Path(path)
    with open(path, "rb") as f:
        data = f.read()
    # scan the three header tokens by hand: the raster may begin with a
    # byte that looks like whitespace, so a blanket split() would eat it
    tokens, pos = [], 0
    while len(tokens) < 4 and pos < len(data):
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # exactly one whitespace byte separates maxval from the raster
    if len(tokens) < 4 or tokens[0] != b"P5" or tokens[3] != b"255":
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    raster = data[pos : pos + w * h]
    if len(raster) != w * h:
        raise ValueError(f"{path}: truncated raster ({len(raster)} of {w * h} bytes)")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(h, w)
    fields = dict(
        part.split("=", 1)
        for part in path.with_suffix(".meta").read_text(encoding="ascii").split()
    )
    return GrayImage(pixels.copy(), float(fields["min"]), float(fields["max"]))
