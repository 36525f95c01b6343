"""WAV decoding, encoding and linear resampling.

Only mono PCM16 RIFF/WAVE containers are supported; everything else is
rejected with an error naming the offending header field.  Decoded
samples are scaled by 1/32768 so the PCM16 range maps into [-1, 1), and
encoding inverts that scaling exactly (decode -> encode round-trips
sample-exact).
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

#: Rate every clip is resampled to on load.  One second at this rate
#: yields 87 spectrogram frames at hop 256, the shape the models expect.
WORKING_RATE = 22050


class UnsupportedFormatError(ValueError):
    """Audio container the pipeline does not accept."""


@dataclass
class Waveform:
    """Mono audio: float64 samples in [-1, 1] plus their sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {self.samples.shape}")
        if len(self.samples) == 0:
            raise ValueError("waveform must contain at least one sample")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def read_wav(path) -> Waveform:
    """Decode a mono PCM16 WAV file.

    Raises FileNotFoundError for a missing file and
    UnsupportedFormatError (naming the bad field) for anything that is
    not mono/16-bit/uncompressed.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such audio file: {path}")
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            sampwidth = wf.getsampwidth()
            comptype = wf.getcomptype()
            rate = wf.getframerate()
            n_frames = wf.getnframes()
            if comptype != "NONE":
                raise UnsupportedFormatError(
                    f"{path}: compression={comptype!r} (only uncompressed PCM supported)"
                )
            if n_channels != 1:
                raise UnsupportedFormatError(
                    f"{path}: channels={n_channels} (only mono supported)"
                )
            if sampwidth != 2:
                raise UnsupportedFormatError(
                    f"{path}: sample_width={sampwidth} bytes (only 16-bit PCM supported)"
                )
            frames = wf.readframes(n_frames)
    except wave.Error as exc:
        raise UnsupportedFormatError(f"{path}: malformed RIFF/WAVE header: {exc}") from exc
    pcm = np.frombuffer(frames, dtype="<i2")
    if len(pcm) == 0:
        raise UnsupportedFormatError(f"{path}: data_chunk is empty")
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)


def write_wav(path, w: Waveform) -> None:
    """Encode a waveform as mono PCM16; inverse of read_wav's scaling."""
    pcm = np.clip(np.rint(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(w.sample_rate)
        wf.writeframes(pcm.tobytes())


def interp_resample(samples: np.ndarray, n_out: int) -> np.ndarray:
    """Resample to n_out points by linear interpolation.

    Output point i is the input evaluated at position i * n_in / n_out,
    clamped to the last sample; n_out == n_in is the identity.
    """
    samples = np.asarray(samples, dtype=np.float64)
    n_in = len(samples)
    if n_out < 1:
        raise ValueError(f"resample target length must be >= 1, got {n_out}")
    if n_out == n_in:
        return samples.copy()
    positions = np.arange(n_out, dtype=np.float64) * (n_in / n_out)
    return np.interp(positions, np.arange(n_in, dtype=np.float64), samples)


def resample_linear(w: Waveform, target_rate: int) -> Waveform:
    """Resample to target_rate; output length = round(n * target / source)."""
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == w.sample_rate:
        return Waveform(w.samples.copy(), w.sample_rate)
    n_out = int(round(len(w) * target_rate / w.sample_rate))
    return Waveform(interp_resample(w.samples, max(n_out, 1)), target_rate)


def fit_length(w: Waveform, n: int) -> Waveform:
    """Crop the tail or zero-pad the tail so the waveform has n samples."""
    if n < 1:
        raise ValueError(f"target length must be >= 1, got {n}")
    if len(w) == n:
        return w
    if len(w) > n:
        return Waveform(w.samples[:n].copy(), w.sample_rate)
    padded = np.zeros(n, dtype=np.float64)
    padded[: len(w)] = w.samples
    return Waveform(padded, w.sample_rate)


def load_clip(path, target_rate: int = WORKING_RATE) -> Waveform:
    """read_wav followed by resampling to the pipeline's working rate."""
    return resample_linear(read_wav(path), target_rate)
