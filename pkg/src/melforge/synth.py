"""Synthetic two-class corpus for desk-scale end-to-end runs.

The real corpus this pipeline was designed around is access-restricted,
so tests and demos generate their own: one-second 16 kHz mono clips of
harmonic tone stacks over broadband noise.  "clear" clips keep their
full bandwidth; "mask" clips run through a moving-average low-pass
twice, which attenuates the upper mel bands by an order of magnitude
and makes the classes cleanly separable in log-mel space.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .audio import Waveform, write_wav
from .pipeline import Manifest, load_manifest
from .rng import RandomStream

SYNTH_RATE = 16000
CLIP_SECONDS = 1.0
LOWPASS_TAPS = 9
TRAIN_FRACTION = 0.8


def _tone_stack(rs: RandomStream, n: int) -> np.ndarray:
    """Harmonic stack with random fundamental/phases plus white noise."""
    t = np.arange(n) / SYNTH_RATE
    f0 = rs.uniform(110.0, 240.0)
    sig = np.zeros(n)
    k = 1
    while k * f0 < 7600.0:
        phase = rs.uniform(0.0, 2.0 * np.pi)
        sig += np.sin(2.0 * np.pi * k * f0 * t + phase) / k
        k += 1
    sig *= 0.5 / np.max(np.abs(sig))
    noise_level = rs.uniform(0.02, 0.06)
    sig += rs.gaussian(0.0, noise_level, size=n)
    return np.clip(sig, -0.999, 0.999)


def _lowpass(x: np.ndarray) -> np.ndarray:
    kernel = np.ones(LOWPASS_TAPS) / LOWPASS_TAPS
    for _ in range(2):
        x = np.convolve(x, kernel, mode="same")
    return x


def synth_corpus(n_per_class: int, seed: int, out_dir) -> Manifest:
    """Generate the corpus and its manifest; returns the loaded manifest.

    Produces 2 * n_per_class WAVs with an 80/20 train/devel split per
    class.  Generation is deterministic in the seed and skips files that
    already exist, so re-running with the same arguments is a no-op.
    """
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_samples = int(SYNTH_RATE * CLIP_SECONDS)
    n_train = int(round(TRAIN_FRACTION * n_per_class))
    rows = []
    for label in ("clear", "mask"):
        for i in range(n_per_class):
            name = f"{label}_{i:04d}.wav"
            wav_path = out_dir / name
            if not wav_path.exists():
                rs = RandomStream(seed, (label, i, "synth"))
                x = _tone_stack(rs, n_samples)
                if label == "mask":
                    x = _lowpass(x)
                write_wav(wav_path, Waveform(x, SYNTH_RATE))
            split = "train" if i < n_train else "devel"
            rows.append(f"{name},{label},{split}")
    manifest_path = out_dir / "manifest.csv"
    content = "file_name,label,split\n" + "\n".join(rows) + "\n"
    if not (manifest_path.exists() and manifest_path.read_text(encoding="utf-8") == content):
        manifest_path.write_text(content, encoding="utf-8")
    return load_manifest(manifest_path)
