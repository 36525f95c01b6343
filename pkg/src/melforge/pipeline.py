"""Dataset plumbing: manifests, training-set expansion, the spectrogram
cache and deterministic batch plans.

Training clips are quadrupled into variants 0..3: variant 0 stays raw,
variants 1-3 are independent speed-perturbed copies, each keyed by its
own random substream.  Validation and test clips are never augmented.
Spectrograms are computed once per (clip, variant, seed) and cached as
quantized PGM images; the real-time augmentations run on the
dequantized log-mels at batch-assembly time, before normalization.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

from .audio import WORKING_RATE, Waveform, fit_length, load_clip
from .augment import (
    AugmentationPlan,
    SpeedStep,
    apply_spectrogram_steps,
    speed_perturb,
)
from .features import (
    MelSpectrogram,
    dequantize,
    extract_log_mel,
    normalize_local,
    quantize_u8,
    read_gray_image,
    write_gray_image,
)
from .rng import RandomStream

LABELS = ("clear", "mask")
SPLITS = ("train", "devel", "test")
N_VARIANTS = 4  # one raw + three speed-perturbed copies

LABEL_TO_INT = {"clear": 0, "mask": 1}


class ManifestError(ValueError):
    """Manifest cannot be parsed or violates its invariants."""


class EmptyTrainSplitError(ValueError):
    pass


@dataclass
class ManifestEntry:
    clip_id: str
    path: Path
    label: str
    split: str


@dataclass
class Manifest:
    entries: list

    def split(self, name: str) -> list:
        return [e for e in self.entries if e.split == name]


@dataclass
class TrainingItem:
    clip_id: str
    variant: int  # 0 = raw, 1..3 = speed-perturbed
    label: str
    path: Path
    cached_image: Path | None = None

    def stream_id(self) -> tuple:
        return (self.clip_id, self.variant, "speed")


@dataclass
class TrainingSet:
    items: list
    seed: int


def load_manifest(path) -> Manifest:
    """Parse a `file_name,label[,split]` CSV; paths resolve next to it.

    Raises ManifestError with the offending row/field for duplicate
    clip ids, unknown labels or splits, and unresolvable paths.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such manifest: {path}")
    entries = []
    seen = set()
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty manifest") from None
        header = [h.strip() for h in header]
        if header[:2] != ["file_name", "label"]:
            raise ManifestError(f"{path}: header must start with file_name,label; got {header}")
        has_split = len(header) >= 3 and header[2] == "split"
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise ManifestError(f"{path}:{row_no}: expected at least 2 columns")
            file_name = row[0].strip()
            label = row[1].strip()
            split = row[2].strip() if has_split and len(row) > 2 and row[2].strip() else "train"
            if label not in LABELS:
                raise ManifestError(f"{path}:{row_no}: unknown label {label!r}")
            if split not in SPLITS:
                raise ManifestError(f"{path}:{row_no}: unknown split {split!r}")
            clip_id = Path(file_name).stem
            if clip_id in seen:
                raise ManifestError(f"{path}:{row_no}: duplicate clip_id {clip_id!r}")
            seen.add(clip_id)
            clip_path = (path.parent / file_name).resolve()
            if not clip_path.exists():
                raise ManifestError(f"{path}:{row_no}: audio file not found: {clip_path}")
            entries.append(ManifestEntry(clip_id, clip_path, label, split))
    return Manifest(entries)


def expand_training_set(manifest: Manifest, seed: int, quadruple: bool = True) -> TrainingSet:
    """Training items for the manifest's train split.

    With quadruple=True each clip yields four items (variant 0 raw,
    variants 1-3 speed-perturbed under distinct substreams); otherwise
    only the raw variant.  Devel/test entries are never included.
    """
    train_entries = manifest.split("train")
    if not train_entries:
        raise EmptyTrainSplitError("manifest has no train entries")
    items = []
    n_variants = N_VARIANTS if quadruple else 1
    for entry in train_entries:
        for variant in range(n_variants):
            items.append(TrainingItem(entry.clip_id, variant, entry.label, entry.path))
    return TrainingSet(items, seed)


def _image_name(clip_id: str, variant: int, seed: int) -> str:
    return f"{clip_id}__v{variant}__s{seed}.pgm"


def cache_clip(
    path,
    out_path,
    seed: int,
    stream_id: tuple = (),
    speed: SpeedStep | None = None,
) -> None:
    """Extract (optionally speed-perturbing first) and write one PGM."""
    clip = load_clip(path)
    if speed is not None:
        rs = RandomStream(seed, stream_id)
        perturbed = speed_perturb(clip, rs, speed.factor_lo, speed.factor_hi, speed.ratio)
        clip = fit_length(perturbed, len(clip))
    write_gray_image(out_path, quantize_u8(extract_log_mel(clip)))


def build_cache(
    ts: TrainingSet,
    manifest: Manifest,
    out_dir,
    speed: SpeedStep | None = None,
) -> dict:
    """Materialize the spectrogram cache and its index.

    One PGM per training item (variants > 0 speed-perturbed before
    extraction when a speed step is configured) and one per devel/test
    clip, never augmented.  Returns {(clip_id, variant): image_path} and
    writes `index.tsv` with `clip_id\tvariant\trelative_path` lines.
    Existing images are kept (the cache is content-addressed by
    clip, variant and seed), so rebuilding is a no-op.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = {}
    failures = []
    eval_entries = [e for e in manifest.entries if e.split != "train"]
    jobs = [(item.clip_id, item.variant, item.path, item.stream_id()) for item in ts.items]
    jobs += [(e.clip_id, 0, e.path, ()) for e in eval_entries]
    effective_speed = speed if speed is not None else SpeedStep()
    for clip_id, variant, path, stream_id in jobs:
        image_path = out_dir / _image_name(clip_id, variant, ts.seed)
        if not image_path.exists():
            try:
                cache_clip(path, image_path, ts.seed, stream_id,
                           effective_speed if variant > 0 else None)
            except (OSError, ValueError) as exc:
                failures.append(f"{clip_id} v{variant}: {exc}")
                continue
        index[(clip_id, variant)] = image_path
    if failures:
        raise RuntimeError("cache build failed for:\n  " + "\n  ".join(failures))
    lines = [
        f"{clip_id}\t{variant}\t{index[(clip_id, variant)].name}"
        for clip_id, variant in sorted(index)
    ]
    (out_dir / "index.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for item in ts.items:
        item.cached_image = index[(item.clip_id, item.variant)]
    return index


def batches(ts: TrainingSet, epoch: int, seed: int, batch_size: int = 200) -> list:
    """Seeded per-epoch permutation of item indices, chunked into batches.

    The order depends on (seed, epoch) only; the last batch may be
    short.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    n = len(ts.items)
    order = list(range(n))
    rs = RandomStream(seed, (epoch, "shuffle"))
    for i in range(n - 1, 0, -1):  # Fisher-Yates
        j = int(rs.uniform(0.0, float(i + 1)))
        order[i], order[j] = order[j], order[i]
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def assert_normalized(m: MelSpectrogram, where: str = "batch assembly") -> None:
    """Guard: tensors entering a model are standardized (or all zero)."""
    values = m.values
    if not values.any():
        return
    mean = abs(float(values.mean()))
    std = float(values.std())
    if mean >= 1e-6 or abs(std - 1.0) >= 1e-4:
        raise AssertionError(
            f"{where}: tensor not normalized (|mean|={mean:.3g}, std={std:.6f})"
        )


def load_training_tensor(
    item: TrainingItem,
    plan: AugmentationPlan,
    seed: int,
    epoch: int,
    item_index: int,
    check: bool = True,
) -> MelSpectrogram:
    """Dequantize a cached item, apply real-time steps, normalize.

    The augmentation stream is keyed by (epoch, item_index), so a fixed
    (seed, epoch, item) triple always reproduces the same tensor.
    """
    if item.cached_image is None:
        raise RuntimeError(f"item {item.clip_id} v{item.variant} has no cached image")
    m = dequantize(read_gray_image(item.cached_image))
    rs = RandomStream(seed, (epoch, item_index, "aug"))
    m = apply_spectrogram_steps(m, plan.spectrogram_steps, rs)
    m = normalize_local(m)
    if check:
        assert_normalized(m, where=f"{item.clip_id} v{item.variant}")
    return m


def load_eval_tensor(image_path, check: bool = True) -> MelSpectrogram:
    """Dequantize a cached devel/test image and normalize; no augmentation."""
    m = normalize_local(dequantize(read_gray_image(image_path)))
    if check:
        assert_normalized(m, where=str(image_path))
    return m
