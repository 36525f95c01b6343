"""Training loop, evaluation and the JSON-lines run report.

One run = one (architecture, plan, seed) triple: build the spectrogram
cache for the seed, train with Adam on BCE, score the devel split after
every epoch and keep the checkpoint of the best devel UAR.  Everything
stochastic is keyed off the seed through counter-based streams, so a
repeated run reproduces losses, scores and artifacts bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentationPlan
from .metrics import confusion, uar
from .nn import Adam, bce_loss, build_model, save_checkpoint
from .nn.models import DEFAULT_INPUT_SHAPE, Model
from .pipeline import (
    LABEL_TO_INT,
    Manifest,
    TrainingSet,
    batches,
    build_cache,
    expand_training_set,
    load_eval_tensor,
    load_training_tensor,
)
from .rng import RandomStream

REPORT_SCHEMA_VERSION = 1
EVAL_CHUNK = 64


@dataclass
class TrainResult:
    seed: int
    arch: str
    plan: str
    best_uar: float
    epoch_of_best: int
    param_count: int
    train_losses: list = field(default_factory=list)
    devel_uars: list = field(default_factory=list)
    checkpoint: str | None = None

    def record(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "kind": "run",
            "seed": self.seed,
            "arch": self.arch,
            "plan": self.plan,
            "best_uar": self.best_uar,
            "epoch_of_best": self.epoch_of_best,
            "param_count": self.param_count,
            "train_losses": self.train_losses,
            "devel_uars": self.devel_uars,
            "checkpoint": self.checkpoint,
        }


def append_report(path, record: dict) -> None:
    """Append one self-describing record to the JSON-lines report."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(record, sort_keys=True) + "\n")


def summary_record(arch: str, plan: str, results: list) -> dict:
    """Mean and spread of the best devel UAR over seeds (one grid cell)."""
    scores = np.array([r.best_uar for r in results], dtype=np.float64)
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": "summary",
        "arch": arch,
        "plan": plan,
        "seeds": [r.seed for r in results],
        "n_seeds": len(results),
        "mean_best_uar": float(scores.mean()),
        "std_best_uar": float(scores.std()),
    }


def _batch_tensor(items, idxs, plan, seed, epoch):
    x = np.stack(
        [load_training_tensor(items[i], plan, seed, epoch, i).values for i in idxs]
    )[:, None, :, :]
    y = np.array([LABEL_TO_INT[items[i].label] for i in idxs], dtype=np.float64)
    return x, y


def evaluate(model: Model, image_paths, labels) -> float:
    """Eval-mode UAR over cached (unaugmented) spectrogram images."""
    probs = []
    for start in range(0, len(image_paths), EVAL_CHUNK):
        chunk = image_paths[start : start + EVAL_CHUNK]
        x = np.stack([load_eval_tensor(p).values for p in chunk])[:, None, :, :]
        probs.extend(model.predict_proba(x).tolist())
    return uar(confusion(probs, labels))


def evaluate_split(model: Model, manifest: Manifest, split: str, cache_index) -> float:
    entries = manifest.split(split)
    if not entries:
        raise ValueError(f"manifest has no {split!r} entries")
    paths = [cache_index[(e.clip_id, 0)] for e in entries]
    labels = [LABEL_TO_INT[e.label] for e in entries]
    return evaluate(model, paths, labels)


def train_run(
    manifest: Manifest,
    plan: AugmentationPlan,
    plan_name: str,
    arch: str,
    seed: int,
    cache_dir,
    epochs: int = 51,
    batch_size: int = 200,
    lr: float = 1e-4,
    weight_decay: float = 0.0,
    checkpoint_path=None,
    input_shape=DEFAULT_INPUT_SHAPE,
    log=None,
) -> TrainResult:
    """Train one model; returns the result with per-epoch curves.

    The training set is quadrupled (raw + three speed variants) exactly
    when the plan carries a speed step; spectrogram-domain steps run at
    batch assembly.  The checkpoint tracks the best devel UAR and is
    only written at epoch boundaries.
    """
    say = log if log is not None else (lambda msg: None)
    ts = expand_training_set(manifest, seed, quadruple=plan.speed is not None)
    index = build_cache(ts, manifest, cache_dir, speed=plan.speed)
    say(f"cache ready: {len(index)} images in {cache_dir}")

    model = build_model(arch, input_shape=input_shape, init_seed=seed)
    optimizer = Adam([p for _, p in model.named_params()], lr=lr, weight_decay=weight_decay)
    result = TrainResult(seed, arch, plan_name, best_uar=-1.0, epoch_of_best=-1,
                         param_count=model.param_count())

    for epoch in range(epochs):
        epoch_loss = 0.0
        n_seen = 0
        for batch_idx, idxs in enumerate(batches(ts, epoch, seed, batch_size)):
            x, y = _batch_tensor(ts.items, idxs, plan, seed, epoch)
            rng = RandomStream(seed, (epoch, batch_idx, "dropout"))
            out = model.forward(x, train=True, rng=rng)
            loss, dout = bce_loss(out, y)
            model.zero_grads()
            model.backward(dout)
            optimizer.step()
            epoch_loss += loss * len(idxs)
            n_seen += len(idxs)
        train_loss = epoch_loss / n_seen
        devel_uar = evaluate_split(model, manifest, "devel", index)
        result.train_losses.append(train_loss)
        result.devel_uars.append(devel_uar)
        say(f"epoch {epoch:3d}  loss {train_loss:.4f}  devel UAR {devel_uar:.4f}")
        if devel_uar > result.best_uar:
            result.best_uar = devel_uar
            result.epoch_of_best = epoch
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, model)
                result.checkpoint = str(checkpoint_path)
    return result
