"""Command-line entry point.

    melforge synth    --n 100 --seed 7 --out data/
    melforge extract  --manifest data/manifest.csv --cache-dir cache --seed 0 [--plan speed]
    melforge preview  --clip data/clear_0000.wav --plan combined --out previews/ [--seed 0]
    melforge train    [--config run.cfg] [--arch cc --plan shift --seeds 0,1,2 ...]
    melforge eval     --checkpoint ck.bin --manifest ... --cache-dir ... [--split devel]
    melforge params   [--arch cc]

Flags override config-file values; the MELFORGE_CACHE environment
variable supplies the cache directory when neither does.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .audio import load_clip
from .augment import AugmentationPlan, apply_plan, speed_perturb
from .audio import fit_length
from .config import (
    RunConfig,
    format_plan,
    load_config,
    parse_plan,
)
from .features import extract_log_mel, quantize_u8, write_gray_image
from .nn import REFERENCE_PARAM_COUNTS, build_model, load_checkpoint
from .nn.models import ARCHITECTURES
from .pipeline import build_cache, expand_training_set, load_manifest
from .rng import RandomStream
from .synth import synth_corpus
from .train import append_report, evaluate_split, summary_record, train_run


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    for name, attr in [
        ("manifest", "manifest"), ("cache_dir", "cache_dir"), ("report", "report"),
        ("checkpoint_dir", "checkpoint_dir"), ("arch", "arch"), ("plan", "plan"),
        ("epochs", "epochs"), ("batch_size", "batch_size"), ("lr", "lr"),
        ("weight_decay", "weight_decay"),
    ]:
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, attr, value)
    if getattr(args, "seeds", None):
        cfg.seeds = [int(s) for s in args.seeds.split(",")]
    return cfg


def _load_cfg(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    return _apply_overrides(cfg, args)


def cmd_synth(args) -> int:
    manifest = synth_corpus(args.n, args.seed, args.out)
    print(f"wrote {2 * args.n} clips; manifest: {Path(args.out) / 'manifest.csv'}")
    print(f"train={len(manifest.split('train'))} devel={len(manifest.split('devel'))}")
    return 0


def cmd_extract(args) -> int:
    cfg = _load_cfg(args)
    plan = cfg.resolved_plan()
    manifest = load_manifest(cfg.manifest)
    for seed in cfg.seeds:
        ts = expand_training_set(manifest, seed, quadruple=plan.speed is not None)
        index = build_cache(ts, manifest, cfg.resolved_cache_dir(), speed=plan.speed)
        print(f"seed {seed}: cached {len(index)} spectrograms in {cfg.resolved_cache_dir()}")
    return 0


def cmd_preview(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    plan = parse_plan(args.plan)
    clip = load_clip(args.clip)
    stem = Path(args.clip).stem
    raw_path = out_dir / f"{stem}__raw.pgm"
    write_gray_image(raw_path, quantize_u8(extract_log_mel(clip)))
    written = [raw_path]
    for i, step in enumerate(plan.steps):
        rs = RandomStream(args.seed, ("preview", i, step.kind))
        if step.kind == "speed":
            w = speed_perturb(clip, rs, step.factor_lo, step.factor_hi, step.ratio)
            m = extract_log_mel(fit_length(w, len(clip)))
        else:
            m = step.apply(extract_log_mel(clip), rs)
        path = out_dir / f"{stem}__{i}_{step.kind}.pgm"
        write_gray_image(path, quantize_u8(m))
        written.append(path)
    for path in written:
        print(path)
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    plan = cfg.resolved_plan()
    manifest = load_manifest(cfg.manifest)
    ckpt_dir = Path(cfg.checkpoint_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    results = []
    for seed in cfg.seeds:
        ckpt = ckpt_dir / f"{cfg.arch}__{cfg.plan}__s{seed}.ckpt"
        result = train_run(
            manifest, plan, cfg.plan, cfg.arch, seed,
            cache_dir=cfg.resolved_cache_dir(), epochs=cfg.epochs,
            batch_size=cfg.batch_size, lr=cfg.lr, weight_decay=cfg.weight_decay,
            checkpoint_path=ckpt, log=print,
        )
        append_report(cfg.report, result.record())
        print(f"seed {seed}: best devel UAR {result.best_uar:.4f} "
              f"at epoch {result.epoch_of_best} -> {ckpt}")
        results.append(result)
    if len(results) > 1:
        summary = summary_record(cfg.arch, cfg.plan, results)
        append_report(cfg.report, summary)
        print(f"{cfg.arch}+{cfg.plan}: UAR {100 * summary['mean_best_uar']:.2f} "
              f"± {100 * summary['std_best_uar']:.2f} over {summary['n_seeds']} seeds")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    model = load_checkpoint(args.checkpoint)
    manifest = load_manifest(cfg.manifest)
    plan = cfg.resolved_plan()
    seed = cfg.seeds[0]
    ts = expand_training_set(manifest, seed, quadruple=plan.speed is not None)
    index = build_cache(ts, manifest, cfg.resolved_cache_dir(), speed=plan.speed)
    score = evaluate_split(model, manifest, args.split, index)
    print(f"{args.split} UAR: {score:.6f}")
    return 0


def _print_params(arch: str) -> None:
    model = build_model(arch)
    print(f"architecture: {arch}")
    total = 0
    for name, shape, count in model.layer_table():
        print(f"  {name:<28} {'x'.join(map(str, shape)):>12}  {count:>9}")
        total += count
    print(f"  {'total':<28} {'':>12}  {total:>9}")
    reference = REFERENCE_PARAM_COUNTS[arch]
    deviation = total - reference
    rel = deviation / reference
    print(f"  reference total {reference}  deviation {deviation:+d} ({rel:+.4%})")


def cmd_params(args) -> int:
    archs = ARCHITECTURES if args.arch == "all" else [args.arch]
    for arch in archs:
        _print_params(arch)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="melforge", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic two-class corpus")
    p.add_argument("--n", type=int, required=True, help="clips per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    def add_common(p):
        p.add_argument("--config", help="config file; flags override its values")
        p.add_argument("--manifest")
        p.add_argument("--cache-dir", dest="cache_dir")
        p.add_argument("--plan", help="preset name or step list")
        p.add_argument("--seeds", help="comma-separated seeds")

    p = sub.add_parser("extract", help="build the spectrogram cache")
    add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("preview", help="write per-augmentation spectrogram images")
    p.add_argument("--clip", required=True)
    p.add_argument("--plan", default="combined")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_preview)

    p = sub.add_parser("train", help="train one architecture/plan over seeds")
    add_common(p)
    p.add_argument("--arch", choices=list(ARCHITECTURES))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--report")
    p.add_argument("--checkpoint-dir", dest="checkpoint_dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a split")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="devel", choices=["train", "devel", "test"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("params", help="per-layer parameter counts")
    p.add_argument("--arch", default="all", choices=list(ARCHITECTURES) + ["all"])
    p.set_defaults(func=cmd_params)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"melforge: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
