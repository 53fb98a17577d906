#!/usr/bin/env python3
"""Management script for relic-desk runs."""

import argparse
import csv
import sys
from pathlib import Path
from typing import List, Optional

# Add the app directory to the Python path
sys.path.insert(0, str(Path(__file__).parent))

from app.core.config import get_settings
from app.core.exceptions import RelicException
from app.utils.logging import configure_logging


def print_banner():
    """Print application banner."""
    print("=" * 60, file=sys.stderr)
    print("🧪 relic-desk: self-supervised pretraining on a desk", file=sys.stderr)
    print("=" * 60, file=sys.stderr)


def _run_config(args, overrides=None):
    from app.models.presets import build_run_config, load_run_config
    from app.services.calibration_service import resolve_run_config

    if args.config:
        cfg = load_run_config(args.config, overrides)
    else:
        cfg = build_run_config(overrides or {}, preset=args.preset)
    return resolve_run_config(cfg)


def handle_pretrain(args) -> int:
    """Pretrain an online/target pair and write metrics plus checkpoints."""
    from app.services.storage import load_run_datasets
    from app.services.trainer_service import PretrainService

    cfg = _run_config(args)
    out = Path(args.out or Path(get_settings().runs_dir) / cfg.preset)
    train, _ = load_run_datasets(cfg.data, cfg.seed)
    print(f"🔄 Pretraining preset={cfg.preset} steps={cfg.schedule.total_steps} -> {out}")
    result = PretrainService(cfg, out).run(train, resume=args.resume)
    print(f"✅ Finished at step {result.step}; checkpoint: {result.checkpoint}")
    return 0


def _load_checkpoint(path):
    from app.services.storage import CheckpointStore

    return CheckpointStore().load(path)


def _datasets(cfg, dataset: Optional[str]):
    from app.services.storage import load_run_datasets

    data = cfg.data
    if dataset and dataset != "synth":
        data = data.model_copy(update={"source": "cifar10", "path": dataset})
    return load_run_datasets(data, cfg.seed)


def handle_probe(args) -> int:
    """Linear probe on frozen encoder outputs, next to the raw-input baseline."""
    from app.services.probe_service import knn_probe, linear_probe

    state = _load_checkpoint(args.ckpt)
    probe_cfg = state.config.probe
    train, val = _datasets(state.config, args.dataset)
    for label, net in (("encoder", state.net), ("raw", None)):
        result = linear_probe(net, train, val, probe_cfg)
        knn = knn_probe(net, train, val, probe_cfg)
        top5 = "n/a" if result.top5 is None else f"{result.top5:.4f}"
        print(f"📊 {label:8s} top1={result.top1:.4f} top5={top5} knn@{probe_cfg.knn_k}={knn:.4f}")
    return 0


def handle_analyze(args) -> int:
    """Neighbour tables, discriminant ratios and figures for encoder and raw inputs."""
    from app.services.analysis_service import AnalysisService, embedding_set

    state = _load_checkpoint(args.ckpt)
    _, val = _datasets(state.config, args.dataset)
    service = AnalysisService(k=args.k)
    for prefix, net in (("encoder", state.net), ("raw", None)):
        summary = service.emit_report(embedding_set(net, val, source=prefix), args.out, prefix=prefix)
        print(
            f"📊 {prefix:8s} purity@{args.k}={summary.purity:.4f} "
            f"median_ratio={summary.median_ratio:.4f} centroid={summary.median_centroid_ratio:.4f}"
        )
    print(f"✅ Report written to {args.out}")
    return 0


def handle_gen_masks(args) -> int:
    """Heuristic saliency masks for every image of a CIFAR-10 batch or split."""
    import numpy as np

    from app.business.saliency import heuristic_saliency
    from app.services.storage import DatasetStore, MaskStore

    store = DatasetStore()
    source = Path(args.dataset)
    dataset = store.load_cifar10_split(source, args.split) if source.is_dir() else store.load_cifar10_binary(source)
    print(f"🔄 Computing {len(dataset)} masks...")
    masks = np.stack([heuristic_saliency(img) for img in dataset.images])
    MaskStore().write(args.out, masks)
    print(f"✅ Masks written: {args.out} (mean foreground {masks.mean():.3f})")
    return 0


def handle_ablate(args) -> int:
    """Pretrain, probe and analyse once per value of one config key."""
    from app.business.analysis import discriminant_ratio, neighbor_purity
    from app.services.analysis_service import embedding_set
    from app.services.probe_service import knn_probe, linear_probe
    from app.services.storage import load_run_datasets
    from app.services.trainer_service import PretrainService

    out = Path(args.out or Path(get_settings().runs_dir) / f"ablate-{args.axis}")
    rows = []
    for value in [v.strip() for v in args.values.split(",") if v.strip()]:
        cfg = _run_config(args, {args.axis: value})
        train, val = load_run_datasets(cfg.data, cfg.seed)
        print(f"🔄 {args.axis}={value}")
        result = PretrainService(cfg, out / f"{args.axis}={value}").run(train)
        probe = linear_probe(result.net, train, val, cfg.probe)
        emb = embedding_set(result.net, val)
        knn = knn_probe(result.net, train, val, cfg.probe)
        rows.append((value, probe.top1, knn, neighbor_purity(emb, args.k), discriminant_ratio(emb).median))
        print(
            f"   top1={rows[-1][1]:.4f} knn={rows[-1][2]:.4f} purity={rows[-1][3]:.4f} median_ratio={rows[-1][4]:.4f}"
        )

    out.mkdir(parents=True, exist_ok=True)
    with (out / "ablation.csv").open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("value", "probe_top1", "knn_top1", "purity", "median_ratio"))
        writer.writerows(rows)
    print(f"✅ Ablation table: {out / 'ablation.csv'}")
    return 0


def handle_presets(args) -> int:
    """List the named presets."""
    from app.models.presets import PRESETS

    for name in PRESETS:
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="manage.py", description="relic-desk run management")
    commands = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="flat key=value run config file")
        p.add_argument("--preset", default="synth", help="preset used when --config is absent")
        return p

    p = with_config(commands.add_parser("pretrain", help="pretrain a network pair"))
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--out", help="run directory")
    p.set_defaults(handler=handle_pretrain)

    p = commands.add_parser("probe", help="linear probe of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--dataset", help="CIFAR-10 directory, or 'synth'")
    p.set_defaults(handler=handle_probe)

    p = commands.add_parser("analyze", help="latent-space report of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset", help="CIFAR-10 directory, or 'synth'")
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(handler=handle_analyze)

    p = commands.add_parser("gen-masks", help="write heuristic saliency masks")
    p.add_argument("--dataset", required=True, help="CIFAR-10 batch file or directory")
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train", choices=("train", "val"))
    p.set_defaults(handler=handle_gen_masks)

    p = with_config(commands.add_parser("ablate", help="sweep one config key"))
    p.add_argument("--axis", required=True, help="dotted config key, e.g. loss.beta")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", help="output directory")
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(handler=handle_ablate)

    p = commands.add_parser("presets", help="list presets")
    p.set_defaults(handler=handle_presets)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    configure_logging()
    print_banner()

    try:
        return args.handler(args)
    except RelicException as e:
        print(f"❌ {type(e).__name__}: {e.message}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print("\n❌ Operation cancelled by user", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
