"""Command-line entry point: data generation, training, inference, evaluation."""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .containers import write_tensor_file
from .datagen import DEFAULT_CLASSES, make_dataset
from .dsp import FeatureConfig, extract_logmel, mel_filterbank, read_wav, stft, write_wav
from .evaluate import EvalConfig, evaluate_fold
from .manifest import load_manifest, manifest_labels, resolve
from .metrics import CollarSpec
from .network import NetworkConfig
from .pooling import PoolingSpec
from .postprocess import PostProcessConfig, detect_events, write_events_csv
from .separation import separate_class
from .training import (
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    save_loss_log,
    train,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_FILE = 3


def _add_threshold_flags(parser):
    parser.add_argument("--hi", type=float, default=0.2,
                        help="high threshold seeding event segments")
    parser.add_argument("--lo", type=float, default=0.1,
                        help="low threshold extending event segments")
    parser.add_argument("--min-dur-frames", type=int, default=10)
    parser.add_argument("--min-gap-frames", type=int, default=10)
    parser.add_argument("--tag-threshold", type=float, default=0.5)
    parser.add_argument("--frame-threshold", type=float, default=0.2)
    parser.add_argument("--tf-threshold", type=float, default=0.5)
    parser.add_argument("--filter-before-join", action="store_true",
                        help="drop short segments before joining gaps")


def _postprocess_config(args) -> PostProcessConfig:
    return PostProcessConfig(
        hi=args.hi, lo=args.lo,
        min_dur_frames=args.min_dur_frames,
        min_gap_frames=args.min_gap_frames,
        tag_threshold=args.tag_threshold,
        join_before_filter=not args.filter_before_join,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wsed",
        description="Weakly supervised sound event detection toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=4,
                   help=f"number of classes (1..{len(DEFAULT_CLASSES)})")
    p.add_argument("--clips", type=int, default=400)
    p.add_argument("--snr", type=float, nargs="+", default=[0.0],
                   help="SNR grid in dB, cycled over clips")
    p.add_argument("--folds", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--clip-seconds", type=float, default=5.0)

    p = sub.add_parser("train", help="train a segmentation network")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fold", type=int, required=True,
                   help="held-out fold; remaining folds train")
    p.add_argument("--pooling", choices=["gmp", "gap", "gwrp"],
                   default="gwrp")
    p.add_argument("--r", type=float, default=0.9998,
                   help="gwrp rank decay")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--channels", default="16,32",
                   help="comma-separated conv block channels")
    p.add_argument("--convs-per-block", type=int, default=2)
    p.add_argument("--window", type=int, default=1024)
    p.add_argument("--hop", type=int, default=512)
    p.add_argument("--mels", type=int, default=40)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--positive-only-loss", action="store_true",
                   help="keep only the positive-class loss term (ablation)")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("infer", help="detect events with a trained model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fold", type=int, required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--events-out", required=True, help="output events CSV")
    p.add_argument("--masks-out", default=None,
                   help="directory for per-clip mask dumps")
    p.add_argument("--seed", type=int, default=0)
    _add_threshold_flags(p)

    p = sub.add_parser("evaluate", help="score a model on the held-out fold")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fold", type=int, required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--report", required=True, help="output JSON report")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-figures", action="store_true")
    _add_threshold_flags(p)

    p = sub.add_parser("separate", help="write separated sources per clip")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fold", type=int, required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    _add_threshold_flags(p)
    return parser


def _cmd_make_data(args) -> int:
    manifest = make_dataset(
        args.out, n_classes=args.classes, n_clips=args.clips,
        snrs=args.snr, folds=args.folds, seed=args.seed,
        sample_rate=args.sample_rate, clip_seconds=args.clip_seconds)
    print(manifest)
    return EXIT_OK


def _cmd_train(args) -> int:
    feature_config = FeatureConfig(
        sample_rate=args.sample_rate, window_size=args.window,
        hop=args.hop, n_mels=args.mels)
    records = load_manifest(args.manifest)
    labels = manifest_labels(records)
    network_config = NetworkConfig(
        n_mels=args.mels, n_classes=len(labels),
        block_channels=[int(c) for c in args.channels.split(",")],
        convs_per_block=args.convs_per_block)
    config = TrainConfig(
        pooling=PoolingSpec(args.pooling,
                            args.r if args.pooling == "gwrp" else 1.0),
        batch_size=args.batch, lr=args.lr, epochs=args.epochs,
        seed=args.seed, positive_only_loss=args.positive_only_loss)

    def progress(epoch, loss):
        print(f"epoch {epoch:3d}  loss {loss:.4f}", file=sys.stderr)

    checkpoint, losses = train(args.manifest, args.fold, config,
                               network_config=network_config,
                               feature_config=feature_config,
                               progress=progress)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(checkpoint, out)
    loss_log = out.with_suffix(out.suffix + ".loss.csv")
    save_loss_log(losses, loss_log)
    if not args.no_figures:
        from .plots import save_loss_curve

        save_loss_curve(losses, out.with_suffix(out.suffix + ".loss.png"))
    print(out)
    return EXIT_OK


def _iter_fold_clips(checkpoint, manifest_path, fold):
    records = load_manifest(manifest_path)
    labels = manifest_labels(records)
    if labels != checkpoint.labels:
        raise ValueError(
            f"manifest classes {labels} differ from checkpoint classes "
            f"{checkpoint.labels}"
        )
    test_records = [r for r in records if r.fold == fold]
    if not test_records:
        raise ValueError(f"fold {fold} contains no clips")
    net = checkpoint.build_network()
    feature_config = checkpoint.feature_config
    for record in test_records:
        wav = read_wav(resolve(record.mixture, manifest_path))
        feat = extract_logmel(wav, feature_config)
        yield record, wav, net.infer_masks(feat)


def _cmd_infer(args) -> int:
    checkpoint = load_checkpoint(args.ckpt)
    pooling = checkpoint.train_config.pooling
    hop_seconds = (checkpoint.feature_config.hop
                   / checkpoint.feature_config.sample_rate)
    pp = _postprocess_config(args)
    rows = []
    masks_dir = Path(args.masks_out) if args.masks_out else None
    if masks_dir:
        masks_dir.mkdir(parents=True, exist_ok=True)
    for record, _, masks in _iter_fold_clips(checkpoint, args.manifest,
                                             args.fold):
        events, _ = detect_events(masks, pooling, hop_seconds,
                                  checkpoint.labels, pp)
        rows.extend((record.clip_id, event, conf) for event, conf in events)
        if masks_dir:
            write_tensor_file(masks_dir / f"{record.clip_id}.masks",
                              masks.astype(np.float32))
    out = Path(args.events_out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_events_csv(rows, out)
    print(out)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    checkpoint = load_checkpoint(args.ckpt)
    eval_config = EvalConfig(
        frame_threshold=args.frame_threshold,
        tf_threshold=args.tf_threshold,
        postprocess=_postprocess_config(args),
        collars=CollarSpec(),
    )
    report = evaluate_fold(checkpoint, args.manifest, args.fold, eval_config)
    out = Path(args.report)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_report_csv(report, out.with_suffix(".csv"))
    if not args.no_figures:
        from .plots import save_report_figures

        save_report_figures(report, out)
    macro = report["tagging"]["macro"]
    print(f"{out}  tagging_f1={macro['f1']:.3f}")
    return EXIT_OK


def _write_report_csv(report: dict, path) -> None:
    """Flat per-class metric table next to the JSON report."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "class", "f1", "auc", "ap",
                         "er", "s", "d", "i"])

        def fmt(value):
            if value is None:
                return ""
            if isinstance(value, float):
                return f"{value:.6f}"
            return value

        for level in ("tagging", "frame", "event", "tf"):
            block = report[level]["per_class"]
            for label in sorted(block):
                b = block[label]
                writer.writerow([
                    level, label, fmt(b.get("f1")), fmt(b.get("auc")),
                    fmt(b.get("ap")), fmt(b.get("er")), fmt(b.get("s")),
                    fmt(b.get("d")), fmt(b.get("i")),
                ])
            macro = report[level]["macro"]
            writer.writerow([
                level, "__macro__", fmt(macro.get("f1")),
                fmt(macro.get("auc")), fmt(macro.get("map")),
                fmt(macro.get("er")), fmt(macro.get("s")),
                fmt(macro.get("d")), fmt(macro.get("i")),
            ])


def _cmd_separate(args) -> int:
    checkpoint = load_checkpoint(args.ckpt)
    pooling = checkpoint.train_config.pooling
    feature_config = checkpoint.feature_config
    fbank = mel_filterbank(feature_config.sample_rate,
                           feature_config.window_size, feature_config.n_mels,
                           feature_config.f_min, feature_config.f_max)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .network import predict_tags
    from .postprocess import tagging_gate

    written = 0
    for record, wav, masks in _iter_fold_clips(checkpoint, args.manifest,
                                               args.fold):
        mix_spec = stft(wav, feature_config.window_size, feature_config.hop)
        tags = predict_tags(masks, pooling)
        for k in sorted(tagging_gate(tags, args.tag_threshold)):
            label = checkpoint.labels[k]
            separated = separate_class(masks[k].astype(np.float64), mix_spec,
                                       fbank)
            write_wav(out_dir / f"{record.clip_id}__{label}.wav", separated)
            written += 1
    print(f"{out_dir}  ({written} files)")
    return EXIT_OK


_COMMANDS = {
    "make-data": _cmd_make_data,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "evaluate": _cmd_evaluate,
    "separate": _cmd_separate,
}


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except (FileNotFoundError, IsADirectoryError, PermissionError, OSError) as exc:
        print(f"wsed: file error: {exc}", file=sys.stderr)
        return EXIT_FILE
    except Exception as exc:
        print(f"wsed: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
