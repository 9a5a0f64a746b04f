"""Command-line interface.

Subcommands: encode, decode, train, eval, fit-alpha, info. Exit codes:
0 success, 2 bad arguments or evaluation data, 3 file I/O, 4 bitstream
errors, 5 configuration or model-format errors, 6 training divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import struct
import sys

import numpy as np

from . import coder, evaluation, nn, training
from .errors import (
    ArgumentError,
    BitstreamError,
    ConfigurationError,
    EvaluationError,
    ModelFormatError,
    TrainingDivergedError,
)
from .frame import load_frame, save_frame
from .intra import QP_MAX, QP_MIN
from .resample import CONTEXT, DOWN_TAPS, HALF_TAPS_CHROMA, HALF_TAPS_LUMA

IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".pgm")


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("ARIC_THREADS", "")
    if env:
        try:
            return max(1, int(env))
        except ValueError as e:
            raise ArgumentError(f"ARIC_THREADS must be an integer, got {env!r}") from e
    return 1


def _parse_size(s: str) -> tuple[int, int]:
    try:
        w, h = s.lower().split("x")
        return int(w), int(h)
    except ValueError as e:
        raise ArgumentError(f"--size must be WxH, got {s!r}") from e


def _models_for_encode(args, qp):
    if not args.models:
        return None
    ms = coder.load_models_nearest(args.models, qp)
    if ms is None:
        raise ConfigurationError(f"{args.models}: no up-sampler models found")
    return ms


def cmd_encode(args) -> int:
    w, h = _parse_size(args.size)
    frame = load_frame(args.input, w, h)
    models = _models_for_encode(args, args.qp)
    if args.force_low and args.force_full:
        raise ArgumentError("--force-low and --force-full are mutually exclusive")
    opts = coder.EncodeOptions(
        force_mode="low" if args.force_low else ("full" if args.force_full else None),
        force_up=args.force_up,
        stage2=not args.no_stage2,
        lambda_scale=args.lambda_scale,
    )
    res = coder.encode_frame(frame, args.qp, models, opts)

    with open(args.out, "wb") as fh:
        fh.write(res.bitstream)
    save_frame(res.recon, args.out + ".recon.yuv")
    evaluation.write_decisions_csv(args.out + ".decisions.csv", res.decisions)
    stats = evaluation.hitting_stats(res.decisions)
    evaluation.write_csv(
        args.out + ".hitting.csv",
        ["p_hitting", "p_luma", "p_cb", "p_cr"],
        [(stats.p_hitting, stats.p_luma, stats.p_cb, stats.p_cr)],
    )
    for ch in ("y", "cb", "cr"):
        grid = evaluation.mode_map(res.decisions, ch)
        evaluation.write_csv(
            f"{args.out}.mode_map_{ch}.csv", [f"c{i}" for i in range(len(grid[0]))], grid
        )
    config = {
        "input": os.path.abspath(args.input),
        "width": w,
        "height": h,
        "qp": args.qp,
        "label": args.label,
        "models": os.path.abspath(args.models) if args.models else None,
        "model_tag": models.tag if models else None,
        "force_mode": opts.force_mode,
        "force_up": opts.force_up,
        "stage2": opts.stage2,
        "lambda_scale": opts.lambda_scale,
    }
    with open(args.out + ".config.json", "w") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")

    bits = len(res.bitstream) * 8
    hw, hh = w, h
    py = evaluation.psnr(res.recon.y[:hh, :hw], frame.y[:hh, :hw])
    pcb = evaluation.psnr(res.recon.cb[: hh // 2, : hw // 2], frame.cb[: hh // 2, : hw // 2])
    pcr = evaluation.psnr(res.recon.cr[: hh // 2, : hw // 2], frame.cr[: hh // 2, : hw // 2])
    sy = evaluation.ssim(res.recon.y[:hh, :hw], frame.y[:hh, :hw])
    evaluation.append_rd_point(
        os.path.join(os.path.dirname(os.path.abspath(args.out)), "rd_points.csv"),
        {
            "label": args.label,
            "input": os.path.abspath(args.input),
            "qp": args.qp,
            "bits": bits,
            "psnr_y": py,
            "psnr_cb": pcb,
            "psnr_cr": pcr,
            "ssim_y": sy,
        },
    )
    print(f"bits={bits}")
    print(f"psnr_y={py:.4f}")
    print(f"psnr_cb={pcb:.4f}")
    print(f"psnr_cr={pcr:.4f}")
    print(f"ssim_y={sy:.6f}")
    print(f"p_hitting={stats.p_hitting:.4f}")
    print(f"p_luma={stats.p_luma:.4f}")
    print(f"p_cb={stats.p_cb:.4f}")
    print(f"p_cr={stats.p_cr:.4f}")
    return 0


def cmd_decode(args) -> int:
    with open(args.bitstream, "rb") as fh:
        data = fh.read()
    if len(data) < coder.HEADER_SIZE:
        raise BitstreamError(f"{args.bitstream}: too short for a header")
    magic, _, _, _, _, tag, _ = struct.unpack_from(coder.HEADER_FMT, data)
    if magic != coder.BITSTREAM_MAGIC:
        raise BitstreamError(f"{args.bitstream}: bad magic {magic!r}")
    models = None
    if tag != coder.MODEL_TAG_NONE:
        if not args.models:
            raise ConfigurationError(
                f"bitstream requires up-sampler models with qp tag {tag}; pass --models"
            )
        models = coder.load_models_exact(args.models, tag)
    frame = coder.decode_frame(data, models)
    save_frame(frame, args.out)
    print(f"decoded {frame.orig_width}x{frame.orig_height} to {args.out}")
    return 0


def _corpus_paths(dirpath: str) -> list[str]:
    try:
        names = sorted(os.listdir(dirpath))
    except OSError:
        raise
    paths = [
        os.path.join(dirpath, n) for n in names if n.lower().endswith(IMAGE_EXTS)
    ]
    if not paths:
        raise ArgumentError(f"{dirpath}: no corpus images ({', '.join(IMAGE_EXTS)})")
    return paths


def _train_one(variant, pairs_split, args, arch, out_dir) -> int:
    tl, vl, tc, vc, records = pairs_split
    train_pairs, val_pairs = (tl, vl) if variant == "luma" else (tc, vc)
    cfg = training.TrainConfig(
        lr=args.lr, momentum=args.momentum, batch=args.batch, epochs=args.epochs,
        seed=args.seed,
    )
    model_path = os.path.join(out_dir, f"{variant}_qp{args.qp}.arun")
    log_path = model_path + ".log.csv"
    try:
        net, history = training.train_model(
            train_pairs, val_pairs, variant, args.qp, cfg, arch=arch, log_path=log_path
        )
    except TrainingDivergedError as e:
        ckpt = getattr(e, "checkpoint", None)
        if ckpt is not None:
            nn.save_model(ckpt, model_path)
            print(f"training diverged; last good checkpoint saved to {model_path}", file=sys.stderr)
        raise
    nn.save_model(net, model_path)
    gains = training.upsampling_psnr(val_pairs, net)
    base = training.upsampling_psnr(val_pairs, None)
    for ch in gains:
        print(
            f"{variant} psnr_{ch}: cnn={gains[ch]:.4f} dctif={base[ch]:.4f} "
            f"gain={gains[ch] - base[ch]:+.4f}"
        )
    print(f"saved {model_path} ({len(history)} epochs)")
    return 0


def cmd_train(args) -> int:
    paths = _corpus_paths(args.corpus)
    arch = None
    if args.arch_config:
        with open(args.arch_config) as fh:
            arch = nn.ArchConfig.from_dict(json.load(fh))
    os.makedirs(args.out_dir, exist_ok=True)
    image_pairs, skipped = training.generate_pairs(
        paths, args.qp, lambda_scale=args.lambda_scale, threads=_threads(args)
    )
    for s in skipped:
        print(f"skipped {s}", file=sys.stderr)
    split = training.split_dataset(image_pairs)
    training.write_manifest(os.path.join(args.out_dir, "manifest.jsonl"), split[4])
    variants = ("luma", "chroma") if args.variant == "both" else (args.variant,)
    for v in variants:
        _train_one(v, split, args, arch, args.out_dir)
    return 0


def cmd_eval(args) -> int:
    anchor = evaluation.read_rd_points(args.anchor)
    test = evaluation.read_rd_points(args.test)
    if args.manifest:
        records = training.load_manifest(args.manifest)
        training.check_no_overlap(records, [r["input"] for r in test])
    os.makedirs(args.out_dir, exist_ok=True)
    rows = []
    for metric in ("psnr_y", "psnr_cb", "psnr_cr", "ssim_y"):
        bd = evaluation.bd_rate(
            evaluation.aggregate_rd(anchor, metric), evaluation.aggregate_rd(test, metric)
        )
        rows.append((metric, bd))
        print(f"bd_rate[{metric}]={bd:+.4f}%")
    evaluation.write_csv(
        os.path.join(args.out_dir, "bd_rate.csv"), ["metric", "bd_rate_percent"], rows
    )
    return 0


def cmd_fit_alpha(args) -> int:
    runs = []
    for root, _, names in os.walk(args.runs):
        for n in sorted(names):
            if n.endswith(".decisions.csv"):
                base = os.path.join(root, n[: -len(".decisions.csv")])
                if os.path.exists(base + ".config.json"):
                    runs.append(base)
    if not runs:
        raise ArgumentError(f"{args.runs}: no decision/config file pairs found")
    by_ctu: dict = {}
    for base in sorted(runs):
        with open(base + ".config.json") as fh:
            config = json.load(fh)
        for d in evaluation.read_decisions_csv(base + ".decisions.csv"):
            if d["d_full"] is None or d["d_low"] is None:
                continue
            key = (config["input"], d["row"], d["col"])
            by_ctu.setdefault(key, {})[config["qp"]] = (d["d_full"], d["d_low"])
    fits = []
    for key, by_qp in sorted(by_ctu.items()):
        if len(by_qp) < 2:
            continue
        try:
            fits.append(evaluation.fit_alpha(list(by_qp.values())))
        except EvaluationError:
            continue
    if not fits:
        raise EvaluationError("no CTU had at least 2 usable QP points to fit")
    alphas = [f.alpha for f in fits]
    edges, counts = evaluation.alpha_histogram(alphas)
    os.makedirs(args.out_dir, exist_ok=True)
    evaluation.write_csv(
        os.path.join(args.out_dir, "alpha_hist.csv"),
        ["bin_lo", "bin_hi", "count"],
        [(edges[i], edges[i + 1], int(counts[i])) for i in range(len(counts))],
    )
    peak = int(np.argmax(counts))
    print(f"ctus_fitted={len(fits)}")
    print(f"alpha_median={float(np.median(alphas)):.4f}")
    print(f"alpha_peak_bin=[{edges[peak]},{edges[peak + 1]})")
    print(f"r2_mean={float(np.mean([f.r2 for f in fits])):.4f}")
    return 0


def cmd_info(args) -> int:
    if args.filters or not args.arch:
        print("down_taps:", " ".join(str(t) for t in DOWN_TAPS), "(sum 64 per axis)")
        print("half_pel_luma:", " ".join(str(t) for t in HALF_TAPS_LUMA), "(sum 64)")
        print("half_pel_chroma:", " ".join(str(t) for t in HALF_TAPS_CHROMA), "(sum 64)")
        print(f"context_samples: {CONTEXT}")
        print(f"qp_range: [{QP_MIN}, {QP_MAX}]")
    if args.arch or not args.filters:
        net = nn.UpsamplerNet("luma", 0)
        kind_names = {
            nn.KIND_CONV: "conv",
            nn.KIND_DECONV: "deconv2x",
            nn.KIND_RELU: "relu",
            nn.KIND_CONCAT: "concat",
            nn.KIND_ADD_SKIP: "add_dctif",
        }
        print("luma up-sampler layers (chroma differs only in 3-in/2-out channels):")
        for kind, kh, kw, ic, oc in nn._layer_table(net):
            if kh:
                print(f"  {kind_names[kind]} {kh}x{kw} {ic}->{oc}")
            else:
                print(f"  {kind_names[kind]} {ic}->{oc}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aric", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="encode one raw I420 frame")
    enc.add_argument("--input", required=True, help="raw I420 file")
    enc.add_argument("--size", required=True, help="frame size WxH")
    enc.add_argument("--qp", type=int, required=True)
    enc.add_argument("--out", required=True, help="output bitstream path")
    enc.add_argument("--models", help="directory of .arun model files")
    enc.add_argument("--force-low", action="store_true", help="force every CTU low")
    enc.add_argument("--force-full", action="store_true", help="force every CTU full")
    enc.add_argument("--force-up", choices=("cnn", "dctif"))
    enc.add_argument("--no-stage2", action="store_true", help="skip boundary refinement")
    enc.add_argument("--lambda-scale", type=float, default=0.57)
    enc.add_argument("--label", default="aric", help="label for rd_points.csv")
    enc.add_argument("--threads", type=int)
    enc.set_defaults(func=cmd_encode)

    dec = sub.add_parser("decode", help="decode a bitstream to raw I420")
    dec.add_argument("--bitstream", required=True)
    dec.add_argument("--models", help="directory of .arun model files")
    dec.add_argument("--out", required=True)
    dec.add_argument("--threads", type=int)
    dec.set_defaults(func=cmd_decode)

    tr = sub.add_parser("train", help="train up-sampler models on an image corpus")
    tr.add_argument("--corpus", required=True, help="directory of corpus images")
    tr.add_argument("--qp", type=int, required=True)
    tr.add_argument("--variant", choices=("luma", "chroma", "both"), default="both")
    tr.add_argument("--out-dir", required=True)
    tr.add_argument("--epochs", type=int, default=30)
    tr.add_argument("--batch", type=int, default=16)
    tr.add_argument("--lr", type=float, default=1e-4)
    tr.add_argument("--momentum", type=float, default=0.9)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--lambda-scale", type=float, default=0.57)
    tr.add_argument("--arch-config", help="JSON file overriding the architecture")
    tr.add_argument("--threads", type=int)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="BD-rate of a test rd_points.csv vs an anchor")
    ev.add_argument("--anchor", required=True, help="anchor rd_points.csv")
    ev.add_argument("--test", required=True, help="test rd_points.csv")
    ev.add_argument("--out-dir", required=True)
    ev.add_argument("--manifest", help="training manifest to guard against overlap")
    ev.add_argument("--threads", type=int)
    ev.set_defaults(func=cmd_eval)

    fa = sub.add_parser("fit-alpha", help="fit per-CTU distortion lines across QPs")
    fa.add_argument("--runs", required=True, help="directory of encode outputs")
    fa.add_argument("--out-dir", required=True)
    fa.add_argument("--threads", type=int)
    fa.set_defaults(func=cmd_fit_alpha)

    inf = sub.add_parser("info", help="print filter taps and network layout")
    inf.add_argument("--filters", action="store_true")
    inf.add_argument("--arch", action="store_true")
    inf.set_defaults(func=cmd_info)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as e:
        return int(e.code or 0)
    except ArgumentError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except EvaluationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except BitstreamError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except (ConfigurationError, ModelFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 5
    except TrainingDivergedError as e:
        print(f"error: {e}", file=sys.stderr)
        return 6


if __name__ == "__main__":
    sys.exit(main())
