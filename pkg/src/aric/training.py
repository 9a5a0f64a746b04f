"""Training pipeline for the up-sampler models.

Pairs come from compressing corpus images with every CTU forced to the low
path and DCTIF up-sampling, which needs no model: the reconstructed low-res
tiles (with their causal context, exactly as the coder assembles them) are
the inputs, the original full-res blocks the targets. Luma and chroma
models train separately; the chroma model predicts Cb and Cr jointly with a
combined squared error.

The corpus is split by image, the last tenth (sorted order) serving as the
validation set. Training stops early when validation MSE has not improved
for PATIENCE epochs and always returns the best-validation parameters. A
non-finite loss aborts with the last good parameters attached to the error.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .coder import LrReference, commit_lr_blocks, ctu_net_inputs, lr_intra_neighbors
from .errors import ArgumentError, EvaluationError, TrainingDivergedError
from .frame import CTU_SIZE, Frame, ctu_grid, frame_from_planes
from .intra import QP_MIN, encode_plane_intra, lambda_from_qp, validate_qp
from .nn import ArchConfig, MomentumSgd, UpsamplerNet, mse_loss_grad, train_batch
from .resample import downsample_2x

PATIENCE = 10
VAL_FRACTION = 0.1

_LR_BLOCK = {"y": CTU_SIZE // 2, "cb": CTU_SIZE // 4, "cr": CTU_SIZE // 4}


@dataclass
class TrainConfig:
    lr: float = 1e-4
    momentum: float = 0.9
    batch: int = 16
    epochs: int = 30
    seed: int = 0

    def validate(self) -> "TrainConfig":
        # epochs 0 is legal: the returned model is the initial one, whose
        # zero last layer makes it behave exactly like DCTIF.
        if self.lr <= 0 or not (0 <= self.momentum < 1) or self.batch < 1 or self.epochs < 0:
            raise ArgumentError(f"bad training config {self}")
        return self


@dataclass
class TrainingPair:
    """One sample: network input, its DCTIF up-sample, normalized target."""

    x: np.ndarray
    dctif_up: np.ndarray
    target: np.ndarray


@dataclass
class ImagePairs:
    path: str
    luma: list
    chroma: list


def rgb_to_ycbcr420(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full-range BT.601 conversion plus 2x2 chroma decimation."""
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ArgumentError("expected an (h, w, 3) RGB array")
    h, w = rgb.shape[0] & ~1, rgb.shape[1] & ~1
    if h < 2 or w < 2:
        raise ArgumentError(f"image too small: {rgb.shape[1]}x{rgb.shape[0]}")
    r, g, b = (rgb[:h, :w, i].astype(np.float64) for i in range(3))
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b

    def q(p):
        return np.clip(np.floor(p + 0.5), 0, 255).astype(np.uint8)

    def box2(p):
        s = p[0::2, 0::2] + p[0::2, 1::2] + p[1::2, 0::2] + p[1::2, 1::2]
        return s / 4.0

    return q(y), q(box2(cb)), q(box2(cr))


def load_corpus_image(path: str) -> Frame:
    """Decode an image file into a padded 4:2:0 frame."""
    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"))
    y, cb, cr = rgb_to_ycbcr420(rgb)
    return frame_from_planes(y, cb, cr)


def _image_pairs(path: str, qp: int, lambda_scale: float) -> ImagePairs:
    f = load_corpus_image(path)
    qp_low = max(qp - 6, QP_MIN)
    lam_low = lambda_from_qp(qp, lambda_scale) / 4.0
    lr_orig = {ch: downsample_2x(getattr(f, ch)) for ch in ("y", "cb", "cr")}
    ref = LrReference.zeros(f.width, f.height)
    luma, chroma = [], []
    rows, cols = ctu_grid(f)
    for row in range(rows):
        for col in range(cols):
            cores = {}
            for ch in ("y", "cb", "cr"):
                bs = _LR_BLOCK[ch]
                blk = lr_orig[ch][row * bs : (row + 1) * bs, col * bs : (col + 1) * bs]
                cores[ch] = encode_plane_intra(
                    blk, qp_low, lam_low, lr_intra_neighbors(ref, ch, row, col)
                ).recon
            inputs = ctu_net_inputs(ref, row, col, stage2=False, cores=cores)
            s = CTU_SIZE
            y_t = f.y[row * s : (row + 1) * s, col * s : (col + 1) * s]
            c = s // 2
            cb_t = f.cb[row * c : (row + 1) * c, col * c : (col + 1) * c]
            cr_t = f.cr[row * c : (row + 1) * c, col * c : (col + 1) * c]
            luma.append(
                TrainingPair(inputs.luma_x, inputs.luma_dctif, y_t[None].astype(np.float32) / 255.0)
            )
            chroma.append(
                TrainingPair(
                    inputs.chroma_x,
                    inputs.chroma_dctif,
                    np.stack([cb_t, cr_t]).astype(np.float32) / 255.0,
                )
            )
            commit_lr_blocks(ref, row, col, cores)
    return ImagePairs(path=path, luma=luma, chroma=chroma)


def generate_pairs(
    paths, qp: int, *, lambda_scale: float = 0.57, threads: int = 1
) -> tuple[list[ImagePairs], list[str]]:
    """Build training pairs for every readable image; returns (pairs, skipped)."""
    validate_qp(qp)
    paths = list(paths)
    if not paths:
        raise ArgumentError("no corpus images given")
    skipped = []

    def one(path):
        try:
            return _image_pairs(path, qp, lambda_scale)
        except (OSError, UnidentifiedImageError, ArgumentError) as e:
            return (path, str(e))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, paths))
    else:
        results = [one(p) for p in paths]
    out = []
    for r in results:
        if isinstance(r, ImagePairs):
            out.append(r)
        else:
            skipped.append(f"{r[0]}: {r[1]}")
    if not out:
        raise ArgumentError(f"no usable corpus images among {len(paths)}")
    return out, skipped


def split_dataset(image_pairs: list[ImagePairs]):
    """Per-image train/val split; the last tenth of the corpus validates.

    Returns (train_luma, val_luma, train_chroma, val_chroma, records) where
    records carry one manifest entry per image.
    """
    n = len(image_pairs)
    n_val = max(1, int(n * VAL_FRACTION)) if n > 1 else 1
    n_train = n - n_val
    train_imgs = image_pairs[:n_train] if n_train else image_pairs
    val_imgs = image_pairs[n_train:]
    records = [
        {"path": ip.path, "split": "train" if i < n_train or n_train == 0 else "val"}
        for i, ip in enumerate(image_pairs)
    ]
    tl = [p for ip in train_imgs for p in ip.luma]
    vl = [p for ip in val_imgs for p in ip.luma]
    tc = [p for ip in train_imgs for p in ip.chroma]
    vc = [p for ip in val_imgs for p in ip.chroma]
    return tl, vl, tc, vc, records


def pair_mse(net: UpsamplerNet, pair: TrainingPair) -> float:
    out = net.forward(pair.x, pair.dctif_up)
    loss, _ = mse_loss_grad(out, np.asarray(pair.target, net.dtype))
    return loss


def dataset_mse(net: UpsamplerNet, pairs) -> float:
    if not pairs:
        raise ArgumentError("empty pair set")
    return float(np.mean([pair_mse(net, p) for p in pairs]))


def _center_crop(a: np.ndarray, th: int, tw: int) -> np.ndarray:
    oy = (a.shape[-2] - th) // 2
    ox = (a.shape[-1] - tw) // 2
    return a[..., oy : oy + th, ox : ox + tw]


def upsampling_psnr(pairs, net: UpsamplerNet | None = None) -> dict:
    """Mean per-tile PSNR of the up-sampled output against the target.

    net=None measures the plain DCTIF up-sample. Keys are 'y' for 1-channel
    targets and 'cb'/'cr' for 2-channel ones.
    """
    if not pairs:
        raise ArgumentError("empty pair set")
    nch = pairs[0].target.shape[0]
    names = ("y",) if nch == 1 else ("cb", "cr")
    sums = np.zeros(nch)
    for p in pairs:
        th, tw = p.target.shape[-2:]
        out = net.forward(p.x, p.dctif_up) if net is not None else p.dctif_up
        got = np.clip(np.floor(_center_crop(out, th, tw) * 255.0 + 0.5), 0, 255)
        want = p.target * 255.0
        for i in range(nch):
            mse = float(np.mean((got[i] - want[i]) ** 2))
            sums[i] += 10.0 * np.log10(255.0**2 / mse) if mse > 0 else np.inf
    return {name: float(sums[i] / len(pairs)) for i, name in enumerate(names)}


def train_model(
    train_pairs,
    val_pairs,
    variant: str,
    qp: int,
    cfg: TrainConfig | None = None,
    *,
    arch: ArchConfig | None = None,
    log_path: str | None = None,
    progress=None,
) -> tuple[UpsamplerNet, list[tuple[int, float, float]]]:
    """Train one model; returns the best-validation network and the history.

    progress, if given, is called as progress(epoch, train_mse, val_mse)
    after each epoch and may return True to stop training early.
    """
    cfg = (cfg or TrainConfig()).validate()
    validate_qp(qp)
    if not train_pairs or not val_pairs:
        raise ArgumentError("need non-empty train and validation pair sets")
    rng = np.random.default_rng(cfg.seed)
    net = UpsamplerNet(variant, qp, arch, rng=rng)
    opt = MomentumSgd(cfg.lr, cfg.momentum, clip=1.0)
    best = net.clone()
    best_val = dataset_mse(net, val_pairs)
    history = []
    bad_epochs = 0
    log = None
    try:
        if log_path:
            log = open(log_path, "w")
            log.write("epoch,train_mse,val_mse\n")
        for epoch in range(1, cfg.epochs + 1):
            perm = rng.permutation(len(train_pairs))
            losses = []
            for i in range(0, len(perm), cfg.batch):
                batch = [
                    (train_pairs[j].x, train_pairs[j].dctif_up, train_pairs[j].target)
                    for j in perm[i : i + cfg.batch]
                ]
                try:
                    losses.append(train_batch(net, batch, opt))
                except TrainingDivergedError as e:
                    e.checkpoint = best
                    raise
            train_mse = float(np.mean(losses))
            val = dataset_mse(net, val_pairs)
            if not np.isfinite(val):
                err = TrainingDivergedError(f"non-finite validation MSE at epoch {epoch}")
                err.checkpoint = best
                raise err
            history.append((epoch, train_mse, val))
            if log:
                log.write(f"{epoch},{train_mse!r},{val!r}\n")
                log.flush()
            if val < best_val:
                best_val = val
                best = net.clone()
                bad_epochs = 0
            else:
                bad_epochs += 1
            if progress is not None and progress(epoch, train_mse, val):
                break
            if bad_epochs >= PATIENCE:
                break
    finally:
        if log:
            log.close()
    return best, history


def write_manifest(path: str, records) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def load_manifest(path: str) -> list[dict]:
    records = []
    with open(path) as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ArgumentError(f"{path}:{i + 1}: bad manifest line: {e}") from e
    return records


def check_no_overlap(manifest_records, eval_paths) -> None:
    """Refuse evaluation inputs that appeared in the training manifest."""
    trained = {os.path.basename(r["path"]) for r in manifest_records}
    overlap = sorted(trained & {os.path.basename(p) for p in eval_paths})
    if overlap:
        raise EvaluationError(
            f"evaluation inputs overlap the training set: {', '.join(overlap)}"
        )
