"""Simplified intra-frame plane codec on 8x8 blocks.

Each block picks one of four predictors (DC, horizontal, vertical, planar,
coded as 2 fixed bits), transforms the residual with the 8x8 HEVC-style
integer DCT, quantizes with a dead-zone quantizer and entropy-codes the
zigzagged levels as run-length exp-Golomb tokens. Mode selection minimizes
J = SSD + lambda * bits. Encoder and decoder share the reconstruction path,
so the loop is closed by construction.

Missing top/left borders predict from the constant 128. The sample above and
right of a block comes from the fully coded row above (replicating the last
column at the right edge); the sample below and left is never coded yet in
raster order, so the bottom of the left column stands in for it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bits import BitReader, BitWriter, ue_size
from .errors import ArgumentError, BitstreamError

QP_MIN = 0
QP_MAX = 57

MODE_DC = 0
MODE_HORIZONTAL = 1
MODE_VERTICAL = 2
MODE_PLANAR = 3

# Gain of the 2D forward transform; the quantizer step absorbs it.
TRANSFORM_GAIN = 16

# Dequantized coefficients are clamped here so garbage streams cannot
# overflow the inverse transform.
_COEF_RANGE = 1 << 19

DCT8 = np.array(
    [
        [64, 64, 64, 64, 64, 64, 64, 64],
        [89, 75, 50, 18, -18, -50, -75, -89],
        [83, 36, -36, -83, -83, -36, 36, 83],
        [75, -18, -89, -50, 50, 89, 18, -75],
        [64, -64, -64, 64, 64, -64, -64, 64],
        [50, -89, 18, 75, -75, -18, 89, -50],
        [36, -83, 83, -36, -36, 83, -83, 36],
        [18, -50, 75, -89, 89, -75, 50, -18],
    ],
    np.int64,
)


def _zigzag_order(n: int = 8) -> np.ndarray:
    order = []
    for s in range(2 * n - 1):
        lo, hi = max(0, s - n + 1), min(n - 1, s)
        rows = range(hi, lo - 1, -1) if s % 2 == 0 else range(lo, hi + 1)
        order.extend(r * n + (s - r) for r in rows)
    return np.array(order)


ZIGZAG8 = _zigzag_order()


def validate_qp(qp: int) -> int:
    if not isinstance(qp, (int, np.integer)) or not QP_MIN <= qp <= QP_MAX:
        raise ArgumentError(f"qp must be an integer in [{QP_MIN}, {QP_MAX}], got {qp!r}")
    return int(qp)


def qstep(qp: int) -> float:
    """Quantizer step before the transform gain."""
    return 2.0 ** ((validate_qp(qp) - 4) / 6.0)


def lambda_from_qp(qp: int, c: float = 0.57) -> float:
    """Rate-distortion multiplier for a QP."""
    if c <= 0:
        raise ArgumentError(f"lambda scale must be positive, got {c}")
    return c * 2.0 ** ((validate_qp(qp) - 12) / 3.0)


def fwd_dct8(block: np.ndarray) -> np.ndarray:
    """Forward 8x8 transform of residual blocks (..., 8, 8)."""
    a = (DCT8 @ block.astype(np.int64) + 2) >> 2
    return (a @ DCT8.T + 256) >> 9


def inv_dct8(coef: np.ndarray) -> np.ndarray:
    """Inverse 8x8 transform back to residuals."""
    a = (DCT8.T @ coef.astype(np.int64) + 64) >> 7
    return (a @ DCT8 + 2048) >> 12


def quantize(coef: np.ndarray, qp: int) -> np.ndarray:
    """Dead-zone quantization: level = sign * floor(|c|/Q + 1/3)."""
    q = qstep(qp) * TRANSFORM_GAIN
    return (np.sign(coef) * np.floor(np.abs(coef) / q + 1.0 / 3.0)).astype(np.int64)


def dequantize(levels: np.ndarray, qp: int) -> np.ndarray:
    """Reconstruction: sign * round(|level| * Q), clamped to transform range."""
    q = qstep(qp) * TRANSFORM_GAIN
    d = np.sign(levels) * np.floor(np.abs(levels) * q + 0.5)
    return np.clip(d, -_COEF_RANGE, _COEF_RANGE - 1).astype(np.int64)


@dataclass
class PlaneNeighbors:
    """Decoded border samples from neighboring blocks of the same plane.

    top is the row directly above the plane (length = plane width), left the
    column directly to its left (length = plane height). None means the side
    does not exist.
    """

    top: np.ndarray | None = None
    left: np.ndarray | None = None


@dataclass
class CodedBlock:
    """Result of encoding one plane-shaped block of samples."""

    payload: bytes
    bits: int
    recon: np.ndarray
    distortion_ssd: int


def _predict_modes(
    recon: np.ndarray, nbr: PlaneNeighbors | None, by: int, bx: int
) -> np.ndarray:
    """All four 8x8 predictors for the block at (by, bx), stacked (4, 8, 8)."""
    h, w = recon.shape
    ext_top = nbr.top if nbr is not None else None
    ext_left = nbr.left if nbr is not None else None

    if by > 0:
        top_src = recon[by - 1]
    elif ext_top is not None:
        top_src = ext_top
    else:
        top_src = None
    if top_src is not None:
        top = top_src[bx : bx + 8].astype(np.int64)
        top_right = int(top_src[bx + 8] if bx + 8 < w else top_src[w - 1])
    else:
        top = np.full(8, 128, np.int64)
        top_right = 128

    if bx > 0:
        left = recon[by : by + 8, bx - 1].astype(np.int64)
    elif ext_left is not None:
        left = ext_left[by : by + 8].astype(np.int64)
    else:
        left = np.full(8, 128, np.int64)
    bottom_left = int(left[7])

    preds = np.empty((4, 8, 8), np.int64)
    preds[MODE_DC] = (int(top.sum()) + int(left.sum()) + 8) >> 4
    preds[MODE_HORIZONTAL] = left[:, None]
    preds[MODE_VERTICAL] = top[None, :]
    ys = np.arange(8)[:, None]
    xs = np.arange(8)[None, :]
    preds[MODE_PLANAR] = (
        (7 - xs) * left[:, None]
        + (xs + 1) * top_right
        + (7 - ys) * top[None, :]
        + (ys + 1) * bottom_left
        + 8
    ) >> 4
    return preds


def _tokenize(zz_levels: np.ndarray) -> tuple[list[tuple[int, int]], bool]:
    """Run-length tokens of a zigzagged level vector, plus end-of-block need."""
    nz = np.nonzero(zz_levels)[0]
    toks = []
    prev = -1
    for i in nz:
        toks.append((int(i) - prev - 1, int(zz_levels[i])))
        prev = int(i)
    return toks, prev < len(zz_levels) - 1


def _token_bits(toks: list[tuple[int, int]], eob: bool) -> int:
    b = 1 if eob else 0
    for run, lvl in toks:
        b += ue_size(run + 1) + ue_size(abs(lvl) - 1) + 1
    return b


def _write_tokens(w: BitWriter, toks: list[tuple[int, int]], eob: bool) -> None:
    for run, lvl in toks:
        w.write_ue(run + 1)
        w.write_ue(abs(lvl) - 1)
        w.write_bit(1 if lvl < 0 else 0)
    if eob:
        w.write_ue(0)


def _check_plane_dims(h: int, w: int) -> None:
    if h < 8 or w < 8 or h % 8 or w % 8:
        raise ArgumentError(f"plane dimensions must be multiples of 8, got {w}x{h}")


def encode_plane_intra(
    p: np.ndarray, qp: int, lam: float, nbr: PlaneNeighbors | None = None
) -> CodedBlock:
    """Encode one plane; returns payload, exact bit count, recon and SSD."""
    validate_qp(qp)
    if p.ndim != 2:
        raise ArgumentError("encode_plane_intra expects a 2D plane")
    h, w = p.shape
    _check_plane_dims(h, w)
    src = p.astype(np.int64)
    recon = np.zeros((h, w), np.uint8)
    writer = BitWriter()
    total_ssd = 0
    for by in range(0, h, 8):
        for bx in range(0, w, 8):
            block = src[by : by + 8, bx : bx + 8]
            preds = _predict_modes(recon, nbr, by, bx)
            coefs = fwd_dct8(block - preds)
            levels = quantize(coefs, qp)
            res = inv_dct8(dequantize(levels, qp))
            recons = np.clip(preds + res, 0, 255)
            ssds = ((block - recons) ** 2).sum(axis=(1, 2))
            best_j = None
            best = None
            for m in range(4):
                zz = levels[m].reshape(64)[ZIGZAG8]
                toks, eob = _tokenize(zz)
                bits = 2 + _token_bits(toks, eob)
                j = float(ssds[m]) + lam * bits
                if best_j is None or j < best_j:
                    best_j = j
                    best = (m, toks, eob, bits)
            m, toks, eob, bits = best
            writer.write(m, 2)
            _write_tokens(writer, toks, eob)
            recon[by : by + 8, bx : bx + 8] = recons[m]
            total_ssd += int(ssds[m])
    return CodedBlock(
        payload=writer.getvalue(),
        bits=writer.bit_length,
        recon=recon,
        distortion_ssd=total_ssd,
    )


def decode_plane_intra(
    reader: BitReader, height: int, width: int, qp: int, nbr: PlaneNeighbors | None = None
) -> np.ndarray:
    """Decode one plane from a bit reader positioned at its payload."""
    validate_qp(qp)
    _check_plane_dims(height, width)
    recon = np.zeros((height, width), np.uint8)
    for by in range(0, height, 8):
        for bx in range(0, width, 8):
            mode = reader.read(2)
            zz = np.zeros(64, np.int64)
            pos = 0
            while pos < 64:
                v = reader.read_ue()
                if v == 0:
                    break
                pos += v - 1
                if pos > 63:
                    raise BitstreamError(
                        f"coefficient run past block end at bit {reader.bit_position}"
                    )
                mag = reader.read_ue() + 1
                zz[pos] = -mag if reader.read_bit() else mag
                pos += 1
            levels = np.zeros(64, np.int64)
            levels[ZIGZAG8] = zz
            res = inv_dct8(dequantize(levels.reshape(8, 8), qp))
            pred = _predict_modes(recon, nbr, by, bx)[mode]
            recon[by : by + 8, bx : bx + 8] = np.clip(pred + res, 0, 255)
    return recon
