"""Planar YUV 4:2:0 frames and the coding-tree-unit grid.

A plane is a 2D uint8 ndarray indexed [row, col]. A Frame holds the three
planes of an I420 picture after padding to whole CTUs, plus the original
(pre-padding) dimensions so outputs and metrics can be cropped back.

Luma CTUs are 64x64; the co-located chroma blocks are 32x32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError

CTU_SIZE = 64
CHROMA_CTU_SIZE = CTU_SIZE // 2


@dataclass
class Frame:
    """One padded 4:2:0 frame with its original dimensions."""

    y: np.ndarray
    cb: np.ndarray
    cr: np.ndarray
    orig_width: int
    orig_height: int

    @property
    def width(self) -> int:
        return self.y.shape[1]

    @property
    def height(self) -> int:
        return self.y.shape[0]


def _check_plane(p: np.ndarray, name: str) -> None:
    if not isinstance(p, np.ndarray) or p.ndim != 2 or p.dtype != np.uint8:
        raise ArgumentError(f"{name} plane must be a 2D uint8 array")


def pad_replicate(p: np.ndarray, left: int, right: int, top: int, bottom: int) -> np.ndarray:
    """Extend a plane by replicating its border samples."""
    if min(left, right, top, bottom) < 0:
        raise ArgumentError(
            f"pad margins must be non-negative, got "
            f"left={left} right={right} top={top} bottom={bottom}"
        )
    if p.ndim != 2:
        raise ArgumentError("pad_replicate expects a 2D plane")
    return np.pad(p, ((top, bottom), (left, right)), mode="edge")


def frame_from_planes(y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> Frame:
    """Build a Frame from raw planes, padding them to whole CTUs."""
    for p, name in ((y, "y"), (cb, "cb"), (cr, "cr")):
        _check_plane(p, name)
    h, w = y.shape
    if h < 1 or w < 1 or h % 2 or w % 2:
        raise ArgumentError(f"luma dimensions must be positive and even, got {w}x{h}")
    if cb.shape != (h // 2, w // 2) or cr.shape != (h // 2, w // 2):
        raise ArgumentError(
            f"chroma planes must be {w // 2}x{h // 2} for {w}x{h} luma, "
            f"got cb {cb.shape[1]}x{cb.shape[0]} cr {cr.shape[1]}x{cr.shape[0]}"
        )
    ph = -h % CTU_SIZE
    pw = -w % CTU_SIZE
    y = pad_replicate(y, 0, pw, 0, ph)
    cb = pad_replicate(cb, 0, pw // 2, 0, ph // 2)
    cr = pad_replicate(cr, 0, pw // 2, 0, ph // 2)
    return Frame(y=y, cb=cb, cr=cr, orig_width=w, orig_height=h)


def load_frame(path: str, width: int, height: int) -> Frame:
    """Read one I420 frame of the given dimensions from a raw file."""
    if width < 1 or height < 1 or width % 2 or height % 2:
        raise ArgumentError(f"frame dimensions must be positive and even, got {width}x{height}")
    expected = width * height * 3 // 2
    with open(path, "rb") as fh:
        data = fh.read(expected + 1)
    if len(data) < expected:
        raise ArgumentError(
            f"{path}: expected {expected} bytes for {width}x{height} 4:2:0, got {len(data)}"
        )
    ysz = width * height
    csz = ysz // 4
    y = np.frombuffer(data, np.uint8, ysz, 0).reshape(height, width)
    cb = np.frombuffer(data, np.uint8, csz, ysz).reshape(height // 2, width // 2)
    cr = np.frombuffer(data, np.uint8, csz, ysz + csz).reshape(height // 2, width // 2)
    return frame_from_planes(y, cb, cr)


def save_frame(f: Frame, path: str, *, cropped: bool = True) -> None:
    """Write a frame as raw I420, cropped to its original dimensions by default."""
    if cropped:
        w, h = f.orig_width, f.orig_height
        planes = (f.y[:h, :w], f.cb[: h // 2, : w // 2], f.cr[: h // 2, : w // 2])
    else:
        planes = (f.y, f.cb, f.cr)
    with open(path, "wb") as fh:
        for p in planes:
            fh.write(np.ascontiguousarray(p).tobytes())


def ctu_grid(f: Frame) -> tuple[int, int]:
    """Number of CTU (rows, cols) in the padded frame."""
    return f.height // CTU_SIZE, f.width // CTU_SIZE


def extract_ctu(f: Frame, row: int, col: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Copy out the (y, cb, cr) blocks of one CTU."""
    rows, cols = ctu_grid(f)
    if not (0 <= row < rows and 0 <= col < cols):
        raise ArgumentError(f"CTU ({row},{col}) outside grid {rows}x{cols}")
    ly, lx = row * CTU_SIZE, col * CTU_SIZE
    cy, cx = row * CHROMA_CTU_SIZE, col * CHROMA_CTU_SIZE
    s, c = CTU_SIZE, CHROMA_CTU_SIZE
    return (
        f.y[ly : ly + s, lx : lx + s].copy(),
        f.cb[cy : cy + c, cx : cx + c].copy(),
        f.cr[cy : cy + c, cx : cx + c].copy(),
    )


def write_ctu(f: Frame, row: int, col: int, y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> None:
    """Store (y, cb, cr) blocks into one CTU of the frame."""
    rows, cols = ctu_grid(f)
    if not (0 <= row < rows and 0 <= col < cols):
        raise ArgumentError(f"CTU ({row},{col}) outside grid {rows}x{cols}")
    s, c = CTU_SIZE, CHROMA_CTU_SIZE
    if y.shape != (s, s) or cb.shape != (c, c) or cr.shape != (c, c):
        raise ArgumentError("CTU block shapes must be 64x64 luma and 32x32 chroma")
    ly, lx = row * s, col * s
    cy, cx = row * c, col * c
    f.y[ly : ly + s, lx : lx + s] = y
    f.cb[cy : cy + c, cx : cx + c] = cb
    f.cr[cy : cy + c, cx : cx + c] = cr
