"""2x resampling: 13-tap low-pass decimation and DCTIF interpolation.

Down-sampling filters each axis with a 13-tap low-pass (gain 64 per axis),
keeps integer sums between the passes and applies one final rounding shift.
Out-of-plane taps replicate the border sample.

Up-sampling copies sources to even output positions and interpolates odd
positions with the HEVC half-sample DCTIF kernels, 8-tap for luma and 4-tap
for chroma. Diagonal positions filter horizontally without normalization and
then vertically with a single rounding shift. The interpolator reads a
CONTEXT-sample margin around the block; margins the caller cannot supply are
treated as zeros.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .frame import Frame

DOWN_TAPS = (2, 0, -4, -3, 5, 19, 26, 19, 5, -3, -4, 0, 2)
HALF_TAPS_LUMA = (-1, 4, -11, 40, 40, -11, 4, -1)
HALF_TAPS_CHROMA = (-4, 36, 36, -4)

# Low-res samples of surrounding context consumed per side by up-sampling.
CONTEXT = 8
FILTER_REACH_LUMA = 4
FILTER_REACH_CHROMA = 2

_DOWN_REACH = len(DOWN_TAPS) // 2


def _down_cols(a: np.ndarray) -> np.ndarray:
    """Filter along columns and decimate 2x; unnormalized int sums."""
    w = a.shape[1]
    ext = np.pad(a, ((0, 0), (_DOWN_REACH, _DOWN_REACH)), mode="edge").astype(np.int64)
    out = np.zeros((a.shape[0], w // 2), np.int64)
    for t, c in enumerate(DOWN_TAPS):
        if c:
            out += c * ext[:, t : t + w - 1 : 2]
    return out


def downsample_2x(p: np.ndarray) -> np.ndarray:
    """Halve a plane in both dimensions."""
    if p.ndim != 2:
        raise ArgumentError("downsample_2x expects a 2D plane")
    h, w = p.shape
    if h < 2 or w < 2 or h % 2 or w % 2:
        raise ArgumentError(f"plane dimensions must be even and >= 2, got {w}x{h}")
    t = _down_cols(p)
    t = _down_cols(t.T).T
    return np.clip((t + 2048) >> 12, 0, 255).astype(np.uint8)


def downsample_frame(f: Frame) -> Frame:
    """Half-resolution copy of a frame, all three planes."""
    return Frame(
        y=downsample_2x(f.y),
        cb=downsample_2x(f.cb),
        cr=downsample_2x(f.cr),
        orig_width=f.orig_width // 2,
        orig_height=f.orig_height // 2,
    )


@dataclass
class BoundaryContext:
    """Neighbor samples around a low-res block, one strip per side.

    For an h x w block, top and bottom strips are (CONTEXT, w + 2*CONTEXT)
    and include the corners; left and right strips are (h, CONTEXT). A side
    set to None is unavailable and reads as zeros.
    """

    top: np.ndarray | None = None
    bottom: np.ndarray | None = None
    left: np.ndarray | None = None
    right: np.ndarray | None = None


def assemble_padded(p: np.ndarray, ctx: BoundaryContext | None) -> np.ndarray:
    """Block plus CONTEXT margin as one int array, zeros where unavailable."""
    h, w = p.shape
    c = CONTEXT
    win = np.zeros((h + 2 * c, w + 2 * c), np.int64)
    win[c : c + h, c : c + w] = p
    if ctx is None:
        return win
    strips = (
        ("top", ctx.top, (c, w + 2 * c), np.s_[:c, :]),
        ("bottom", ctx.bottom, (c, w + 2 * c), np.s_[c + h :, :]),
        ("left", ctx.left, (h, c), np.s_[c : c + h, :c]),
        ("right", ctx.right, (h, c), np.s_[c : c + h, c + w :]),
    )
    for name, strip, want, sel in strips:
        if strip is None:
            continue
        if strip.shape != want:
            raise ArgumentError(
                f"{name} context must be {want[0]}x{want[1]} for a {w}x{h} block, "
                f"got {strip.shape[0]}x{strip.shape[1]}"
            )
        win[sel] = strip
    return win


def window_from_plane(
    plane: np.ndarray,
    y0: int,
    x0: int,
    h: int,
    w: int,
    margin: int,
    *,
    top: bool,
    left: bool,
    bottom: bool,
    right: bool,
    core: np.ndarray | None = None,
) -> np.ndarray:
    """Copy a block window plus margin out of a plane.

    Out-of-plane samples and strips on sides flagged unavailable read as
    zeros; corners follow the top/bottom strips. An explicit core overrides
    the block region (used when the block is not yet stored in the plane).
    """
    m = margin
    ph, pw = plane.shape
    win = np.zeros((h + 2 * m, w + 2 * m), np.int64)
    sy0, sy1 = max(0, y0 - m), min(ph, y0 + h + m)
    sx0, sx1 = max(0, x0 - m), min(pw, x0 + w + m)
    if sy0 < sy1 and sx0 < sx1:
        win[sy0 - y0 + m : sy1 - y0 + m, sx0 - x0 + m : sx1 - x0 + m] = plane[sy0:sy1, sx0:sx1]
    if not top:
        win[:m, :] = 0
    if not bottom:
        win[m + h :, :] = 0
    if not left:
        win[m : m + h, :m] = 0
    if not right:
        win[m : m + h, m + w :] = 0
    if core is not None:
        win[m : m + h, m : m + w] = core
    return win


def context_from_plane(
    plane: np.ndarray,
    y0: int,
    x0: int,
    h: int,
    w: int,
    *,
    top: bool,
    left: bool,
    bottom: bool,
    right: bool,
) -> BoundaryContext:
    """Extract a BoundaryContext for the block at (y0, x0) from a plane."""
    c = CONTEXT
    win = window_from_plane(plane, y0, x0, h, w, c, top=top, left=left, bottom=bottom, right=right)
    return BoundaryContext(
        top=win[:c, :] if top else None,
        bottom=win[c + h :, :] if bottom else None,
        left=win[c : c + h, :c] if left else None,
        right=win[c : c + h, c + w :] if right else None,
    )


def _half_pel_cols(ext: np.ndarray, taps: tuple[int, ...], w: int) -> np.ndarray:
    """Unnormalized half-sample interpolation between columns C+j and C+j+1."""
    off = CONTEXT - (len(taps) // 2 - 1)
    out = np.zeros((ext.shape[0], w), np.int64)
    for t, c in enumerate(taps):
        out += c * ext[:, off + t : off + t + w]
    return out


def upsample_dctif(p: np.ndarray, ctx: BoundaryContext | None = None, *, chroma: bool = False) -> np.ndarray:
    """Double a block in both dimensions with DCTIF interpolation."""
    if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
        raise ArgumentError("upsample_dctif expects a non-empty 2D block")
    taps = HALF_TAPS_CHROMA if chroma else HALF_TAPS_LUMA
    h, w = p.shape
    c = CONTEXT
    ext = assemble_padded(p, ctx)
    hh = _half_pel_cols(ext, taps, w)
    vv = _half_pel_cols(ext.T, taps, h).T
    off = c - (len(taps) // 2 - 1)
    dd = np.zeros((h, w), np.int64)
    for t, k in enumerate(taps):
        dd += k * hh[off + t : off + t + h, :]
    out = np.empty((2 * h, 2 * w), np.int64)
    out[0::2, 0::2] = ext[c : c + h, c : c + w]
    out[0::2, 1::2] = (hh[c : c + h, :] + 32) >> 6
    out[1::2, 0::2] = (vv[:, c : c + w] + 32) >> 6
    out[1::2, 1::2] = (dd + 2048) >> 12
    return np.clip(out, 0, 255).astype(np.uint8)
