"""Quality metrics, rate-distortion summaries and report files.

SSIM uses the reference 11x11 Gaussian window (sigma 1.5, K1 0.01, K2 0.03,
L 255) applied as a separable valid-mode convolution; library versions that
re-derive the window from sigma truncate it differently, so it is computed
here. BD-rate is the classic cubic-polynomial form: fit log rate against
quality, integrate both fits over the shared quality interval and convert
the mean log-rate gap to a percentage.

Float cells in CSV reports serialize through repr(), so non-finite values
appear as "inf"/"nan" and parse back with float().
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError, EvaluationError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 255.0


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for 8-bit planes; inf when equal."""
    if a.shape != b.shape:
        raise ArgumentError(f"psnr shapes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ArgumentError("psnr of empty planes")
    d = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(d * d))
    if mse == 0.0:
        return float("inf")
    return 10.0 * math.log10(255.0**2 / mse)


def _gauss_window(n: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(n, dtype=np.float64) - (n - 1) / 2.0
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


def _gfilt(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation with a 1D window on both axes."""
    t = sliding_window_view(x, len(w), axis=1) @ w
    return np.ascontiguousarray(sliding_window_view(t, len(w), axis=0)) @ w


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity of two 8-bit planes."""
    if a.shape != b.shape:
        raise ArgumentError(f"ssim shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ArgumentError(f"ssim needs planes of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    x = a.astype(np.float64)
    y = b.astype(np.float64)
    w = _gauss_window()
    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2
    mx = _gfilt(x, w)
    my = _gfilt(y, w)
    sxx = _gfilt(x * x, w) - mx * mx
    syy = _gfilt(y * y, w) - my * my
    sxy = _gfilt(x * y, w) - mx * my
    num = (2.0 * mx * my + c1) * (2.0 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def _check_curve(points, name: str) -> tuple[np.ndarray, np.ndarray]:
    pts = [(float(r), float(q)) for r, q in points]
    if len(pts) < 4:
        raise EvaluationError(f"{name} curve needs at least 4 points, got {len(pts)}")
    rate = np.array([p[0] for p in pts])
    qual = np.array([p[1] for p in pts])
    if not (np.isfinite(rate).all() and np.isfinite(qual).all()):
        raise EvaluationError(f"{name} curve has non-finite values")
    if (rate <= 0).any():
        raise EvaluationError(f"{name} curve has non-positive rates")
    order = np.argsort(qual)
    qual, rate = qual[order], rate[order]
    if np.unique(qual).size < 4:
        raise EvaluationError(f"{name} curve has fewer than 4 distinct quality values")
    return rate, qual


def bd_rate(anchor, test) -> float:
    """Average rate change of test vs anchor in percent (negative = saving).

    Both arguments are sequences of (rate, quality) points.
    """
    ra, qa = _check_curve(anchor, "anchor")
    rt, qt = _check_curve(test, "test")
    lo = max(qa.min(), qt.min())
    hi = min(qa.max(), qt.max())
    if hi <= lo:
        raise EvaluationError(f"quality ranges do not overlap: [{qa.min()}, {qa.max()}] vs [{qt.min()}, {qt.max()}]")
    pa = np.polyfit(qa, np.log(ra), 3)
    pt = np.polyfit(qt, np.log(rt), 3)
    ia, it = np.polyint(pa), np.polyint(pt)
    mean_a = (np.polyval(ia, hi) - np.polyval(ia, lo)) / (hi - lo)
    mean_t = (np.polyval(it, hi) - np.polyval(it, lo)) / (hi - lo)
    return float((math.exp(mean_t - mean_a) - 1.0) * 100.0)


@dataclass
class AlphaFit:
    alpha: float
    beta: float
    r2: float
    n: int


def fit_alpha(samples) -> AlphaFit:
    """Least-squares line d_low = alpha * d_full + beta over (d_full, d_low)."""
    pts = [(float(x), float(y)) for x, y in samples]
    if len(pts) < 2:
        raise EvaluationError(f"alpha fit needs at least 2 samples, got {len(pts)}")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise EvaluationError("alpha fit has non-finite samples")
    if np.ptp(x) == 0.0:
        raise EvaluationError("alpha fit is degenerate: d_full does not vary")
    a = np.vstack([x, np.ones_like(x)]).T
    (alpha, beta), *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - (alpha * x + beta)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 and ss_res < 1e-12 else (1.0 - ss_res / ss_tot if ss_tot else 0.0)
    return AlphaFit(alpha=float(alpha), beta=float(beta), r2=r2, n=len(pts))


def alpha_histogram(alphas, lo: float = 0.0, hi: float = 16.0, width: float = 0.5):
    """Histogram of fitted alphas; out-of-range values land in the end bins."""
    if not len(alphas):
        raise EvaluationError("no alphas to histogram")
    edges = np.arange(lo, hi + width / 2, width)
    clipped = np.clip(alphas, lo, np.nextafter(hi, lo))
    counts, _ = np.histogram(clipped, bins=edges)
    return edges, counts


@dataclass
class HittingStats:
    """Fractions of low-mode CTUs and of CNN picks among them (NaN = empty)."""

    p_hitting: float
    p_luma: float
    p_cb: float
    p_cr: float


def hitting_stats(decisions) -> HittingStats:
    n = len(decisions)
    low = [d for d in decisions if d.mode == "low"]
    nan = float("nan")

    def frac(part, whole):
        return part / whole if whole else nan

    return HittingStats(
        p_hitting=frac(len(low), n),
        p_luma=frac(sum(d.up_y == "cnn" for d in low), len(low)),
        p_cb=frac(sum(d.up_cb == "cnn" for d in low), len(low)),
        p_cr=frac(sum(d.up_cr == "cnn" for d in low), len(low)),
    )


def mode_map(decisions, channel: str) -> list[list[str]]:
    """CTU grid of 'full' / 'cnn' / 'dctif' strings for one channel."""
    if channel not in ("y", "cb", "cr"):
        raise ArgumentError(f"unknown channel {channel!r}")
    if not decisions:
        raise ArgumentError("no decisions")
    rows = max(d.row for d in decisions) + 1
    cols = max(d.col for d in decisions) + 1
    grid = [["?"] * cols for _ in range(rows)]
    key = {"y": "up_y", "cb": "up_cb", "cr": "up_cr"}[channel]
    for d in decisions:
        grid[d.row][d.col] = "full" if d.mode == "full" else getattr(d, key)
    return grid


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def append_rd_point(path: str, row: dict) -> None:
    """Append one point to an rd_points.csv, creating it with a header."""
    header = ["label", "input", "qp", "bits", "psnr_y", "psnr_cb", "psnr_cr", "ssim_y"]
    fresh = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if fresh:
            w.writerow(header)
        w.writerow([_cell(row.get(k)) for k in header])


def read_rd_points(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for i, r in enumerate(rows):
        try:
            out.append(
                {
                    "label": r["label"],
                    "input": r["input"],
                    "qp": int(r["qp"]),
                    "bits": float(r["bits"]),
                    "psnr_y": float(r["psnr_y"]),
                    "psnr_cb": float(r["psnr_cb"]),
                    "psnr_cr": float(r["psnr_cr"]),
                    "ssim_y": float(r["ssim_y"]),
                }
            )
        except (KeyError, TypeError, ValueError) as e:
            raise EvaluationError(f"{path}: row {i + 2} malformed: {e}") from e
    return out


def aggregate_rd(rows, quality_key: str):
    """Collapse rd points to one (rate, quality) per QP: total bits, mean quality."""
    by_qp: dict[int, list[dict]] = {}
    for r in rows:
        by_qp.setdefault(r["qp"], []).append(r)
    pts = []
    for qp in sorted(by_qp):
        group = by_qp[qp]
        pts.append(
            (
                sum(g["bits"] for g in group),
                float(np.mean([g[quality_key] for g in group])),
            )
        )
    return pts


def write_decisions_csv(path: str, decisions) -> None:
    write_csv(
        path,
        ["row", "col", "mode", "up_y", "up_cb", "up_cr", "bits", "d_full", "d_low"],
        [
            (d.row, d.col, d.mode, d.up_y, d.up_cb, d.up_cr, d.bits, d.d_full, d.d_low)
            for d in decisions
        ],
    )


def read_decisions_csv(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append(
            {
                "row": int(r["row"]),
                "col": int(r["col"]),
                "mode": r["mode"],
                "up_y": r["up_y"] or None,
                "up_cb": r["up_cb"] or None,
                "up_cr": r["up_cr"] or None,
                "bits": int(r["bits"]),
                "d_full": int(r["d_full"]) if r["d_full"] else None,
                "d_low": int(r["d_low"]) if r["d_low"] else None,
            }
        )
    return out
