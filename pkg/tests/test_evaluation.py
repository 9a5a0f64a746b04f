"""Metrics and reporting: PSNR, SSIM, BD-rate, alpha fits, CSV round trips."""

import math
from types import SimpleNamespace

import numpy as np
import pytest

from aric import coder, evaluation
from aric.errors import ArgumentError, EvaluationError

from conftest import toy_frame


def ref_ssim(a, b):
    """Direct per-window SSIM with an explicit 2D Gaussian, O(n^2 k^2)."""
    x = a.astype(np.float64)
    y = b.astype(np.float64)
    t = np.arange(11) - 5.0
    w1 = np.exp(-t * t / (2.0 * 1.5**2))
    w1 /= w1.sum()
    w2 = np.outer(w1, w1)
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    vals = []
    for i in range(x.shape[0] - 10):
        for j in range(x.shape[1] - 10):
            px = x[i : i + 11, j : j + 11]
            py = y[i : i + 11, j : j + 11]
            mx = (w2 * px).sum()
            my = (w2 * py).sum()
            sxx = (w2 * px * px).sum() - mx * mx
            syy = (w2 * py * py).sum() - my * my
            sxy = (w2 * px * py).sum() - mx * my
            vals.append(
                ((2 * mx * my + c1) * (2 * sxy + c2))
                / ((mx * mx + my * my + c1) * (sxx + syy + c2))
            )
    return float(np.mean(vals))


def test_psnr():
    rng = np.random.default_rng(60)
    a = rng.integers(0, 256, (16, 16), dtype=np.uint8)
    assert evaluation.psnr(a, a.copy()) == float("inf")

    b = a.copy()
    b[0, 0] = (int(a[0, 0]) + 16) % 256
    d = float(a[0, 0]) - float(b[0, 0])
    want = 10.0 * math.log10(255.0**2 / (d * d / 256.0))
    assert evaluation.psnr(a, b) == pytest.approx(want, abs=1e-12)
    assert evaluation.psnr(a, b) == evaluation.psnr(b, a)

    with pytest.raises(ArgumentError, match="shapes differ"):
        evaluation.psnr(a, a[:8])
    with pytest.raises(ArgumentError, match="empty"):
        evaluation.psnr(np.zeros((0, 4)), np.zeros((0, 4)))


def test_ssim_self_is_exactly_one():
    rng = np.random.default_rng(61)
    a = rng.integers(0, 256, (32, 24), dtype=np.uint8)
    assert evaluation.ssim(a, a.copy()) == 1.0


def test_ssim_constant_planes_closed_form():
    c, d = 100.0, 20.0
    a = np.full((16, 16), c, np.uint8)
    b = np.full((16, 16), c + d, np.uint8)
    c1 = (0.01 * 255.0) ** 2
    want = (2 * c * (c + d) + c1) / (c * c + (c + d) ** 2 + c1)
    assert evaluation.ssim(a, b) == pytest.approx(want, rel=1e-9)


def test_ssim_matches_direct_reference():
    rng = np.random.default_rng(62)
    a = rng.integers(0, 256, (13, 15), dtype=np.uint8)
    b = np.clip(a.astype(int) + rng.integers(-30, 31, a.shape), 0, 255).astype(np.uint8)
    assert evaluation.ssim(a, b) == pytest.approx(ref_ssim(a, b), rel=1e-11)
    assert evaluation.ssim(a, b) == evaluation.ssim(b, a)
    assert evaluation.ssim(a, b) < 1.0


def test_ssim_validation():
    a = np.zeros((10, 32), np.uint8)
    with pytest.raises(ArgumentError, match="at least 11x11"):
        evaluation.ssim(a, a)
    with pytest.raises(ArgumentError, match="shapes differ"):
        evaluation.ssim(np.zeros((16, 16), np.uint8), np.zeros((16, 12), np.uint8))


def test_bd_rate_identical_and_half_rate():
    qual = [30.0, 33.0, 36.0, 39.0]
    anchor = [(1000.0 * 2**i, q) for i, q in enumerate(qual)]
    assert evaluation.bd_rate(anchor, list(anchor)) == pytest.approx(0.0, abs=1e-9)

    half = [(r / 2.0, q) for r, q in anchor]
    assert evaluation.bd_rate(anchor, half) == pytest.approx(-50.0, abs=1e-9)
    assert evaluation.bd_rate(half, anchor) == pytest.approx(100.0, abs=1e-9)
    # Point order must not matter.
    assert evaluation.bd_rate(anchor[::-1], half) == pytest.approx(-50.0, abs=1e-9)


def test_bd_rate_validation():
    qual = [30.0, 33.0, 36.0, 39.0]
    good = [(1000.0 + 100 * i, q) for i, q in enumerate(qual)]
    with pytest.raises(EvaluationError, match="at least 4 points"):
        evaluation.bd_rate(good[:3], good)
    with pytest.raises(EvaluationError, match="distinct quality"):
        evaluation.bd_rate([(1000.0, 30.0)] * 4, good)
    with pytest.raises(EvaluationError, match="non-positive rates"):
        evaluation.bd_rate([(0.0, 30.0)] + good[1:], good)
    with pytest.raises(EvaluationError, match="non-finite"):
        evaluation.bd_rate([(float("nan"), 30.0)] + good[1:], good)
    far = [(r, q + 100.0) for r, q in good]
    with pytest.raises(EvaluationError, match="do not overlap"):
        evaluation.bd_rate(good, far)


def test_fit_alpha_recovers_line():
    x = np.array([1.0, 5.0, 9.0, 13.0, 40.0])
    fit = evaluation.fit_alpha(list(zip(x, 4.0 * x + 10.0)))
    assert fit.alpha == pytest.approx(4.0, abs=1e-9)
    assert fit.beta == pytest.approx(10.0, abs=1e-9)
    assert fit.r2 > 0.999999
    assert fit.n == 5

    flat = evaluation.fit_alpha([(1.0, 5.0), (2.0, 5.0), (3.0, 5.0)])
    assert flat.alpha == pytest.approx(0.0, abs=1e-12)
    assert flat.r2 == 1.0

    with pytest.raises(EvaluationError, match="at least 2 samples"):
        evaluation.fit_alpha([(1.0, 2.0)])
    with pytest.raises(EvaluationError, match="degenerate"):
        evaluation.fit_alpha([(3.0, 1.0), (3.0, 2.0)])
    with pytest.raises(EvaluationError, match="non-finite"):
        evaluation.fit_alpha([(1.0, float("inf")), (2.0, 3.0)])


def test_alpha_histogram_clips_to_end_bins():
    edges, counts = evaluation.alpha_histogram([-5.0, 0.2, 7.9, 100.0])
    assert len(edges) == 33 and len(counts) == 32
    assert counts[0] == 2  # -5 clipped in, plus 0.2
    assert counts[15] == 1  # 7.9 in [7.5, 8)
    assert counts[31] == 1  # 100 clipped into the top bin
    assert counts.sum() == 4
    with pytest.raises(EvaluationError, match="no alphas"):
        evaluation.alpha_histogram([])


def mkdec(row, col, mode, up=None):
    return SimpleNamespace(
        row=row,
        col=col,
        mode=mode,
        up_y=up,
        up_cb=up,
        up_cr="dctif" if up else None,
        bits=100,
        d_full=10 if mode == "full" else None,
        d_low=20 if mode == "low" else None,
    )


def test_hitting_stats():
    decs = [
        mkdec(0, 0, "full"),
        mkdec(0, 1, "low", "cnn"),
        mkdec(1, 0, "low", "dctif"),
        mkdec(1, 1, "full"),
    ]
    s = evaluation.hitting_stats(decs)
    assert s.p_hitting == 0.5
    assert s.p_luma == 0.5 and s.p_cb == 0.5 and s.p_cr == 0.0

    s = evaluation.hitting_stats([mkdec(0, 0, "full")])
    assert s.p_hitting == 0.0
    assert math.isnan(s.p_luma) and math.isnan(s.p_cb) and math.isnan(s.p_cr)

    s = evaluation.hitting_stats([])
    assert math.isnan(s.p_hitting)


def test_mode_map():
    decs = [mkdec(0, 0, "full"), mkdec(0, 1, "low", "cnn"), mkdec(1, 1, "low", "dctif")]
    grid = evaluation.mode_map(decs, "y")
    assert grid == [["full", "cnn"], ["?", "dctif"]]
    assert evaluation.mode_map(decs, "cr")[0][1] == "dctif"
    with pytest.raises(ArgumentError, match="unknown channel"):
        evaluation.mode_map(decs, "luma")
    with pytest.raises(ArgumentError, match="no decisions"):
        evaluation.mode_map([], "y")


def test_rd_points_round_trip(tmp_path):
    p = tmp_path / "rd_points.csv"
    row = {
        "label": "scheme",
        "input": "a.yuv",
        "qp": 37,
        "bits": 1234.0,
        "psnr_y": float("inf"),
        "psnr_cb": 40.25,
        "psnr_cr": float("nan"),
        "ssim_y": 0.987,
    }
    evaluation.append_rd_point(str(p), row)
    evaluation.append_rd_point(str(p), {**row, "qp": 42, "psnr_y": 33.5})
    got = evaluation.read_rd_points(str(p))
    assert len(got) == 2
    assert got[0]["qp"] == 37 and got[0]["psnr_y"] == float("inf")
    assert math.isnan(got[0]["psnr_cr"])
    assert got[1]["psnr_y"] == 33.5 and got[1]["label"] == "scheme"

    p.write_text("label,input,qp,bits,psnr_y,psnr_cb,psnr_cr,ssim_y\na,b,37,oops,1,2,3,4\n")
    with pytest.raises(EvaluationError, match="row 2 malformed"):
        evaluation.read_rd_points(str(p))


def test_aggregate_rd():
    rows = [
        {"qp": 37, "bits": 100.0, "psnr_y": 30.0},
        {"qp": 37, "bits": 200.0, "psnr_y": 34.0},
        {"qp": 32, "bits": 500.0, "psnr_y": 40.0},
    ]
    pts = evaluation.aggregate_rd(rows, "psnr_y")
    assert pts == [(500.0, 40.0), (300.0, 32.0)]


def test_decisions_csv_round_trip(tmp_path):
    f = toy_frame(600, 128)
    r = coder.encode_frame(f, 42)
    p = tmp_path / "decisions.csv"
    evaluation.write_decisions_csv(str(p), r.decisions)
    got = evaluation.read_decisions_csv(str(p))
    assert len(got) == len(r.decisions)
    for g, d in zip(got, r.decisions):
        assert g["row"] == d.row and g["col"] == d.col
        assert g["mode"] == d.mode and g["bits"] == d.bits
        assert g["up_y"] == d.up_y and g["up_cb"] == d.up_cb and g["up_cr"] == d.up_cr
        assert g["d_full"] == d.d_full and g["d_low"] == d.d_low
