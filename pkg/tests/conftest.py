"""Shared fixtures: synthetic test images, a small corpus, trained models."""

import time

import numpy as np
import pytest
from PIL import Image

from aric import nn, training
from aric.frame import frame_from_planes

from oracles import SMALL_ARCH

CORPUS_IMAGES = 110
CORPUS_QP = 37


def _blur(a, passes=1):
    for _ in range(passes):
        p = np.pad(a, ((1, 1), (1, 1)), mode="edge")
        a = (p[:-2, 1:-1] + p[1:-1, 1:-1] + p[2:, 1:-1]) / 3.0
        p = np.pad(a, ((1, 1), (1, 1)), mode="edge")
        a = (p[1:-1, :-2] + p[1:-1, 1:-1] + p[1:-1, 2:]) / 3.0
    return a


def make_toy_rgb(seed, size, width=None):
    """Synthetic natural-ish RGB card: gradient, blobs, texture, edges.

    Deterministic in (seed, size, width). size is the height; width defaults
    to size. Any even geometry works, the card is drawn on a multiple-of-8
    canvas and cropped.
    """
    h = size
    w = size if width is None else width
    rng = np.random.default_rng(seed)
    s = -max(h, w) // 8 * -8
    yy, xx = np.mgrid[0:s, 0:s] / s

    lum = 90.0 + 70.0 * (rng.uniform(-1, 1) * xx + rng.uniform(-1, 1) * yy)
    blob = rng.normal(0, 1, (s // 8, s // 8))
    blob = _blur(np.kron(blob, np.ones((8, 8))), 4)
    lum = lum + 45.0 * blob
    tex = rng.normal(0, 1, (s // 2, s // 2))
    tex = _blur(np.kron(tex, np.ones((2, 2))), 1)
    lum = lum + rng.uniform(8, 22) * tex
    ang = rng.uniform(0, np.pi)
    freq = rng.uniform(4, 12)
    lum = lum + rng.uniform(0, 12) * np.sin(
        2 * np.pi * freq * (np.cos(ang) * xx + np.sin(ang) * yy)
    )
    for _ in range(rng.integers(2, 5)):
        y0, x0 = rng.integers(0, s, 2)
        bh, bw = rng.integers(s // 8, s // 2, 2)
        lum[y0 : y0 + bh, x0 : x0 + bw] += rng.uniform(-50, 50)

    cscale = rng.uniform(0.15, 0.5, 3)
    coff = rng.uniform(-35, 35, 3)
    cb_f = _blur(np.kron(rng.normal(0, 1, (s // 8, s // 8)), np.ones((8, 8))), 4)
    rgb = np.stack(
        [lum + coff[i] + cscale[i] * 60.0 * cb_f for i in range(3)], axis=-1
    )
    return np.clip(rgb[:h, :w], 0, 255).astype(np.uint8)


def toy_frame(seed, size, width=None):
    y, cb, cr = training.rgb_to_ycbcr420(make_toy_rgb(seed, size, width))
    return frame_from_planes(y, cb, cr)


@pytest.fixture(scope="session")
def toy_corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    for i in range(CORPUS_IMAGES):
        Image.fromarray(make_toy_rgb(1000 + i, 64)).save(d / f"toy{i:04d}.png")
    return d


@pytest.fixture(scope="session")
def corpus_split(toy_corpus_dir):
    paths = sorted(str(p) for p in toy_corpus_dir.iterdir())
    image_pairs, skipped = training.generate_pairs(paths, CORPUS_QP)
    assert skipped == []
    tl, vl, tc, vc, records = training.split_dataset(image_pairs)
    return {
        "paths": paths,
        "train_luma": tl,
        "val_luma": vl,
        "train_chroma": tc,
        "val_chroma": vc,
        "records": records,
    }


@pytest.fixture(scope="session")
def trained_models(corpus_split, tmp_path_factory):
    """Models trained on the toy corpus at QP 37, saved like the CLI does."""
    d = tmp_path_factory.mktemp("models")
    t0 = time.time()
    cfg = training.TrainConfig(lr=2e-2, momentum=0.9, batch=4, epochs=12, seed=0)
    luma, _ = training.train_model(
        corpus_split["train_luma"], corpus_split["val_luma"], "luma", CORPUS_QP,
        cfg, arch=SMALL_ARCH,
    )
    ccfg = training.TrainConfig(lr=2e-2, momentum=0.9, batch=4, epochs=8, seed=0)
    chroma, _ = training.train_model(
        corpus_split["train_chroma"], corpus_split["val_chroma"], "chroma",
        CORPUS_QP, ccfg, arch=SMALL_ARCH,
    )
    seconds = time.time() - t0
    nn.save_model(luma, str(d / f"luma_qp{CORPUS_QP}.arun"))
    nn.save_model(chroma, str(d / f"chroma_qp{CORPUS_QP}.arun"))

    base_y = training.upsampling_psnr(corpus_split["val_luma"], None)["y"]
    got_y = training.upsampling_psnr(corpus_split["val_luma"], luma)["y"]
    base_c = training.upsampling_psnr(corpus_split["val_chroma"], None)
    got_c = training.upsampling_psnr(corpus_split["val_chroma"], chroma)
    return {
        "dir": str(d),
        "seconds": seconds,
        "dctif_psnr_y": base_y,
        "luma_gain": got_y - base_y,
        "cb_gain": got_c["cb"] - base_c["cb"],
        "cr_gain": got_c["cr"] - base_c["cr"],
    }


ACCEPTANCE_NOTES = {}


@pytest.fixture
def acceptance_notes():
    """Per-criterion detail strings echoed in the terminal summary."""
    return ACCEPTANCE_NOTES


def pytest_terminal_summary(terminalreporter):
    outcomes = {}
    for reports in terminalreporter.stats.values():
        for rep in reports:
            nodeid = getattr(rep, "nodeid", "") or ""
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            tail = nodeid.split("test_criterion_", 1)[1]
            digits = ""
            for c in tail:
                if c.isdigit():
                    digits += c
                else:
                    break
            if not digits:
                continue
            num = int(digits)
            ok = outcomes.get(num, True)
            if getattr(rep, "failed", False) or getattr(rep, "skipped", False):
                ok = False
            outcomes[num] = ok
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(outcomes):
        verdict = "PASS" if outcomes[num] else "FAIL"
        note = ACCEPTANCE_NOTES.get(num, "")
        suffix = f"  ({note})" if note else ""
        terminalreporter.write_line(f"criterion {num}: {verdict}{suffix}")
