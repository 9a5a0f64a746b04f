"""Independent reference implementations used to cross-check the package.

Everything here is written the slow, obvious way: explicit loops, scatter
adds, and a full re-derivation of the encoder's mode decision. The fast
implementations in aric are compared against these in the tests. Filter taps
are repeated as literals on purpose so a typo in the package constants cannot
hide.
"""

import struct

import numpy as np

from aric import coder
from aric.bits import BitWriter
from aric.frame import Frame
from aric.intra import PlaneNeighbors, encode_plane_intra, lambda_from_qp
from aric.nn import ArchConfig, UpsamplerNet, mse_loss_grad
from aric.resample import downsample_2x

REF_DOWN_TAPS = (2, 0, -4, -3, 5, 19, 26, 19, 5, -3, -4, 0, 2)
REF_HALF_LUMA = (-1, 4, -11, 40, 40, -11, 4, -1)
REF_HALF_CHROMA = (-4, 36, 36, -4)
REF_CONTEXT = 8

# Narrow topologies for tests that train or finite-difference a real net.
# Same layer template as the default, just fewer channels.
TINY_ARCH = ArchConfig(
    l1_channels=8, l2_channels=4, l3_kernel=3, l3_channels=4, l4_channels=2
)
SMALL_ARCH = ArchConfig(l1_channels=32, l2_channels=16, l3_channels=16, l4_channels=8)


def bits_to_string(data: bytes, nbits: int) -> str:
    """First nbits of data as a '0'/'1' string, MSB of each byte first."""
    s = "".join(format(b, "08b") for b in data)
    return s[:nbits]


def ref_downsample(plane):
    """2x decimation with the 13-tap filter, done as one direct 2D loop."""
    p = np.pad(np.asarray(plane, dtype=np.int64), 6, mode="edge")
    h, w = plane.shape
    out = np.zeros((h // 2, w // 2), np.int64)
    for i in range(h // 2):
        for j in range(w // 2):
            acc = 0
            for u, cu in enumerate(REF_DOWN_TAPS):
                for v, cv in enumerate(REF_DOWN_TAPS):
                    acc += cu * cv * p[2 * i + u, 2 * j + v]
            out[i, j] = (acc + 2048) >> 12
    return np.clip(out, 0, 255).astype(np.uint8)


def ref_assemble(core, ctx):
    """Core block plus boundary strips in a zero-padded int64 canvas."""
    h, w = core.shape
    c = REF_CONTEXT
    ext = np.zeros((h + 2 * c, w + 2 * c), np.int64)
    ext[c : c + h, c : c + w] = core
    if ctx is not None:
        if ctx.top is not None:
            ext[:c, :] = ctx.top
        if ctx.bottom is not None:
            ext[c + h :, :] = ctx.bottom
        if ctx.left is not None:
            ext[c : c + h, :c] = ctx.left
        if ctx.right is not None:
            ext[c : c + h, c + w :] = ctx.right
    return ext


def ref_upsample(core, ctx=None, chroma=False):
    """2x interpolation: copy even phases, half-pel filter the odd ones."""
    taps = REF_HALF_CHROMA if chroma else REF_HALF_LUMA
    half = len(taps) // 2
    ext = ref_assemble(np.asarray(core, dtype=np.int64), ctx)
    h, w = core.shape
    c = REF_CONTEXT
    out = np.zeros((2 * h, 2 * w), np.int64)
    for i in range(h):
        for j in range(w):
            out[2 * i, 2 * j] = ext[c + i, c + j]
            accx = sum(
                t * ext[c + i, c + j + k - (half - 1)] for k, t in enumerate(taps)
            )
            out[2 * i, 2 * j + 1] = (accx + 32) >> 6
            accy = sum(
                t * ext[c + i + k - (half - 1), c + j] for k, t in enumerate(taps)
            )
            out[2 * i + 1, 2 * j] = (accy + 32) >> 6
            accd = 0
            for ky, ty in enumerate(taps):
                rowsum = sum(
                    tx * ext[c + i + ky - (half - 1), c + j + kx - (half - 1)]
                    for kx, tx in enumerate(taps)
                )
                accd += ty * rowsum
            out[2 * i + 1, 2 * j + 1] = (accd + 2048) >> 12
    return np.clip(out, 0, 255).astype(np.uint8)


def ref_conv2d(x, w, b):
    """Same-size zero-padded convolution, quadruple loop."""
    cin, h, ww = x.shape
    cout, _, k, _ = w.shape
    pad = k // 2
    xp = np.zeros((cin, h + 2 * pad, ww + 2 * pad), x.dtype)
    xp[:, pad : pad + h, pad : pad + ww] = x
    out = np.zeros((cout, h, ww), x.dtype)
    for o in range(cout):
        for i in range(h):
            for j in range(ww):
                acc = b[o]
                for ci in range(cin):
                    for u in range(k):
                        for v in range(k):
                            acc += w[o, ci, u, v] * xp[ci, i + u, j + v]
                out[o, i, j] = acc
    return out


def ref_deconv2d(x, w, b):
    """Stride-2 transposed convolution by scatter-add, cropped so that
    input (i, j) lands at output (2i, 2j). Weights are (out, in, k, k)."""
    cin, h, ww = x.shape
    cout, _, k, _ = w.shape
    full = np.zeros((cout, 2 * h + k - 2, 2 * ww + k - 2), x.dtype)
    for o in range(cout):
        for ci in range(cin):
            for i in range(h):
                for j in range(ww):
                    full[o, 2 * i : 2 * i + k, 2 * j : 2 * j + k] += (
                        x[ci, i, j] * w[o, ci]
                    )
    off = (k - 1) // 2
    out = full[:, off : off + 2 * h, off : off + 2 * ww]
    return out + b[:, None, None]


def rel_err(analytic, numeric, floor=1e-6):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def fd_grad(f, a, eps=1e-6):
    """Central finite differences of scalar f() with respect to array a."""
    g = np.zeros_like(a, dtype=np.float64)
    it = np.nditer(a, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        keep = a[idx]
        a[idx] = keep + eps
        hi = f()
        a[idx] = keep - eps
        lo = f()
        a[idx] = keep
        g[idx] = (hi - lo) / (2.0 * eps)
        it.iternext()
    return g


def gradcheck_net(net, x, dctif_up, target, eps=1e-6):
    """Worst relative error between backprop and finite differences, taken
    over every weight, every bias, and the input tensor."""

    def loss():
        return mse_loss_grad(net.forward(x, dctif_up), target)[0]

    for layer in net.param_layers():
        layer.gw[...] = 0.0
        layer.gb[...] = 0.0
    out = net.forward(x, dctif_up)
    _, dout = mse_loss_grad(out, target)
    dx = net.backward(dout)

    worst = 0.0
    for layer in net.param_layers():
        worst = max(worst, rel_err(layer.gw, fd_grad(loss, layer.weight, eps)))
        worst = max(worst, rel_err(layer.gb, fd_grad(loss, layer.bias, eps)))
    worst = max(worst, rel_err(dx, fd_grad(loss, x, eps)))
    return worst


def make_test_models(rng, arch=SMALL_ARCH, tag=37):
    """Model pair with a small random last layer, so the CNN path produces
    output that genuinely differs from DCTIF without any training."""
    nets = {}
    for variant in ("luma", "chroma"):
        net = UpsamplerNet(variant, tag, arch=arch, rng=rng)
        l5 = net.param_layers()[-1]
        l5.weight += rng.normal(0.0, 0.02, l5.weight.shape).astype(l5.weight.dtype)
        l5.bias += rng.normal(0.0, 0.002, l5.bias.shape).astype(l5.bias.dtype)
        nets[variant] = net
    return coder.ModelSet(nets["luma"], nets["chroma"])


CH = ("y", "cb", "cr")
LR = {"y": 32, "cb": 16, "cr": 16}


def _nbr(plane, y0, x0, h, w):
    return PlaneNeighbors(
        top=plane[y0 - 1, x0 : x0 + w].copy() if y0 > 0 else None,
        left=plane[y0 : y0 + h, x0 - 1].copy() if x0 > 0 else None,
    )


def replay_encode(frame, qp, models=None, opts=None):
    """Re-derive the encoder's output outside the encoder.

    Both trials are recomputed per CTU from first principles (intra coding
    of the full-resolution block vs intra coding of the decimated block plus
    stage-1 up-sampling), the rate-distortion costs are formed explicitly,
    and the winning mode is the argmin. Returns (bitstream, decisions,
    recon) for comparison against encode_frame.
    """
    opts = (opts or coder.EncodeOptions()).validate()
    lam = lambda_from_qp(qp, opts.lambda_scale)
    qp_low = max(qp - 6, 0)
    lam_low = lam / 4.0
    h, w = frame.height, frame.width
    hr = {
        "y": np.zeros((h, w), np.uint8),
        "cb": np.zeros((h // 2, w // 2), np.uint8),
        "cr": np.zeros((h // 2, w // 2), np.uint8),
    }
    ref = coder.LrReference.zeros(w, h)
    src = {"y": frame.y, "cb": frame.cb, "cr": frame.cr}
    lr_orig = {ch: downsample_2x(src[ch]) for ch in CH}
    body = BitWriter()
    decisions = []
    any_cnn = False
    for row in range(h // 64):
        for col in range(w // 64):
            orig = {}
            for ch in CH:
                bs = 2 * LR[ch]
                orig[ch] = src[ch][row * bs : (row + 1) * bs, col * bs : (col + 1) * bs]

            full = None
            if opts.force_mode != "low":
                coded = {}
                for ch in CH:
                    bs = 2 * LR[ch]
                    coded[ch] = encode_plane_intra(
                        orig[ch], qp, lam, _nbr(hr[ch], row * bs, col * bs, bs, bs)
                    )
                d_full = sum(coded[ch].distortion_ssd for ch in CH)
                r_full = 1 + sum(coded[ch].bits for ch in CH)
                full = (coded, d_full, r_full, d_full + lam * r_full)

            low = None
            if opts.force_mode != "full":
                lcoded, cores = {}, {}
                for ch in CH:
                    bs = LR[ch]
                    blk = lr_orig[ch][row * bs : (row + 1) * bs, col * bs : (col + 1) * bs]
                    lcoded[ch] = encode_plane_intra(
                        blk,
                        qp_low,
                        lam_low,
                        _nbr(ref.plane(ch), row * bs, col * bs, bs, bs),
                    )
                    cores[ch] = lcoded[ch].recon
                methods, ups, d_low = {}, {}, 0
                for ch in CH:
                    cands = {}
                    cands["dctif"] = coder.stage1_upsample(
                        ref, row, col, ch, "dctif", models, cores
                    )
                    variant = "luma" if ch == "y" else "chroma"
                    if models is not None and models.has(variant) and opts.force_up != "dctif":
                        cands["cnn"] = coder.stage1_upsample(
                            ref, row, col, ch, "cnn", models, cores
                        )
                    ssd = {
                        m: int(((orig[ch].astype(np.int64) - u) ** 2).sum())
                        for m, u in cands.items()
                    }
                    if opts.force_up == "cnn":
                        pick = "cnn"
                    elif "cnn" in ssd and ssd["cnn"] < ssd["dctif"]:
                        pick = "cnn"
                    else:
                        pick = "dctif"
                    methods[ch] = pick
                    ups[ch] = cands[pick]
                    d_low += ssd[pick]
                r_low = 4 + sum(lcoded[ch].bits for ch in CH)
                low = (lcoded, cores, methods, ups, d_low, r_low, d_low + lam * r_low)

            if full is not None and low is not None:
                mode = "low" if low[6] < full[3] else "full"
            else:
                mode = "full" if full is not None else "low"

            body.write_bit(0 if mode == "full" else 1)
            if mode == "low":
                lcoded, cores, methods, ups, d_low, r_low, _ = low
                for ch in CH:
                    body.write_bit(1 if methods[ch] == "cnn" else 0)
                any_cnn = any_cnn or "cnn" in methods.values()
                for ch in CH:
                    body.write_payload(lcoded[ch].payload, lcoded[ch].bits)
                for ch in CH:
                    bs = 2 * LR[ch]
                    hr[ch][row * bs : (row + 1) * bs, col * bs : (col + 1) * bs] = ups[ch]
                    b = LR[ch]
                    ref.plane(ch)[row * b : (row + 1) * b, col * b : (col + 1) * b] = cores[ch]
                bits = r_low
            else:
                coded = full[0]
                for ch in CH:
                    body.write_payload(coded[ch].payload, coded[ch].bits)
                for ch in CH:
                    bs = 2 * LR[ch]
                    hr[ch][row * bs : (row + 1) * bs, col * bs : (col + 1) * bs] = coded[ch].recon
                    b = LR[ch]
                    ref.plane(ch)[row * b : (row + 1) * b, col * b : (col + 1) * b] = (
                        downsample_2x(coded[ch].recon)
                    )
                bits = full[2]
            decisions.append(
                dict(
                    row=row,
                    col=col,
                    mode=mode,
                    methods=low[2] if mode == "low" else None,
                    bits=bits,
                    d_full=full[1] if full is not None else None,
                    d_low=low[4] if low is not None else None,
                    j_full=full[3] if full is not None else None,
                    j_low=low[6] if low is not None else None,
                )
            )

    if opts.stage2:
        for d in decisions:
            if d["mode"] != "low":
                continue
            for ch in CH:
                up = coder.stage2_upsample(ref, d["row"], d["col"], ch, d["methods"][ch], models)
                bs = 2 * LR[ch]
                hr[ch][d["row"] * bs : (d["row"] + 1) * bs, d["col"] * bs : (d["col"] + 1) * bs] = up

    tag = models.tag if (models is not None and any_cnn) else 0xFF
    header = struct.pack(
        "<4sHHHBBB",
        b"ARIC",
        1,
        frame.orig_width,
        frame.orig_height,
        qp,
        tag,
        1 if opts.stage2 else 0,
    )
    recon = Frame(hr["y"], hr["cb"], hr["cr"], frame.orig_width, frame.orig_height)
    return header + body.getvalue(), decisions, recon


def assert_replay_matches(frame, qp, models=None, opts=None):
    """Encode with the package and with the replay; compare everything."""
    got = coder.encode_frame(frame, qp, models, opts)
    want_bs, want_dec, want_recon = replay_encode(frame, qp, models, opts)
    assert got.bitstream == want_bs
    assert len(got.decisions) == len(want_dec)
    for d, want in zip(got.decisions, want_dec):
        assert (d.row, d.col) == (want["row"], want["col"])
        assert d.mode == want["mode"]
        assert d.bits == want["bits"]
        assert d.d_full == want["d_full"]
        assert d.d_low == want["d_low"]
        if want["mode"] == "low":
            assert (d.up_y, d.up_cb, d.up_cr) == (
                want["methods"]["y"],
                want["methods"]["cb"],
                want["methods"]["cr"],
            )
        else:
            assert (d.up_y, d.up_cb, d.up_cr) == (None, None, None)
        # The recorded mode must be the argmin of the two replayed costs.
        if want["j_full"] is not None and want["j_low"] is not None:
            best = "low" if want["j_low"] < want["j_full"] else "full"
            assert d.mode == best
    for ch in CH:
        assert np.array_equal(getattr(got.recon, ch), getattr(want_recon, ch))
    return got, want_dec
