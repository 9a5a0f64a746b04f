"""Adaptive-resolution frame coder.

Each 64x64 CTU is coded either at full resolution or at half resolution.
A low CTU codes the 2x down-sampled blocks (luma 32x32, chroma 16x16) at
qp - 6 with lambda/4 for its internal mode decisions, then up-samples the
reconstruction back to full size, per channel either with DCTIF or with the
trained network. The CTU-level choice minimizes J = SSD + lambda * R where
R includes the scheme overhead: 1 bit for a full CTU (mode), 4 bits for a
low CTU (mode plus one up-sampler flag per channel). SSD for the low mode
is measured against the original after first-stage up-sampling.

First-stage up-sampling sees only causal context (top and left), so after
the whole frame is coded a second stage re-runs the chosen up-sampler for
every low CTU with context on all four sides. Both stages run identically
in the encoder and the decoder; no extra bits are spent.

The low-res reference planes hold, per CTU, either the low-mode recon or
the block-local 2x down-sample of the full-mode recon, and provide context
windows and intra neighbors for later low CTUs.

Bitstream layout: a 13-byte little-endian header (magic "ARIC", u16
version, u16 width, u16 height of the original frame, u8 qp, u8 model qp
tag, u8 flags with bit 0 = second stage applied), then one record per CTU
in raster order with no byte alignment until the final padding. The model
tag is 0xFF unless at least one CNN flag was chosen, so streams that never
touch the network decode without model files.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, BitstreamError, ConfigurationError, ModelFormatError
from .bits import BitReader, BitWriter
from .frame import CTU_SIZE, Frame, ctu_grid
from .intra import (
    CodedBlock,
    PlaneNeighbors,
    QP_MIN,
    decode_plane_intra,
    encode_plane_intra,
    lambda_from_qp,
    validate_qp,
)
from .nn import MODEL_MAGIC, UpsamplerNet, load_model, select_nearest_tag
from .resample import (
    CONTEXT,
    assemble_padded,
    context_from_plane,
    downsample_2x,
    upsample_dctif,
    window_from_plane,
)

BITSTREAM_MAGIC = b"ARIC"
BITSTREAM_VERSION = 1
HEADER_FMT = "<4sHHHBBB"
HEADER_SIZE = struct.calcsize(HEADER_FMT)

MODEL_TAG_NONE = 0xFF
FLAG_STAGE2 = 1

QP_LOW_DELTA = 6
LAMBDA_LOW_RATIO = 4.0
FULL_OVERHEAD_BITS = 1
LOW_OVERHEAD_BITS = 4

CHANNELS = ("y", "cb", "cr")
# Low-res block edge per channel; the coded full-res block is twice that.
_LR_SIZE = {"y": CTU_SIZE // 2, "cb": CTU_SIZE // 4, "cr": CTU_SIZE // 4}


@dataclass
class LrReference:
    """Low-res reference planes maintained in coding order."""

    y: np.ndarray
    cb: np.ndarray
    cr: np.ndarray

    @classmethod
    def zeros(cls, width: int, height: int) -> "LrReference":
        return cls(
            y=np.zeros((height // 2, width // 2), np.uint8),
            cb=np.zeros((height // 4, width // 4), np.uint8),
            cr=np.zeros((height // 4, width // 4), np.uint8),
        )

    def plane(self, channel: str) -> np.ndarray:
        return getattr(self, channel)


@dataclass
class ModelSet:
    """Up-sampler models for one QP tag; either variant may be absent."""

    luma: UpsamplerNet | None = None
    chroma: UpsamplerNet | None = None

    def __post_init__(self) -> None:
        if self.luma is not None and self.chroma is not None:
            if self.luma.qp_tag != self.chroma.qp_tag:
                raise ConfigurationError(
                    f"luma model qp tag {self.luma.qp_tag} != chroma {self.chroma.qp_tag}"
                )

    @property
    def tag(self) -> int:
        net = self.luma or self.chroma
        if net is None:
            raise ConfigurationError("empty model set")
        return net.qp_tag

    def has(self, variant: str) -> bool:
        return getattr(self, variant) is not None

    def require(self, variant: str) -> UpsamplerNet:
        net = getattr(self, variant)
        if net is None:
            raise ConfigurationError(f"no {variant} up-sampler model loaded")
        return net


def peek_model_header(path: str) -> tuple[str, int]:
    """(variant, qp_tag) from a model file without loading parameters."""
    with open(path, "rb") as fh:
        head = fh.read(8)
    if len(head) < 8 or head[:4] != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic)")
    variant_code, qp_tag = head[6], head[7]
    if variant_code not in (0, 1):
        raise ModelFormatError(f"{path}: unknown variant code {variant_code}")
    return ("luma", "chroma")[variant_code], qp_tag


def scan_models_dir(dirpath: str) -> dict[tuple[str, int], str]:
    """Map (variant, qp_tag) -> path for every model file in a directory."""
    found: dict[tuple[str, int], str] = {}
    for name in sorted(os.listdir(dirpath)):
        if not name.endswith(".arun"):
            continue
        path = os.path.join(dirpath, name)
        variant, tag = peek_model_header(path)
        found[(variant, tag)] = path
    return found


def _load_set(found: dict[tuple[str, int], str], tag: int) -> ModelSet:
    return ModelSet(
        luma=load_model(found[("luma", tag)]) if ("luma", tag) in found else None,
        chroma=load_model(found[("chroma", tag)]) if ("chroma", tag) in found else None,
    )


def load_models_nearest(dirpath: str, qp: int) -> ModelSet | None:
    """Model pair whose tag is nearest to qp; None if the dir has no models."""
    found = scan_models_dir(dirpath)
    if not found:
        return None
    tag = select_nearest_tag({t for _, t in found}, qp)
    return _load_set(found, tag)


def load_models_exact(dirpath: str, tag: int) -> ModelSet:
    """Model pair with exactly the given tag (decoder side)."""
    found = scan_models_dir(dirpath)
    ms = _load_set(found, tag)
    if ms.luma is None and ms.chroma is None:
        raise ConfigurationError(f"{dirpath}: no up-sampler model with qp tag {tag}")
    return ms


@dataclass
class EncodeOptions:
    """Knobs of one encode run."""

    force_mode: str | None = None  # "low" | "full": pin the CTU mode
    force_up: str | None = None  # "cnn" | "dctif": pin the up-sampler
    stage2: bool = True
    lambda_scale: float = 0.57

    def validate(self) -> "EncodeOptions":
        if self.force_mode not in (None, "low", "full"):
            raise ArgumentError(f"force_mode must be 'low' or 'full', got {self.force_mode!r}")
        if self.force_up not in (None, "cnn", "dctif"):
            raise ArgumentError(f"force_up must be 'cnn' or 'dctif', got {self.force_up!r}")
        if self.lambda_scale <= 0:
            raise ArgumentError(f"lambda_scale must be positive, got {self.lambda_scale}")
        return self


@dataclass
class CtuDecision:
    """Mode decision record for one CTU.

    d_full is the full-resolution trial SSD, d_low the low-resolution trial
    SSD after first-stage up-sampling, both summed over all three channels
    and measured against the original. A skipped trial records None. bits
    counts the CTU's share of the stream including overhead bits.
    """

    row: int
    col: int
    mode: str
    up_y: str | None
    up_cb: str | None
    up_cr: str | None
    bits: int
    d_full: int | None
    d_low: int | None


@dataclass
class EncodeResult:
    bitstream: bytes
    recon: Frame
    decisions: list[CtuDecision]


@dataclass
class CtuNetInputs:
    """Normalized network inputs for one CTU, plus the DCTIF up-samples.

    luma_x is the 48x48 low-res luma tile (core plus 8-sample context);
    luma_dctif its 96x96 DCTIF up-sample. chroma_x stacks the down-sampled
    luma window with the Cb and Cr 32x32 tiles; chroma_dctif holds both
    64x64 chroma up-samples. The *_dctif_int fields are the integer DCTIF
    results cropped to the block core, ready to use as reconstructions.
    """

    luma_x: np.ndarray
    luma_dctif: np.ndarray
    chroma_x: np.ndarray
    chroma_dctif: np.ndarray
    dctif_int: dict = field(default_factory=dict)


def ctu_net_inputs(
    ref: LrReference,
    row: int,
    col: int,
    *,
    stage2: bool,
    cores: dict | None = None,
) -> CtuNetInputs:
    """Assemble up-sampler inputs for one CTU from the reference planes.

    cores overrides the low-res blocks themselves (needed while they are
    not yet committed to the reference planes). Stage 1 exposes only top
    and left context; stage 2 all four sides. Unavailable context is zero.
    """
    sides = dict(top=True, left=True, bottom=stage2, right=stage2)
    tiles = {}
    for ch in CHANNELS:
        bs = _LR_SIZE[ch]
        y0, x0 = row * bs, col * bs
        plane = ref.plane(ch)
        core = cores[ch] if cores is not None else plane[y0 : y0 + bs, x0 : x0 + bs]
        ctx = context_from_plane(plane, y0, x0, bs, bs, **sides)
        tiles[ch] = assemble_padded(core, ctx)
    up_y = upsample_dctif(tiles["y"], None)
    up_cb = upsample_dctif(tiles["cb"], None, chroma=True)
    up_cr = upsample_dctif(tiles["cr"], None, chroma=True)
    # The luma window feeding the chroma net carries twice the context so
    # that after 2x down-sampling it aligns with the chroma tiles.
    bs = _LR_SIZE["y"]
    ywin = window_from_plane(
        ref.y,
        row * bs,
        col * bs,
        bs,
        bs,
        2 * CONTEXT,
        core=cores["y"] if cores is not None else None,
        **sides,
    )
    ydown = downsample_2x(ywin.astype(np.uint8))
    f32 = np.float32
    return CtuNetInputs(
        luma_x=tiles["y"][None].astype(f32) / 255.0,
        luma_dctif=up_y[None].astype(f32) / 255.0,
        chroma_x=np.stack([ydown, tiles["cb"], tiles["cr"]]).astype(f32) / 255.0,
        chroma_dctif=np.stack([up_cb, up_cr]).astype(f32) / 255.0,
        dctif_int={
            "y": up_y[16:80, 16:80],
            "cb": up_cb[16:48, 16:48],
            "cr": up_cr[16:48, 16:48],
        },
    )


def _to_uint8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(x * 255.0 + 0.5), 0, 255).astype(np.uint8)


def _cnn_channels(inputs: CtuNetInputs, models: ModelSet, need: set) -> dict:
    """Run the networks and return refined blocks for the needed channels."""
    out: dict = {}
    if "y" in need:
        f = models.require("luma").forward(inputs.luma_x, inputs.luma_dctif)
        out["y"] = _to_uint8(f[0, 16:80, 16:80])
    if "cb" in need or "cr" in need:
        f = models.require("chroma").forward(inputs.chroma_x, inputs.chroma_dctif)
        if "cb" in need:
            out["cb"] = _to_uint8(f[0, 16:48, 16:48])
        if "cr" in need:
            out["cr"] = _to_uint8(f[1, 16:48, 16:48])
    return out


def upsample_ctu(
    ref: LrReference,
    row: int,
    col: int,
    methods: dict,
    models: ModelSet | None,
    *,
    stage2: bool,
    cores: dict | None = None,
) -> dict:
    """Up-sample one CTU's channels with the given per-channel methods."""
    inputs = ctu_net_inputs(ref, row, col, stage2=stage2, cores=cores)
    need = {ch for ch, m in methods.items() if m == "cnn"}
    cnn = {}
    if need:
        if models is None:
            raise ConfigurationError("CNN up-sampling requested but no models loaded")
        cnn = _cnn_channels(inputs, models, need)
    out = {}
    for ch, m in methods.items():
        out[ch] = cnn[ch] if m == "cnn" else inputs.dctif_int[ch]
    return out


def stage1_upsample(
    ref: LrReference,
    row: int,
    col: int,
    channel: str,
    method: str,
    models: ModelSet | None = None,
    cores: dict | None = None,
) -> np.ndarray:
    """First-stage up-sample of one channel (top/left context only)."""
    return upsample_ctu(ref, row, col, {channel: method}, models, stage2=False, cores=cores)[
        channel
    ]


def stage2_upsample(
    ref: LrReference,
    row: int,
    col: int,
    channel: str,
    method: str,
    models: ModelSet | None = None,
) -> np.ndarray:
    """Second-stage up-sample of one channel (context on all sides)."""
    return upsample_ctu(ref, row, col, {channel: method}, models, stage2=True)[channel]


class _PlaneIo:
    """Per-channel access to the three full-res planes of a frame."""

    def __init__(self, planes: dict):
        self.planes = planes

    def block(self, channel: str, row: int, col: int) -> np.ndarray:
        bs = 2 * _LR_SIZE[channel]
        y0, x0 = row * bs, col * bs
        return self.planes[channel][y0 : y0 + bs, x0 : x0 + bs]

    def put_block(self, channel: str, row: int, col: int, b: np.ndarray) -> None:
        self.block(channel, row, col)[...] = b

    def neighbors(self, channel: str, row: int, col: int) -> PlaneNeighbors:
        bs = 2 * _LR_SIZE[channel]
        p = self.planes[channel]
        y0, x0 = row * bs, col * bs
        return PlaneNeighbors(
            top=p[y0 - 1, x0 : x0 + bs].copy() if row > 0 else None,
            left=p[y0 : y0 + bs, x0 - 1].copy() if col > 0 else None,
        )


def lr_intra_neighbors(ref: LrReference, channel: str, row: int, col: int) -> PlaneNeighbors:
    bs = _LR_SIZE[channel]
    p = ref.plane(channel)
    y0, x0 = row * bs, col * bs
    return PlaneNeighbors(
        top=p[y0 - 1, x0 : x0 + bs].copy() if row > 0 else None,
        left=p[y0 : y0 + bs, x0 - 1].copy() if col > 0 else None,
    )


def commit_lr_blocks(ref: LrReference, row: int, col: int, lr_blocks: dict) -> None:
    for ch, b in lr_blocks.items():
        bs = _LR_SIZE[ch]
        ref.plane(ch)[row * bs : (row + 1) * bs, col * bs : (col + 1) * bs] = b


@dataclass
class _Trial:
    payloads: list
    bits: int
    dist: int
    j: float
    recons: dict
    lr_recons: dict | None = None
    methods: dict | None = None
    d_up: int | None = None


def _try_full(hr: _PlaneIo, orig: dict, qp: int, lam: float, row: int, col: int) -> _Trial:
    payloads = []
    recons = {}
    dist = 0
    bits = FULL_OVERHEAD_BITS
    for ch in CHANNELS:
        coded = encode_plane_intra(orig[ch], qp, lam, hr.neighbors(ch, row, col))
        payloads.append(coded)
        recons[ch] = coded.recon
        dist += coded.distortion_ssd
        bits += coded.bits
    return _Trial(payloads, bits, dist, dist + lam * bits, recons)


def _try_low(
    ref: LrReference,
    lr_orig: dict,
    orig: dict,
    qp_low: int,
    lam: float,
    lam_low: float,
    row: int,
    col: int,
    models: ModelSet | None,
    force_up: str | None,
) -> _Trial:
    payloads = []
    cores = {}
    bits = LOW_OVERHEAD_BITS
    for ch in CHANNELS:
        bs = _LR_SIZE[ch]
        blk = lr_orig[ch][row * bs : (row + 1) * bs, col * bs : (col + 1) * bs]
        coded = encode_plane_intra(blk, qp_low, lam_low, lr_intra_neighbors(ref, ch, row, col))
        payloads.append(coded)
        cores[ch] = coded.recon
        bits += coded.bits
    inputs = ctu_net_inputs(ref, row, col, stage2=False, cores=cores)
    can_cnn = {
        "y": models is not None and models.has("luma") and force_up != "dctif",
        "cb": models is not None and models.has("chroma") and force_up != "dctif",
        "cr": models is not None and models.has("chroma") and force_up != "dctif",
    }
    if force_up == "cnn":
        for ch in CHANNELS:
            if not can_cnn[ch]:
                variant = "luma" if ch == "y" else "chroma"
                raise ConfigurationError(
                    f"--force-up cnn requires a {variant} model and none is loaded"
                )
    cnn = {}
    need = {ch for ch in CHANNELS if can_cnn[ch]}
    if need:
        cnn = _cnn_channels(inputs, models, need)
    methods = {}
    recons = {}
    d_up = 0
    for ch in CHANNELS:
        src = orig[ch].astype(np.int64)
        ssd_dctif = int(((src - inputs.dctif_int[ch]) ** 2).sum())
        if ch in cnn:
            ssd_cnn = int(((src - cnn[ch]) ** 2).sum())
        else:
            ssd_cnn = None
        if force_up == "cnn":
            pick = "cnn"
        elif force_up == "dctif" or ssd_cnn is None:
            pick = "dctif"
        else:
            pick = "cnn" if ssd_cnn < ssd_dctif else "dctif"
        methods[ch] = pick
        recons[ch] = cnn[ch] if pick == "cnn" else inputs.dctif_int[ch]
        d_up += ssd_cnn if pick == "cnn" else ssd_dctif
    return _Trial(
        payloads,
        bits,
        d_up,
        d_up + lam * bits,
        recons,
        lr_recons=cores,
        methods=methods,
        d_up=d_up,
    )


def _check_padded(frame: Frame) -> None:
    if frame.width % CTU_SIZE or frame.height % CTU_SIZE:
        raise ArgumentError(
            f"frame planes must be padded to whole CTUs, got {frame.width}x{frame.height}"
        )
    if not (0 < frame.orig_width <= 0xFFFF and 0 < frame.orig_height <= 0xFFFF):
        raise ArgumentError(
            f"frame dimensions out of range: {frame.orig_width}x{frame.orig_height}"
        )


def encode_frame(
    frame: Frame,
    qp: int,
    models: ModelSet | None = None,
    opts: EncodeOptions | None = None,
) -> EncodeResult:
    """Encode one frame; returns the bitstream, the recon and the decisions."""
    opts = (opts or EncodeOptions()).validate()
    validate_qp(qp)
    _check_padded(frame)
    lam = lambda_from_qp(qp, opts.lambda_scale)
    qp_low = max(qp - QP_LOW_DELTA, QP_MIN)
    lam_low = lam / LAMBDA_LOW_RATIO
    if opts.force_up == "cnn" and models is None:
        raise ConfigurationError("--force-up cnn requires up-sampler models")

    hr = _PlaneIo(
        {
            "y": np.zeros((frame.height, frame.width), np.uint8),
            "cb": np.zeros((frame.height // 2, frame.width // 2), np.uint8),
            "cr": np.zeros((frame.height // 2, frame.width // 2), np.uint8),
        }
    )
    ref = LrReference.zeros(frame.width, frame.height)
    lr_orig = {
        "y": downsample_2x(frame.y),
        "cb": downsample_2x(frame.cb),
        "cr": downsample_2x(frame.cr),
    }
    src = _PlaneIo({"y": frame.y, "cb": frame.cb, "cr": frame.cr})

    body = BitWriter()
    decisions = []
    any_cnn = False
    rows, cols = ctu_grid(frame)
    for row in range(rows):
        for col in range(cols):
            orig = {ch: src.block(ch, row, col) for ch in CHANNELS}
            full = (
                _try_full(hr, orig, qp, lam, row, col)
                if opts.force_mode != "low"
                else None
            )
            low = (
                _try_low(
                    ref, lr_orig, orig, qp_low, lam, lam_low, row, col, models, opts.force_up
                )
                if opts.force_mode != "full"
                else None
            )
            if full is not None and low is not None:
                mode = "low" if low.j < full.j else "full"
            else:
                mode = "full" if full is not None else "low"
            chosen = full if mode == "full" else low

            body.write_bit(0 if mode == "full" else 1)
            if mode == "low":
                for ch in CHANNELS:
                    body.write_bit(1 if chosen.methods[ch] == "cnn" else 0)
                any_cnn = any_cnn or "cnn" in chosen.methods.values()
            for coded in chosen.payloads:
                body.write_payload(coded.payload, coded.bits)

            for ch in CHANNELS:
                hr.put_block(ch, row, col, chosen.recons[ch])
            if mode == "low":
                commit_lr_blocks(ref, row, col, chosen.lr_recons)
            else:
                commit_lr_blocks(
                    ref, row, col, {ch: downsample_2x(chosen.recons[ch]) for ch in CHANNELS}
                )
            decisions.append(
                CtuDecision(
                    row=row,
                    col=col,
                    mode=mode,
                    up_y=chosen.methods["y"] if mode == "low" else None,
                    up_cb=chosen.methods["cb"] if mode == "low" else None,
                    up_cr=chosen.methods["cr"] if mode == "low" else None,
                    bits=chosen.bits,
                    d_full=full.dist if full is not None else None,
                    d_low=low.d_up if low is not None else None,
                )
            )

    if opts.stage2:
        _stage2_pass(hr, ref, decisions, models)

    tag = models.tag if (models is not None and any_cnn) else MODEL_TAG_NONE
    flags = FLAG_STAGE2 if opts.stage2 else 0
    header = struct.pack(
        HEADER_FMT,
        BITSTREAM_MAGIC,
        BITSTREAM_VERSION,
        frame.orig_width,
        frame.orig_height,
        qp,
        tag,
        flags,
    )
    recon = Frame(
        y=hr.planes["y"],
        cb=hr.planes["cb"],
        cr=hr.planes["cr"],
        orig_width=frame.orig_width,
        orig_height=frame.orig_height,
    )
    return EncodeResult(header + body.getvalue(), recon, decisions)


def _stage2_pass(
    hr: _PlaneIo, ref: LrReference, decisions: list[CtuDecision], models: ModelSet | None
) -> None:
    """Replace every low CTU's recon using context from all four sides."""
    for d in decisions:
        if d.mode != "low":
            continue
        methods = {"y": d.up_y, "cb": d.up_cb, "cr": d.up_cr}
        out = upsample_ctu(ref, d.row, d.col, methods, models, stage2=True)
        for ch in CHANNELS:
            hr.put_block(ch, d.row, d.col, out[ch])


def decode_frame(data: bytes, models: ModelSet | None = None) -> Frame:
    """Decode a bitstream back to a frame; mirrors the encoder exactly."""
    if len(data) < HEADER_SIZE:
        raise BitstreamError(f"stream too short for header: {len(data)} bytes")
    magic, version, width, height, qp, tag, flags = struct.unpack_from(HEADER_FMT, data)
    if magic != BITSTREAM_MAGIC:
        raise BitstreamError(f"bad magic {magic!r}")
    if version != BITSTREAM_VERSION:
        raise BitstreamError(f"unsupported bitstream version {version}")
    if not (0 < width <= 0xFFFF and 0 < height <= 0xFFFF) or width % 2 or height % 2:
        raise BitstreamError(f"bad frame dimensions {width}x{height}")
    try:
        validate_qp(qp)
    except ArgumentError as e:
        raise BitstreamError(str(e)) from e
    if tag != MODEL_TAG_NONE:
        if models is None:
            raise ConfigurationError(
                f"bitstream requires up-sampler models with qp tag {tag}, none loaded"
            )
        have = models.luma or models.chroma
        if have is not None and have.qp_tag != tag:
            raise ConfigurationError(
                f"bitstream requires qp tag {tag}, loaded models have tag {have.qp_tag}"
            )
    qp_low = max(qp - QP_LOW_DELTA, QP_MIN)
    pw = width + (-width % CTU_SIZE)
    ph = height + (-height % CTU_SIZE)

    hr = _PlaneIo(
        {
            "y": np.zeros((ph, pw), np.uint8),
            "cb": np.zeros((ph // 2, pw // 2), np.uint8),
            "cr": np.zeros((ph // 2, pw // 2), np.uint8),
        }
    )
    ref = LrReference.zeros(pw, ph)
    reader = BitReader(data[HEADER_SIZE:])
    decisions = []
    for row in range(ph // CTU_SIZE):
        for col in range(pw // CTU_SIZE):
            try:
                is_low = reader.read_bit()
                if is_low:
                    methods = {
                        ch: ("cnn" if reader.read_bit() else "dctif") for ch in CHANNELS
                    }
                    cores = {}
                    for ch in CHANNELS:
                        bs = _LR_SIZE[ch]
                        cores[ch] = decode_plane_intra(
                            reader, bs, bs, qp_low, lr_intra_neighbors(ref, ch, row, col)
                        )
                    out = upsample_ctu(
                        ref, row, col, methods, models, stage2=False, cores=cores
                    )
                    for ch in CHANNELS:
                        hr.put_block(ch, row, col, out[ch])
                    commit_lr_blocks(ref, row, col, cores)
                    decisions.append(
                        CtuDecision(
                            row, col, "low", methods["y"], methods["cb"], methods["cr"],
                            0, None, None,
                        )
                    )
                else:
                    for ch in CHANNELS:
                        bs = 2 * _LR_SIZE[ch]
                        blk = decode_plane_intra(
                            reader, bs, bs, qp, hr.neighbors(ch, row, col)
                        )
                        hr.put_block(ch, row, col, blk)
                    commit_lr_blocks(
                        ref,
                        row,
                        col,
                        {ch: downsample_2x(hr.block(ch, row, col)) for ch in CHANNELS},
                    )
                    decisions.append(
                        CtuDecision(row, col, "full", None, None, None, 0, None, None)
                    )
            except BitstreamError as e:
                raise BitstreamError(f"CTU ({row},{col}): {e}") from e
    extra = reader.bits_left
    if extra >= 8 or (extra and reader.read(extra) != 0):
        raise BitstreamError(f"{extra} trailing bits after the last CTU")
    if flags & FLAG_STAGE2:
        _stage2_pass(hr, ref, decisions, models)
    return Frame(
        y=hr.planes["y"],
        cb=hr.planes["cb"],
        cr=hr.planes["cr"],
        orig_width=width,
        orig_height=height,
    )
