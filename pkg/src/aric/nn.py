"""Minimal neural network engine for the trainable up-sampler.

Tensors are (channels, height, width) float arrays. Convolutions keep
spatial size with (k-1)/2 zero padding and run as one matrix product per
layer (im2col). The stride-2 transposed convolution scatters weighted
copies of the input on the doubled grid; its output is cropped by (k-1)//2
at the top/left and the remainder at the bottom/right so that input (i, j)
lands at output (2i, 2j), the same phase as DCTIF interpolation.

The up-sampler topology is fixed: two conv stages with parallel 3x3/5x5
branches, a transposed conv that doubles resolution, and a final conv whose
output is added to the DCTIF up-sampled block (residue learning). The last
conv starts at zero so an untrained network reproduces DCTIF exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError, ModelFormatError, TrainingDivergedError

MODEL_MAGIC = b"ARUN"
MODEL_VERSION = 1

KIND_CONV = 0
KIND_DECONV = 1
KIND_RELU = 2
KIND_CONCAT = 3
KIND_ADD_SKIP = 4

VARIANT_CODES = {"luma": 0, "chroma": 1}
VARIANT_NAMES = {v: k for k, v in VARIANT_CODES.items()}


@dataclass
class ArchConfig:
    """Kernel sizes and channel widths of the up-sampler topology."""

    l1_kernel: int = 5
    l1_channels: int = 64
    l2a_kernel: int = 3
    l2b_kernel: int = 5
    l2_channels: int = 32
    l3_kernel: int = 9
    l3_channels: int = 32
    l4a_kernel: int = 3
    l4b_kernel: int = 5
    l4_channels: int = 16
    l5_kernel: int = 3

    def validate(self) -> "ArchConfig":
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or v < 1:
                raise ArgumentError(f"arch field {f.name} must be a positive integer, got {v!r}")
            if f.name.endswith("kernel") and v % 2 == 0:
                raise ArgumentError(f"arch field {f.name} must be odd, got {v}")
        if self.l3_kernel < 3:
            raise ArgumentError("transposed conv kernel must be >= 3")
        return self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ArgumentError(f"unknown arch fields: {sorted(unknown)}")
        return cls(**d).validate()


class Conv2d:
    """Same-size 2D convolution over (c, h, w) tensors."""

    kind = KIND_CONV

    def __init__(self, in_ch, out_ch, kernel, rng=None, dtype=np.float32, zero_init=False):
        self.in_ch, self.out_ch, self.kernel = in_ch, out_ch, kernel
        shape = (out_ch, in_ch, kernel, kernel)
        if zero_init or rng is None:
            w = np.zeros(shape)
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / (in_ch * kernel * kernel)), shape)
        self.weight = w.astype(dtype)
        self.bias = np.zeros(out_ch, dtype)
        self.gw = np.zeros_like(self.weight)
        self.gb = np.zeros_like(self.bias)
        self._cols = None
        self._hw = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        ic, h, w = x.shape
        if ic != self.in_ch:
            raise ArgumentError(f"conv expects {self.in_ch} input channels, got {ic}")
        k = self.kernel
        pad = (k - 1) // 2
        xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
        cols = sliding_window_view(xp, (k, k), axis=(1, 2))
        cols = cols.transpose(1, 2, 0, 3, 4).reshape(h * w, ic * k * k)
        self._cols = cols
        self._hw = (h, w)
        out = cols @ self.weight.reshape(self.out_ch, -1).T + self.bias
        return out.T.reshape(self.out_ch, h, w)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        h, w = self._hw
        k = self.kernel
        pad = (k - 1) // 2
        dyf = dy.reshape(self.out_ch, h * w)
        self.gw += (dyf @ self._cols).reshape(self.weight.shape)
        self.gb += dyf.sum(axis=1)
        dcols = (dyf.T @ self.weight.reshape(self.out_ch, -1)).reshape(h, w, self.in_ch, k, k)
        dcols = dcols.transpose(2, 3, 4, 0, 1)
        dxp = np.zeros((self.in_ch, h + 2 * pad, w + 2 * pad), dy.dtype)
        for u in range(k):
            for v in range(k):
                dxp[:, u : u + h, v : v + w] += dcols[:, u, v]
        return dxp[:, pad : pad + h, pad : pad + w]


class Deconv2d:
    """Stride-2 transposed convolution that exactly doubles spatial size."""

    kind = KIND_DECONV

    def __init__(self, in_ch, out_ch, kernel, rng=None, dtype=np.float32):
        if kernel < 2:
            raise ArgumentError(
                f"deconv kernel must be >= 2 to cover both output phases, got {kernel}"
            )
        self.in_ch, self.out_ch, self.kernel = in_ch, out_ch, kernel
        shape = (out_ch, in_ch, kernel, kernel)
        if rng is None:
            w = np.zeros(shape)
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / (in_ch * kernel * kernel)), shape)
        self.weight = w.astype(dtype)
        self.bias = np.zeros(out_ch, dtype)
        self.gw = np.zeros_like(self.weight)
        self.gb = np.zeros_like(self.bias)
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        ic, h, w = x.shape
        if ic != self.in_ch:
            raise ArgumentError(f"deconv expects {self.in_ch} input channels, got {ic}")
        k = self.kernel
        self._x = x
        m = np.tensordot(self.weight, x, axes=([1], [0]))
        full = np.zeros((self.out_ch, 2 * h + k - 2, 2 * w + k - 2), x.dtype)
        for u in range(k):
            for v in range(k):
                full[:, u : u + 2 * h : 2, v : v + 2 * w : 2] += m[:, u, v]
        # Crop so input (i, j) lands at output (2i, 2j), matching DCTIF phase.
        off = (k - 1) // 2
        out = full[:, off : off + 2 * h, off : off + 2 * w]
        return out + self.bias[:, None, None]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._x
        ic, h, w = x.shape
        k = self.kernel
        off = (k - 1) // 2
        dfull = np.zeros((self.out_ch, 2 * h + k - 2, 2 * w + k - 2), dy.dtype)
        dfull[:, off : off + 2 * h, off : off + 2 * w] = dy
        gathered = np.empty((self.out_ch, k, k, h, w), dy.dtype)
        for u in range(k):
            for v in range(k):
                gathered[:, u, v] = dfull[:, u : u + 2 * h : 2, v : v + 2 * w : 2]
        self.gb += dy.sum(axis=(1, 2))
        self.gw += np.tensordot(gathered, x, axes=([3, 4], [1, 2])).transpose(0, 3, 1, 2)
        return np.tensordot(self.weight, gathered, axes=([0, 2, 3], [0, 1, 2]))


class ReLU:
    kind = KIND_RELU

    def __init__(self):
        self._mask = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return np.where(self._mask, dy, 0)


class UpsamplerNet:
    """Fixed 5-stage residue-learning up-sampler.

    forward(x, dctif_up) takes the normalized low-res tile (with context)
    and the normalized DCTIF up-sample of the same tile, and returns the
    refined up-sample at double resolution.
    """

    def __init__(self, variant, qp_tag, arch=None, rng=None, dtype=np.float32):
        if variant not in VARIANT_CODES:
            raise ArgumentError(f"variant must be 'luma' or 'chroma', got {variant!r}")
        self.variant = variant
        self.qp_tag = int(qp_tag)
        self.arch = (arch or ArchConfig()).validate()
        self.dtype = dtype
        a = self.arch
        in_ch = 1 if variant == "luma" else 3
        out_ch = 1 if variant == "luma" else 2
        self.out_ch = out_ch
        self.l1 = Conv2d(in_ch, a.l1_channels, a.l1_kernel, rng, dtype)
        self.r1 = ReLU()
        self.l2a = Conv2d(a.l1_channels, a.l2_channels, a.l2a_kernel, rng, dtype)
        self.r2a = ReLU()
        self.l2b = Conv2d(a.l1_channels, a.l2_channels, a.l2b_kernel, rng, dtype)
        self.r2b = ReLU()
        self.l3 = Deconv2d(2 * a.l2_channels, a.l3_channels, a.l3_kernel, rng, dtype)
        self.r3 = ReLU()
        self.l4a = Conv2d(a.l3_channels, a.l4_channels, a.l4a_kernel, rng, dtype)
        self.r4a = ReLU()
        self.l4b = Conv2d(a.l3_channels, a.l4_channels, a.l4b_kernel, rng, dtype)
        self.r4b = ReLU()
        self.l5 = Conv2d(2 * a.l4_channels, out_ch, a.l5_kernel, dtype=dtype, zero_init=True)

    def param_layers(self):
        return [self.l1, self.l2a, self.l2b, self.l3, self.l4a, self.l4b, self.l5]

    def parameters(self):
        for layer in self.param_layers():
            yield layer, "weight"
            yield layer, "bias"

    def zero_grads(self):
        for layer in self.param_layers():
            layer.gw[...] = 0
            layer.gb[...] = 0

    def forward(self, x: np.ndarray, dctif_up: np.ndarray) -> np.ndarray:
        x = np.asarray(x, self.dtype)
        dctif_up = np.asarray(dctif_up, self.dtype)
        f = self.r1.forward(self.l1.forward(x))
        f = np.concatenate(
            [self.r2a.forward(self.l2a.forward(f)), self.r2b.forward(self.l2b.forward(f))]
        )
        f = self.r3.forward(self.l3.forward(f))
        f = np.concatenate(
            [self.r4a.forward(self.l4a.forward(f)), self.r4b.forward(self.l4b.forward(f))]
        )
        f = self.l5.forward(f)
        if f.shape != dctif_up.shape:
            raise ArgumentError(
                f"dctif_up shape {dctif_up.shape} does not match network output {f.shape}"
            )
        return f + dctif_up

    def backward(self, dout: np.ndarray) -> np.ndarray:
        n4 = self.arch.l4_channels
        n2 = self.arch.l2_channels
        d = self.l5.backward(np.asarray(dout, self.dtype))
        d = self.l4a.backward(self.r4a.backward(d[:n4])) + self.l4b.backward(
            self.r4b.backward(d[n4:])
        )
        d = self.l3.backward(self.r3.backward(d))
        d = self.l2a.backward(self.r2a.backward(d[:n2])) + self.l2b.backward(
            self.r2b.backward(d[n2:])
        )
        return self.l1.backward(self.r1.backward(d))

    def copy_params_from(self, other: "UpsamplerNet") -> None:
        for (la, name), (lb, _) in zip(self.parameters(), other.parameters()):
            getattr(la, name)[...] = getattr(lb, name)

    def clone(self) -> "UpsamplerNet":
        c = UpsamplerNet(self.variant, self.qp_tag, self.arch, rng=None, dtype=self.dtype)
        c.copy_params_from(self)
        return c


def mse_loss_grad(out: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error against a centered crop of the output.

    The target may be smaller than the output; samples outside the crop do
    not contribute (deployment keeps only the block core, not the context).
    """
    c, h, w = out.shape
    tc, th, tw = target.shape
    if tc != c or th > h or tw > w or (h - th) % 2 or (w - tw) % 2:
        raise ArgumentError(f"target {target.shape} not a centered crop of output {out.shape}")
    oy, ox = (h - th) // 2, (w - tw) // 2
    diff = out[:, oy : oy + th, ox : ox + tw] - target
    loss = float(np.mean(diff * diff))
    dout = np.zeros_like(out)
    dout[:, oy : oy + th, ox : ox + tw] = (2.0 / diff.size) * diff
    return loss, dout


class MomentumSgd:
    """Classical momentum SGD with global-norm gradient clipping."""

    def __init__(self, lr=1e-4, momentum=0.9, clip=1.0):
        self.lr = lr
        self.momentum = momentum
        self.clip = clip
        self._vel = None

    def step(self, net: UpsamplerNet) -> None:
        params = list(net.parameters())
        grads = [layer.gw if name == "weight" else layer.gb for layer, name in params]
        if self._vel is None:
            self._vel = [np.zeros_like(g) for g in grads]
        total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
        if not np.isfinite(total):
            raise TrainingDivergedError("non-finite gradient norm")
        scale = self.clip / total if total > self.clip else 1.0
        for (layer, name), g, v in zip(params, grads, self._vel):
            v *= self.momentum
            v -= self.lr * scale * g
            getattr(layer, name)[...] += v


def train_batch(net: UpsamplerNet, batch, opt: MomentumSgd) -> float:
    """One SGD step over a batch of (x, dctif_up, target) samples."""
    if not batch:
        raise ArgumentError("empty batch")
    net.zero_grads()
    loss_sum = 0.0
    for x, dctif_up, target in batch:
        out = net.forward(x, dctif_up)
        loss, dout = mse_loss_grad(out, np.asarray(target, net.dtype))
        loss_sum += loss
        net.backward(dout)
    n = len(batch)
    for layer in net.param_layers():
        layer.gw /= n
        layer.gb /= n
    mean_loss = loss_sum / n
    if not np.isfinite(mean_loss):
        raise TrainingDivergedError(f"non-finite training loss {mean_loss}")
    opt.step(net)
    return mean_loss


def _layer_table(net: UpsamplerNet) -> list[tuple[int, int, int, int, int]]:
    a = net.arch
    rows = []

    def conv(layer):
        rows.append((layer.kind, layer.kernel, layer.kernel, layer.in_ch, layer.out_ch))

    def relu(ch):
        rows.append((KIND_RELU, 0, 0, ch, ch))

    conv(net.l1)
    relu(a.l1_channels)
    conv(net.l2a)
    relu(a.l2_channels)
    conv(net.l2b)
    relu(a.l2_channels)
    rows.append((KIND_CONCAT, 0, 0, 2 * a.l2_channels, 2 * a.l2_channels))
    conv(net.l3)
    relu(a.l3_channels)
    conv(net.l4a)
    relu(a.l4_channels)
    conv(net.l4b)
    relu(a.l4_channels)
    rows.append((KIND_CONCAT, 0, 0, 2 * a.l4_channels, 2 * a.l4_channels))
    conv(net.l5)
    rows.append((KIND_ADD_SKIP, 0, 0, net.out_ch, net.out_ch))
    return rows


# Kinds of the fixed topology, in file order.
_TEMPLATE_KINDS = (
    KIND_CONV, KIND_RELU, KIND_CONV, KIND_RELU, KIND_CONV, KIND_RELU, KIND_CONCAT,
    KIND_DECONV, KIND_RELU, KIND_CONV, KIND_RELU, KIND_CONV, KIND_RELU, KIND_CONCAT,
    KIND_CONV, KIND_ADD_SKIP,
)
# Indices of the parametric entries within the template.
_PARAM_ROWS = (0, 2, 4, 7, 9, 11, 14)


def save_model(net: UpsamplerNet, path: str) -> None:
    """Serialize a network: header, layer table, float32 parameters."""
    rows = _layer_table(net)
    out = bytearray()
    out += MODEL_MAGIC
    out += struct.pack(
        "<HBBH", MODEL_VERSION, VARIANT_CODES[net.variant], net.qp_tag, len(rows)
    )
    for kind, kh, kw, ic, oc in rows:
        out += struct.pack("<BBBHH", kind, kh, kw, ic, oc)
    for layer in net.param_layers():
        out += np.ascontiguousarray(layer.weight, "<f4").tobytes()
        out += np.ascontiguousarray(layer.bias, "<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(out))


def load_model(path: str) -> UpsamplerNet:
    """Parse and validate a model file; topology must match the template."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 10 or data[:4] != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic)")
    version, variant_code, qp_tag, n_layers = struct.unpack("<HBBH", data[4:10])
    if version != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported model version {version}")
    if variant_code not in VARIANT_NAMES:
        raise ModelFormatError(f"{path}: unknown variant code {variant_code}")
    if n_layers != len(_TEMPLATE_KINDS):
        raise ModelFormatError(
            f"{path}: expected {len(_TEMPLATE_KINDS)} layer entries, got {n_layers}"
        )
    table_end = 10 + 7 * n_layers
    if len(data) < table_end:
        raise ModelFormatError(f"{path}: truncated layer table")
    rows = [
        struct.unpack("<BBBHH", data[10 + 7 * i : 17 + 7 * i]) for i in range(n_layers)
    ]
    kinds = tuple(r[0] for r in rows)
    if kinds != _TEMPLATE_KINDS:
        raise ModelFormatError(f"{path}: layer kinds {kinds} do not match the fixed topology")
    p = [rows[i] for i in _PARAM_ROWS]
    for r in p:
        if r[1] != r[2]:
            raise ModelFormatError(f"{path}: non-square kernel {r[1]}x{r[2]}")
    variant = VARIANT_NAMES[variant_code]
    in_ch = 1 if variant == "luma" else 3
    out_ch = 1 if variant == "luma" else 2
    if p[0][3] != in_ch or p[6][4] != out_ch:
        raise ModelFormatError(f"{path}: channel counts do not match variant {variant}")
    if not (
        p[0][4] == p[1][3] == p[2][3]
        and p[1][4] == p[2][4]
        and p[3][3] == 2 * p[1][4]
        and p[3][4] == p[4][3] == p[5][3]
        and p[4][4] == p[5][4]
        and p[6][3] == 2 * p[4][4]
    ):
        raise ModelFormatError(f"{path}: inconsistent channel counts in layer table")
    try:
        arch = ArchConfig(
            l1_kernel=p[0][1], l1_channels=p[0][4],
            l2a_kernel=p[1][1], l2b_kernel=p[2][1], l2_channels=p[1][4],
            l3_kernel=p[3][1], l3_channels=p[3][4],
            l4a_kernel=p[4][1], l4b_kernel=p[5][1], l4_channels=p[4][4],
            l5_kernel=p[6][1],
        ).validate()
    except ArgumentError as e:
        raise ModelFormatError(f"{path}: {e}") from e
    net = UpsamplerNet(variant, qp_tag, arch)
    expected = sum(
        layer.weight.size + layer.bias.size for layer in net.param_layers()
    )
    got = len(data) - table_end
    if got != 4 * expected:
        raise ModelFormatError(
            f"{path}: expected {4 * expected} parameter bytes, got {got}"
        )
    flat = np.frombuffer(data, "<f4", expected, table_end)
    pos = 0
    for layer in net.param_layers():
        n = layer.weight.size
        layer.weight[...] = flat[pos : pos + n].reshape(layer.weight.shape)
        pos += n
        n = layer.bias.size
        layer.bias[...] = flat[pos : pos + n]
        pos += n
    if not all(np.isfinite(getattr(l, a)).all() for l in net.param_layers() for a in ("weight", "bias")):
        raise ModelFormatError(f"{path}: non-finite parameters")
    return net


def select_nearest_tag(tags, qp: int) -> int:
    """The available QP tag closest to qp; ties prefer the lower tag."""
    tags = sorted(set(int(t) for t in tags))
    if not tags:
        raise ArgumentError("no model tags to select from")
    return min(tags, key=lambda t: (abs(t - qp), t))
