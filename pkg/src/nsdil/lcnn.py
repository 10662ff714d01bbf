"""Linear convolutional network (no bias, no activation) and its collapse
into a single explicit restoration kernel.

Layer taps are stored as ``(out_channels, in_channels, 3, 3)`` arrays and
act by true convolution with zero padding, so the network's impulse
response equals the sequential full convolution of its taps.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _accel
from .errors import ContractError, FormatError
from .signal import as_grid, conv2d_full, make_impulse

DEFAULT_TOPOLOGY = (1, 32, 32, 32, 32, 1)
TAP = 3
LCNN_MAGIC = b"LCNN"
INIT_SCHEMES = ("near_identity", "scaled_normal")


def _check_topology(topology) -> tuple[int, ...]:
    topo = tuple(int(c) for c in topology)
    if len(topo) < 2 or topo[0] != 1 or topo[-1] != 1 or min(topo) < 1:
        raise ContractError(f"topology must run 1 -> ... -> 1 with positive widths, got {topo}")
    return topo


@dataclass
class LcnnModel:
    layers: list[np.ndarray]

    def __post_init__(self):
        if not self.layers:
            raise ContractError("model needs at least one layer")
        prev = 1
        for i, w in enumerate(self.layers):
            if w.ndim != 4 or w.shape[2:] != (TAP, TAP):
                raise ContractError(f"layer {i} taps must be (out, in, 3, 3), got {w.shape}")
            if w.shape[1] != prev:
                raise ContractError(f"layer {i} expects {w.shape[1]} inputs, previous gives {prev}")
            if not np.all(np.isfinite(w)):
                raise ContractError(f"layer {i} has non-finite taps")
            prev = w.shape[0]
        if prev != 1:
            raise ContractError("last layer must have a single output channel")

    @property
    def topology(self) -> tuple[int, ...]:
        return (1,) + tuple(w.shape[0] for w in self.layers)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def drk_size(self) -> int:
        return 1 + len(self.layers) * (TAP - 1)

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.layers)

    def copy(self) -> "LcnnModel":
        return LcnnModel([w.copy() for w in self.layers])


def init_model(rng: np.random.Generator, topology=DEFAULT_TOPOLOGY,
               scheme: str = "near_identity", noise_std: float = 1e-2) -> LcnnModel:
    """``near_identity`` routes channel 0 through centred deltas plus noise;
    ``scaled_normal`` draws every tap from N(0, 1 / (in_channels * 9))."""
    topo = _check_topology(topology)
    layers = []
    for c_in, c_out in zip(topo[:-1], topo[1:]):
        if scheme == "scaled_normal":
            w = rng.normal(0.0, np.sqrt(1.0 / (c_in * TAP * TAP)), size=(c_out, c_in, TAP, TAP))
        elif scheme == "near_identity":
            w = rng.normal(0.0, noise_std, size=(c_out, c_in, TAP, TAP)) if noise_std > 0 \
                else np.zeros((c_out, c_in, TAP, TAP))
            w[0, 0, TAP // 2, TAP // 2] += 1.0
        else:
            raise ContractError(f"unknown init scheme {scheme!r}; choose from {INIT_SCHEMES}")
        layers.append(w)
    return LcnnModel(layers)


def _layer_forward(h: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    hp = np.pad(h, ((0, 0), (1, 1), (1, 1)))
    return _accel.mc_correlate_valid(hp, w[:, :, ::-1, ::-1]), hp


def forward_trace(model: LcnnModel, x) -> tuple[np.ndarray, list[np.ndarray]]:
    """Run the layer stack on ``x`` as given (no outer extension) and keep
    each layer's zero-padded input for backprop."""
    h = as_grid(x, "input")[None]
    padded = []
    for w in model.layers:
        h, hp = _layer_forward(h, w)
        padded.append(hp)
    return h[0], padded


def forward(model: LcnnModel, x) -> np.ndarray:
    """Apply the network to a grid, output the same size as the input.

    The input is zero-extended by the receptive radius before the stack of
    same-size layers and cropped afterwards, so no layer truncates signal
    at the border and the result is exactly ``conv2d_same(x, drk, "zero")``.
    """
    x = as_grid(x, "input")
    r = model.depth * (TAP // 2)
    out = forward_trace(model, np.pad(x, r))[0]
    return out[r:r + x.shape[0], r:r + x.shape[1]]


def backward(model: LcnnModel, padded: list[np.ndarray], grad_out) -> list[np.ndarray]:
    """Tap gradients given d(loss)/d(output) and the trace of ``forward_trace``."""
    g = np.asarray(grad_out, dtype=np.float64)[None]
    grads: list[np.ndarray] = [None] * model.depth  # type: ignore[list-item]
    for i in range(model.depth - 1, -1, -1):
        w = model.layers[i]
        grads[i] = _accel.mc_weight_grad(padded[i], g, TAP, TAP)[:, :, ::-1, ::-1].copy()
        if i > 0:
            gp = np.pad(g, ((0, 0), (1, 1), (1, 1)))
            g = _accel.mc_correlate_valid(gp, w.transpose(1, 0, 2, 3))
    return grads


def extract_drk(model: LcnnModel) -> np.ndarray:
    """Impulse response of the network: feed a centred delta exactly as large
    as the receptive field. Activations never reach the grid edge, so the
    per-layer zero padding already coincides with the zero field."""
    return extract_drk_trace(model)[0]


def extract_drk_trace(model: LcnnModel) -> tuple[np.ndarray, list[np.ndarray]]:
    n = model.drk_size
    return forward_trace(model, make_impulse(n, n, "center"))


def compose_drk(model: LcnnModel) -> np.ndarray:
    """Same kernel by sequential full convolution of the taps, summed over channels."""
    resp = [np.ones((1, 1))]
    for w in model.layers:
        nxt = []
        for o in range(w.shape[0]):
            acc = None
            for c in range(w.shape[1]):
                term = conv2d_full(resp[c], w[o, c])
                acc = term if acc is None else acc + term
            nxt.append(acc)
        resp = nxt
    return resp[0]


# --------------------------------------------------------------------------
# LCNN checkpoint format
#
# magic | layer count u32 | per layer (out u32, in u32) | taps f64 LE,
# layer by layer in out-major, in-next, row-major spatial order.


def encode_model(model: LcnnModel) -> bytes:
    parts = [LCNN_MAGIC, struct.pack("<I", model.depth)]
    for w in model.layers:
        parts.append(struct.pack("<II", w.shape[0], w.shape[1]))
    for w in model.layers:
        parts.append(np.ascontiguousarray(w).astype("<f8").tobytes())
    return b"".join(parts)


def decode_model(buf: bytes) -> LcnnModel:
    if len(buf) < 8 or buf[:4] != LCNN_MAGIC:
        raise FormatError("not an LCNN checkpoint (bad magic)")
    (n_layers,) = struct.unpack_from("<I", buf, 4)
    if n_layers < 1 or len(buf) < 8 + 8 * n_layers:
        raise FormatError("LCNN checkpoint truncated in header")
    shapes = [struct.unpack_from("<II", buf, 8 + 8 * i) for i in range(n_layers)]
    prev = 1
    for i, (c_out, c_in) in enumerate(shapes):
        if c_in != prev or c_out < 1:
            raise FormatError(f"LCNN layer {i} channel chain broken ({c_in} after {prev})")
        prev = c_out
    if prev != 1:
        raise FormatError("LCNN topology must end with one channel")
    off = 8 + 8 * n_layers
    need = off + 8 * sum(o * c * TAP * TAP for o, c in shapes)
    if len(buf) != need:
        raise FormatError(f"LCNN checkpoint is {len(buf)} bytes, expected {need}")
    layers = []
    for c_out, c_in in shapes:
        n = c_out * c_in * TAP * TAP
        w = np.frombuffer(buf, dtype="<f8", count=n, offset=off).astype(np.float64)
        layers.append(w.reshape(c_out, c_in, TAP, TAP))
        off += 8 * n
    try:
        return LcnnModel(layers)
    except ContractError as exc:
        raise FormatError(str(exc)) from None


def save_model(model: LcnnModel, path) -> None:
    Path(path).write_bytes(encode_model(model))


def load_model(path) -> LcnnModel:
    return decode_model(Path(path).read_bytes())
