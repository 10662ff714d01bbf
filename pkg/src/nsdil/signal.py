"""Deterministic 2-D signal primitives.

Grids are plain 2-D ``float64`` numpy arrays (row-major). Spectra are
``complex128`` arrays of the same layout. Every function here is pure.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from . import _accel
from .errors import ContractError, FormatError

PAD_MODES = ("zero", "reflect")
_MAX_ELEMENTS = 1 << 31
GRD_MAGIC = b"GRD1"


def as_grid(a, name: str = "grid") -> np.ndarray:
    """Coerce to a finite, non-empty 2-D float64 array."""
    g = np.asarray(a, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
        raise ContractError(f"{name} must be a non-empty 2-D grid, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ContractError(f"{name} contains non-finite values")
    return g


def _require_odd(g: np.ndarray, what: str) -> None:
    if g.shape[0] % 2 == 0 or g.shape[1] % 2 == 0:
        raise ContractError(f"{what} must have odd dimensions, got {g.shape}")


def conv2d_full(a, b) -> np.ndarray:
    """Full linear convolution, output ``(ar + br - 1, ac + bc - 1)``."""
    a = as_grid(a, "a")
    b = as_grid(b, "b")
    rows = a.shape[0] + b.shape[0] - 1
    cols = a.shape[1] + b.shape[1] - 1
    if rows * cols >= _MAX_ELEMENTS:
        raise ContractError(f"full convolution size {rows}x{cols} overflows")
    # correlate the zero-extended larger operand with the flipped smaller one
    if a.size < b.size:
        a, b = b, a
    br, bc = b.shape
    padded = np.pad(a, ((br - 1, br - 1), (bc - 1, bc - 1)))
    return _accel.correlate_valid(padded, b[::-1, ::-1])


def pad_image(x: np.ndarray, pr: int, pc: int, pad: str) -> np.ndarray:
    if pad == "zero":
        return np.pad(x, ((pr, pr), (pc, pc)))
    if pad == "reflect":
        if pr >= x.shape[0] or pc >= x.shape[1]:
            raise ContractError(
                f"reflect padding of {pr}x{pc} needs an input larger than {x.shape}"
            )
        return np.pad(x, ((pr, pr), (pc, pc)), mode="reflect")
    raise ContractError(f"pad mode must be one of {PAD_MODES}, got {pad!r}")


def conv2d_same(x, kernel, pad: str = "zero") -> np.ndarray:
    """Convolution cropped to the input size (central crop of the full result
    computed on the ``pad``-extended input). Kernel dims must be odd."""
    x = as_grid(x, "input")
    k = as_grid(kernel, "kernel")
    _require_odd(k, "kernel")
    pr, pc = (k.shape[0] - 1) // 2, (k.shape[1] - 1) // 2
    padded = pad_image(x, pr, pc, pad)
    return _accel.correlate_valid(padded, k[::-1, ::-1])


def make_impulse(rows: int, cols: int, placement: str = "center") -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ContractError("impulse dimensions must be positive")
    g = np.zeros((rows, cols))
    if placement == "center":
        if rows % 2 == 0 or cols % 2 == 0:
            raise ContractError("centered impulse needs odd dimensions")
        g[(rows - 1) // 2, (cols - 1) // 2] = 1.0
    elif placement == "origin":
        g[0, 0] = 1.0
    else:
        raise ContractError(f"placement must be 'center' or 'origin', got {placement!r}")
    return g


def dft2d(g, out_rows: int | None = None, out_cols: int | None = None) -> np.ndarray:
    """Zero-padded 2-D DFT with the negative-exponent convention.

    ``F[p, q] = sum_mn g[m, n] exp(-2j*pi*(p*m/P + q*n/Q))``.
    """
    g = as_grid(g)
    out_rows = g.shape[0] if out_rows is None else out_rows
    out_cols = g.shape[1] if out_cols is None else out_cols
    if out_rows < g.shape[0] or out_cols < g.shape[1]:
        raise ContractError(f"DFT size {(out_rows, out_cols)} smaller than input {g.shape}")
    return np.fft.fft2(g, s=(out_rows, out_cols))


def magnitude(c) -> np.ndarray:
    return np.abs(np.asarray(c, dtype=np.complex128))


def phase(c) -> np.ndarray:
    """Principal-value angle in (-pi, pi]."""
    ang = np.angle(np.asarray(c, dtype=np.complex128))
    ang[ang <= -np.pi] = np.pi
    return ang


def center_shift_to_origin(g) -> np.ndarray:
    g = as_grid(g)
    _require_odd(g, "grid")
    return np.roll(g, (-(g.shape[0] - 1) // 2, -(g.shape[1] - 1) // 2), axis=(0, 1))


def origin_shift_to_center(g) -> np.ndarray:
    g = as_grid(g)
    _require_odd(g, "grid")
    return np.roll(g, ((g.shape[0] - 1) // 2, (g.shape[1] - 1) // 2), axis=(0, 1))


def embed_at_origin(g, rows: int, cols: int) -> np.ndarray:
    """Zero-extend an odd-sized centered grid to ``rows x cols`` with its
    center tap at index (0, 0) and negative offsets wrapped around.

    Same as padding symmetrically about the center and then applying
    :func:`center_shift_to_origin`; a centered symmetric kernel embedded
    this way has a real spectrum.
    """
    g = as_grid(g)
    _require_odd(g, "grid")
    if rows < g.shape[0] or cols < g.shape[1]:
        raise ContractError(f"target {(rows, cols)} smaller than grid {g.shape}")
    cr, cc = (g.shape[0] - 1) // 2, (g.shape[1] - 1) // 2
    ri = (np.arange(g.shape[0]) - cr) % rows
    ci = (np.arange(g.shape[1]) - cc) % cols
    out = np.zeros((rows, cols))
    out[np.ix_(ri, ci)] = g
    return out


def extract_from_origin(big: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Adjoint of :func:`embed_at_origin`: gather the ``rows x cols`` taps."""
    cr, cc = (rows - 1) // 2, (cols - 1) // 2
    ri = (np.arange(rows) - cr) % big.shape[0]
    ci = (np.arange(cols) - cc) % big.shape[1]
    return big[np.ix_(ri, ci)]


# --------------------------------------------------------------------------
# bicubic resampling


def _cubic(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    t = np.abs(t)
    t2, t3 = t * t, t * t * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def _resize_matrix(n_in: int, n_out: int, scale: float) -> np.ndarray:
    # half-pixel centred sampling; edge taps clamp to the border sample.
    # When shrinking, the kernel is stretched by 1 / scale (antialiasing)
    # and each row renormalised.
    pos = (np.arange(n_out) + 0.5) / scale - 0.5
    base = np.floor(pos).astype(np.int64)
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    stretch = max(1.0, 1.0 / scale)
    reach = int(np.ceil(2 * stretch))
    for off in range(1 - reach, reach + 1):
        idx = base + off
        w = _cubic((pos - idx) / stretch)
        np.add.at(m, (rows, np.clip(idx, 0, n_in - 1)), w)
    if stretch > 1.0:
        m /= m.sum(axis=1, keepdims=True)
    return m


def bicubic_resize(img, scale: float) -> np.ndarray:
    """Keys cubic (a = -0.5) resampling of a grid by ``scale``; antialiased
    when ``scale < 1``."""
    img = as_grid(img, "image")
    if not scale > 0:
        raise ContractError(f"scale must be positive, got {scale}")
    out_r = int(round(scale * img.shape[0]))
    out_c = int(round(scale * img.shape[1]))
    if out_r < 1 or out_c < 1:
        raise ContractError(f"scale {scale} collapses {img.shape} to zero size")
    wr = _resize_matrix(img.shape[0], out_r, out_r / img.shape[0])
    wc = _resize_matrix(img.shape[1], out_c, out_c / img.shape[1])
    return wr @ img @ wc.T


# --------------------------------------------------------------------------
# GRD1 exchange format


def encode_grid(g) -> bytes:
    g = as_grid(g)
    header = GRD_MAGIC + struct.pack("<II", g.shape[0], g.shape[1])
    return header + g.astype("<f8").tobytes()


def decode_grid(buf: bytes) -> np.ndarray:
    if len(buf) < 12 or buf[:4] != GRD_MAGIC:
        raise FormatError("not a GRD1 grid (bad magic)")
    rows, cols = struct.unpack_from("<II", buf, 4)
    if rows < 1 or cols < 1:
        raise FormatError(f"GRD1 header declares empty grid {rows}x{cols}")
    need = 12 + 8 * rows * cols
    if len(buf) != need:
        raise FormatError(f"GRD1 payload is {len(buf)} bytes, expected {need}")
    g = np.frombuffer(buf, dtype="<f8", offset=12).reshape(rows, cols).astype(np.float64)
    if not np.all(np.isfinite(g)):
        raise FormatError("GRD1 grid contains non-finite values")
    return g


def save_grid(g, path) -> None:
    Path(path).write_bytes(encode_grid(g))


def load_grid(path) -> np.ndarray:
    return decode_grid(Path(path).read_bytes())
