"""Image restoration with a trained network or its restoration kernel,
bicubic-pre-upsampled super-resolution, a Wiener baseline, and 8-bit
image I/O."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError, NumericError
from .gallery import Kernel
from .lcnn import LcnnModel, forward
from .signal import as_grid, bicubic_resize, conv2d_same, embed_at_origin, pad_image


@dataclass
class Image:
    """One (gray) or three (rgb) planes of shape (H, W), values nominally in [0, 1]."""

    planes: np.ndarray
    color_space: str = "gray"

    def __post_init__(self):
        p = np.asarray(self.planes, dtype=np.float64)
        if p.ndim == 2:
            p = p[None]
        if p.ndim != 3 or p.shape[0] not in (1, 3) or min(p.shape[1:]) < 1:
            raise ContractError(f"image planes must be (1|3, H, W), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ContractError("image contains non-finite values")
        self.planes = p
        self.color_space = "gray" if p.shape[0] == 1 else "rgb"

    @classmethod
    def from_array(cls, arr) -> "Image":
        """Accepts (H, W) or (H, W, 3) arrays."""
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim == 3 and a.shape[2] == 3:
            return cls(a.transpose(2, 0, 1))
        return cls(a)

    def to_array(self) -> np.ndarray:
        return self.planes[0] if self.planes.shape[0] == 1 else self.planes.transpose(1, 2, 0)

    @property
    def shape(self) -> tuple[int, int]:
        return self.planes.shape[1], self.planes.shape[2]

    @property
    def channels(self) -> int:
        return self.planes.shape[0]

    def clipped(self) -> "Image":
        return Image(np.clip(self.planes, 0.0, 1.0))

    def map_planes(self, fn) -> "Image":
        return Image(np.stack([fn(p) for p in self.planes]))


def _as_image(img) -> Image:
    return img if isinstance(img, Image) else Image.from_array(img)


def deblur_with_drk(img, drk, pad: str = "reflect", clip: bool = True) -> Image:
    img = _as_image(img)
    d = as_grid(drk, "drk")
    if img.shape[0] < d.shape[0] or img.shape[1] < d.shape[1]:
        raise ContractError(f"image {img.shape} is smaller than the kernel {d.shape}")
    out = img.map_planes(lambda p: conv2d_same(p, d, pad))
    return out.clipped() if clip else out


def deblur_with_model(img, model: LcnnModel, pad: str = "reflect", clip: bool = True) -> Image:
    img = _as_image(img)
    n = model.drk_size
    if img.shape[0] < n or img.shape[1] < n:
        raise ContractError(f"image {img.shape} is smaller than the receptive field {n}")
    r = (n - 1) // 2

    def run(p):
        ext = pad_image(p, r, r, pad)
        return forward(model, ext)[r:r + p.shape[0], r:r + p.shape[1]]

    out = img.map_planes(run)
    return out.clipped() if clip else out


def restore(img, restorer, pad: str = "reflect", clip: bool = True) -> Image:
    if isinstance(restorer, LcnnModel):
        return deblur_with_model(img, restorer, pad, clip)
    return deblur_with_drk(img, restorer, pad, clip)


def super_resolve(img, scale: float, restorer, pad: str = "reflect") -> Image:
    """Bicubic upsampling by ``scale`` followed by deblurring."""
    img = _as_image(img)
    up = img.map_planes(lambda p: bicubic_resize(p, scale))
    return restore(up, restorer, pad)


def wiener_deconvolve(img, k, nsr: float = 1e-3, clip: bool = True) -> Image:
    """Frequency-domain Wiener filter ``conj(K) / (|K|^2 + nsr)`` on a grid
    padded to image + kernel - 1, kernel centre at the origin."""
    if nsr < 0:
        raise ContractError("nsr must be non-negative")
    img = _as_image(img)
    kg = k.grid if isinstance(k, Kernel) else as_grid(k, "kernel")
    h, w = img.shape
    pr, pc = h + kg.shape[0] - 1, w + kg.shape[1] - 1
    kh = np.fft.fft2(embed_at_origin(kg, pr, pc))
    power = np.abs(kh) ** 2
    if nsr == 0 and np.any(np.abs(kh) < 1e-12):
        raise NumericError("kernel spectrum has zeros; Wiener filter with nsr=0 is singular")
    filt = np.conj(kh) / (power + nsr)

    def run(p):
        return np.fft.ifft2(np.fft.fft2(p, s=(pr, pc)) * filt).real[:h, :w]

    out = img.map_planes(run)
    return out.clipped() if clip else out


# --------------------------------------------------------------------------
# image I/O: 8-bit PNM handled natively, other formats through Pillow

_PNM_KINDS = {b"P2": (1, False), b"P3": (3, False), b"P5": (1, True), b"P6": (3, True)}
_PNM_SUFFIXES = (".pgm", ".ppm", ".pnm")


def _parse_pnm(buf: bytes) -> Image:
    magic = buf[:2]
    if magic not in _PNM_KINDS:
        raise FormatError(f"unsupported PNM kind {magic!r}")
    channels, binary = _PNM_KINDS[magic]
    # header: magic, width, height, maxval separated by whitespace/comments
    pos = 2
    fields = []
    token = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\d+)")
    for _ in range(3):
        m = token.match(buf, pos)
        if m is None:
            raise FormatError("truncated PNM header")
        fields.append(int(m.group(1)))
        pos = m.end()
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError("PNM image has zero size")
    if maxval > 255:
        raise FormatError(f"PNM maxval {maxval} means more than 8 bits per sample; unsupported")
    if maxval < 1:
        raise FormatError("PNM maxval must be positive")
    n = width * height * channels
    if binary:
        data = buf[pos + 1:pos + 1 + n]
        if len(data) != n:
            raise FormatError(f"PNM pixel data truncated ({len(data)} of {n} bytes)")
        vals = np.frombuffer(data, dtype=np.uint8).astype(np.float64)
    else:
        vals = np.array(buf[pos:].split()[:n], dtype=np.float64)
        if vals.size != n:
            raise FormatError("PNM pixel data truncated")
    if np.any(vals > maxval):
        raise FormatError("PNM sample exceeds maxval")
    arr = vals.reshape(height, width, channels) / maxval
    return Image(np.clip(arr.transpose(2, 0, 1), 0.0, 1.0))


def load_image(path) -> Image:
    path = Path(path)
    buf = path.read_bytes()
    if buf[:2] in _PNM_KINDS:
        return _parse_pnm(buf)
    try:
        from PIL import Image as PILImage
    except ImportError:  # pragma: no cover
        raise FormatError(f"{path.name}: only PNM images are supported without Pillow") from None
    try:
        pil = PILImage.open(path)
        pil.load()
    except Exception as exc:
        raise FormatError(f"{path.name}: unreadable image ({exc})") from None
    mode = pil.mode
    if mode in ("L", "P", "RGB", "RGBA", "LA", "1"):
        pil = pil.convert("L" if mode in ("L", "LA", "1") else "RGB")
    else:
        raise FormatError(f"{path.name}: unsupported pixel format {mode} (8-bit gray/RGB only)")
    arr = np.asarray(pil, dtype=np.float64) / 255.0
    return Image.from_array(np.clip(arr, 0.0, 1.0))


def quantize(img: Image) -> np.ndarray:
    """(H, W, C) uint8 samples, ``round(255 * v)`` after clipping."""
    q = np.rint(255.0 * np.clip(img.planes, 0.0, 1.0)).astype(np.uint8)
    return q.transpose(1, 2, 0)


def save_image(img: Image, path) -> None:
    path = Path(path)
    q = quantize(img)
    if path.suffix.lower() in _PNM_SUFFIXES:
        kind = b"P5" if img.channels == 1 else b"P6"
        header = kind + f"\n{q.shape[1]} {q.shape[0]}\n255\n".encode("ascii")
        path.write_bytes(header + q.tobytes())
        return
    from PIL import Image as PILImage

    arr = q[:, :, 0] if img.channels == 1 else q
    PILImage.fromarray(arr).save(path)
