"""Random Kernel Gallery: anisotropic Gaussian blur kernels.

Randomness always comes from an explicit ``numpy.random.Generator``
(PCG64 via ``default_rng``); generation order is sigma1, sigma2, theta,
then one multiplicative-noise draw per kernel entry.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError, InvariantError

SIGMA_RANGE = (0.175, 3.0)
DEFAULT_COUNT = 2400
DEFAULT_SIZE = 11
DEFAULT_NOISE = 0.25
SUM_TOL = 1e-9
RKG_MAGIC = b"RKG1"


@dataclass(frozen=True)
class GaussianKernelSpec:
    sigma1: float
    sigma2: float
    theta: float
    size: int = DEFAULT_SIZE

    def __post_init__(self):
        if self.size < 1 or self.size % 2 == 0:
            raise ContractError(f"kernel size must be odd and positive, got {self.size}")


@dataclass
class Kernel:
    """A non-negative, unit-sum blur kernel, optionally tagged with its spec."""

    grid: np.ndarray
    spec: GaussianKernelSpec | None = None

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=np.float64)
        if g.ndim != 2 or not np.all(np.isfinite(g)):
            raise InvariantError("kernel grid must be a finite 2-D array")
        if np.any(g < 0):
            raise InvariantError("kernel has negative entries")
        if abs(g.sum() - 1.0) > SUM_TOL:
            raise InvariantError(f"kernel sums to {g.sum():.17g}, expected 1")
        self.grid = g

    @property
    def size(self) -> int:
        return self.grid.shape[0]


@dataclass
class RkgDataset:
    kernels: list[Kernel]
    seed: int
    noise_amplitude: float
    sigma_range: tuple[float, float] = field(default=SIGMA_RANGE)

    def __len__(self) -> int:
        return len(self.kernels)

    @property
    def size(self) -> int:
        return self.kernels[0].size

    def grids(self) -> np.ndarray:
        """All kernels stacked as ``(count, size, size)``."""
        return np.stack([k.grid for k in self.kernels])


def sample_spec(rng: np.random.Generator, size: int = DEFAULT_SIZE,
                lo: float = SIGMA_RANGE[0], hi: float = SIGMA_RANGE[1]) -> GaussianKernelSpec:
    if not lo > 0:
        raise ContractError(f"sigma lower bound must be positive, got {lo}")
    if hi < lo:
        raise ContractError(f"sigma range is empty: [{lo}, {hi}]")
    s1 = rng.uniform(lo, hi)
    s2 = rng.uniform(lo, hi)
    theta = rng.uniform(0.0, math.pi)
    return GaussianKernelSpec(float(s1), float(s2), float(theta), size)


def render_gaussian_kernel(spec: GaussianKernelSpec) -> Kernel:
    """Sample exp(-v^T S^-1 v / 2) on the pixel lattice, S = R diag(s1^2, s2^2) R^T."""
    if not (spec.sigma1 > 0 and spec.sigma2 > 0):
        raise ContractError("Gaussian sigmas must be positive")
    c, s = math.cos(spec.theta), math.sin(spec.theta)
    rot = np.array([[c, -s], [s, c]])
    cov = rot @ np.diag([spec.sigma1 ** 2, spec.sigma2 ** 2]) @ rot.T
    det = np.linalg.det(cov)
    if not det > np.finfo(np.float64).tiny:
        raise ContractError(f"covariance is singular for {spec}")
    prec = np.linalg.inv(cov)
    if not np.all(np.isfinite(prec)):
        raise ContractError(f"covariance is singular for {spec}")
    half = (spec.size - 1) / 2
    v = np.arange(spec.size) - half
    di, dj = np.meshgrid(v, v, indexing="ij")
    quad = prec[0, 0] * di * di + 2 * prec[0, 1] * di * dj + prec[1, 1] * dj * dj
    g = np.exp(-0.5 * quad)
    # enforce exact point symmetry against rounding in the quadratic form
    g = 0.5 * (g + g[::-1, ::-1])
    total = g.sum()
    if not total > 0:
        raise ContractError(f"kernel underflows to zero for {spec}")
    return Kernel(g / total, spec)


def perturb_multiplicative(k: Kernel, rng: np.random.Generator, amplitude: float) -> Kernel:
    if not 0 <= amplitude < 1:
        raise ContractError(f"noise amplitude must lie in [0, 1), got {amplitude}")
    if amplitude == 0:
        return Kernel(k.grid.copy(), k.spec)
    u = rng.uniform(-amplitude, amplitude, size=k.grid.shape)
    g = np.clip(k.grid * (1.0 + u), 0.0, None)
    return Kernel(g / g.sum(), k.spec)


def draw_kernel(rng: np.random.Generator, size: int, sigma_range, noise_amplitude: float) -> Kernel:
    spec = sample_spec(rng, size, *sigma_range)
    return perturb_multiplicative(render_gaussian_kernel(spec), rng, noise_amplitude)


def generate_rkg(count: int = DEFAULT_COUNT, size: int = DEFAULT_SIZE,
                 sigma_range=SIGMA_RANGE, noise_amplitude: float = DEFAULT_NOISE,
                 seed: int = 0) -> RkgDataset:
    if count < 1:
        raise ContractError("gallery needs at least one kernel")
    rng = np.random.default_rng(seed)
    kernels = [draw_kernel(rng, size, sigma_range, noise_amplitude) for _ in range(count)]
    return RkgDataset(kernels, int(seed), float(noise_amplitude), tuple(sigma_range))


# --------------------------------------------------------------------------
# RKG1 file format
#
# magic | count u32 | size u32 | noise f64 | seed u64 | count*size*size f64
# | count * (flag u8, sigma1 f64, sigma2 f64, theta f64)
# Spec records are fixed width; an absent spec is flag 0 with zeroed values.

_HEADER = struct.Struct("<4sIIdQ")
_SPEC = struct.Struct("<Bddd")


def encode_rkg(ds: RkgDataset) -> bytes:
    size = ds.size
    parts = [_HEADER.pack(RKG_MAGIC, len(ds), size, ds.noise_amplitude, ds.seed)]
    parts.append(ds.grids().astype("<f8").tobytes())
    for k in ds.kernels:
        if k.spec is None:
            parts.append(_SPEC.pack(0, 0.0, 0.0, 0.0))
        else:
            parts.append(_SPEC.pack(1, k.spec.sigma1, k.spec.sigma2, k.spec.theta))
    return b"".join(parts)


def decode_rkg(buf: bytes) -> RkgDataset:
    if len(buf) < _HEADER.size:
        raise FormatError("RKG1 file truncated in header")
    magic, count, size, noise, seed = _HEADER.unpack_from(buf, 0)
    if magic != RKG_MAGIC:
        raise FormatError("not an RKG1 file (bad magic)")
    if count < 1 or size < 1 or size % 2 == 0:
        raise FormatError(f"RKG1 header invalid: count={count} size={size}")
    n_vals = count * size * size
    need = _HEADER.size + 8 * n_vals + _SPEC.size * count
    if len(buf) != need:
        raise FormatError(f"RKG1 file is {len(buf)} bytes, expected {need}")
    grids = np.frombuffer(buf, dtype="<f8", count=n_vals, offset=_HEADER.size)
    grids = grids.astype(np.float64).reshape(count, size, size)
    off = _HEADER.size + 8 * n_vals
    kernels = []
    for i in range(count):
        flag, s1, s2, th = _SPEC.unpack_from(buf, off + i * _SPEC.size)
        if flag not in (0, 1):
            raise FormatError(f"RKG1 kernel {i}: bad spec flag {flag}")
        spec = GaussianKernelSpec(s1, s2, th, size) if flag else None
        try:
            kernels.append(Kernel(grids[i].copy(), spec))
        except InvariantError as exc:
            raise InvariantError(f"RKG1 kernel {i}: {exc}") from None
    return RkgDataset(kernels, int(seed), float(noise))


def save_rkg(ds: RkgDataset, path) -> None:
    Path(path).write_bytes(encode_rkg(ds))


def load_rkg(path) -> RkgDataset:
    return decode_rkg(Path(path).read_bytes())
