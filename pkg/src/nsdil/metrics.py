"""Fidelity metrics: PSNR over all channels, SSIM on luminance."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
LUMA = np.array([0.299, 0.587, 0.114])


def _planes(img) -> np.ndarray:
    p = getattr(img, "planes", None)
    if p is None:
        a = np.asarray(img, dtype=np.float64)
        p = a[None] if a.ndim == 2 else a.transpose(2, 0, 1)
    return p


def psnr(a, b, peak: float = 1.0) -> float:
    pa, pb = _planes(a), _planes(b)
    if pa.shape != pb.shape:
        raise ContractError(f"PSNR operands differ in shape: {pa.shape} vs {pb.shape}")
    mse = float(np.mean((pa - pb) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(peak * peak / mse))


def luminance(img) -> np.ndarray:
    p = _planes(img)
    if p.shape[0] == 1:
        return p[0]
    return np.tensordot(LUMA, p, axes=1)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    n = g.size
    rows = sliding_window_view(x, n, axis=0) @ g
    return sliding_window_view(rows, n, axis=1) @ g


def ssim(a, b, peak: float = 1.0) -> float:
    """Mean SSIM over all valid 11x11 Gaussian-window positions."""
    la, lb = luminance(a), luminance(b)
    if la.shape != lb.shape:
        raise ContractError(f"SSIM operands differ in shape: {la.shape} vs {lb.shape}")
    if min(la.shape) < SSIM_WINDOW:
        raise ContractError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    g = gaussian_window()
    mu_a, mu_b = _filter_valid(la, g), _filter_valid(lb, g)
    var_a = _filter_valid(la * la, g) - mu_a * mu_a
    var_b = _filter_valid(lb * lb, g) - mu_b * mu_b
    cov = _filter_valid(la * lb, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
