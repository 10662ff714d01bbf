"""Hot inner loops: direct 2-D correlation, single and multi channel.

Two interchangeable implementations live here. The numba path compiles
explicit loops with ``@njit``; the numpy path vectorises over taps (or
over windows via BLAS for multi-channel work). The active path is chosen
at import from ``NSD_NUMBA`` (``0``/``off``/``false`` forces numpy) and can
be switched at runtime with :func:`set_backend`.

All routines compute *valid* correlation of an already padded input:
``out[y, x] = sum_ab x[y + a, x + b] * k[a, b]``. Convolution is obtained
by the callers by flipping the kernel.
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f


def _env_wants_numba() -> bool:
    flag = os.environ.get("NSD_NUMBA", "1").strip().lower()
    return flag not in ("0", "off", "false", "no")


_backend = "numba" if (HAVE_NUMBA and _env_wants_numba()) else "numpy"


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


_threads = 1


def set_threads(n: int) -> None:
    """Record the worker cap. Every kernel here is serial, so any value
    gives the same results; numba's pool is left unlaunched."""
    global _threads
    if n < 1:
        raise ValueError("thread count must be at least 1")
    _threads = int(n)


def threads() -> int:
    return _threads


# --------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _correlate_valid_nb(x, k):
    kr, kc = k.shape
    out_r = x.shape[0] - kr + 1
    out_c = x.shape[1] - kc + 1
    out = np.zeros((out_r, out_c))
    for i in range(out_r):
        for j in range(out_c):
            acc = 0.0
            for a in range(kr):
                for b in range(kc):
                    acc += x[i + a, j + b] * k[a, b]
            out[i, j] = acc
    return out


@njit(cache=True)
def _mc_correlate_valid_nb(x, w):
    n_out, n_in, kr, kc = w.shape
    out_r = x.shape[1] - kr + 1
    out_c = x.shape[2] - kc + 1
    out = np.zeros((n_out, out_r, out_c))
    for o in range(n_out):
        for c in range(n_in):
            for a in range(kr):
                for b in range(kc):
                    wt = w[o, c, a, b]
                    if wt == 0.0:
                        continue
                    for i in range(out_r):
                        for j in range(out_c):
                            out[o, i, j] += wt * x[c, i + a, j + b]
    return out


@njit(cache=True)
def _mc_weight_grad_nb(x, g, kr, kc):
    n_out = g.shape[0]
    n_in = x.shape[0]
    out_r = g.shape[1]
    out_c = g.shape[2]
    dw = np.zeros((n_out, n_in, kr, kc))
    for o in range(n_out):
        for c in range(n_in):
            for a in range(kr):
                for b in range(kc):
                    acc = 0.0
                    for i in range(out_r):
                        for j in range(out_c):
                            acc += g[o, i, j] * x[c, i + a, j + b]
                    dw[o, c, a, b] = acc
    return dw


# --------------------------------------------------------------------------
# numpy kernels


def _correlate_valid_np(x, k):
    kr, kc = k.shape
    out_r = x.shape[0] - kr + 1
    out_c = x.shape[1] - kc + 1
    out = np.zeros((out_r, out_c))
    for a in range(kr):
        for b in range(kc):
            wt = k[a, b]
            if wt != 0.0:
                out += wt * x[a:a + out_r, b:b + out_c]
    return out


def _mc_correlate_valid_np(x, w):
    n_out, n_in, kr, kc = w.shape
    win = sliding_window_view(x, (kr, kc), axis=(1, 2))  # (C, H, W, kr, kc)
    out_r, out_c = win.shape[1], win.shape[2]
    cols = np.ascontiguousarray(win.transpose(0, 3, 4, 1, 2)).reshape(n_in * kr * kc, out_r * out_c)
    return (w.reshape(n_out, -1) @ cols).reshape(n_out, out_r, out_c)


def _mc_weight_grad_np(x, g, kr, kc):
    n_out = g.shape[0]
    n_in = x.shape[0]
    win = sliding_window_view(x, (kr, kc), axis=(1, 2))
    cols = np.ascontiguousarray(win.transpose(0, 3, 4, 1, 2)).reshape(n_in * kr * kc, -1)
    return (g.reshape(n_out, -1) @ cols.T).reshape(n_out, n_in, kr, kc)


# --------------------------------------------------------------------------
# dispatch


def correlate_valid(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    k = np.ascontiguousarray(k, dtype=np.float64)
    if _backend == "numba":
        return _correlate_valid_nb(x, k)
    return _correlate_valid_np(x, k)


def mc_correlate_valid(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``x``: (C, H, W) padded input; ``w``: (O, C, kr, kc) -> (O, H-kr+1, W-kc+1)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if _backend == "numba":
        return _mc_correlate_valid_nb(x, w)
    return _mc_correlate_valid_np(x, w)


def mc_weight_grad(x: np.ndarray, g: np.ndarray, kr: int, kc: int) -> np.ndarray:
    """Gradient of ``mc_correlate_valid(x, w)`` w.r.t. ``w`` given upstream ``g``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    if _backend == "numba":
        return _mc_weight_grad_nb(x, g, kr, kc)
    return _mc_weight_grad_np(x, g, kr, kc)
