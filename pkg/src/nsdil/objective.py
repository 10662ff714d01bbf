"""Identity-learning objective, its analytic gradient, Adam, and training.

The loss for one blur kernel ``k`` and restoration kernel ``d``::

    identity = || conv_full(k, d) - delta ||^2
    r1       = | 1 - sum(d) |
    r2       = mean over non-negligible bins of | angle(K * D) |
    r3       = mean over all bins of | 1 - |K| |D| |
    total    = identity + l1 * r1 + l2 * r2 + l3 * r3

``K`` and ``D`` are DFTs on a ``spectrum_dims`` grid of the kernels
embedded with their centre tap at the origin, so a centred symmetric
kernel has zero phase. The network enters only through ``d``, so a batch
gradient is one backward pass of the impulse response.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ContractError, DegenerateSpectrumError, NumericError
from .gallery import Kernel, RkgDataset
from .lcnn import LcnnModel, backward, extract_drk, extract_drk_trace
from .signal import as_grid, embed_at_origin, extract_from_origin, make_impulse

log = logging.getLogger(__name__)

IDENTITY_MODES = ("full", "same")


@dataclass
class TrainConfig:
    lambda1: float = 0.8
    lambda2: float = 0.8
    lambda3: float = 0.4
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epochs: int = 40
    batch_size: int = 32
    seed: int = 0
    spectrum_dims: tuple[int, int] = (21, 21)
    epsilon_spec: float = 1e-12
    # "same" scores the central crop of k * d (what a same-padded network
    # returns for input k) instead of the full convolution
    identity_mode: str = "full"

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ContractError("loss weights must be non-negative")
        if not self.learning_rate > 0:
            raise ContractError("learning rate must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ContractError("epochs must be >= 0 and batch_size >= 1")
        if self.identity_mode not in IDENTITY_MODES:
            raise ContractError(f"identity_mode must be one of {IDENTITY_MODES}")
        self.spectrum_dims = (int(self.spectrum_dims[0]), int(self.spectrum_dims[1]))

    @property
    def lambdas(self) -> tuple[float, float, float]:
        return self.lambda1, self.lambda2, self.lambda3


@dataclass
class LossBreakdown:
    identity: float
    r1: float
    r2: float
    r3: float
    total: float

    @classmethod
    def combine(cls, identity, r1, r2, r3, cfg: TrainConfig) -> "LossBreakdown":
        l1, l2, l3 = cfg.lambdas
        total = identity + l1 * r1 + l2 * r2 + l3 * r3
        return cls(float(identity), float(r1), float(r2), float(r3), float(total))

    def as_row(self) -> tuple[float, ...]:
        return self.identity, self.r1, self.r2, self.r3, self.total


def _grid_of(k) -> np.ndarray:
    return k.grid if isinstance(k, Kernel) else as_grid(k, "kernel")


def _check_dims(nk: int, nd: int, cfg: TrainConfig) -> None:
    full = nk + nd - 1
    if cfg.spectrum_dims[0] < full or cfg.spectrum_dims[1] < full:
        raise ContractError(
            f"spectrum_dims {cfg.spectrum_dims} smaller than full convolution size {full}"
        )


# --------------------------------------------------------------------------
# batched loss evaluation with gradient w.r.t. the restoration kernel


def _batch_conv_full(ks: np.ndarray, d: np.ndarray) -> np.ndarray:
    nb, nk, _ = ks.shape
    nd = d.shape[0]
    n = nk + nd - 1
    out = np.zeros((nb, n, n))
    for a in range(nd):
        for b in range(nd):
            if d[a, b] != 0.0:
                out[:, a:a + nk, b:b + nk] += d[a, b] * ks
    return out


def _identity_residual(ks: np.ndarray, d: np.ndarray, mode: str) -> np.ndarray:
    nk, nd = ks.shape[1], d.shape[0]
    full = _batch_conv_full(ks, d)
    n = nk + nd - 1
    if mode == "full":
        return full - make_impulse(n, n, "center")
    # only the central nk x nk crop is scored; the rest of the residual is zero
    c = (nd - 1) // 2
    res = np.zeros_like(full)
    res[:, c:c + nk, c:c + nk] = full[:, c:c + nk, c:c + nk] - make_impulse(nk, nk, "center")
    return res


def _spectra(ks: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    p, q = cfg.spectrum_dims
    return np.stack([np.fft.fft2(embed_at_origin(k, p, q)) for k in ks])


def batch_loss_and_grad(ks, d, cfg: TrainConfig, k_spectra=None, need_grad: bool = True):
    """Mean loss over a stack of kernels ``ks`` (B, n, n) and its gradient
    with respect to the restoration kernel ``d``.

    Returns ``(LossBreakdown, grad)``; ``grad`` is None when not requested.
    """
    ks = np.asarray(ks, dtype=np.float64)
    d = as_grid(d, "drk")
    nb, nk = ks.shape[0], ks.shape[1]
    nd = d.shape[0]
    _check_dims(nk, nd, cfg)
    p, q = cfg.spectrum_dims
    eps = cfg.epsilon_spec

    # identity term
    res = _identity_residual(ks, d, cfg.identity_mode)
    identity = np.einsum("bij,bij->b", res, res)

    # area term
    area_gap = 1.0 - d.sum()
    r1 = abs(area_gap)

    # spectral terms, evaluated on the product Z = K * D
    kh = _spectra(ks, cfg) if k_spectra is None else k_spectra
    dh = np.fft.fft2(embed_at_origin(d, p, q))
    z = kh * dh
    zabs = np.abs(z)
    ang = np.angle(z)
    ang[ang <= -np.pi] = np.pi
    mask = zabs >= eps
    n_inc = mask.sum(axis=(1, 2))
    if np.any(n_inc == 0):
        raise DegenerateSpectrumError("every spectral bin of K * D is below epsilon_spec")
    r2 = np.where(mask, np.abs(ang), 0.0).sum(axis=(1, 2)) / n_inc
    mag_gap = 1.0 - zabs
    r3 = np.abs(mag_gap).mean(axis=(1, 2))

    l1, l2, l3 = cfg.lambdas
    breakdown = LossBreakdown.combine(identity.mean(), r1, r2.mean(), r3.mean(), cfg)
    if not need_grad:
        return breakdown, None

    # d identity / d d: correlate the residual with each kernel
    g_id = np.zeros((nd, nd))
    for u in range(nk):
        for v in range(nk):
            g_id += np.einsum("b,bmn->mn", ks[:, u, v], res[:, u:u + nd, v:v + nd])
    grad = (2.0 / nb) * g_id

    grad -= l1 * np.sign(area_gap) * np.ones_like(d)

    if l2 > 0 or l3 > 0:
        zf = np.maximum(zabs, eps)
        gz = np.zeros_like(z)
        if l2 > 0:
            # d|angle|/d(re, im) = sign(angle) * (-im, re) / |z|^2
            s = np.where(mask, np.sign(ang), 0.0) / n_inc[:, None, None]
            gz += l2 * s * (-z.imag + 1j * z.real) / zf ** 2
        if l3 > 0:
            # d|1 - |z||/d(re, im) = -sign(1 - |z|) * (re, im) / |z|
            gz += l3 * (-np.sign(mag_gap) / (p * q)) * (z.real + 1j * z.imag) / zf
        g_dh = (np.conj(kh) * gz).sum(axis=0) / nb
        g_embed = (p * q) * np.fft.ifft2(g_dh).real
        grad += extract_from_origin(g_embed, nd, nd)

    return breakdown, grad


# --------------------------------------------------------------------------
# per-kernel loss terms


def identity_loss(k, drk, cfg: TrainConfig | None = None) -> float:
    mode = cfg.identity_mode if cfg is not None else "full"
    res = _identity_residual(_grid_of(k)[None], as_grid(drk, "drk"), mode)
    return float(np.sum(res * res))


def r1_conv_area(drk) -> float:
    return float(abs(1.0 - as_grid(drk, "drk").sum()))


def _product_spectrum(k, drk, cfg: TrainConfig) -> np.ndarray:
    kg, d = _grid_of(k), as_grid(drk, "drk")
    _check_dims(kg.shape[0], d.shape[0], cfg)
    p, q = cfg.spectrum_dims
    return np.fft.fft2(embed_at_origin(kg, p, q)) * np.fft.fft2(embed_at_origin(d, p, q))


def r2_zero_phase(k, drk, cfg: TrainConfig) -> float:
    z = _product_spectrum(k, drk, cfg)
    mask = np.abs(z) >= cfg.epsilon_spec
    if not mask.any():
        raise DegenerateSpectrumError("every spectral bin of K * D is below epsilon_spec")
    ang = np.angle(z[mask])
    return float(np.abs(ang).mean())


def r3_unit_mag(k, drk, cfg: TrainConfig) -> float:
    z = _product_spectrum(k, drk, cfg)
    return float(np.abs(1.0 - np.abs(z)).mean())


def total_loss(model: LcnnModel, k, cfg: TrainConfig) -> LossBreakdown:
    d = extract_drk(model)
    return LossBreakdown.combine(
        identity_loss(k, d, cfg), r1_conv_area(d), r2_zero_phase(k, d, cfg),
        r3_unit_mag(k, d, cfg), cfg,
    )


def evaluate_loss(model: LcnnModel, kernels, cfg: TrainConfig) -> LossBreakdown:
    """Mean loss of ``model`` over a kernel list or gallery (no gradient)."""
    ks = kernels.grids() if isinstance(kernels, RkgDataset) else np.stack([_grid_of(k) for k in kernels])
    return batch_loss_and_grad(ks, extract_drk(model), cfg, need_grad=False)[0]


def gradients(model: LcnnModel, batch, cfg: TrainConfig, k_spectra=None):
    """Gradient of the batch-mean loss w.r.t. every tap.

    ``batch`` is a list of kernels or a (B, n, n) array. Returns
    ``(grads, breakdown)`` with ``grads`` shaped like ``model.layers``.
    """
    if isinstance(batch, np.ndarray):
        ks = batch
    else:
        if not batch:
            raise ContractError("gradient batch is empty")
        ks = np.stack([_grid_of(k) for k in batch])
    with np.errstate(over="ignore", invalid="ignore"):
        d, trace = extract_drk_trace(model)
        bad = np.argwhere(~np.isfinite(d))
        if bad.size:
            raise NumericError(f"non-finite restoration kernel at tap {tuple(int(i) for i in bad[0])}")
        breakdown, g_d = batch_loss_and_grad(ks, d, cfg, k_spectra=k_spectra)
        grads = backward(model, trace, g_d)
    for li, g in enumerate(grads):
        bad = np.argwhere(~np.isfinite(g))
        if bad.size:
            raise NumericError(f"non-finite gradient at layer {li} tap {tuple(int(i) for i in bad[0])}")
    return grads, breakdown


# --------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    step: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_model(cls, model: LcnnModel) -> "AdamState":
        return cls(0, [np.zeros_like(w) for w in model.layers],
                   [np.zeros_like(w) for w in model.layers])


ADAM_EPS = 1e-8


def adam_step(model: LcnnModel, grads, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update, applied to ``model`` in place."""
    if len(grads) != model.depth or any(g.shape != w.shape for g, w in zip(grads, model.layers)):
        raise ContractError("gradient shapes do not match the model")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(w) for w in model.layers]
        state.second_moment = [np.zeros_like(w) for w in model.layers]
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for w, g, m, v in zip(model.layers, grads, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        w -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    return model, state


# --------------------------------------------------------------------------
# training


class TrainingAborted(NumericError):
    """Raised when the loss turns non-finite; carries the last good model."""

    def __init__(self, message, model: LcnnModel, history: list[LossBreakdown]):
        super().__init__(message)
        self.model = model
        self.history = history


def train(model: LcnnModel, rkg: RkgDataset, cfg: TrainConfig, callback=None):
    """Train ``model`` in place on the gallery. Returns ``(model, history)``
    where ``history`` holds one mean :class:`LossBreakdown` per epoch."""
    if len(rkg) == 0:
        raise ContractError("cannot train on an empty gallery")
    ks = rkg.grids()
    _check_dims(ks.shape[1], model.drk_size, cfg)
    spectra = _spectra(ks, cfg)
    rng = np.random.default_rng(cfg.seed)
    state = AdamState.for_model(model)
    history: list[LossBreakdown] = []
    n = len(ks)
    last_good = model.copy()
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        acc = np.zeros(5)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            try:
                grads, bd = gradients(model, ks[idx], cfg, k_spectra=spectra[idx])
            except NumericError as exc:
                raise TrainingAborted(f"epoch {epoch + 1}: {exc}", last_good, history) from None
            if not np.isfinite(bd.total):
                raise TrainingAborted(f"non-finite loss in epoch {epoch + 1}", last_good, history)
            acc += len(idx) * np.array(bd.as_row())
            with np.errstate(over="ignore", invalid="ignore"):
                adam_step(model, grads, state, cfg)
        mean = acc / n
        # total is rebuilt from the component means so the identity holds exactly
        row = LossBreakdown.combine(mean[0], mean[1], mean[2], mean[3], cfg)
        history.append(row)
        if not all(np.isfinite(w).all() for w in model.layers):
            raise TrainingAborted(f"non-finite taps after epoch {epoch + 1}", last_good, history)
        last_good = model.copy()
        log.info("epoch %d/%d total=%.6g identity=%.6g r1=%.3g r2=%.3g r3=%.3g",
                 epoch + 1, cfg.epochs, row.total, row.identity, row.r1, row.r2, row.r3)
        if callback is not None:
            callback(epoch, row, model)
    return model, history


HISTORY_HEADER = "epoch,identity,r1,r2,r3,total"


def history_to_csv(history: list[LossBreakdown]) -> str:
    buf = io.StringIO()
    buf.write(HISTORY_HEADER + "\n")
    for i, row in enumerate(history, start=1):
        buf.write(f"{i}," + ",".join(f"{v:.17g}" for v in row.as_row()) + "\n")
    return buf.getvalue()


def config_fields() -> list[str]:
    return [f.name for f in fields(TrainConfig)]
