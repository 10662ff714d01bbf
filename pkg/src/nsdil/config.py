"""Plain-text ``key = value`` run configuration.

Every knob the command line exposes has a key here; unknown keys are
rejected. Serialisation is canonical (sorted keys, ``repr`` values) so a
parse/serialise round trip is byte-stable.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ContractError, FormatError
from .gallery import DEFAULT_COUNT, DEFAULT_NOISE, DEFAULT_SIZE, SIGMA_RANGE
from .lcnn import DEFAULT_TOPOLOGY
from .objective import TrainConfig

_TRAIN = TrainConfig()

DEFAULTS: dict[str, object] = {
    # training
    "lambda1": _TRAIN.lambda1,
    "lambda2": _TRAIN.lambda2,
    "lambda3": _TRAIN.lambda3,
    "learning_rate": _TRAIN.learning_rate,
    "beta1": _TRAIN.beta1,
    "beta2": _TRAIN.beta2,
    "epochs": _TRAIN.epochs,
    "batch_size": _TRAIN.batch_size,
    "spectrum_dims": _TRAIN.spectrum_dims,
    "epsilon_spec": _TRAIN.epsilon_spec,
    "identity_mode": _TRAIN.identity_mode,
    # model
    "topology": DEFAULT_TOPOLOGY,
    "init_scheme": "near_identity",
    "init_noise": 1e-2,
    # gallery
    "count": DEFAULT_COUNT,
    "size": DEFAULT_SIZE,
    "sigma_lo": SIGMA_RANGE[0],
    "sigma_hi": SIGMA_RANGE[1],
    "noise_amplitude": DEFAULT_NOISE,
    # evaluation
    "kernel_sizes": (11, 15, 19, 23, 27),
    "nsr": 1e-3,
    "metric_crop": 13,
    "learning_rates": (1e-3, 1e-4),
}


def _parse_value(key: str, text: str):
    default = DEFAULTS[key]
    text = text.strip()
    try:
        if isinstance(default, tuple):
            kind = type(default[0])
            return tuple(kind(v) for v in text.replace("x", ",").split(",") if v.strip())
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes", "on")
        return type(default)(text)
    except ValueError:
        raise FormatError(f"config key {key!r}: cannot parse {text!r}") from None


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(repr(v) for v in value)
    if isinstance(value, str):
        return value
    return repr(value)


class RunConfig:
    def __init__(self, values: dict | None = None):
        self.values = dict(DEFAULTS)
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise FormatError(f"unknown config key {key!r}")
        if isinstance(value, str) and not isinstance(DEFAULTS[key], str):
            value = _parse_value(key, value)
        elif isinstance(DEFAULTS[key], tuple):
            value = tuple(value)
        self.values[key] = value

    def __getitem__(self, key: str):
        return self.values[key]

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        cfg = cls()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"config line {lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in DEFAULTS:
                raise FormatError(f"config line {lineno}: unknown key {key!r}")
            cfg.values[key] = _parse_value(key, val)
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def serialize(self) -> str:
        return "".join(f"{k} = {_format_value(self.values[k])}\n" for k in sorted(self.values))

    def save(self, path) -> None:
        Path(path).write_text(self.serialize(), encoding="utf-8")

    def train_config(self, seed: int) -> TrainConfig:
        try:
            return TrainConfig(
                lambda1=float(self["lambda1"]), lambda2=float(self["lambda2"]),
                lambda3=float(self["lambda3"]), learning_rate=float(self["learning_rate"]),
                beta1=float(self["beta1"]), beta2=float(self["beta2"]),
                epochs=int(self["epochs"]), batch_size=int(self["batch_size"]), seed=int(seed),
                spectrum_dims=tuple(self["spectrum_dims"]), epsilon_spec=float(self["epsilon_spec"]),
                identity_mode=str(self["identity_mode"]),
            )
        except ContractError as exc:
            raise FormatError(f"invalid training config: {exc}") from None

    @property
    def sigma_range(self) -> tuple[float, float]:
        return float(self["sigma_lo"]), float(self["sigma_hi"])
