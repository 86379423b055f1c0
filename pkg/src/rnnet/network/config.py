"""Network configuration: layer stack, reservoir sections, shape chaining, parameter and MAC counts."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any

from rnnet.errors import ConfigError, ShapeError
from rnnet.reservoir import KINDS

LAYER_KINDS = ("conv", "maxpool", "batchnorm", "relu", "flatten", "spike_convert", "fc")
PRESETS = ("others", "lip", "desk")


@dataclass(frozen=True)
class LayerSpec:
    layer: str
    kernel: int = 1
    out_channels: int | None = None
    pad: int = 0
    stride: int = 1
    threshold: float | None = None
    output_dim: tuple[int, ...] | None = None  # expected spatial dims, checked by validate()

    def __post_init__(self):
        if self.layer not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.layer!r}")
        if self.kernel < 1 or self.stride < 1 or self.pad < 0:
            raise ConfigError(f"bad kernel/stride/pad in {self}")
        if self.layer in ("conv", "fc") and (self.out_channels is None or self.out_channels < 1):
            raise ConfigError(f"{self.layer} layer needs out_channels >= 1")


@dataclass(frozen=True)
class ReservoirSpec:
    """One reservoir layer: kind plus device parameters and retrieval interval (µs)."""

    kind: str = "RN"
    p_c: float = 0.5
    tau_us: float = 60_000.0
    g_max: float = 100e-6
    interval_us: int = 30_000

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"reservoir kind must be one of {KINDS}, got {self.kind!r}")
        if not 0 < self.p_c <= 1 or self.tau_us <= 0 or self.g_max <= 0 or self.interval_us <= 0:
            raise ConfigError(f"bad reservoir parameters {self}")

    @property
    def full_scale(self) -> float:
        return self.g_max if self.kind == "RN" else 1.0


@dataclass(frozen=True)
class NetworkConfig:
    name: str
    input_geometry: tuple[int, int]  # (width, height)
    layers: tuple[LayerSpec, ...]
    r_in: ReservoirSpec = ReservoirSpec()
    r_f: ReservoirSpec = ReservoirSpec(p_c=0.1, tau_us=2_000_000.0, interval_us=300_000)
    sc_threshold: float = 0.3
    num_classes: int = 2
    clip_us: int = 1_500_000

    # -- derived quantities -------------------------------------------------

    @property
    def num_passes(self) -> int:
        """R_in retrievals (conv forward passes) per clip."""
        return self.clip_us // self.r_in.interval_us

    @property
    def num_fc_feedforwards(self) -> int:
        """R_f retrievals (MLP feedforwards) per clip."""
        return (self.num_passes * self.r_in.interval_us) // self.r_f.interval_us

    @property
    def sc_index(self) -> int:
        return next(i for i, l in enumerate(self.layers) if l.layer == "spike_convert")

    @property
    def input_shape(self) -> tuple[int, int, int]:
        w, h = self.input_geometry
        return (2, h, w)

    def layer_names(self) -> list[str]:
        counts: dict[str, int] = {}
        names = []
        for spec in self.layers:
            counts[spec.layer] = counts.get(spec.layer, 0) + 1
            names.append(f"{spec.layer}{counts[spec.layer]}")
        return names

    def shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Output shape of every layer, raising :class:`ShapeError` if the stack does not chain."""
        return _chain(self)

    @property
    def rf_size(self) -> int:
        return self.shapes()[self.sc_index][1][0]

    def validate(self) -> "NetworkConfig":
        if self.num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        n_sc = sum(l.layer == "spike_convert" for l in self.layers)
        if n_sc != 1:
            raise ConfigError(f"exactly one spike_convert layer required, found {n_sc}")
        shapes = self.shapes()
        sc = self.sc_index
        if len(shapes[sc][1]) != 1:
            raise ShapeError("spike_convert must follow flatten")
        if any(l.layer in ("conv", "maxpool", "flatten") for l in self.layers[sc + 1:]):
            raise ShapeError("only fc/batchnorm/relu layers may follow spike_convert")
        if not any(l.layer == "fc" for l in self.layers[sc + 1:]):
            raise ShapeError("classifier needs at least one fc layer after spike_convert")
        if shapes[-1][1] != (self.num_classes,):
            raise ShapeError(f"final output {shapes[-1][1]} != num_classes {self.num_classes}")
        if self.num_passes < 1 or self.num_fc_feedforwards < 1:
            raise ConfigError("clip shorter than one retrieval interval")
        return self

    # -- (de)serialization ------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["input_geometry"] = list(self.input_geometry)
        d["layers"] = [
            {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(l).items() if v is not None}
            for l in self.layers
        ]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "NetworkConfig":
        try:
            layers = tuple(
                LayerSpec(**{k: (tuple(v) if k == "output_dim" else v) for k, v in l.items()})
                for l in d["layers"]
            )
            return cls(
                name=d.get("name", "custom"),
                input_geometry=tuple(d["input_geometry"]),
                layers=layers,
                r_in=ReservoirSpec(**d.get("r_in", {})),
                r_f=ReservoirSpec(**d.get("r_f", asdict(cls.r_f))),
                sc_threshold=float(d.get("sc_threshold", 0.3)),
                num_classes=int(d["num_classes"]),
                clip_us=int(d.get("clip_us", 1_500_000)),
            ).validate()
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad network config: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def load(cls, path: str | Path) -> "NetworkConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_reservoirs(self, r_in: str | None = None, r_f: str | None = None) -> "NetworkConfig":
        """Swap encoder kinds (ablation), keeping all other parameters."""
        cfg = self
        if r_in:
            cfg = replace(cfg, r_in=replace(cfg.r_in, kind=r_in))
        if r_f:
            cfg = replace(cfg, r_f=replace(cfg.r_f, kind=r_f))
        return cfg


def preset(name: str) -> NetworkConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("rnnet.network").joinpath(f"presets/{name}.json").read_text()
    return NetworkConfig.from_dict(json.loads(text))


def _out(n: int, k: int, p: int, s: int) -> int:
    return (n + 2 * p - k) // s + 1


def _chain(cfg: NetworkConfig) -> list[tuple[str, tuple[int, ...]]]:
    shape: tuple[int, ...] = cfg.input_shape
    out = []
    for name, spec in zip(cfg.layer_names(), cfg.layers):
        kind = spec.layer
        if kind in ("conv", "maxpool"):
            if len(shape) != 3:
                raise ShapeError(f"{name}: needs (C, H, W) input, got {shape}")
            c, h, w = shape
            ho, wo = _out(h, spec.kernel, spec.pad, spec.stride), _out(w, spec.kernel, spec.pad, spec.stride)
            if ho < 1 or wo < 1:
                raise ShapeError(f"{name}: kernel {spec.kernel} does not fit {h}x{w} input")
            if kind == "maxpool" and spec.out_channels not in (None, c):
                raise ShapeError(f"{name}: pooling keeps {c} channels, config says {spec.out_channels}")
            shape = (spec.out_channels if kind == "conv" else c, ho, wo)
        elif kind == "flatten":
            n = 1
            for s in shape:
                n *= s
            shape = (n,)
        elif kind == "fc":
            if len(shape) != 1:
                raise ShapeError(f"{name}: fc needs flat input, got {shape}")
            shape = (spec.out_channels,)
        elif kind == "batchnorm" and spec.out_channels not in (None, shape[0]):
            raise ShapeError(f"{name}: {spec.out_channels} channels vs input {shape[0]}")
        if spec.output_dim is not None and tuple(spec.output_dim) != tuple(shape[1:] if len(shape) == 3 else shape):
            raise ShapeError(f"{name}: computed {shape}, config expects output_dim {spec.output_dim}")
        out.append((name, shape))
    return out


# -- counting ----------------------------------------------------------------

PARAM_CONVENTION = (
    "conv weights + biases, batchnorm affine (gamma, beta), fc weights + biases; "
    "batchnorm running statistics excluded"
)


def count_params(cfg: NetworkConfig) -> int:
    return sum(r["params"] for r in param_report(cfg))


def param_report(cfg: NetworkConfig) -> list[dict[str, Any]]:
    rows = []
    prev = cfg.input_shape
    for (name, shape), spec in zip(cfg.shapes(), cfg.layers):
        if spec.layer == "conv":
            n = spec.out_channels * prev[0] * spec.kernel ** 2 + spec.out_channels
        elif spec.layer == "fc":
            n = spec.out_channels * prev[0] + spec.out_channels
        elif spec.layer == "batchnorm":
            n = 2 * shape[0]
        else:
            n = 0
        if n:
            rows.append({"layer": name, "params": n})
        prev = shape
    return rows


def count_macs(cfg: NetworkConfig, passes: int | None = None, fc_passes: int | None = None) -> dict[str, Any]:
    """Multiply-accumulate counts per forward pass and per clip.

    Conv layers run once per R_in retrieval (``passes``), fc layers once per
    R_f retrieval (``fc_passes``). Ops are reported both as MACs and as
    2 ops per MAC.
    """
    passes = cfg.num_passes if passes is None else passes
    fc_passes = cfg.num_fc_feedforwards if fc_passes is None else fc_passes
    layers = []
    conv = fc = 0
    prev = cfg.input_shape
    for (name, shape), spec in zip(cfg.shapes(), cfg.layers):
        if spec.layer == "conv":
            m = shape[0] * shape[1] * shape[2] * prev[0] * spec.kernel ** 2
            conv += m
            layers.append({"layer": name, "macs_per_pass": m})
        elif spec.layer == "fc":
            m = prev[0] * shape[0]
            fc += m
            layers.append({"layer": name, "macs_per_pass": m})
        prev = shape
    conv_total, fc_total = conv * passes, fc * fc_passes
    return {
        "layers": layers,
        "passes": passes,
        "fc_passes": fc_passes,
        "conv_macs_per_pass": conv,
        "fc_macs_per_pass": fc,
        "conv_macs_total": conv_total,
        "fc_macs_total": fc_total,
        "total_macs": conv_total + fc_total,
        "conv_ops_per_pass": 2 * conv,
        "fc_ops_per_pass": 2 * fc,
        "total_ops": 2 * (conv_total + fc_total),
    }


def adc_input_nodes(cfg: NetworkConfig) -> int:
    """Values digitized per R_in retrieval.

    Pooling layers ahead of the first conv are taken to act on the analog
    node outputs, so only their output is converted.
    """
    shape: tuple[int, ...] = cfg.input_shape
    for (_, s), spec in zip(cfg.shapes(), cfg.layers):
        if spec.layer != "maxpool":
            break
        shape = s
    n = 1
    for v in shape:
        n *= v
    return n
