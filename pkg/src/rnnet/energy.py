"""Energy and power estimates for the reservoir hardware and its digital back end.

Reservoir layers pay for every write pulse (``V_pulse**2 * G * t_pulse`` at the
pre-pulse conductance) and every non-destructive read (``V_read**2 * G *
t_read`` per node). Each reservoir layer has one ADC powered for the whole
clip. The DNN blocks are charged at a fixed efficiency in TOPS/W.

All conductances here are in Siemens; normalized network states must be
multiplied by ``g_max`` first (see :func:`rf_logs`).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Mapping, NamedTuple, Sequence

import numpy as np

from rnnet.errors import ConfigError, ConsistencyError
from rnnet.network.config import NetworkConfig, adc_input_nodes, count_macs

ADC_BITS = (4, 6, 8)
# relative slack for conductances that round slightly above g_max
_GMAX_SLACK = 1e-9


@dataclass(frozen=True)
class ElectricalParams:
    v_pulse: float = 1.5
    v_read: float = 0.5
    t_pulse: float = 1e-6
    t_read: float = 1e-6
    g_max: float = 1e-4
    adc_bits: int = 8
    adc_power_w: float = 171e-6
    accel_tops_per_w: float = 2.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{f.name} must be a positive number, got {v!r}")
        if self.adc_bits not in ADC_BITS:
            raise ConfigError(f"adc_bits must be one of {ADC_BITS}, got {self.adc_bits}")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ElectricalParams":
        return cls().with_overrides(d)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "ElectricalParams":
        """Copy with fields replaced; string values (from ``k=v`` flags) are parsed."""
        known = {f.name: f for f in fields(self)}
        unknown = set(overrides) - set(known)
        if unknown:
            raise ConfigError(f"unknown electrical parameters {sorted(unknown)}")
        changes = {}
        for k, v in overrides.items():
            try:
                changes[k] = int(v) if k == "adc_bits" else float(v)
            except (TypeError, ValueError):
                raise ConfigError(f"{k}: cannot parse {v!r} as a number") from None
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _conductances(values, params: ElectricalParams, what: str) -> np.ndarray:
    g = np.asarray(values, dtype=float).ravel()
    g = g[~np.isnan(g)]
    if g.size and g.min() < 0:
        raise ConfigError(f"negative {what} conductance {g.min()!r}")
    if g.size and g.max() > params.g_max * (1 + _GMAX_SLACK):
        raise ConfigError(f"{what} conductance {g.max()!r} exceeds g_max {params.g_max!r}")
    return g


def encoding_energy(conductances, params: ElectricalParams) -> float:
    """Write energy of a spike log, given each spike's pre-pulse conductance.

    NaN entries mark same-microsecond duplicates that the device absorbed
    into one pulse; they cost nothing.
    """
    g = _conductances(conductances, params, "pre-spike")
    return float(params.v_pulse ** 2 * params.t_pulse * g.sum())


def retrieval_energy(frames, params: ElectricalParams) -> float:
    """Read energy over every node of every retrieved frame.

    ``frames`` is an array (any shape, Siemens) or a sequence of
    :class:`~rnnet.reservoir.StateFrame`.
    """
    if isinstance(frames, Sequence) and frames and hasattr(frames[0], "values"):
        frames = np.stack([f.values for f in frames])
    g = _conductances(frames, params, "node")
    return float(params.v_read ** 2 * params.t_read * g.sum())


class AdcBudget(NamedTuple):
    ops: int
    rate: float  # samples per second
    energy: float  # joules


def adc_budget(node_count: int, retrievals: int, clip_seconds: float,
               params: ElectricalParams) -> AdcBudget:
    """Conversions needed for one layer, the minimum sample rate, and the ADC's clip energy."""
    if node_count < 0 or retrievals < 0:
        raise ConfigError("node_count and retrievals must be >= 0")
    if not clip_seconds > 0:
        raise ConfigError(f"clip_seconds must be positive, got {clip_seconds}")
    ops = int(node_count) * int(retrievals)
    return AdcBudget(ops, ops / clip_seconds, params.adc_power_w * clip_seconds)


def accel_energy(mac_report, params: ElectricalParams, convention: str = "ops") -> float:
    """Digital accelerator energy for a :func:`count_macs` report (or a raw op count).

    ``convention="ops"`` counts two operations per MAC, ``"mac"`` one.
    """
    if isinstance(mac_report, Mapping):
        if convention == "ops":
            ops = mac_report["total_ops"]
        elif convention == "mac":
            ops = mac_report["total_macs"]
        else:
            raise ConfigError(f"unknown op convention {convention!r}")
    else:
        ops = mac_report
    if ops < 0:
        raise ConfigError("op count must be >= 0")
    return float(ops) / (params.accel_tops_per_w * 1e12)


@dataclass
class EnergyReport:
    """Per-clip energy budget. ``total_energy`` is the sum of :meth:`components`."""

    clip_duration: float
    encoding_energy: dict[str, float]
    retrieval_energy: dict[str, float]
    spike_count: dict[str, int]
    retrievals: dict[str, int]
    adc_ops: dict[str, int]
    adc_rate: dict[str, float]
    adc_energy: dict[str, float]
    mac_ops: int = 0
    ops: int = 0
    accel_energy: float = 0.0
    accel_energy_mac: float = 0.0  # one-op-per-MAC convention, informational
    params: dict[str, Any] = field(default_factory=dict)
    total_energy: float = 0.0
    avg_power: float = 0.0

    def components(self) -> list[tuple[str, float]]:
        parts = []
        for name in self.encoding_energy:
            parts.append((f"encoding.{name}", self.encoding_energy[name]))
        for name in self.retrieval_energy:
            parts.append((f"retrieval.{name}", self.retrieval_energy[name]))
        for name in self.adc_energy:
            parts.append((f"adc.{name}", self.adc_energy[name]))
        parts.append(("accelerator", self.accel_energy))
        return parts

    def mean_spike_energy(self, layer: str) -> float:
        n = self.spike_count[layer]
        return self.encoding_energy[layer] / n if n else 0.0

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["mean_spike_energy"] = {k: self.mean_spike_energy(k) for k in self.spike_count}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        rows = [("component", "energy [J]")]
        rows += [(name, f"{value:.6e}") for name, value in self.components()]
        rows.append(("total", f"{self.total_energy:.6e}"))
        rows.append(("average power [W]", f"{self.avg_power:.6e}"))
        rows.append(("clip [s]", f"{self.clip_duration:g}"))
        for name in self.adc_ops:
            rows.append((f"adc.{name} ops", str(self.adc_ops[name])))
            rows.append((f"adc.{name} rate [SPS]", f"{self.adc_rate[name]:.1f}"))
        for name in self.spike_count:
            rows.append((f"encoding.{name} spikes", str(self.spike_count[name])))
            rows.append((f"encoding.{name} mean/spike [J]", f"{self.mean_spike_energy(name):.6e}"))
        rows.append(("accelerator MACs", str(self.mac_ops)))
        rows.append(("accelerator ops (2/MAC)", str(self.ops)))
        rows.append(("accelerator energy, 1 op/MAC [J]", f"{self.accel_energy_mac:.6e}"))
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{a:<{width}}  {b}" for a, b in rows) + "\n"


def full_report(encode_logs: Mapping[str, Any], frames: Mapping[str, Any], config: NetworkConfig | None,
                clip_seconds: float, params: ElectricalParams | None = None, *,
                adc_nodes: Mapping[str, int] | None = None) -> EnergyReport:
    """Assemble the clip budget from per-layer spike logs and retrieved frames.

    Both mappings are keyed by reservoir layer (``"R_in"``, ``"R_f"``).
    ``encode_logs[name]`` holds pre-pulse conductances, ``frames[name]`` the
    retrieved states as ``(retrievals, ...)`` in Siemens. ADC node counts
    default to the config's digitized counts, else the frame size. Without a
    config the accelerator is left out.
    """
    params = params or ElectricalParams()
    if set(encode_logs) != set(frames):
        raise ConsistencyError(f"spike logs for {sorted(encode_logs)} but frames for {sorted(frames)}")
    if not clip_seconds > 0:
        raise ConfigError(f"clip_seconds must be positive, got {clip_seconds}")
    adc_nodes = dict(adc_nodes or {})
    if config is not None:
        adc_nodes.setdefault("R_in", adc_input_nodes(config))
        adc_nodes.setdefault("R_f", config.rf_size)

    enc, ret, spikes, reads, ops, rate, adc = {}, {}, {}, {}, {}, {}, {}
    for name in sorted(frames):
        f = frames[name]
        if isinstance(f, Sequence) and f and hasattr(f[0], "values"):
            f = np.stack([s.values for s in f])
        f = np.asarray(f, dtype=float)
        log = np.asarray(encode_logs[name], dtype=float).ravel()
        enc[name] = encoding_energy(log, params)
        ret[name] = retrieval_energy(f, params)
        spikes[name] = int(np.count_nonzero(~np.isnan(log)))
        reads[name] = int(f.shape[0]) if f.ndim else 0
        nodes = adc_nodes.get(name, int(f[0].size) if reads[name] else 0)
        if reads[name] and config is None and nodes > f[0].size:
            raise ConsistencyError(f"{name}: {nodes} ADC nodes but frames hold {f[0].size}")
        budget = adc_budget(nodes, reads[name], clip_seconds, params)
        ops[name], rate[name], adc[name] = budget

    report = EnergyReport(clip_seconds, enc, ret, spikes, reads, ops, rate, adc, params=params.to_dict())
    if config is not None:
        macs = count_macs(config, passes=reads.get("R_in"), fc_passes=reads.get("R_f"))
        report.mac_ops = int(macs["total_macs"])
        report.ops = int(macs["total_ops"])
        report.accel_energy = accel_energy(macs, params, "ops")
        report.accel_energy_mac = accel_energy(macs, params, "mac")
    total = 0.0
    for _, value in report.components():
        total += value
    report.total_energy = total
    report.avg_power = total / clip_seconds
    return report


def analytic_report(config: NetworkConfig, params: ElectricalParams | None = None) -> EnergyReport:
    """Budget for a silent clip at the config's nominal schedule: ADC and accelerator only."""
    clip = config.clip_us / 1e6
    frames = {
        "R_in": np.zeros((config.num_passes, 0)),
        "R_f": np.zeros((config.num_fc_feedforwards, 0)),
    }
    return full_report({"R_in": [], "R_f": []}, frames, config, clip, params)


def rf_logs(spikes: np.ndarray, pre_spike: np.ndarray, reads: np.ndarray,
            g_max: float) -> tuple[np.ndarray, np.ndarray]:
    """Siemens-scale spike log and frames for one clip of the feature reservoir.

    Inputs are the normalized ``(K, N)`` spikes and pre-pulse states and the
    ``(J, N)`` reads from a forward trace.
    """
    s = np.asarray(spikes) > 0
    return np.asarray(pre_spike)[s] * g_max, np.asarray(reads) * g_max
