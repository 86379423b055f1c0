"""JSON run configuration shared by the command-line tools.

A run config has four sections plus a seed::

    {
      "seed": 0,
      "events":   {"task": "bars", "n_train": 200, "n_test": 50}      # or {"dataset": "dir"}
      "network":  {"preset": "desk", "r_in": "RN", "r_f": {"kind": "TS"}},
      "training": {"epochs": 20, "lr": 0.003, "batch": 16},
      "energy":   {"v_pulse": 1.5}
    }

Every section is optional. :func:`resolve` collects all problems before
raising, so one invocation reports every bad field at once.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np

from rnnet import events as ev
from rnnet.energy import ElectricalParams
from rnnet.errors import ConfigError, FormatError, RNNetError
from rnnet.network.config import NetworkConfig, ReservoirSpec, preset
from rnnet.tasks import bar_clips, encode_clips, long_memory_clips
from rnnet.training import EncodedDataset, Hyperparams

SECTIONS = ("seed", "events", "network", "training", "energy")
TASKS = ("bars", "long_memory")
DATASET_MANIFEST = "dataset.json"
_TASK_KEYS = {
    "bars": {"directions"},
    "long_memory": {"window", "patch", "burst", "noise_rate"},
}
_EVENT_KEYS = {"task", "dataset", "n_train", "n_test", "seed", "geometry", "duration_us", "augment"}


@dataclass(frozen=True)
class EventsSpec:
    task: str | None = None
    dataset: str | None = None
    n_train: int = 200
    n_test: int = 50
    seed: int = 0
    geometry: tuple[int, int] | None = None  # defaults to the network input
    duration_us: int | None = None  # defaults to the network clip length
    task_args: tuple[tuple[str, Any], ...] = ()
    augment: ev.AugmentSpec | None = None


@dataclass(frozen=True)
class RunConfig:
    seed: int
    events: EventsSpec
    network: NetworkConfig
    training: Hyperparams
    energy: ElectricalParams

    def to_dict(self) -> dict[str, Any]:
        e = self.events
        events: dict[str, Any] = {"n_train": e.n_train, "n_test": e.n_test, "seed": e.seed}
        if e.task:
            events["task"] = e.task
        if e.dataset:
            events["dataset"] = e.dataset
        if e.geometry:
            events["geometry"] = list(e.geometry)
        if e.duration_us:
            events["duration_us"] = e.duration_us
        events.update(dict(e.task_args))
        if e.augment:
            events["augment"] = {k: (list(v) if isinstance(v, tuple) else v)
                                 for k, v in asdict(e.augment).items() if v is not None}
        return {
            "seed": self.seed,
            "events": events,
            "network": self.network.to_dict(),
            "training": asdict(self.training),
            "energy": self.energy.to_dict(),
        }


def read_json(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise FormatError(f"{path}: top level must be an object")
    return data


def _reservoir(base: ReservoirSpec, value) -> ReservoirSpec:
    if isinstance(value, str):
        return replace(base, kind=value)
    if isinstance(value, dict):
        return replace(base, **value)
    raise ConfigError(f"reservoir override must be a kind or an object, got {value!r}")


def _network(d: dict[str, Any], base_dir: Path | None, over: dict[str, Any] | None = None) -> NetworkConfig:
    """Build the network from a path, a full layer stack, or a preset; ``over`` (flags) applies last."""
    d, over = dict(d), dict(over or {})
    if "preset" in over:
        d = {"preset": over.pop("preset")}  # a preset flag replaces whatever the file described
    if "path" in d:
        p = Path(d.pop("path"))
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        cfg = NetworkConfig.from_dict(read_json(p))
    elif "layers" in d:
        cfg = NetworkConfig.from_dict(d)
        d = {}
    else:
        cfg = preset(d.pop("preset", "desk"))
    changes: dict[str, Any] = {}
    for source in (d, over):
        for key in ("r_in", "r_f"):
            if key in source:
                changes[key] = _reservoir(changes.get(key, getattr(cfg, key)), source.pop(key))
        for key, cast in (("sc_threshold", float), ("num_classes", int), ("clip_us", int), ("name", str)):
            if key in source:
                changes[key] = cast(source.pop(key))
        if source:
            raise ConfigError(f"unknown network fields {sorted(source)}")
    return replace(cfg, **changes).validate()


def _events(d: dict[str, Any]) -> EventsSpec:
    if not isinstance(d, dict):
        raise ConfigError("events section must be an object")
    task = d.get("task")
    dataset = d.get("dataset")
    if task is not None and task not in TASKS:
        raise ConfigError(f"events.task must be one of {TASKS}, got {task!r}")
    if task and dataset:
        raise ConfigError("events: give either task or dataset, not both")
    extra = set(d) - _EVENT_KEYS - _TASK_KEYS.get(task or "", set())
    if extra:
        raise ConfigError(f"unknown events fields {sorted(extra)}")
    n_train, n_test = int(d.get("n_train", 200)), int(d.get("n_test", 50))
    if n_train < 1 or n_test < 0:
        raise ConfigError("events.n_train must be >= 1 and n_test >= 0")
    geometry = tuple(int(v) for v in d["geometry"]) if "geometry" in d else None
    if geometry is not None and (len(geometry) != 2 or min(geometry) < 1):
        raise ConfigError(f"events.geometry must be [width, height], got {d['geometry']}")
    duration = int(d["duration_us"]) if "duration_us" in d else None
    if duration is not None and duration < 1:
        raise ConfigError("events.duration_us must be positive")
    aug = None
    if "augment" in d:
        a = dict(d["augment"])
        for key in ("center_crop", "random_crop"):
            if a.get(key) is not None:
                a[key] = tuple(int(v) for v in a[key])
        try:
            aug = ev.AugmentSpec(**a)
        except TypeError as exc:
            raise ConfigError(f"events.augment: {exc}") from None
    task_args = tuple(sorted((k, d[k]) for k in _TASK_KEYS.get(task or "", set()) if k in d))
    return EventsSpec(task, dataset, n_train, n_test, int(d.get("seed", 0)), geometry, duration, task_args, aug)


def resolve(raw: dict[str, Any], overrides: dict[str, dict[str, Any]] | None = None,
            base_dir: Path | None = None, check_geometry: bool = True) -> RunConfig:
    """Validate a raw run config with per-section flag overrides applied on top.

    All problems are gathered and raised together as one :class:`ConfigError`.
    ``check_geometry=False`` skips the clip-vs-network size check (synthesis only).
    """
    raw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in raw.items()}
    overrides = dict(overrides or {})
    net_over = overrides.pop("network", {})
    for section, values in overrides.items():
        if section == "seed":
            raw["seed"] = values
        else:
            sec = raw.setdefault(section, {})
            if not isinstance(sec, dict):
                sec = raw[section] = {}
            sec.update(values)
    problems: list[str] = []
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        problems.append(f"unknown sections {sorted(unknown)}")

    def attempt(section, fn, default):
        try:
            return fn()
        except (RNNetError, TypeError, ValueError) as exc:
            problems.append(f"{section}: {exc}")
            return default

    seed = attempt("seed", lambda: int(raw.get("seed", 0)), 0)
    network = attempt("network", lambda: _network(raw.get("network", {}), base_dir, net_over), None)
    events = attempt("events", lambda: _events(raw.get("events", {})), None)
    tr = dict(raw.get("training", {}))
    tr.setdefault("seed", seed)
    if events is not None and events.augment and "noise_sigma" not in tr:
        tr["noise_sigma"] = events.augment.noise_sigma
    training = attempt("training", lambda: Hyperparams.from_dict(tr), None)
    energy = attempt("energy", lambda: ElectricalParams.from_dict(raw.get("energy", {})), None)

    if network is not None and events is not None:
        geom = _final_geometry(events, network)
        if check_geometry and geom is not None and tuple(geom) != tuple(network.input_geometry):
            problems.append(f"events: clips are {geom[0]}x{geom[1]} after augmentation but the network "
                            f"expects {network.input_geometry[0]}x{network.input_geometry[1]}")
        if events.dataset and base_dir is not None and not Path(events.dataset).is_absolute():
            events = replace(events, dataset=str((base_dir / events.dataset).resolve()))
    if problems:
        raise ConfigError("invalid run config:\n  " + "\n  ".join(problems))
    return RunConfig(seed, events, network, training, energy)


def _final_geometry(events: EventsSpec, network: NetworkConfig):
    if events.dataset:
        return None  # checked when the files are read
    geom = events.geometry or network.input_geometry
    if events.augment:
        geom = events.augment.random_crop or events.augment.center_crop or geom
    return geom


def load(path: str | Path | None, overrides=None) -> RunConfig:
    if path is None:
        return resolve({}, overrides)
    path = Path(path)
    return resolve(read_json(path), overrides, path.parent)


# -- data ---------------------------------------------------------------------------


def synth_clips(spec: EventsSpec, network: NetworkConfig):
    """Deterministic train/test clips for a synthetic task."""
    geometry = spec.geometry or network.input_geometry
    duration = spec.duration_us or network.clip_us
    n = spec.n_train + spec.n_test
    args = dict(spec.task_args)
    if spec.task == "long_memory":
        clips = long_memory_clips(n, geometry, duration, spec.seed, **args)
    else:
        if "directions" in args:
            args["directions"] = tuple(args["directions"])
        clips = bar_clips(n, geometry, duration, spec.seed, **args)
    return clips[:spec.n_train], clips[spec.n_train:]


def write_dataset(directory: str | Path, train, test, fmt: str = "rnev") -> dict[str, Any]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for split, clips in (("train", train), ("test", test)):
        for i, (stream, label) in enumerate(clips):
            name = f"{split}_{i:05d}.{'csv' if fmt == 'csv' else 'rnev'}"
            ev.save(stream, directory / name)
            entries.append({"file": name, "label": int(label), "split": split})
    manifest = {"format": "rnnet-dataset", "version": 1, "clips": entries}
    (directory / DATASET_MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def read_dataset(directory: str | Path):
    directory = Path(directory)
    manifest = read_json(directory / DATASET_MANIFEST)
    train, test = [], []
    try:
        entries = manifest["clips"]
        for e in entries:
            clip = (ev.load(directory / e["file"]), int(e["label"]))
            (train if e["split"] == "train" else test).append(clip)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{directory / DATASET_MANIFEST}: bad entry ({exc})") from None
    return train, test


def load_clips(run: RunConfig):
    spec = run.events
    if spec.dataset:
        return read_dataset(spec.dataset)
    if spec.task is None:
        raise ConfigError("events section needs a task or a dataset")
    return synth_clips(spec, run.network)


def _prepare(clips, spec: EventsSpec, network: NetworkConfig, mode: str):
    out = []
    for i, (stream, label) in enumerate(clips):
        if spec.augment:
            rng = np.random.default_rng([spec.augment.seed, i, mode == "train"])
            stream = ev.augment(stream, spec.augment, mode, rng)
        if (stream.width, stream.height) != tuple(network.input_geometry):
            raise ConfigError(f"clip {i} is {stream.width}x{stream.height}, network expects "
                              f"{network.input_geometry[0]}x{network.input_geometry[1]}")
        out.append((ev.regularize_length(stream, network.clip_us), label))
    return out


def encoded_dataset(run: RunConfig, network: NetworkConfig | None = None) -> EncodedDataset:
    """Augment, length-regularize and encode the configured clips with the input reservoir."""
    network = network or run.network
    train, test = load_clips(run)
    train = _prepare(train, run.events, network, "train")
    test = _prepare(test, run.events, network, "test")
    tx, ty, times = encode_clips(train, network.r_in)
    sx, sy, _ = encode_clips(test, network.r_in)
    if len(test) == 0:
        sx = np.zeros((0,) + tx.shape[1:])
    for labels in (ty, sy):
        if len(labels) and (labels.min() < 0 or labels.max() >= network.num_classes):
            raise ConfigError(f"labels outside [0, {network.num_classes})")
    return EncodedDataset(tx, ty, sx, sy, times)
