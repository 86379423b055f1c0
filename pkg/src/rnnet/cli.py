"""``rnnet`` command line: synthesize, encode, train, evaluate, ablate, energy, gradcheck.

Exit codes: 0 success, 2 configuration error, 3 I/O or file-format error,
4 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from rnnet import energy as en
from rnnet import events as ev
from rnnet import gradcheck as gc
from rnnet import runconfig as rc
from rnnet.errors import (
    BoundsError,
    ConfigError,
    FormatError,
    NumericError,
    OrderingError,
)
from rnnet.network import checkpoint
from rnnet.network.config import PRESETS, NetworkConfig, ReservoirSpec, preset
from rnnet.network.model import forward_batch, stack_frames
from rnnet.reservoir import StateFrame
from rnnet.reservoir.io import load_frame, save_frame
from rnnet.tasks import make_layer
from rnnet.reservoir import encode as encode_stream
from rnnet.training import evaluate, history_csv, train

log = logging.getLogger("rnnet")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
ENCODING_MANIFEST = "manifest.json"
ABLATION_ROWS = (("TS", "TS"), ("TS", "RN"), ("RN", "TS"), ("RN", "RN"), ("RN", "TAP"))


# -- helpers ----------------------------------------------------------------------


def _threads(value: str | None) -> int | None:
    if value is None or value == "":
        return None
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"thread count must be an integer, got {value!r}") from None
    if n < 1:
        raise ConfigError(f"thread count must be >= 1, got {n}")
    return n


def _thread_limit(n: int | None):
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _geometry(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"geometry must look like 64x64, got {text!r}") from None
    return w, h


def _kv(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def _write_json(path: Path, data: Any) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _require(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _overrides(args, mapping: dict[str, tuple[str, str]]) -> dict[str, dict[str, Any]]:
    """Gather set flags into run-config sections; flags win over the file."""
    out: dict[str, Any] = {}
    for attr, (section, key) in mapping.items():
        value = getattr(args, attr, None)
        if value is None:
            continue
        if section == "seed":
            out["seed"] = value
        else:
            out.setdefault(section, {})[key] = value
    return out


_RUN_FLAGS = {
    "seed": ("seed", "seed"),
    "preset": ("network", "preset"),
    "r_in": ("network", "r_in"),
    "r_f": ("network", "r_f"),
    "epochs": ("training", "epochs"),
    "lr": ("training", "lr"),
    "batch": ("training", "batch"),
    "task": ("events", "task"),
    "data": ("events", "dataset"),
    "n_train": ("events", "n_train"),
    "n_test": ("events", "n_test"),
}


def _run_config(args) -> rc.RunConfig:
    if args.config is not None:
        _require(args.config, "config file")
    over = _overrides(args, _RUN_FLAGS)
    if "dataset" in over.get("events", {}):
        over["events"]["task"] = None
        over["events"]["dataset"] = str(_require(over["events"]["dataset"], "dataset directory").resolve())
    raw = rc.read_json(args.config) if args.config else {}
    if "events" in over and "task" in over["events"] and raw.get("events", {}).get("dataset"):
        raw["events"] = {k: v for k, v in raw["events"].items() if k != "dataset"}
    run = rc.resolve(raw, over, Path(args.config).parent if args.config else None)
    if run.events.task is None and run.events.dataset is None:
        raise ConfigError("no data: set events.task or events.dataset (or --task / --data)")
    return run


def _prepare_out(path: str | Path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- synth --------------------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.task == "bar":
        if args.n_train is not None or args.n_test is not None:
            raise ConfigError("--n-train/--n-test apply to dataset tasks, not a single bar")
        stream = ev.synthesize_moving_bar(
            args.geometry or (64, 64), args.direction, args.speed, args.duration or 1_500_000,
            args.rate, args.seed or 0, bar_width=args.bar_width, noise_rate=args.noise_rate,
        )
        out = Path(args.out)
        if out.parent and not out.parent.exists():
            out.parent.mkdir(parents=True)
        ev.save(stream, out)
        print(f"wrote {len(stream)} events to {out}")
        return EXIT_OK
    raw = rc.read_json(_require(args.config, "config file")) if args.config else {}
    over = _overrides(args, {"seed": ("seed", "seed"), "preset": ("network", "preset"),
                             "task": ("events", "task"), "n_train": ("events", "n_train"),
                             "n_test": ("events", "n_test")})
    if args.geometry:
        over.setdefault("events", {})["geometry"] = list(args.geometry)
    if args.duration:
        over.setdefault("events", {})["duration_us"] = args.duration
    run = rc.resolve(raw, over, Path(args.config).parent if args.config else None, check_geometry=False)
    if run.events.task is None:
        raise ConfigError("synth needs a task (--task or events.task)")
    train_clips, test_clips = rc.synth_clips(run.events, run.network)
    manifest = rc.write_dataset(args.out, train_clips, test_clips, args.format)
    print(f"wrote {len(manifest['clips'])} clips to {args.out}")
    return EXIT_OK


# -- encode -------------------------------------------------------------------------


def _encoder_spec(args) -> ReservoirSpec:
    base = ReservoirSpec()
    if args.config:
        run = rc.load(_require(args.config, "config file"))
        base = run.network.r_in
    changes = {k: v for k, v in (("kind", args.kind), ("p_c", args.p_c), ("tau_us", args.tau),
                                 ("g_max", args.g_max), ("interval_us", args.interval)) if v is not None}
    return ReservoirSpec(**{**base.__dict__, **changes})


def _encode_one(stream: ev.EventStream, spec: ReservoirSpec, out: Path, source: str, fmt: str) -> dict:
    layer = make_layer(spec, (2, stream.height, stream.width))
    enc = encode_stream(stream, layer, spec.interval_us)
    out.mkdir(parents=True, exist_ok=True)
    suffix = "csv" if fmt == "csv" else "rnsf"
    names = []
    for i, frame in enumerate(enc.state_frames(), 1):
        name = f"frame_{i:05d}.{suffix}"
        save_frame(frame, out / name)
        names.append(name)
    pre = enc.pre_spike if enc.pre_spike is not None else np.zeros(0)
    pre = pre[~np.isnan(pre)]  # coalesced same-instant repeats carry no pulse
    save_frame(StateFrame(0, pre.reshape(-1, 1, 1) if pre.size else np.zeros((0, 1, 1))), out / "pre_spike.rnsf")
    manifest = {
        "format": "rnnet-encoding",
        "version": 1,
        "source": source,
        "encoder": dict(spec.__dict__),
        "geometry": [stream.width, stream.height],
        "duration_us": stream.duration,
        "interval_us": spec.interval_us,
        "event_count": len(stream),
        "frame_count": len(names),
        "frame_times": [int(t) for t in enc.times],
        "frames": names,
        "full_scale": enc.full_scale,
        "empty": len(stream) == 0,
        "spike_count": enc.spike_count,
        "pre_spike_sum": enc.pre_spike_sum,
        "pre_spike_file": "pre_spike.rnsf",
    }
    _write_json(out / ENCODING_MANIFEST, manifest)
    return manifest


def cmd_encode(args) -> int:
    src = _require(args.input, "input")
    spec = _encoder_spec(args)
    if src.is_dir():
        train_clips, test_clips = rc.read_dataset(src)
        out = _prepare_out(args.out)
        entries = []
        for split, clips in (("train", train_clips), ("test", test_clips)):
            for i, (stream, label) in enumerate(clips):
                name = f"{split}_{i:05d}"
                m = _encode_one(stream, spec, out / name, f"{src}/{name}", args.frame_format)
                entries.append({"dir": name, "label": label, "split": split, "empty": m["empty"]})
        _write_json(out / ENCODING_MANIFEST, {"format": "rnnet-encoded-dataset", "version": 1,
                                              "encoder": dict(spec.__dict__), "clips": entries})
        print(f"encoded {len(entries)} clips into {out}")
        return EXIT_OK
    stream = ev.load(src)
    m = _encode_one(stream, spec, _prepare_out(args.out), str(args.input), args.frame_format)
    print(f"wrote {m['frame_count']} frames ({spec.kind}) to {args.out}")
    return EXIT_OK


def read_encoding(directory: str | Path) -> tuple[dict, list[StateFrame], np.ndarray]:
    """Manifest, frames and pre-spike log of one encoded clip."""
    d = Path(directory)
    m = rc.read_json(_require(d / ENCODING_MANIFEST, "encoding manifest"))
    if m.get("format") != "rnnet-encoding":
        raise FormatError(f"{d / ENCODING_MANIFEST}: not a single-clip encoding")
    frames = [load_frame(_require(d / name, "frame file")) for name in m["frames"]]
    pre = load_frame(_require(d / m["pre_spike_file"], "pre-spike log")).values.ravel()
    return m, frames, pre


# -- train / eval -------------------------------------------------------------------


def _train_run(run: rc.RunConfig, data, init=None):
    params, history = train(run.network, data, run.training, params=init)
    return params, history


def _metrics(history, run: rc.RunConfig, data) -> dict[str, Any]:
    last = history[-1]
    return {
        "epochs": len(history),
        "seed": run.training.seed,
        "final_train_loss": last["train_loss"],
        "final_train_acc": last["train_acc"],
        "final_test_acc": last["test_acc"],
        "best_test_acc": max((h["test_acc"] for h in history), default=float("nan")),
        "n_train": int(len(data.train_y)),
        "n_test": int(len(data.test_y)),
        "r_in": run.network.r_in.kind,
        "r_f": run.network.r_f.kind,
    }


def cmd_train(args) -> int:
    run = _run_config(args)
    init = checkpoint.load(_require(args.init, "checkpoint")) if args.init else None
    data = rc.encoded_dataset(run)
    params, history = _train_run(run, data, init)
    out = _prepare_out(args.out)
    checkpoint.save(params, out / "checkpoint.rnwt")
    (out / "history.csv").write_text(history_csv(history))
    _write_json(out / "metrics.json", _metrics(history, run, data))
    (out / "network.json").write_text(run.network.to_json() + "\n")
    _write_json(out / "run_config.json", run.to_dict())
    last = history[-1]
    print(f"epoch {last['epoch']}: loss {last['train_loss']:.4f} train {last['train_acc']:.3f} "
          f"test {last['test_acc']:.3f}")
    return EXIT_OK


def _load_run_dir(path: str | Path):
    d = _require(path, "run directory")
    cfg = NetworkConfig.load(_require(d / "network.json", "network config"))
    params = checkpoint.load(_require(d / "checkpoint.rnwt", "checkpoint"))
    return d, cfg, params


def cmd_eval(args) -> int:
    d, cfg, params = _load_run_dir(args.run)
    if args.config is None and (d / "run_config.json").exists() and args.data is None and args.task is None:
        args.config = str(d / "run_config.json")
    run = _run_config(args)
    data = rc.encoded_dataset(run, cfg)
    result = {}
    for split, x, y in (("train", data.train_x, data.train_y), ("test", data.test_x, data.test_y)):
        if args.split in (split, "all"):
            result[f"{split}_acc"] = evaluate(cfg, params, x, y, run.training.batch, data.frame_times)
            result[f"n_{split}"] = int(len(y))
    out = Path(args.out) if args.out else d
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "eval.json", result)
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


# -- ablate -------------------------------------------------------------------------


def cmd_ablate(args) -> int:
    run = _run_config(args)
    rows = []
    cache: dict[str, Any] = {}
    for r_in, r_f in ABLATION_ROWS:
        cfg = run.network.with_reservoirs(r_in, r_f).validate()
        if r_in not in cache:
            cache[r_in] = rc.encoded_dataset(rc.RunConfig(run.seed, run.events, cfg, run.training, run.energy), cfg)
        data = cache[r_in]
        log.info("ablation %s/%s", r_in, r_f)
        params, history = train(cfg, data, run.training)
        last = history[-1]
        rows.append({"r_in": r_in, "r_f": r_f, "train_acc": last["train_acc"], "test_acc": last["test_acc"],
                     "final_train_loss": last["train_loss"], "epochs": len(history)})
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})
    out = _prepare_out(args.out)
    (out / "ablation.csv").write_text(buf.getvalue())
    _write_json(out / "run_config.json", run.to_dict())
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


# -- energy -------------------------------------------------------------------------


def cmd_energy(args) -> int:
    params = en.ElectricalParams()
    cfg = None
    if args.config:
        run = rc.load(_require(args.config, "config file"))
        params, cfg = run.energy, run.network
    if args.run:
        _, cfg, model = _load_run_dir(args.run)
    if args.preset:
        cfg = preset(args.preset)
    params = params.with_overrides(dict(args.params or []))
    if args.encode is None:
        if cfg is None:
            raise ConfigError("energy needs --encode, --preset, --config or --run")
        report = en.analytic_report(cfg, params)
    else:
        m, frames, pre = read_encoding(args.encode)
        if m["encoder"]["kind"] != "RN":
            raise ConfigError(f"energy model applies to RN layers; encoding used {m['encoder']['kind']}")
        if cfg is not None and tuple(m["geometry"]) != tuple(cfg.input_geometry):
            raise ConfigError(f"encoding is {m['geometry'][0]}x{m['geometry'][1]}, network expects "
                              f"{cfg.input_geometry[0]}x{cfg.input_geometry[1]}")
        clip = m["duration_us"] / 1e6
        logs = {"R_in": pre}
        frames_by_layer: dict[str, Any] = {"R_in": np.stack([f.values for f in frames]) if frames
                                           else np.zeros((0, 0))}
        if cfg is not None:
            if args.run and cfg.r_f.kind == "RN":
                logs["R_f"], frames_by_layer["R_f"] = _rf_from_run(cfg, model, frames, m)
            else:
                n_rf = (len(frames) * cfg.r_in.interval_us) // cfg.r_f.interval_us
                logs["R_f"], frames_by_layer["R_f"] = np.zeros(0), np.zeros((n_rf, cfg.rf_size))
        report = en.full_report(logs, frames_by_layer, cfg, clip, params)
    if args.out:
        out = _prepare_out(args.out)
        (out / "energy.json").write_text(report.to_json() + "\n")
        (out / "energy.txt").write_text(report.to_table())
    sys.stdout.write(report.to_table())
    return EXIT_OK


def _rf_from_run(cfg: NetworkConfig, model, frames, manifest):
    if len(frames) != cfg.num_passes:
        raise ConfigError(f"encoding has {len(frames)} frames, network expects {cfg.num_passes}")
    batch, times = stack_frames(cfg, frames)
    _, trace = forward_batch(cfg, model, batch, "eval", frame_times=times)
    return en.rf_logs(trace.spikes[0], trace.rf.pre_spike[0], trace.rf.reads[0], cfg.r_f.g_max)


# -- gradcheck ----------------------------------------------------------------------


def cmd_gradcheck(args) -> int:
    ops = args.ops.split(",") if args.ops else None
    unknown = set(ops or ()) - set(gc.CHECKS)
    if unknown:
        raise ConfigError(f"unknown ops {sorted(unknown)}; choose from {sorted(gc.CHECKS)}")
    worst: dict[tuple[str, str], float] = {}
    for r in gc.run(args.instances, args.seed or 0, ops, args.eps):
        key = (r.op, r.tensor)
        worst[key] = max(worst.get(key, 0.0), r.rel_error)
    sur = gc.surrogate_error(np.random.default_rng(args.seed or 0))
    failed = [k for k, v in worst.items() if v > gc.TOLERANCE]
    for (op, tensor), err in worst.items():
        print(f"{'ok  ' if err <= gc.TOLERANCE else 'FAIL'} {op:<10} {tensor:<18} max rel err {err:.3e}")
    print(f"{'ok  ' if sur <= 1e-6 else 'FAIL'} {'surrogate':<10} {'formula':<18} max abs err {sur:.3e}")
    if args.out:
        _write_json(Path(args.out), {"tolerance": gc.TOLERANCE, "eps": args.eps, "instances": args.instances,
                                     "surrogate_abs_error": sur,
                                     "checks": [{"op": o, "tensor": t, "max_rel_error": e}
                                                for (o, t), e in worst.items()]})
    if failed or sur > 1e-6:
        raise NumericError(f"gradient check failed for {failed or ['surrogate']}")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", default=argparse.SUPPRESS,
                        help="thread-pool size for numeric libraries (1 = bit-reproducible); "
                             "defaults to $RNNET_THREADS")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="rnnet", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    def run_flags(sp, data=True):
        sp.add_argument("--config", help="JSON run config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--preset", choices=PRESETS)
        sp.add_argument("--r-in", choices=("RN", "TS", "TAP"))
        sp.add_argument("--r-f", choices=("RN", "TS", "TAP"))
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--lr", type=float)
        sp.add_argument("--batch", type=int)
        if data:
            sp.add_argument("--task", choices=rc.TASKS)
            sp.add_argument("--data", help="dataset directory written by `rnnet synth`")
            sp.add_argument("--n-train", type=int)
            sp.add_argument("--n-test", type=int)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic event stream or dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.add_argument("--task", choices=("bar",) + rc.TASKS, default="bar")
    s.add_argument("--preset", choices=PRESETS)
    s.add_argument("--geometry", type=_geometry)
    s.add_argument("--duration", type=int, help="µs")
    s.add_argument("--direction", choices=("left", "right", "up", "down"), default="right")
    s.add_argument("--speed", type=float, default=60.0, help="pixels per second")
    s.add_argument("--rate", type=int, default=1, help="events per pixel crossing")
    s.add_argument("--bar-width", type=int, default=4)
    s.add_argument("--noise-rate", type=float, default=0.0, help="background events per pixel per second")
    s.add_argument("--seed", type=int)
    s.add_argument("--n-train", type=int)
    s.add_argument("--n-test", type=int)
    s.add_argument("--format", choices=("rnev", "csv"), default="rnev")
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("encode", parents=[common], help="encode events into reservoir state frames")
    e.add_argument("--input", required=True, help="event file or dataset directory")
    e.add_argument("--out", required=True)
    e.add_argument("--config", help="take R_in settings from a run config")
    e.add_argument("--kind", choices=("RN", "TS", "TAP"))
    e.add_argument("--interval", type=int, help="retrieval interval, µs")
    e.add_argument("--p-c", type=float)
    e.add_argument("--tau", type=float, help="µs")
    e.add_argument("--g-max", type=float, help="Siemens")
    e.add_argument("--frame-format", choices=("rnsf", "csv"), default="rnsf")
    e.set_defaults(func=cmd_encode)

    t = sub.add_parser("train", parents=[common], help="train and write checkpoint, history, metrics")
    run_flags(t)
    t.add_argument("--out", required=True)
    t.add_argument("--init", help="start from this checkpoint")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("eval", parents=[common], help="evaluate a trained run")
    run_flags(v)
    v.add_argument("--run", required=True, help="directory written by `rnnet train`")
    v.add_argument("--split", choices=("train", "test", "all"), default="test")
    v.add_argument("--out")
    v.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", parents=[common], help="train the five R_in/R_f encoder combinations")
    run_flags(a)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_ablate)

    g = sub.add_parser("energy", parents=[common], help="energy and power report")
    g.add_argument("--preset", choices=PRESETS)
    g.add_argument("--config")
    g.add_argument("--encode", help="single-clip encoding directory")
    g.add_argument("--run", help="trained run directory (adds the feature reservoir)")
    g.add_argument("--params", type=_kv, action="append", metavar="KEY=VALUE",
                   help="override an electrical parameter; repeatable")
    g.add_argument("--out")
    g.set_defaults(func=cmd_energy)

    c = sub.add_parser("gradcheck", parents=[common], help="central-difference gradient checks")
    c.add_argument("--instances", type=int, default=10)
    c.add_argument("--seed", type=int)
    c.add_argument("--eps", type=float, default=gc.EPS)
    c.add_argument("--ops", help=f"comma-separated subset of {','.join(gc.CHECKS)}")
    c.add_argument("--out", help="write results as JSON")
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = _threads(getattr(args, "threads", None) or os.environ.get("RNNET_THREADS"))
        with _thread_limit(threads):
            return args.func(args)
    except (ConfigError, argparse.ArgumentTypeError) as exc:
        code, msg = EXIT_CONFIG, str(exc)
    except (FormatError, BoundsError, OrderingError, OSError) as exc:
        code, msg = EXIT_IO, str(exc)
    except (NumericError, FloatingPointError) as exc:
        code, msg = EXIT_NUMERIC, str(exc)
    print(f"rnnet: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
