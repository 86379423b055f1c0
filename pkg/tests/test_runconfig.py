import json

import pytest

from rnnet import runconfig as rc
from rnnet.errors import ConfigError, FormatError
from rnnet.network import preset


def test_defaults():
    run = rc.resolve({"events": {"task": "bars"}})
    assert run.network == preset("desk")
    assert run.training.seed == 0 and run.events.n_train == 200


def test_reservoir_overrides_on_preset_and_layer_stack():
    run = rc.resolve({"network": {"preset": "others", "r_f": {"kind": "TS", "tau_us": 1e5}}})
    assert run.network.r_f.kind == "TS" and run.network.r_f.tau_us == 1e5
    full = preset("desk").to_dict()
    run = rc.resolve({"network": full}, {"network": {"r_f": "TAP", "r_in": "TS"}})
    assert (run.network.r_in.kind, run.network.r_f.kind) == ("TS", "TAP")
    assert run.network.r_f.interval_us == preset("desk").r_f.interval_us


def test_preset_flag_replaces_file_network():
    run = rc.resolve({"network": preset("desk").to_dict()}, {"network": {"preset": "lip"}})
    assert run.network.name == preset("lip").name


def test_network_path(tmp_path):
    (tmp_path / "net.json").write_text(preset("desk").to_json())
    run = rc.resolve({"network": {"path": "net.json", "sc_threshold": 0.4}}, base_dir=tmp_path)
    assert run.network.sc_threshold == 0.4


def test_all_problems_reported_together():
    with pytest.raises(ConfigError) as exc:
        rc.resolve({"bogus": 1, "events": {"task": "x"}, "network": {"r_in": "XX"},
                    "training": {"lr": -1}, "energy": {"v_pulse": 0}})
    msg = str(exc.value)
    for part in ("bogus", "events", "network", "training", "energy"):
        assert part in msg


def test_geometry_mismatch_and_augment():
    with pytest.raises(ConfigError, match="expects 64x64"):
        rc.resolve({"events": {"task": "bars", "geometry": [32, 32]}})
    run = rc.resolve({"events": {"task": "bars", "geometry": [80, 80],
                                 "augment": {"center_crop": [64, 64], "noise_sigma": 0.05}}})
    assert run.training.noise_sigma == 0.05
    assert rc.resolve({"events": {"task": "bars", "geometry": [32, 32]}}, check_geometry=False)


def test_task_specific_keys():
    assert rc.resolve({"events": {"task": "long_memory", "burst": 3}}, check_geometry=False)
    with pytest.raises(ConfigError):
        rc.resolve({"events": {"task": "bars", "burst": 3}})
    with pytest.raises(ConfigError):
        rc.resolve({"events": {"task": "bars", "dataset": "d"}})


def test_round_trip_and_dataset(tmp_path):
    run = rc.resolve({"seed": 4, "events": {"task": "bars", "n_train": 3, "n_test": 2, "geometry": [8, 8],
                                            "duration_us": 100_000}}, check_geometry=False)
    assert rc.resolve(json.loads(json.dumps(run.to_dict())), check_geometry=False) == run
    train, test = rc.synth_clips(run.events, run.network)
    rc.write_dataset(tmp_path / "d", train, test)
    back_train, back_test = rc.read_dataset(tmp_path / "d")
    assert [l for _, l in back_train] == [l for _, l in train] and len(back_test) == 2


def test_read_json_errors(tmp_path):
    (tmp_path / "a.json").write_text("{nope")
    (tmp_path / "b.json").write_text("[1]")
    for name in ("a.json", "b.json"):
        with pytest.raises(FormatError):
            rc.read_json(tmp_path / name)
