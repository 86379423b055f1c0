import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rnnet import events as ev
from rnnet.errors import BoundsError, ConfigError, FormatError
from rnnet.events import AugmentSpec, EventStream

from conftest import random_stream, streams


# -- parsing -------------------------------------------------------------------


def test_csv_single_event():
    s = ev.parse_csv(b"# 2,2,100\n10,0,1,1\n")
    assert s.geometry == (2, 2) and s.duration == 100
    assert list(s) == [ev.Event(10, 0, 1, 1)]


def test_csv_empty_body():
    s = ev.parse_csv("# 128,128,0\n")
    assert len(s) == 0 and s.duration == 0 and s.geometry == (128, 128)


def test_tie_break_orders_by_y_x_p():
    s = ev.parse_csv("# 4,4,100\n5,0,1,0\n5,0,0,0\n5,1,0,0\n5,0,0,1\n")
    assert [(e.y, e.x, e.p) for e in s] == [(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0)]


def test_csv_sorts_by_time():
    s = ev.parse_csv("# 4,4,100\n50,0,0,0\n7,1,1,1\n")
    assert s.t.tolist() == [7, 50]


@pytest.mark.parametrize("body,line", [("1,2,3\n", 2), ("1,0,0,0\nx,0,0,0\n", 3), ("1,0,0,0,0\n", 2)])
def test_csv_malformed_reports_line(body, line):
    with pytest.raises(FormatError) as exc:
        ev.parse_csv("# 4,4,100\n" + body)
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


@pytest.mark.parametrize("row", ["1,4,0,0", "1,0,4,0", "1,0,0,2", "101,0,0,0", "-1,0,0,0"])
def test_csv_out_of_bounds(row):
    with pytest.raises(BoundsError):
        ev.parse_csv(f"# 4,4,100\n{row}\n")


def test_csv_missing_header():
    with pytest.raises(FormatError):
        ev.parse_csv("1,0,0,0\n")


def test_binary_empty_and_header_layout():
    data = ev.write_binary(EventStream.empty(3, 5, 77))
    assert len(data) == 32
    assert data[:4] == b"RNEV"
    assert int.from_bytes(data[4:8], "little") == 1
    s = ev.parse_binary(data)
    assert len(s) == 0 and s.geometry == (3, 5) and s.duration == 77


def test_binary_record_layout():
    s = EventStream.from_arrays(300, 2, 2**40, [2**40], [299], [1], [1])
    data = ev.write_binary(s)
    assert len(data) == 32 + 14
    rec = data[32:]
    assert int.from_bytes(rec[0:8], "little") == 2**40
    assert int.from_bytes(rec[8:10], "little") == 299
    assert int.from_bytes(rec[10:12], "little") == 1
    assert rec[12] == 1 and rec[13] == 0


def test_binary_errors():
    good = ev.write_binary(random_stream(np.random.default_rng(0), n=3))
    with pytest.raises(FormatError):
        ev.parse_binary(b"XXXX" + good[4:])
    with pytest.raises(FormatError):
        ev.parse_binary(good[:-1])
    with pytest.raises(FormatError):
        ev.parse_binary(good[:10])


def test_binary_round_trip_many(rng):
    for _ in range(1000):
        s = random_stream(rng, int(rng.integers(1, 20)), int(rng.integers(1, 20)),
                          int(rng.integers(0, 10**7)), int(rng.integers(0, 30)))
        assert ev.parse_binary(ev.write_binary(s)) == s


def test_csv_and_binary_twin(tmp_path, rng):
    s = random_stream(rng)
    ev.save(s, tmp_path / "a.csv")
    ev.save(s, tmp_path / "a.rnev")
    assert (tmp_path / "a.csv").read_bytes().startswith(b"# 8,6,10000\n")
    assert ev.load(tmp_path / "a.csv") == ev.load(tmp_path / "a.rnev") == s


@given(streams())
def test_round_trip_property(s):
    assert ev.parse_csv(ev.write_csv(s)) == s
    assert ev.parse_binary(ev.write_binary(s)) == s


@given(streams())
def test_stream_invariants(s):
    key = np.stack([s.t, s.y, s.x, s.p]).T.tolist()
    assert key == sorted(key)
    assert len(s) == 0 or s.t.max() <= s.duration


def test_stream_is_read_only(rng):
    s = random_stream(rng)
    with pytest.raises(ValueError):
        s.t[0] = 5


def test_node_index_layout():
    s = EventStream.from_arrays(5, 3, 10, [0, 1], [4, 1], [2, 0], [1, 0])
    idx = dict(zip(zip(s.x.tolist(), s.y.tolist(), s.p.tolist()), s.node_index().tolist()))
    assert idx[(4, 2, 1)] == (1 * 3 + 2) * 5 + 4
    assert idx[(1, 0, 0)] == 1


# -- synthesis -------------------------------------------------------------------


def test_bar_is_deterministic():
    a = ev.synthesize_moving_bar((32, 16), "right", 50.0, 1_000_000, 1, seed=3, noise_rate=1.0)
    b = ev.synthesize_moving_bar((32, 16), "right", 50.0, 1_000_000, 1, seed=3, noise_rate=1.0)
    assert a == b and len(a) > 0


def test_bar_directions_differ():
    a = ev.synthesize_moving_bar((32, 32), "left", 50.0, 1_000_000, seed=1)
    b = ev.synthesize_moving_bar((32, 32), "right", 50.0, 1_000_000, seed=1)
    assert a != b


def test_bar_direction_shows_in_motion():
    for direction, sign in (("right", 1), ("left", -1)):
        s = ev.synthesize_moving_bar((64, 8), direction, 40.0, 500_000, seed=2)
        on = s.p == 1
        # within one sweep the ON edge moves monotonically in the bar direction
        t, x = s.t[on], s.x[on]
        first = t < t.min() + 200_000
        slope = np.polyfit(t[first], x[first], 1)[0]
        assert np.sign(slope) == sign


def test_bar_vertical_uses_y():
    s = ev.synthesize_moving_bar((8, 40), "down", 50.0, 400_000, seed=0)
    on = s.p == 1
    t, y = s.t[on], s.y[on]
    first = t < t.min() + 150_000
    assert np.polyfit(t[first], y[first], 1)[0] > 0


def test_bar_count_grows_with_rate():
    counts = [len(ev.synthesize_moving_bar((16, 16), "up", 60.0, 1_000_000, r, seed=4)) for r in (1, 2, 4)]
    assert counts[0] < counts[1] < counts[2]
    assert counts[1] == 2 * counts[0] and counts[2] == 4 * counts[0]


def test_bar_polarities_at_edges():
    s = ev.synthesize_moving_bar((64, 4), "right", 30.0, 2_000_000, bar_width=5, seed=0)
    assert set(s.p.tolist()) == {0, 1}


@pytest.mark.parametrize("kwargs", [dict(speed=0), dict(speed=-1), dict(duration=0), dict(bar_width=99),
                                    dict(event_rate=0), dict(direction="diagonal")])
def test_bar_rejects_bad_parameters(kwargs):
    args = dict(geometry=(16, 16), direction="left", speed=10.0, duration=1000)
    args.update(kwargs)
    with pytest.raises(ConfigError):
        ev.synthesize_moving_bar(**args)


# -- regularization and augmentation ----------------------------------------------


def test_regularize_pads_short_clip(rng):
    s = random_stream(rng, duration=900_000)
    r = ev.regularize_length(s, 1_500_000)
    assert r.duration == 1_500_000 and np.array_equal(r.t, s.t)


def test_regularize_clips_long_clip(rng):
    s = random_stream(rng, duration=2_000_000, n=500)
    r = ev.regularize_length(s, 1_500_000)
    assert r.duration == 1_500_000
    assert np.array_equal(r.t, s.t[s.t < 1_500_000])


def test_regularize_identity_and_errors(rng):
    s = random_stream(rng)
    s = ev.regularize_length(s, s.duration + 1)
    assert ev.regularize_length(s, s.duration) == s
    with pytest.raises(ConfigError):
        ev.regularize_length(s, 0)


@given(streams(), st.integers(1, 6000))
def test_regularize_idempotent(s, target):
    once = ev.regularize_length(s, target)
    assert ev.regularize_length(once, target) == once


def test_train_augment_geometry(rng):
    s = random_stream(rng, 128, 128, n=2000)
    spec = AugmentSpec(center_crop=(96, 96), random_crop=(76, 76), hflip_prob=0.5, seed=1)
    out = ev.augment(s, spec, "train")
    assert out.geometry == (76, 76)
    assert ev.augment(s, spec, "test").geometry == (76, 76)


def test_test_augment_is_single_center_crop(rng):
    s = random_stream(rng, 128, 128, n=2000)
    spec = AugmentSpec(center_crop=(96, 96), random_crop=(76, 76))
    assert ev.augment(s, spec, "test") == ev.center_crop(s, (76, 76))


def test_hflip_twice_is_identity(rng):
    s = random_stream(rng)
    spec = AugmentSpec(hflip_prob=1.0)
    once = ev.augment(s, spec)
    assert once != s
    assert ev.augment(once, spec) == s


def test_augment_noop(rng):
    s = random_stream(rng)
    assert ev.augment(s, AugmentSpec()) == s


def test_augment_deterministic(rng):
    s = random_stream(rng, 40, 40, n=500)
    spec = AugmentSpec(random_crop=(20, 20), hflip_prob=0.5, seed=9)
    assert ev.augment(s, spec) == ev.augment(s, spec)


def test_crop_remaps_coordinates():
    s = EventStream.from_arrays(10, 10, 5, [1, 2], [5, 0], [5, 0], [1, 0])
    c = ev.center_crop(s, (4, 4))
    assert list(c) == [ev.Event(1, 2, 2, 1)]


@pytest.mark.parametrize("spec", [AugmentSpec(center_crop=(200, 10)), AugmentSpec(random_crop=(10, 200))])
def test_crop_too_large(rng, spec):
    with pytest.raises(ConfigError):
        ev.augment(random_stream(rng), spec)


@pytest.mark.parametrize("kwargs", [dict(hflip_prob=1.5), dict(noise_sigma=-1), dict(center_crop=(0, 4))])
def test_augment_spec_validation(kwargs):
    with pytest.raises(ConfigError):
        AugmentSpec(**kwargs)


@given(streams(max_events=40), st.integers(0, 2**16))
def test_augment_output_valid(s, seed):
    w, h = max(1, s.width // 2), max(1, s.height // 2)
    out = ev.augment(s, AugmentSpec(random_crop=(w, h), hflip_prob=0.5, seed=seed))
    assert out.geometry == (w, h)
    assert len(out) == 0 or (out.x.max() < w and out.y.max() < h)
    key = np.stack([out.t, out.y, out.x, out.p]).T.tolist()
    assert key == sorted(key)


def test_perturb_states(rng):
    v = np.ones((2, 3, 3))
    assert ev.perturb_states(v, 0.0, rng) is v
    out = ev.perturb_states(v, 5e-4, np.random.default_rng(0))
    assert out.shape == v.shape and 0 < np.abs(out - v).max() < 5e-3
