import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rnnet import events as ev
from rnnet.errors import ConfigError, FormatError, OrderingError, ShapeError
from rnnet.events import EventStream
from rnnet.reservoir import (
    DeviceParams,
    ReservoirLayer,
    StateFrame,
    dense_rn_reference,
    encode,
    encode_stream,
    retrieval_times,
)
from rnnet.reservoir import backend
from rnnet.reservoir import _fallback
from rnnet.reservoir.io import (
    load_frame,
    read_frame_binary,
    read_frame_csv,
    save_frame,
    write_frame_binary,
    write_frame_csv,
)

GMAX = 100e-6
BACKENDS = list(backend.BACKENDS.values())
BACKEND_IDS = list(backend.BACKENDS)


def rn(n=4, p_c=0.5, tau=60_000.0, g_max=GMAX, kernels=None):
    return ReservoirLayer.rn(n, DeviceParams(p_c, tau, g_max), kernels=kernels)


# -- RN ------------------------------------------------------------------------


def test_zero_state_potentiation():
    layer = rn()
    assert layer.apply_spike(0, 10) == 0.0
    assert layer.read(10).values[0] == pytest.approx(0.5 * GMAX, rel=1e-15)


def test_two_spikes_match_dense_oracle():
    layer = rn(1)
    layer.run([0, 30_000], [0, 0])
    got = layer.read(30_000).values
    want = dense_rn_reference([0, 30_000], [0, 0], 1, 0.5, 60_000.0, GMAX, [30_000])[0]
    assert abs(got[0] - want[0]) <= 1e-9 * GMAX
    # closed form: 0.5*(Gmax - g) + g*e^{-1/tau}, g = 0.5*Gmax*e^{-29999/tau}
    g = 0.5 * GMAX * math.exp(-29_999 / 60_000)
    assert got[0] == pytest.approx(0.5 * (GMAX - g) + g * math.exp(-1 / 60_000), rel=1e-12)


def test_pure_decay():
    layer = rn(1, tau=1000.0)
    layer.apply_spike(0, 0)
    g = layer.read(0).values[0]
    assert layer.read(2500).values[0] == pytest.approx(g * math.exp(-2.5), rel=1e-12)


def test_read_is_non_destructive():
    layer = rn(3)
    layer.run([1, 5, 9], [0, 1, 0])
    a, b = layer.read(100), layer.read(100)
    assert a == b
    layer.apply_spike(2, 200)
    ref = dense_rn_reference([1, 5, 9, 200], [0, 1, 0, 2], 3, 0.5, 60_000.0, GMAX, [300])[0]
    assert np.allclose(layer.read(300).values, ref, rtol=0, atol=1e-12 * GMAX)


def test_read_then_tau_later_scales_by_e():
    layer = rn(2, tau=5000.0)
    layer.run([0, 3], [0, 1])
    first = layer.read(100).values
    assert np.allclose(layer.read(5100).values, first / math.e, rtol=1e-12)


def test_duplicate_spikes_coalesce():
    a, b = rn(1), rn(1)
    pre = a.apply_events([7, 7, 7], [0, 0, 0])
    b.apply_spike(0, 7)
    assert a.read(10) == b.read(10)
    assert pre[0] == 0.0 and np.isnan(pre[1:]).all()


def test_time_regression_rejected():
    layer = rn(2)
    layer.apply_spike(0, 100)
    with pytest.raises(OrderingError):
        layer.apply_spike(0, 50)
    with pytest.raises(OrderingError):
        layer.read(99)
    with pytest.raises(OrderingError):
        rn(2).run([5, 3], [1, 1])


def test_bad_node_and_params():
    with pytest.raises(ShapeError):
        rn(2).apply_spike(2, 0)
    for kw in (dict(p_c=0), dict(p_c=1.5), dict(tau=0), dict(g_max=-1)):
        with pytest.raises(ConfigError):
            DeviceParams(**{**dict(p_c=0.5, tau=1.0, g_max=1.0), **kw})
    with pytest.raises(ConfigError):
        ReservoirLayer("XX", 3, 1.0)


def test_initial_state_and_last_event_time():
    layer = rn(3)
    assert np.all(layer.read(0).values == 0)
    assert layer.last_event_time.tolist() == [0, 0, 0]
    layer.apply_spike(1, 42)
    assert layer.last_event_time.tolist() == [0, 42, 0]


def test_pc_one_saturates():
    layer = rn(1, p_c=1.0)
    layer.apply_spike(0, 0)
    assert layer.read(0).values[0] == pytest.approx(GMAX, rel=1e-15)
    # later pulses land a hair below Gmax: Gmax - g*(1 - e^{-1/tau})
    layer.run([1, 2], [0, 0])
    assert GMAX * (1 - 1e-4) < layer.read(2).values[0] < GMAX


@given(st.lists(st.integers(0, 3000), min_size=1, max_size=40), st.floats(0.01, 1.0),
       st.floats(1.0, 5000.0))
def test_rn_bounded(times, p_c, tau):
    layer = rn(2, p_c=p_c, tau=tau)
    times = sorted(times)
    nodes = [i % 2 for i in range(len(times))]
    out, pre = layer.run(times, nodes, [times[-1] // 2, times[-1]])
    assert np.all(out >= 0) and np.all(out <= GMAX * (1 + 1e-12))
    assert np.all((np.nan_to_num(pre) >= 0) & (np.nan_to_num(pre) <= GMAX * (1 + 1e-12)))


@given(st.integers(0, 500), st.lists(st.integers(1, 400), min_size=2, max_size=10, unique=True))
def test_rn_monotone_decay_between_spikes(t0, offsets):
    layer = rn(1, tau=300.0)
    layer.apply_spike(0, t0)
    reads = [t0 + o for o in sorted(offsets)]
    vals = [layer.read(r).values[0] for r in reads]
    assert all(a > b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("kernels", BACKENDS, ids=BACKEND_IDS)
def test_event_driven_matches_dense(kernels):
    rng = np.random.default_rng(5)
    for _ in range(30):
        n = 5
        k = int(rng.integers(0, 60))
        t = np.sort(rng.integers(0, 4000, k))
        node = rng.integers(0, n, k)
        p_c = float(rng.uniform(0.01, 1.0))
        tau = float(rng.uniform(50.0, 5000.0))
        reads = np.sort(rng.integers(0, 4200, 6))
        layer = rn(n, p_c, tau, kernels=kernels)
        out, _ = layer.run(t, node, reads)
        ref = dense_rn_reference(t, node, n, p_c, tau, GMAX, reads)
        assert np.max(np.abs(out - ref)) <= 1e-9 * GMAX


def test_dense_reference_per_node_params():
    out = dense_rn_reference([0, 0], [0, 1], 2, np.array([0.2, 0.8]), np.array([10.0, 20.0]), 1.0, [0, 10])
    assert out[0].tolist() == pytest.approx([0.2, 0.8])
    assert out[1].tolist() == pytest.approx([0.2 * math.exp(-1), 0.8 * math.exp(-0.5)])


# -- TS and TAP ------------------------------------------------------------------


def test_ts_state_one_at_spike_and_zero_unspiked():
    layer = ReservoirLayer.ts(3, 100.0)
    layer.apply_spike(1, 50)
    v = layer.read(50).values
    assert v.tolist() == [0.0, 1.0, 0.0]
    assert layer.read(150).values[1] == pytest.approx(math.exp(-1))


def test_ts_keeps_only_latest_spike():
    a, b = ReservoirLayer.ts(1, 10.0), ReservoirLayer.ts(1, 10.0)
    a.run([15, 20, 40], [0, 0, 0])
    b.run([20, 40], [0, 0])
    assert a.read(60) == b.read(60)


def test_ts_independent_of_device_parameters():
    # TS has only tau; identical inputs give identical states regardless of any RN settings
    s = ev.synthesize_moving_bar((8, 8), "right", 40.0, 300_000, seed=1)
    frames = [encode(s, ReservoirLayer.ts((2, 8, 8), 60_000.0), 30_000).frames for _ in range(2)]
    assert np.array_equal(*frames)
    assert encode(s, ReservoirLayer.ts((2, 8, 8), 60_000.0), 30_000).full_scale == 1.0


@given(st.lists(st.integers(0, 2000), min_size=1, max_size=30))
def test_ts_bounded(times):
    layer = ReservoirLayer.ts(1, 200.0)
    out, _ = layer.run(sorted(times), [0] * len(times), [max(times), max(times) + 100])
    assert np.all((out >= 0) & (out <= 1))


def test_tap_mean_count_per_window():
    layer = ReservoirLayer.tap(2, 100)
    out, _ = layer.run([10, 150, 260], [0, 0, 0], [300])
    assert out[0].tolist() == [1.0, 0.0]


def test_tap_before_first_window():
    layer = ReservoirLayer.tap(2, 100)
    layer.run([10, 20], [0, 1])
    assert layer.read(99).values.tolist() == [0.0, 0.0]
    assert layer.read(100).values.tolist() == [1.0, 1.0]


def test_tap_no_spikes_and_linearity():
    assert ReservoirLayer.tap(3, 50).read(200).values.tolist() == [0, 0, 0]
    rng = np.random.default_rng(0)
    t = np.sort(rng.integers(0, 1000, 40))
    node = rng.integers(0, 3, 40)
    one, _ = ReservoirLayer.tap(3, 100).run(t, node, [500, 1000])
    # same spikes twice, one microsecond apart, double every count
    t2 = np.sort(np.concatenate([2 * t, 2 * t + 1]))
    n2 = np.concatenate([node, node])[np.argsort(np.concatenate([2 * t, 2 * t + 1]), kind="stable")]
    two, _ = ReservoirLayer.tap(3, 200).run(t2, n2, [1000, 2000])
    assert np.allclose(two, 2 * one)


@pytest.mark.parametrize("kind", ["RN", "TS", "TAP"])
def test_read_idempotent_all_kinds(kind):
    param = {"RN": DeviceParams(), "TS": 1000.0, "TAP": 100}[kind]
    layer = ReservoirLayer(kind, 4, param)
    layer.run([1, 2, 300], [0, 3, 1])
    assert layer.read(400) == layer.read(400)


@pytest.mark.parametrize("kind", ["RN", "TS", "TAP"])
def test_backends_agree(kind):
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    rng = np.random.default_rng(9)
    param = {"RN": DeviceParams(0.3, 2000.0), "TS": 1500.0, "TAP": 250}[kind]
    t = np.sort(rng.integers(0, 10_000, 3000))
    node = rng.integers(0, 50, 3000)
    reads = np.arange(500, 10_001, 500)
    outs = [ReservoirLayer(kind, 50, param, kernels=k).run(t, node, reads) for k in BACKENDS]
    assert np.allclose(outs[0][0], outs[1][0], rtol=1e-13, atol=0)
    if kind == "RN":
        assert np.allclose(outs[0][1], outs[1][1], rtol=1e-13, equal_nan=True)


def test_fallback_reports_ordering():
    layer = ReservoirLayer.rn(2, DeviceParams(), kernels=_fallback)
    with pytest.raises(OrderingError):
        layer.run([5, 2], [0, 0])


# -- encoding -------------------------------------------------------------------


def test_retrieval_schedule():
    assert len(retrieval_times(1_500_000, 30_000)) == 50
    assert retrieval_times(100, 30).tolist() == [30, 60, 90]
    with pytest.raises(ConfigError):
        retrieval_times(100, 0)


def test_encode_fifty_frames_and_support():
    s = ev.synthesize_moving_bar((32, 16), "right", 30.0, 1_500_000, seed=0)
    enc = encode(s, ReservoirLayer.rn((2, 16, 32)), 30_000)
    assert enc.frames.shape == (50, 2, 16, 32)
    assert enc.spike_count == len(s)
    assert enc.pre_spike_sum >= 0
    # nodes never touched by an event stay exactly zero; touched ones are positive
    touched = np.zeros(2 * 16 * 32, bool)
    touched[s.node_index()] = True
    final = enc.frames[-1].reshape(-1)
    assert np.all(final[~touched] == 0) and np.all(final[touched] > 0)
    frames = encode_stream(s, ReservoirLayer.rn((2, 16, 32)), 30_000)
    assert len(frames) == 50 and frames[0].timestamp == 30_000


def test_encode_matches_dense_oracle():
    s = ev.synthesize_moving_bar((6, 5), "left", 200.0, 60_000, event_rate=2, seed=3, noise_rate=20.0)
    enc = encode(s, ReservoirLayer.rn((2, 5, 6), DeviceParams(0.4, 8000.0)), 6000)
    ref = dense_rn_reference(s.t, s.node_index(), 60, 0.4, 8000.0, GMAX, enc.times)
    assert np.max(np.abs(enc.frames.reshape(len(enc.times), -1) - ref)) <= 1e-9 * GMAX


def test_encode_empty_stream():
    enc = encode(EventStream.empty(4, 4, 90_000), ReservoirLayer.rn((2, 4, 4)), 30_000)
    assert enc.frames.shape == (3, 2, 4, 4) and not enc.frames.any()
    assert enc.spike_count == 0 and enc.pre_spike_sum == 0.0


def test_encode_geometry_mismatch():
    with pytest.raises(ShapeError):
        encode(EventStream.empty(4, 4, 100), ReservoirLayer.rn((2, 4, 5)), 10)


# -- frame files ------------------------------------------------------------------


def test_state_frame_validation():
    with pytest.raises(ConfigError):
        StateFrame(0, np.array([np.nan]))
    f = StateFrame(3, np.zeros(2))
    with pytest.raises(ValueError):
        f.values[0] = 1.0


@given(st.integers(0, 2**40), st.integers(1, 3), st.integers(1, 4), st.integers(1, 4),
       st.integers(0, 2**31))
def test_frame_round_trips(ts, c, h, w, seed):
    v = np.random.default_rng(seed).random((c, h, w)) * GMAX
    f = StateFrame(ts, v)
    assert read_frame_binary(write_frame_binary(f)) == f
    assert read_frame_csv(write_frame_csv(f)) == f


def test_frame_csv_header_and_files(tmp_path):
    f = StateFrame(30_000, np.arange(12.0).reshape(2, 2, 3))
    text = write_frame_csv(f).decode()
    assert text.splitlines()[0] == "# 30000,2,2,3"
    assert len(text.splitlines()) == 5
    for name in ("a.csv", "a.rnsf"):
        save_frame(f, tmp_path / name)
        assert load_frame(tmp_path / name) == f
    flat = StateFrame(1, np.ones(5))
    assert read_frame_binary(write_frame_binary(flat)).values.shape == (5, 1, 1)


def test_frame_format_errors():
    data = write_frame_binary(StateFrame(0, np.ones((1, 2, 2))))
    for bad in (data[:10], b"XXXX" + data[4:], data[:-8]):
        with pytest.raises(FormatError):
            read_frame_binary(bad)
    with pytest.raises(FormatError):
        read_frame_csv("# 0,1,1,2\n1.0\n")
    with pytest.raises(FormatError):
        read_frame_csv("0,1\n")


# -- pass-wise feature encoding ----------------------------------------------------


@pytest.mark.parametrize("kind", ["RN", "TS", "TAP"])
def test_passwise_matches_event_driven(kind):
    from rnnet.reservoir.passwise import pass_encode

    rng = np.random.default_rng(4)
    b, k, n = 3, 12, 7
    s = (rng.random((b, k, n)) < 0.3).astype(float)
    st = 30 * np.arange(1, k + 1)
    rt = np.array([100, 200, 300, 360])
    enc = pass_encode(s, st, rt, kind, p_c=0.2, tau=150.0, window=100)
    param = {"RN": DeviceParams(0.2, 150.0, 1.0), "TS": 150.0, "TAP": 100}[kind]
    for i in range(b):
        kk, nn = np.nonzero(s[i])
        order = np.lexsort((nn, st[kk]))
        out, _ = ReservoirLayer(kind, n, param).run(st[kk][order], nn[order], rt)
        assert np.allclose(enc.reads[i], out, rtol=0, atol=1e-12)


def test_passwise_shape_errors():
    from rnnet.reservoir.passwise import pass_encode

    with pytest.raises(ShapeError):
        pass_encode(np.zeros((2, 3)), [1, 2, 3], [3], "RN")
    with pytest.raises(ShapeError):
        pass_encode(np.zeros((1, 3, 2)), [1, 2], [3], "RN")
    with pytest.raises(ConfigError):
        pass_encode(np.zeros((1, 2, 2)), [2, 1], [3], "RN")
