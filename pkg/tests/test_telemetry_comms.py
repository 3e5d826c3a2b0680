import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridsvc.cs_codec import CodecConfig, CompressedFrame, encode, snr
from gridsvc.exceptions import BadMagicError, ChecksumError, FrameError, LengthMismatchError, WindowAlignmentError
from gridsvc.telemetry_comms import (
    HEADER_SIZE,
    AreaBuffer,
    ChannelModel,
    PredictiveLink,
    TelemetryWindow,
    concatenate_areas,
    deserialize,
    frame_size,
    inject_sensor_noise,
    serialize,
    transmit,
)


def _window(area: int, n: int, w: int = 20, start: float = 0.0) -> TelemetryWindow:
    return TelemetryWindow(area, start, np.full((n, w), float(area)))


def test_concatenate():
    single = _window(2, 6)
    assert concatenate_areas([single]) is single
    both = concatenate_areas([_window(2, 6), _window(1, 6)])
    assert both.n_states == 12
    np.testing.assert_array_equal(both.samples[:6], 1.0)
    assert concatenate_areas([_window(a, 18) for a in (1, 2, 3)]).n_states == 54


def test_concatenate_rejects_misaligned():
    with pytest.raises(WindowAlignmentError):
        concatenate_areas([_window(1, 6), _window(2, 6, w=10)])
    with pytest.raises(WindowAlignmentError):
        concatenate_areas([_window(1, 6), _window(2, 6, start=1.0)])
    with pytest.raises(WindowAlignmentError):
        concatenate_areas([_window(1, 6), _window(1, 6)])


frames = st.builds(
    lambda n, frac, seed, area, ts, data_seed: _frame(n, frac, seed, area, ts, data_seed),
    st.integers(1, 64),
    st.floats(0.01, 1.0),
    st.integers(0, 2**64 - 1),
    st.integers(0, 2**16 - 1),
    st.integers(0, 10**9),
    st.integers(0, 2**32 - 1),
)


def _frame(n, frac, seed, area, ts_micros, data_seed) -> CompressedFrame:
    m = max(1, min(n, round(frac * n)))
    y = np.random.default_rng(data_seed).normal(size=m)
    return CompressedFrame(y, CodecConfig(n, m, matrix_seed=seed), ts_micros / 1e6, area)


@settings(max_examples=200)
@given(frames)
def test_round_trip(frame):
    back = deserialize(serialize(frame))
    assert np.array_equal(back.y, frame.y)
    assert back.config == frame.config
    assert back.area_id == frame.area_id and back.timestamp == frame.timestamp


@settings(max_examples=100)
@given(frames, st.data())
def test_any_byte_flip_detected(frame, data):
    wire = bytearray(serialize(frame))
    pos = data.draw(st.integers(0, len(wire) - 1))
    wire[pos] ^= data.draw(st.integers(1, 255))
    with pytest.raises(FrameError):
        deserialize(bytes(wire))


def test_frame_errors_are_specific():
    wire = serialize(encode(np.arange(8.0), CodecConfig(8, 3)))
    assert len(wire) == 59 == frame_size(3) == HEADER_SIZE + 24 + 4
    with pytest.raises(BadMagicError):
        deserialize(b"XXXX" + wire[4:])
    with pytest.raises(LengthMismatchError):
        deserialize(wire[:20])
    bad = bytearray(wire)
    bad[40] ^= 1
    with pytest.raises(ChecksumError):
        deserialize(bytes(bad))
    with pytest.raises(FrameError):
        serialize(encode(np.zeros(8), CodecConfig(8, 3), timestamp=-1.0))


def test_channel_delay():
    ch = ChannelModel(bandwidth_bps=8000, fixed_latency_s=0.01)
    assert ch.delay(1000) == pytest.approx(1.01)
    wire = bytes(range(59))
    assert transmit(wire, ch) == (wire, ch.delay(59))


def test_payload_delay_halves_at_ratio_two():
    ch = ChannelModel()
    full, half = CodecConfig.for_ratio(54, 1), CodecConfig.for_ratio(54, 2)
    overhead = frame_size(0)
    pay = lambda cfg: ch.delay(frame_size(cfg.m)) - ch.delay(overhead)
    assert pay(half) == pytest.approx(pay(full) / 2, rel=1e-12)


def test_noisy_channel_keeps_frames_valid():
    ch = ChannelModel(noise_snr_db=30.0, rng_seed=1)
    frame = encode(np.linspace(1, 2, 16), CodecConfig(16, 8))
    out, _ = transmit(serialize(frame), ch)
    y = deserialize(out).y
    assert 25 < snr(frame.y, y) < 35


def test_sensor_noise_level():
    clean = TelemetryWindow(1, 0.0, 1.0 + 0.01 * np.sin(np.arange(20))[None, :].repeat(18, axis=0))
    levels = [snr(clean.samples, inject_sensor_noise(clean, 40, seed).samples) for seed in range(50)]
    assert abs(np.median(levels) - 40) < 1.5
    assert inject_sensor_noise(clean, math.inf, 3) is clean
    a, b = inject_sensor_noise(clean, 40, 7), inject_sensor_noise(clean, 40, 7)
    assert np.array_equal(a.samples, b.samples)


def test_area_buffer_rolls():
    buf = AreaBuffer(1, 2, w=3)
    buf.push([1.0, 2.0], 0.0)
    np.testing.assert_array_equal(buf.window().samples, [[1, 1, 1], [2, 2, 2]])
    buf.push([3.0, 4.0], 1.0)
    win = buf.window()
    np.testing.assert_array_equal(win.samples, [[1, 1, 3], [2, 2, 4]])
    assert win.start_time == -1.0


def test_predictive_link_is_exact_without_compression():
    x0 = np.ones(10)
    link = PredictiveLink(CodecConfig(10, 10), ChannelModel(), x0)
    x = x0 + np.arange(10) * 0.01
    x_hat, delay, size = link.send(x, 1.0)
    np.testing.assert_array_equal(x_hat, x)
    assert size == frame_size(10)
