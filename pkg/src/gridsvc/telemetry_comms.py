"""Area telemetry windows, the phasor data concentrator, the wire format and the channel.

Wire frame layout (version 1, all integers little-endian)::

    offset  size  field
    0       4     magic  b"GSVC"
    4       1     version
    5       2     area_id           (uint16, 0 = concentrator)
    7       8     timestamp_micros  (uint64)
    15      4     n                 (uint32)
    19      4     m                 (uint32)
    23      8     matrix_seed       (uint64)
    31      8*m   payload           (float64 measurements)
    31+8m   4     CRC-32 of everything before it
"""
from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.fft import idct

from .cs_codec import CodecConfig, CompressedFrame, encode, recover
from .exceptions import BadMagicError, ChecksumError, FrameError, LengthMismatchError, WindowAlignmentError

MAGIC = b"GSVC"
VERSION = 1
HEADER = struct.Struct("<4sBHQIIQ")
HEADER_SIZE = HEADER.size  # 31
TRAILER_SIZE = 4
DEFAULT_WINDOW = 20


@dataclass(frozen=True, eq=False)
class TelemetryWindow:
    """``n_states x w`` block of consecutive samples from one area (or the whole system)."""

    area_id: int
    start_time: float
    samples: np.ndarray
    sample_period: float = 1.0

    def __post_init__(self) -> None:
        s = np.array(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[1] < 1:
            raise ValueError("samples must be an n_states x w matrix")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def n_states(self) -> int:
        return self.samples.shape[0]

    @property
    def w(self) -> int:
        return self.samples.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.start_time + self.sample_period * np.arange(self.w)


def concatenate_areas(windows: Sequence[TelemetryWindow]) -> TelemetryWindow:
    """Stack area windows (ascending ``area_id``) into one system window."""
    if not windows:
        raise WindowAlignmentError("no windows to concatenate")
    if len(windows) == 1:
        return windows[0]
    ordered = sorted(windows, key=lambda win: win.area_id)
    ref = ordered[0]
    for win in ordered[1:]:
        if win.w != ref.w:
            raise WindowAlignmentError(f"area {win.area_id} has w={win.w}, expected {ref.w}")
        if not math.isclose(win.sample_period, ref.sample_period, rel_tol=1e-12):
            raise WindowAlignmentError(f"area {win.area_id} has a different sample period")
        if not math.isclose(win.start_time, ref.start_time, rel_tol=0, abs_tol=1e-9):
            raise WindowAlignmentError(f"area {win.area_id} starts at {win.start_time}, expected {ref.start_time}")
    ids = [win.area_id for win in ordered]
    if len(set(ids)) != len(ids):
        raise WindowAlignmentError("duplicate area ids")
    return TelemetryWindow(0, ref.start_time, np.vstack([win.samples for win in ordered]), ref.sample_period)


def inject_sensor_noise(window: TelemetryWindow, snr_db: float, seed: int) -> TelemetryWindow:
    """Add white Gaussian noise to every signal at the given per-signal SNR."""
    if math.isinf(snr_db) and snr_db > 0:
        return window
    if not math.isfinite(snr_db):
        raise ValueError("snr_db must be finite or +inf")
    rng = np.random.default_rng(seed)
    x = window.samples
    power = np.mean(x**2, axis=1, keepdims=True) / 10.0 ** (snr_db / 10.0)
    noisy = x + rng.standard_normal(x.shape) * np.sqrt(power)
    return replace(window, samples=noisy)


def correlated_telemetry(n_states: int, w: int = DEFAULT_WINDOW, seed: int = 0) -> np.ndarray:
    """Synthetic ``n_states x w`` telemetry with spatial and temporal correlation.

    Every column is a per-unit level plus spatial DCT modes whose amplitudes
    decay exponentially; the decay length grows with ``sqrt(n_states)``, so
    larger systems carry more (but relatively fewer) significant modes.  Modes
    oscillate slowly in time and a 2e-5 white floor stands in for sensor
    quantisation.
    """
    rng = np.random.default_rng(seed)
    j = np.arange(1, n_states)
    ell = 1.5 * math.sqrt(n_states / 54.0)
    amp = rng.choice([-1.0, 1.0], n_states - 1) * rng.uniform(0.5, 1.0, n_states - 1) * np.exp(-j / ell)
    freq = rng.uniform(0.01, 0.05, n_states - 1)
    phase = rng.uniform(0.0, 2 * math.pi, n_states - 1)
    t = np.arange(w)
    theta = np.zeros((n_states, w))
    theta[0] = math.sqrt(n_states)
    theta[1:] = amp[:, None] * (1.0 + 0.1 * np.sin(2 * math.pi * freq[:, None] * t + phase[:, None]))
    x = idct(theta, type=2, norm="ortho", axis=0)
    return x + 2e-5 * rng.standard_normal(x.shape)


# -- wire format -------------------------------------------------------------

def serialize(frame: CompressedFrame) -> bytes:
    cfg = frame.config
    micros = int(round(frame.timestamp * 1e6))
    if micros < 0:
        raise FrameError("timestamps must be non-negative")
    header = HEADER.pack(MAGIC, VERSION, frame.area_id, micros, cfg.n, cfg.m, cfg.matrix_seed)
    body = header + np.asarray(frame.y, dtype="<f8").tobytes()
    return body + struct.pack("<I", zlib.crc32(body))


def frame_size(m: int) -> int:
    return HEADER_SIZE + 8 * m + TRAILER_SIZE


def deserialize(data: bytes, omp_max_iters: int | None = None, omp_residual_tol: float = 1e-6) -> CompressedFrame:
    """Parse a wire frame; raises ``BadMagicError``, ``ChecksumError`` or ``LengthMismatchError``."""
    data = bytes(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("frame does not start with b'GSVC'")
    if len(data) < HEADER_SIZE + TRAILER_SIZE:
        raise LengthMismatchError(f"frame of {len(data)} bytes is shorter than header + trailer")
    body, trailer = data[:-TRAILER_SIZE], data[-TRAILER_SIZE:]
    if struct.unpack("<I", trailer)[0] != zlib.crc32(body):
        raise ChecksumError("CRC-32 mismatch")
    _, version, area_id, micros, n, m, seed = HEADER.unpack_from(body)
    if version != VERSION:
        raise FrameError(f"unsupported frame version {version}")
    payload = body[HEADER_SIZE:]
    if len(payload) != 8 * m:
        raise LengthMismatchError(f"header declares m={m} but payload holds {len(payload) / 8:g} values")
    y = np.frombuffer(payload, dtype="<f8").astype(float)
    try:
        cfg = CodecConfig(n=n, m=m, matrix_seed=seed, omp_max_iters=omp_max_iters, omp_residual_tol=omp_residual_tol)
    except Exception as exc:
        raise FrameError(f"invalid codec parameters in header: {exc}") from None
    return CompressedFrame(y, cfg, micros / 1e6, area_id)


# -- channel -----------------------------------------------------------------

@dataclass(frozen=True)
class ChannelModel:
    bandwidth_bps: float = 5e6
    fixed_latency_s: float = 0.01
    noise_snr_db: float | None = None
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not self.bandwidth_bps > 0:
            raise ValueError("bandwidth must be positive")
        if self.fixed_latency_s < 0:
            raise ValueError("latency must be non-negative")

    def delay(self, n_bytes: int) -> float:
        return self.fixed_latency_s + 8.0 * n_bytes / self.bandwidth_bps


def transmit(data: bytes, ch: ChannelModel, rng: np.random.Generator | None = None) -> tuple[bytes, float]:
    """Deliver a frame over the channel, returning ``(bytes, delay_s)``.

    With ``noise_snr_db`` set, white Gaussian noise at that SNR is added to
    the payload measurements and the frame is re-sealed, so the receiver
    sees a valid frame carrying noisy values.  ``rng`` carries the noise
    state between calls; without it a generator is seeded from ``ch``.
    """
    delay = ch.delay(len(data))
    if ch.noise_snr_db is None:
        return bytes(data), delay
    frame = deserialize(data)
    y = frame.y
    power = float(np.mean(y**2)) if y.size else 0.0
    if rng is None:
        rng = np.random.default_rng(ch.rng_seed)
    noise = rng.standard_normal(y.size) * math.sqrt(power / 10.0 ** (ch.noise_snr_db / 10.0))
    return serialize(replace(frame, y=y + noise)), delay


# -- concentrator ---------------------------------------------------------------

class AreaBuffer:
    """Rolling window of the last ``w`` samples of one area's states."""

    def __init__(self, area_id: int, n_states: int, w: int = DEFAULT_WINDOW, sample_period: float = 1.0):
        self.area_id = area_id
        self.w = w
        self.sample_period = sample_period
        self._data = np.zeros((n_states, w))
        self._count = 0
        self._last_time = 0.0

    def push(self, sample, time: float) -> None:
        sample = np.asarray(sample, dtype=float).reshape(-1)
        if self._count == 0:
            # pre-fill with the first sample so early windows are full length
            self._data[:] = sample[:, None]
        else:
            self._data = np.roll(self._data, -1, axis=1)
            self._data[:, -1] = sample
        self._count += 1
        self._last_time = time

    @property
    def ready(self) -> bool:
        return self._count > 0

    def window(self) -> TelemetryWindow:
        start = self._last_time - (self.w - 1) * self.sample_period
        return TelemetryWindow(self.area_id, start, self._data.copy(), self.sample_period)


@dataclass
class PredictiveLink:
    """Concentrator-to-controller link that compresses the change since the last reconstruction.

    Both ends hold the same reconstruction ``x_hat``; the concentrator encodes
    ``x - x_hat`` and updates its copy with what the receiver will decode, so
    recovery errors are fed back into the next frame instead of accumulating.
    Channel noise is not visible to the sender and does accumulate.
    """

    codec: CodecConfig
    channel: ChannelModel
    initial: np.ndarray
    sender_state: np.ndarray = field(init=False)
    receiver_state: np.ndarray = field(init=False)
    rng: np.random.Generator = field(init=False)

    def __post_init__(self) -> None:
        self.initial = np.asarray(self.initial, dtype=float).copy()
        self.sender_state = self.initial.copy()
        self.receiver_state = self.initial.copy()
        self.rng = np.random.default_rng(self.channel.rng_seed)

    def send(self, x, timestamp: float) -> tuple[np.ndarray, float, int]:
        """Push one system sample through encode/serialize/channel/decode.

        Returns the receiver's reconstruction, the channel delay and the frame size.
        """
        x = np.asarray(x, dtype=float).reshape(-1)
        frame = encode(x - self.sender_state, self.codec, timestamp=timestamp, area_id=0)
        wire = serialize(frame)
        self.sender_state = self.sender_state + recover(frame)
        delivered, delay = transmit(wire, self.channel, self.rng)
        received = deserialize(delivered, self.codec.omp_max_iters, self.codec.omp_residual_tol)
        self.receiver_state = self.receiver_state + recover(received)
        return self.receiver_state.copy(), delay, len(wire)
