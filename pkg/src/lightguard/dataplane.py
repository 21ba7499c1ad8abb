"""Simulated WiFi data channel: key install, protected traffic, metering.

Traffic is fluid: one aggregate frame per ``frame_interval_ms`` stands for
``offered_load * interval`` bits. Every aggregate is genuinely encrypted and
authenticated under the installed TK so that key mismatches surface as real
decrypt failures.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from cryptography.hazmat.primitives.ciphers.aead import AESCCM

from .crypto import TAG_LEN, AuthenticationError, Ptk, ReplayError, ReplayWindow, protect_frame, unprotect_frame
from .netsim.clock import SimClock

DATA_MAGIC = b"LD"
_DATA_HDR = struct.Struct(">2sIB")  # magic, epoch, flags
FLAG_NULL = 0x01
_PLAIN = struct.Struct(">qdI")  # seq, generated-at ms, bits


class LinkState(str, Enum):
    UP = "Up"
    PAUSED = "Paused"
    DOWN = "Down"


class StaleEpoch(ValueError):
    pass


def is_data_frame(data: bytes) -> bool:
    return data[:2] == DATA_MAGIC


def data_frame_epoch(data: bytes) -> int:
    return _DATA_HDR.unpack_from(data)[1]


def open_data_frame(tk: bytes, data: bytes) -> tuple[int, bytes]:
    """Decrypt a captured data frame with a candidate TK (raises on mismatch)."""
    header = data[:_DATA_HDR.size]
    return unprotect_frame(tk, data[_DATA_HDR.size:], aad=header)


@dataclass
class WifiLink:
    mac: bytes
    nominal_throughput_mbps: float = 80.0
    base_latency_ms: float = 1.0
    state: LinkState = LinkState.DOWN
    epoch: int = 0
    tx_packet_number: int = 0
    decrypt_failures: int = 0
    frames_rejected_replay: int = 0
    pause_durations_ms: list[float] = field(default_factory=list)
    _tk: bytes | None = None
    _aead: AESCCM | None = None
    _rx: ReplayWindow = field(default_factory=ReplayWindow)
    _previous: tuple | None = None
    _paused_at: float | None = None

    @property
    def installed_key(self) -> tuple[int, bytes] | None:
        return None if self._tk is None else (self.epoch, self._tk)

    def install_key(self, epoch: int, ptk: Ptk, now_ms: float | None = None) -> WifiLink:
        if self._tk is not None and epoch != self.epoch + 1:
            raise StaleEpoch(f"install epoch {epoch} on link at epoch {self.epoch}")
        if self._tk is None and epoch <= self.epoch and self.epoch:
            raise StaleEpoch(f"install epoch {epoch} not newer than {self.epoch}")
        self._previous = (self.epoch, self._tk, self._aead, self.tx_packet_number, self._rx, self.state)
        self.epoch = epoch
        self._tk = ptk.tk
        self._aead = AESCCM(ptk.tk, tag_length=TAG_LEN)
        self.tx_packet_number = 0
        self._rx = ReplayWindow()
        if self.state is LinkState.PAUSED:
            self.resume(now_ms if now_ms is not None else self._paused_at or 0.0)
        self.state = LinkState.UP
        return self

    def rollback(self) -> WifiLink:
        """Undo the most recent install (switchover aborted after install)."""
        if self._previous is None:
            return self
        self.epoch, self._tk, self._aead, self.tx_packet_number, self._rx, _ = self._previous
        self._previous = None
        return self

    def pause_for_switchover(self, now_ms: float) -> WifiLink:
        if self.state is LinkState.UP:
            self.state = LinkState.PAUSED
            self._paused_at = now_ms
        return self

    def resume(self, now_ms: float) -> WifiLink:
        if self.state is LinkState.PAUSED:
            self.state = LinkState.UP if self._tk is not None else LinkState.DOWN
            if self._paused_at is not None:
                self.pause_durations_ms.append(now_ms - self._paused_at)
            self._paused_at = None
        return self

    def down(self) -> WifiLink:
        self.state = LinkState.DOWN
        self._paused_at = None
        return self

    def seal(self, plaintext: bytes, flags: int = 0) -> bytes:
        if self._tk is None:
            raise RuntimeError("no key installed")
        self.tx_packet_number += 1
        header = _DATA_HDR.pack(DATA_MAGIC, self.epoch, flags)
        return header + protect_frame(self._tk, self.tx_packet_number, plaintext, aad=header,
                                      _aead=self._aead)

    def open(self, data: bytes) -> bytes | None:
        """Return the plaintext, or None if the frame is not accepted."""
        if self.state is LinkState.DOWN or self._tk is None:
            return None
        header = data[:_DATA_HDR.size]
        try:
            pn, plain = unprotect_frame(self._tk, data[_DATA_HDR.size:], aad=header, _aead=self._aead)
        except AuthenticationError:
            self.decrypt_failures += 1
            return None
        try:
            self._rx.accept(pn)
        except ReplayError:
            self.frames_rejected_replay += 1
            return None
        return plain


def link_pair_state(a: WifiLink, b: WifiLink) -> LinkState:
    if LinkState.DOWN in (a.state, b.state):
        return LinkState.DOWN
    if LinkState.PAUSED in (a.state, b.state):
        return LinkState.PAUSED
    return LinkState.UP


@dataclass(frozen=True)
class MetricSample:
    t_ms: float
    throughput_mbps: float
    latency_ms: float | None
    decrypt_failures: int
    link_state: LinkState
    epoch: int
    rekey_phase: str = ""


class TrafficPump:
    """Offered-load generator on the transmitter and goodput meter on the receiver.

    ``send(octets) -> bool`` hands a sealed frame to the RF medium and reports
    whether it will reach the receiver.
    """

    def __init__(self, clock: SimClock, tx: WifiLink, rx: WifiLink, send: Callable[[bytes], bool], *,
                 offered_load_mbps: float = 80.0, frame_interval_ms: float = 1.0,
                 sample_interval_ms: float = 100.0, window_ms: float = 500.0,
                 phase_probe: Callable[[], str] = lambda: ""):
        self.clock = clock
        self.tx = tx
        self.rx = rx
        self.send = send
        self.offered_load_mbps = offered_load_mbps
        self.frame_interval_ms = frame_interval_ms
        self.sample_interval_ms = sample_interval_ms
        self.window_ms = window_ms
        self.phase_probe = phase_probe
        self.bits_per_frame = int(round(offered_load_mbps * 1000 * frame_interval_ms))
        self.frames_offered = 0
        self.frames_delivered = 0
        self.frames_dropped = 0
        self.in_flight = 0
        self.queue: deque[bytes] = deque()
        self.samples: list[MetricSample] = []
        self.latencies: list[float] = []
        self._window: deque[tuple[float, int]] = deque()
        self._window_bits = 0
        self._interval_latency: list[float] = []
        self._seq = 0
        self._origin = 0.0
        self.on_rx: Callable[[int], None] | None = None  # epoch of each accepted frame

    @property
    def frames_queued(self) -> int:
        return len(self.queue) + self.in_flight

    def start(self, at_ms: float = 0.0, until_ms: float = float("inf")) -> None:
        self._origin = at_ms
        self._until = until_ms
        self.clock.schedule(at_ms, self._tick, label="traffic")
        self.clock.schedule(at_ms + self.sample_interval_ms, self._sample, label="sample")

    def _plain(self, bits: int) -> bytes:
        self._seq += 1
        return _PLAIN.pack(self._seq, self.clock.now_ms, bits)

    def _tick(self) -> None:
        now = self.clock.now_ms
        self.frames_offered += 1
        plain = self._plain(self.bits_per_frame)
        state = self.tx.state
        if state is LinkState.UP:
            self._transmit(plain)
        elif state is LinkState.PAUSED:
            self.queue.append(plain)
        else:
            self.frames_dropped += 1
        nxt = now + self.frame_interval_ms
        if nxt <= self._until:
            self.clock.schedule(nxt, self._tick, label="traffic")

    def _transmit(self, plain: bytes) -> None:
        if self.send(self.tx.seal(plain)):
            self.in_flight += 1
        else:
            self.frames_dropped += 1

    def keepalive(self) -> None:
        """Null data frame; carries no goodput, confirms the installed key to the peer."""
        if self.tx.state is LinkState.UP:
            self.send(self.tx.seal(_PLAIN.pack(0, self.clock.now_ms, 0), FLAG_NULL))

    def flush(self) -> None:
        """Transmit frames held during a switchover pause under the current key."""
        while self.queue and self.tx.state is LinkState.UP:
            self._transmit(self.queue.popleft())
        if self.tx.state is LinkState.DOWN:
            self.frames_dropped += len(self.queue)
            self.queue.clear()

    def receive(self, data: bytes) -> None:
        is_null = bool(_DATA_HDR.unpack_from(data)[2] & FLAG_NULL)
        plain = self.rx.open(data)
        if plain is not None and self.on_rx is not None:
            self.on_rx(self.rx.epoch)
        if is_null:
            return
        self.in_flight -= 1
        if plain is None:
            self.frames_dropped += 1
            return
        _, generated, bits = _PLAIN.unpack(plain)
        now = self.clock.now_ms
        self.frames_delivered += 1
        latency = now - generated
        self.latencies.append(latency)
        self._interval_latency.append(latency)
        self._window.append((now, bits))
        self._window_bits += bits

    def _sample(self) -> None:
        now = self.clock.now_ms
        start = now - self.window_ms
        while self._window and self._window[0][0] <= start:
            self._window_bits -= self._window.popleft()[1]
        span = min(self.window_ms, now - self._origin)
        throughput = self._window_bits / span / 1000.0 if span > 0 else 0.0
        # frames drained after a pause land late; the link still cannot exceed its rate
        throughput = min(throughput, self.tx.nominal_throughput_mbps)
        lat = self._interval_latency
        latency = sum(lat) / len(lat) if lat else None
        self._interval_latency = []
        self.samples.append(MetricSample(now, throughput, latency, self.rx.decrypt_failures,
                                         link_pair_state(self.tx, self.rx), self.tx.epoch,
                                         self.phase_probe()))
        nxt = now + self.sample_interval_ms
        if nxt <= self._until:
            self.clock.schedule(nxt, self._sample, label="sample")
