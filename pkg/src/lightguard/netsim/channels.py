"""RF broadcast and angular LiFi media, plus eavesdropper taps."""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Protocol

from .clock import SimClock


class Medium(str, Enum):
    RF = "RF"
    LIFI = "LiFi"


def derive_rng(seed: int, label: str) -> random.Random:
    """Independent substream per label, so adding a channel never shifts another's draws."""
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


@dataclass(frozen=True)
class MediumTaggedFrame:
    medium: Medium
    src: bytes
    dst: bytes
    payload: bytes
    tx_time_ms: float
    kind: str = ""


@dataclass(frozen=True)
class Delivered:
    at_ms: float


@dataclass(frozen=True)
class Dropped:
    pass


DROPPED = Dropped()


@dataclass
class LifiChannelModel:
    angle_deg: float = 0.0
    theta_full_deg: float = 15.0
    theta_cut_deg: float = 25.0
    propagation_delay_ms: float = 1.0
    bitrate_frames_per_ms: float = 10.0

    def __post_init__(self):
        if not 0 < self.theta_full_deg < self.theta_cut_deg:
            raise ValueError("need 0 < theta_full_deg < theta_cut_deg")
        if self.bitrate_frames_per_ms <= 0 or self.propagation_delay_ms < 0:
            raise ValueError("bitrate must be positive and delay non-negative")

    def delivery_probability(self, angle_deg: float | None = None) -> float:
        a = abs(self.angle_deg if angle_deg is None else angle_deg)
        if a <= self.theta_full_deg:
            return 1.0
        if a >= self.theta_cut_deg:
            return 0.0
        return (self.theta_cut_deg - a) / (self.theta_cut_deg - self.theta_full_deg)

    @property
    def frame_time_ms(self) -> float:
        return 1.0 / self.bitrate_frames_per_ms

    def is_aligned(self, angle_deg: float | None = None) -> bool:
        return self.delivery_probability(angle_deg) > 0.0


@dataclass
class RfChannelModel:
    delivery_probability: float = 1.0
    propagation_delay_ms: float = 1.0
    taps: set[str] = field(default_factory=set)

    def __post_init__(self):
        if not 0.0 <= self.delivery_probability <= 1.0:
            raise ValueError("delivery_probability must lie in [0, 1]")


def lifi_transmit(model: LifiChannelModel, frame: MediumTaggedFrame,
                  rng: random.Random) -> Delivered | Dropped:
    if frame.medium is not Medium.LIFI:
        raise ValueError("lifi_transmit needs a LiFi frame")
    p = model.delivery_probability()
    # always consume one draw so the stream stays aligned across angles
    if rng.random() < p:
        return Delivered(frame.tx_time_ms + model.frame_time_ms + model.propagation_delay_ms)
    return DROPPED


def rf_transmit(model: RfChannelModel, frame: MediumTaggedFrame,
                rng: random.Random) -> Delivered | Dropped:
    """Outcome at the intended receiver; taps get a copy regardless (see RfMedium)."""
    if frame.medium is not Medium.RF:
        raise ValueError("rf_transmit needs an RF frame")
    p = model.delivery_probability
    if p >= 1.0 or rng.random() < p:
        return Delivered(frame.tx_time_ms + model.propagation_delay_ms)
    return DROPPED


@dataclass
class Transcript:
    """Append-only capture of one tap; populated only by a medium."""
    medium: Medium
    tap_id: str = ""
    in_cone: bool = False
    frames: list[tuple[float, bytes]] = field(default_factory=list)

    def record(self, t_ms: float, payload: bytes) -> None:
        self.frames.append((t_ms, payload))

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class Tap:
    tap_id: str
    medium: Medium
    in_cone: bool = False
    transcript: Transcript = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.transcript is None:
            self.transcript = Transcript(self.medium, self.tap_id, self.in_cone)


Handler = Callable[[MediumTaggedFrame], None]


class FaultHook(Protocol):
    def perturb(self, frame: MediumTaggedFrame, at_ms: float) -> list[tuple[float, bytes]]: ...


class _BaseMedium:
    medium: Medium

    def __init__(self, clock: SimClock, rng: random.Random, taps=()):
        self.clock = clock
        self.rng = rng
        self.taps: list[Tap] = [t for t in taps if t.medium is self.medium]
        self.handlers: dict[bytes, Handler] = {}
        self.sent: list[MediumTaggedFrame] = []

    def attach(self, mac: bytes, handler: Handler) -> None:
        self.handlers[mac] = handler

    def _deliver(self, frame: MediumTaggedFrame) -> None:
        handler = self.handlers.get(frame.dst)
        if handler is not None:
            handler(frame)


class LifiMedium(_BaseMedium):
    medium = Medium.LIFI

    def __init__(self, clock: SimClock, model: LifiChannelModel, rng: random.Random,
                 taps=(), faults: FaultHook | None = None):
        super().__init__(clock, rng, taps)
        self.model = model
        self.faults = faults
        self._busy_until = 0.0

    def transmit(self, payload: bytes, src: bytes, dst: bytes, kind: str = "") -> bool:
        # half-duplex FIFO serialisation keeps frame order on the optical link
        start = max(self.clock.now_ms, self._busy_until)
        self._busy_until = start + self.model.frame_time_ms
        frame = MediumTaggedFrame(Medium.LIFI, src, dst, payload, start, kind)
        self.sent.append(frame)
        arrival = start + self.model.frame_time_ms + self.model.propagation_delay_ms
        for tap in self.taps:
            if tap.in_cone:
                self.clock.schedule(arrival, tap.transcript.record, arrival, payload, label="tap")
        outcome = lifi_transmit(self.model, frame, self.rng)
        if isinstance(outcome, Dropped):
            return False
        copies = [(outcome.at_ms, payload)]
        if self.faults is not None:
            copies = self.faults.perturb(frame, outcome.at_ms)
        for at_ms, data in copies:
            delivered = frame if data is payload else MediumTaggedFrame(
                frame.medium, src, dst, data, start, kind)
            self.clock.schedule(at_ms, self._deliver, delivered, label=f"lifi:{kind}")
        return bool(copies)


class RfMedium(_BaseMedium):
    medium = Medium.RF

    def __init__(self, clock: SimClock, model: RfChannelModel, rng: random.Random, taps=()):
        super().__init__(clock, rng, taps)
        self.model = model
        model.taps.update(t.tap_id for t in self.taps)

    def transmit(self, payload: bytes, src: bytes, dst: bytes, kind: str = "") -> bool:
        now = self.clock.now_ms
        frame = MediumTaggedFrame(Medium.RF, src, dst, payload, now, kind)
        self.sent.append(frame)
        arrival = now + self.model.propagation_delay_ms
        for tap in self.taps:
            # broadcast medium: every tap hears every frame
            tap.transcript.record(arrival, payload)
        outcome = rf_transmit(self.model, frame, self.rng)
        if isinstance(outcome, Dropped):
            return False
        self.clock.schedule(outcome.at_ms, self._deliver, frame, label=f"rf:{kind}")
        return True
