"""WPA2 4-Way Handshake as pure state machines over an arbitrary frame transport.

The authenticator drives retransmission; the supplicant only ever responds.
Step functions return ``(new_state, frames_to_send)`` and never perform I/O.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Protocol, Union

from . import eapol
from .crypto import Ptk, compute_mic, derive_ptk, new_nonce, verify_mic
from .eapol import EapolKeyFrame, KeyInfo, MsgKind
from .netsim.clock import SimClock

DEFAULT_TIMEOUT_MS = 100.0
DEFAULT_MAX_RETRIES = 4


class AuthPhase(Enum):
    IDLE = "Idle"
    SENT_M1 = "SentM1"
    GOT_M2 = "GotM2"
    SENT_M3 = "SentM3"
    DONE = "Done"
    FAILED = "Failed"


class SuppPhase(Enum):
    IDLE = "Idle"
    GOT_M1 = "GotM1"
    SENT_M2 = "SentM2"
    GOT_M3 = "GotM3"
    DONE = "Done"
    FAILED = "Failed"


class Result(Enum):
    SUCCESS = "Success"
    TIMEOUT = "Timeout"
    MIC_FAILURE = "MicFailure"
    ABORTED = "Aborted"


@dataclass(frozen=True)
class Start:
    pass


@dataclass(frozen=True)
class Timeout:
    pass


@dataclass(frozen=True)
class FrameIn:
    frame: EapolKeyFrame


Event = Union[Start, Timeout, FrameIn]


@dataclass(frozen=True)
class HandshakeOutcome:
    result: Result
    ptk: Ptk | None = None
    frames_sent: int = 0
    duration_ms: float = 0.0

    def __post_init__(self):
        if (self.ptk is not None) != (self.result is Result.SUCCESS):
            raise ValueError("ptk must be present iff result is Success")

    @property
    def success(self) -> bool:
        return self.result is Result.SUCCESS


@dataclass(frozen=True)
class AuthenticatorState:
    pmk: bytes
    aa: bytes
    spa: bytes
    anonce: bytes
    phase: AuthPhase = AuthPhase.IDLE
    replay_counter: int = 0
    derived: Ptk | None = None
    snonce: bytes | None = None
    max_retries: int = DEFAULT_MAX_RETRIES
    retries_left: int = DEFAULT_MAX_RETRIES
    mic_failures: int = 0

    @classmethod
    def new(cls, pmk: bytes, aa: bytes, spa: bytes, rng: random.Random,
            max_retries: int = DEFAULT_MAX_RETRIES) -> AuthenticatorState:
        return cls(pmk, aa, spa, new_nonce(rng), max_retries=max_retries, retries_left=max_retries)


@dataclass(frozen=True)
class SupplicantState:
    pmk: bytes
    aa: bytes
    spa: bytes
    snonce: bytes
    phase: SuppPhase = SuppPhase.IDLE
    anonce: bytes | None = None
    derived: Ptk | None = None
    last_replay_counter: int | None = None
    mic_failures: int = 0

    @classmethod
    def new(cls, pmk: bytes, aa: bytes, spa: bytes, rng: random.Random) -> SupplicantState:
        return cls(pmk, aa, spa, new_nonce(rng))


def sign(frame: EapolKeyFrame, kck: bytes) -> EapolKeyFrame:
    return frame.with_mic(compute_mic(kck, eapol.mic_scope(frame)))


def frame_mic_ok(frame: EapolKeyFrame, kck: bytes) -> bool:
    return bool(frame.key_info & KeyInfo.MIC) and verify_mic(kck, eapol.mic_scope(frame), frame.mic)


def _m1(s: AuthenticatorState) -> EapolKeyFrame:
    return EapolKeyFrame.build(MsgKind.M1, s.replay_counter, s.anonce)


def _m3(s: AuthenticatorState) -> EapolKeyFrame:
    return sign(EapolKeyFrame.build(MsgKind.M3, s.replay_counter, s.anonce), s.derived.kck)


def authenticator_step(state: AuthenticatorState, event: Event) -> tuple[AuthenticatorState, list[EapolKeyFrame]]:
    phase = state.phase
    if isinstance(event, Start):
        if phase is not AuthPhase.IDLE:
            return state, []
        s = replace(state, phase=AuthPhase.SENT_M1, replay_counter=state.replay_counter + 1)
        return s, [_m1(s)]

    if isinstance(event, Timeout):
        if phase not in (AuthPhase.SENT_M1, AuthPhase.SENT_M3):
            return state, []
        if state.retries_left <= 0:
            return replace(state, phase=AuthPhase.FAILED, derived=None), []
        s = replace(state, retries_left=state.retries_left - 1, replay_counter=state.replay_counter + 1)
        return s, [_m1(s) if phase is AuthPhase.SENT_M1 else _m3(s)]

    frame = event.frame
    if frame.replay_counter != state.replay_counter:
        return state, []  # stale or replayed
    if phase is AuthPhase.SENT_M1 and frame.msg_kind is MsgKind.M2:
        ptk = derive_ptk(state.pmk, state.aa, state.spa, state.anonce, frame.nonce)
        if not frame_mic_ok(frame, ptk.kck):
            return replace(state, mic_failures=state.mic_failures + 1), []
        # GotM2 is transient: M3 goes out in the same step
        s = replace(state, phase=AuthPhase.SENT_M3, derived=ptk, snonce=frame.nonce,
                    replay_counter=state.replay_counter + 1, retries_left=state.max_retries)
        return s, [_m3(s)]
    if phase is AuthPhase.SENT_M3 and frame.msg_kind is MsgKind.M4:
        if not frame_mic_ok(frame, state.derived.kck):
            return replace(state, mic_failures=state.mic_failures + 1), []
        return replace(state, phase=AuthPhase.DONE), []
    return state, []


def supplicant_step(state: SupplicantState, event: Event) -> tuple[SupplicantState, list[EapolKeyFrame]]:
    if not isinstance(event, FrameIn):
        return state, []  # the supplicant never retransmits on its own
    frame = event.frame
    last = state.last_replay_counter
    if last is not None and frame.replay_counter <= last:
        return state, []

    if frame.msg_kind is MsgKind.M1 and state.phase in (SuppPhase.IDLE, SuppPhase.SENT_M2):
        ptk = derive_ptk(state.pmk, state.aa, state.spa, frame.nonce, state.snonce)
        m2 = sign(EapolKeyFrame.build(MsgKind.M2, frame.replay_counter, state.snonce), ptk.kck)
        s = replace(state, phase=SuppPhase.SENT_M2, anonce=frame.nonce, derived=ptk,
                    last_replay_counter=frame.replay_counter)
        return s, [m2]

    if frame.msg_kind is MsgKind.M3 and state.phase in (SuppPhase.SENT_M2, SuppPhase.DONE):
        # a repeated M3 after Done means our M4 was lost: answer again
        if frame.nonce != state.anonce or not frame_mic_ok(frame, state.derived.kck):
            return replace(state, mic_failures=state.mic_failures + 1), []
        m4 = sign(EapolKeyFrame.build(MsgKind.M4, frame.replay_counter), state.derived.kck)
        return replace(state, phase=SuppPhase.DONE, last_replay_counter=frame.replay_counter), [m4]
    return state, []


Send = Callable[[bytes], None]


class AuthenticatorEndpoint:
    """Binds the authenticator step machine to a clock and a send function."""

    def __init__(self, clock: SimClock, send: Send, state: AuthenticatorState,
                 on_outcome: Callable[[HandshakeOutcome], None],
                 timeout_ms: float = DEFAULT_TIMEOUT_MS):
        self.clock = clock
        self.send = send
        self.state = state
        self.on_outcome = on_outcome
        self.timeout_ms = timeout_ms
        self.frames_sent = 0
        self.started_ms = clock.now_ms
        self.finished = False
        self._timer: int | None = None

    def start(self) -> None:
        self.started_ms = self.clock.now_ms
        self._apply(authenticator_step(self.state, Start()))

    def receive(self, data: bytes) -> None:
        if self.finished:
            return
        try:
            frame = eapol.decode(data)
        except eapol.EapolError:
            return
        self._apply(authenticator_step(self.state, FrameIn(frame)))

    def stop(self) -> None:
        self.finished = True
        if self._timer is not None:
            self.clock.cancel(self._timer)
            self._timer = None

    def _on_timeout(self) -> None:
        self._timer = None
        self._apply(authenticator_step(self.state, Timeout()))

    def _apply(self, result) -> None:
        self.state, frames = result
        for frame in frames:
            self.frames_sent += 1
            self.send(eapol.encode(frame))
        if frames:
            if self._timer is not None:
                self.clock.cancel(self._timer)
            self._timer = self.clock.call_later(self.timeout_ms, self._on_timeout, label="eapol-timeout")
        phase = self.state.phase
        if phase in (AuthPhase.DONE, AuthPhase.FAILED) and not self.finished:
            self.stop()
            duration = self.clock.now_ms - self.started_ms
            if phase is AuthPhase.DONE:
                outcome = HandshakeOutcome(Result.SUCCESS, self.state.derived, self.frames_sent, duration)
            else:
                result = Result.MIC_FAILURE if self.state.mic_failures else Result.TIMEOUT
                outcome = HandshakeOutcome(result, None, self.frames_sent, duration)
            self.on_outcome(outcome)


class SupplicantEndpoint:
    def __init__(self, clock: SimClock, send: Send, state: SupplicantState,
                 on_outcome: Callable[[HandshakeOutcome], None] | None = None):
        self.clock = clock
        self.send = send
        self.state = state
        self.on_outcome = on_outcome
        self.frames_sent = 0
        self.started_ms = clock.now_ms
        self.reported = False

    def receive(self, data: bytes) -> None:
        try:
            frame = eapol.decode(data)
        except eapol.EapolError:
            return
        self.state, frames = supplicant_step(self.state, FrameIn(frame))
        for f in frames:
            self.frames_sent += 1
            self.send(eapol.encode(f))
        if self.state.phase is SuppPhase.DONE and not self.reported:
            self.reported = True
            if self.on_outcome is not None:
                self.on_outcome(HandshakeOutcome(Result.SUCCESS, self.state.derived, self.frames_sent,
                                                 self.clock.now_ms - self.started_ms))

    def stop(self) -> None:
        self.reported = True


class FrameTransport(Protocol):
    """Carries octets between the two endpoints.

    ``carry`` returns one ``(delay_ms, octets)`` pair per copy that reaches
    ``dst``: an empty list is a drop, two entries a duplicate, and the octets
    may differ from the input (corruption).
    """

    closed: bool

    def carry(self, data: bytes, src: bytes, dst: bytes) -> list[tuple[float, bytes]]: ...


class LoopbackTransport:
    def __init__(self, delay_ms: float = 1.0):
        self.delay_ms = delay_ms
        self.closed = False

    def carry(self, data, src, dst):
        return [(self.delay_ms, data)]


class LossyTransport:
    """I.i.d. Bernoulli frame loss."""

    def __init__(self, loss: float, rng: random.Random, delay_ms: float = 1.0):
        self.loss = loss
        self.rng = rng
        self.delay_ms = delay_ms
        self.closed = False

    def carry(self, data, src, dst):
        if self.rng.random() < self.loss:
            return []
        return [(self.delay_ms, data)]


@dataclass
class HandshakeRun:
    outcome: HandshakeOutcome
    authenticator: AuthenticatorState
    supplicant: SupplicantState


def run_handshake(transport: FrameTransport, pmk: bytes, aa: bytes, spa: bytes, *,
                  rng: random.Random | None = None, timeout_ms: float = DEFAULT_TIMEOUT_MS,
                  max_retries: int = DEFAULT_MAX_RETRIES, detail: bool = False):
    """Run one handshake to completion on a private clock.

    Returns a HandshakeOutcome, or a HandshakeRun (outcome plus both final
    states) when ``detail`` is set.
    """
    rng = rng or random.Random(0)
    clock = SimClock()
    outcomes: list[HandshakeOutcome] = []
    aborted = False

    def sender(src: bytes, dst: bytes, deliver: Callable[[bytes], None]) -> Send:
        def send(data: bytes) -> None:
            nonlocal aborted
            if transport.closed:
                aborted = True
                return
            for delay, copy in transport.carry(data, src, dst):
                clock.call_later(delay, deliver, copy, label="eapol")
        return send

    supp = SupplicantEndpoint(clock, None, SupplicantState.new(pmk, aa, spa, rng))  # type: ignore[arg-type]
    auth = AuthenticatorEndpoint(clock, None, AuthenticatorState.new(pmk, aa, spa, rng, max_retries),  # type: ignore[arg-type]
                                 outcomes.append, timeout_ms)
    auth.send = sender(aa, spa, supp.receive)
    supp.send = sender(spa, aa, auth.receive)

    auth.start()
    while not outcomes and not aborted and clock.step() is not None:
        pass
    frames = auth.frames_sent + supp.frames_sent
    duration = clock.now_ms - auth.started_ms
    if aborted and not outcomes:
        auth.stop()
        outcome = HandshakeOutcome(Result.ABORTED, None, frames, duration)
    elif outcomes and outcomes[0].success:
        if supp.state.derived != outcomes[0].ptk:
            # unreachable with a sound MIC check; never report a split key as success
            outcome = HandshakeOutcome(Result.MIC_FAILURE, None, frames, duration)
        else:
            outcome = replace(outcomes[0], frames_sent=frames)
    elif outcomes:
        outcome = replace(outcomes[0], frames_sent=frames)
    else:
        outcome = HandshakeOutcome(Result.TIMEOUT, None, frames, duration)
    if detail:
        return HandshakeRun(outcome, auth.state, supp.state)
    return outcome
