"""Cross-link key synchronisation: LiFi-bootstrapped PTK, atomically moved to WiFi.

One rekey runs four phases:

1. the AP draws a fresh passphrase and sends it to the STA over LiFi;
2. both derive the PMK and run the 4-Way Handshake over LiFi;
3. the AP coordinates a two-phase commit (Prepare/PrepareAck/Commit/CommitAck);
4. both sides install the new PTK on the WiFi link and resume traffic.

Sessions are immutable; ``advance`` returns the next session and a list of
actions for the owning node to carry out (send, install, arm a timer, ...).

Switchover ordering. On PrepareAck the AP installs the new key and pauses
data in the same step, then sends Commit. The STA installs on Commit, answers
CommitAck, and stays Committed until the first frame protected under the new
epoch arrives from the AP (which only resumes after CommitAck). An STA that
hears nothing by its deadline rolls back.

If CommitAck never arrives the AP rolls back, sends Abort, and keeps data
paused until the STA's own deadline has certainly passed, so both ends are
back on the old key before any frame flows again.
"""

from __future__ import annotations

import hashlib
import hmac
import random
import struct
from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from typing import Union

from .crypto import Ptk, new_passphrase
from .fourway import HandshakeOutcome

SYNC_MAGIC = b"LS"
_SYNC_HDR = struct.Struct(">2sBBQH")  # magic, version, kind, epoch, payload length
SYNC_VERSION = 1
DIGEST_LEN = 32

ABORT_KEEP = b"\x00"
ABORT_DISCONNECT = b"\x01"


class Role(str, Enum):
    AP = "AP"
    STA = "STA"


class Phase(str, Enum):
    IDLE = "Idle"
    PASSPHRASE_SENT = "PassphraseSent"
    HANDSHAKING = "Handshaking"
    PTK_DERIVED = "PtkDerived"
    PREPARE_SENT = "PrepareSent"
    PREPARED = "Prepared"
    COMMITTED = "Committed"
    ACTIVE = "Active"
    DISCONNECTED = "Disconnected"


REKEY_PHASES = frozenset({Phase.PASSPHRASE_SENT, Phase.HANDSHAKING, Phase.PTK_DERIVED,
                          Phase.PREPARE_SENT, Phase.PREPARED, Phase.COMMITTED})
PENDING_PHASES = frozenset({Phase.PTK_DERIVED, Phase.PREPARE_SENT, Phase.PREPARED, Phase.COMMITTED})


class SyncKind(IntEnum):
    PassphraseDeliver = 1
    Prepare = 2
    PrepareAck = 3
    Commit = 4
    CommitAck = 5
    Abort = 6


class SyncError(ValueError):
    pass


class RoleError(SyncError):
    pass


class BusyError(SyncError):
    pass


@dataclass(frozen=True)
class SyncMessage:
    kind: SyncKind
    epoch: int
    payload: bytes = b""

    def encode(self) -> bytes:
        return _SYNC_HDR.pack(SYNC_MAGIC, SYNC_VERSION, int(self.kind), self.epoch,
                              len(self.payload)) + self.payload

    @classmethod
    def decode(cls, data: bytes) -> SyncMessage:
        if len(data) < _SYNC_HDR.size:
            raise SyncError("truncated sync message")
        magic, version, kind, epoch, length = _SYNC_HDR.unpack_from(data)
        if magic != SYNC_MAGIC or version != SYNC_VERSION:
            raise SyncError("not a sync message")
        if len(data) != _SYNC_HDR.size + length:
            raise SyncError("sync payload length mismatch")
        try:
            kind = SyncKind(kind)
        except ValueError:
            raise SyncError(f"unknown sync kind {kind}") from None
        return cls(kind, epoch, bytes(data[_SYNC_HDR.size:]))


def is_sync(data: bytes) -> bool:
    return data[:2] == SYNC_MAGIC


def ptk_digest(ptk: Ptk, epoch: int) -> bytes:
    """Agreement check for Prepare; keyed by the KCK so the PTK never leaves the node."""
    return hmac.new(ptk.kck, b"lightguard prepare" + epoch.to_bytes(8, "big") + ptk.tk,
                    hashlib.sha256).digest()


@dataclass(frozen=True)
class RekeyPolicy:
    interval_ms: float = 30_000.0
    commit_timeout_ms: float = 100.0
    handshake_timeout_ms: float = 100.0
    max_retries: int = 4
    commit_retries: int = 4
    pmk_derivation_ms: float = 4.0
    hold_old_key_on_failure: bool = False

    def __post_init__(self):
        if self.interval_ms <= 0 or self.commit_timeout_ms <= 0 or self.handshake_timeout_ms <= 0:
            raise ValueError("interval_ms, commit_timeout_ms and handshake_timeout_ms must be > 0")
        if self.max_retries < 0 or self.commit_retries < 0 or self.pmk_derivation_ms < 0:
            raise ValueError("retry counts and pmk_derivation_ms must be >= 0")

    @property
    def disconnect_on_failure(self) -> bool:
        return True

    @property
    def commit_retry_ms(self) -> float:
        return self.commit_timeout_ms / 4

    @property
    def sta_commit_wait_ms(self) -> float:
        return 3 * self.commit_timeout_ms

    @property
    def abort_quarantine_ms(self) -> float:
        # outlasts the STA deadline armed by the latest Commit it could have seen
        return self.sta_commit_wait_ms + self.commit_timeout_ms / 2

    @property
    def handshake_budget_ms(self) -> float:
        return (self.max_retries + 2) * self.handshake_timeout_ms


# events ----------------------------------------------------------------------

@dataclass(frozen=True)
class Timer:
    name: str  # "rekey" | "commit" | "deadline"


@dataclass(frozen=True)
class LinkReport:
    lifi_angle_deg: float
    realigned: bool


@dataclass(frozen=True)
class PmkReady:
    pmk: bytes


@dataclass(frozen=True)
class KeyConfirmed:
    """The STA decrypted a data frame under this epoch."""
    epoch: int


Event = Union[SyncMessage, HandshakeOutcome, Timer, LinkReport, PmkReady, KeyConfirmed]


# actions ---------------------------------------------------------------------

@dataclass(frozen=True)
class SendSync:
    message: SyncMessage


@dataclass(frozen=True)
class DerivePmk:
    passphrase: bytes


@dataclass(frozen=True)
class StartHandshake:
    pmk: bytes


@dataclass(frozen=True)
class StopHandshake:
    pass


@dataclass(frozen=True)
class ArmTimer:
    name: str
    at_ms: float


@dataclass(frozen=True)
class CancelTimer:
    name: str


@dataclass(frozen=True)
class InstallKey:
    epoch: int
    ptk: Ptk


@dataclass(frozen=True)
class RollbackKey:
    pass


@dataclass(frozen=True)
class PauseData:
    pass


@dataclass(frozen=True)
class ResumeData:
    pass


@dataclass(frozen=True)
class LinkDown:
    pass


@dataclass(frozen=True)
class PhaseChange:
    phase_from: Phase
    phase_to: Phase
    epoch: int


@dataclass(frozen=True)
class RekeyFinished:
    success: bool
    reason: str = ""


Action = Union[SendSync, DerivePmk, StartHandshake, StopHandshake, ArmTimer, CancelTimer,
               InstallKey, RollbackKey, PauseData, ResumeData, LinkDown, PhaseChange, RekeyFinished]


@dataclass(frozen=True)
class KeySyncSession:
    role: Role
    policy: RekeyPolicy = RekeyPolicy()
    phase: Phase = Phase.IDLE
    epoch: int = 0
    pending_ptk: Ptk | None = None
    active_ptk: Ptk | None = None
    commit_deadline: float | None = None
    passphrase: bytes | None = None
    retransmissions: int = 0
    aligned: bool = True
    aborting: bool = False

    @property
    def proposed_epoch(self) -> int:
        return self.epoch + 1

    @property
    def rekeying(self) -> bool:
        return self.phase in REKEY_PHASES


def _goto(session: KeySyncSession, phase: Phase, actions: list, **changes) -> KeySyncSession:
    new = replace(session, phase=phase, **changes)
    if phase is not session.phase:
        actions.append(PhaseChange(session.phase, phase, new.epoch))
    return new


def _fallback_phase(session: KeySyncSession) -> Phase:
    return Phase.ACTIVE if session.active_ptk is not None else Phase.DISCONNECTED


def _clear(**extra):
    return dict(pending_ptk=None, commit_deadline=None, passphrase=None, retransmissions=0,
                aborting=False, **extra)


def start_rekey(session: KeySyncSession, rng: random.Random) -> tuple[KeySyncSession, SyncMessage]:
    """Phase 1 on the AP: draw a passphrase and address it to the STA over LiFi."""
    if session.role is not Role.AP:
        raise RoleError("only the AP starts a rekey")
    if session.rekeying:
        raise BusyError(f"rekey already in progress ({session.phase.value})")
    passphrase = new_passphrase(rng)
    message = SyncMessage(SyncKind.PassphraseDeliver, session.proposed_epoch, passphrase)
    return replace(session, phase=Phase.PASSPHRASE_SENT, passphrase=passphrase,
                   pending_ptk=None, retransmissions=0), message


def _begin_rekey(session, now_ms, rng, actions):
    new, message = start_rekey(session, rng)
    actions.append(PhaseChange(session.phase, new.phase, new.epoch))
    actions += [SendSync(message), DerivePmk(message.payload)]
    return new


def advance(session: KeySyncSession, event: Event, now_ms: float,
            rng: random.Random | None = None) -> tuple[KeySyncSession, list[Action]]:
    actions: list[Action] = []
    if session.role is Role.AP:
        new = _advance_ap(session, event, now_ms, rng, actions)
    else:
        new = _advance_sta(session, event, now_ms, actions)
    return new, actions


# AP (coordinator) ---------------------------------------------------------------

def _ap_fail_handshake(s, actions, reason):
    actions.append(StopHandshake())
    if s.policy.hold_old_key_on_failure and s.active_ptk is not None:
        s = _goto(s, Phase.ACTIVE, actions, **_clear())
        actions.append(SendSync(SyncMessage(SyncKind.Abort, s.proposed_epoch, ABORT_KEEP)))
    else:
        epoch = s.proposed_epoch
        s = _goto(s, Phase.DISCONNECTED, actions, **_clear())
        actions += [LinkDown(), SendSync(SyncMessage(SyncKind.Abort, epoch, ABORT_DISCONNECT))]
    actions.append(RekeyFinished(False, reason))
    return s


def _ap_abort_keep(s, actions, reason, notify=True):
    epoch = s.proposed_epoch
    phase = _fallback_phase(s)
    s = _goto(s, phase, actions, **_clear())
    actions.append(CancelTimer("commit"))
    if phase is Phase.DISCONNECTED:
        actions.append(LinkDown())
    if notify:
        actions.append(SendSync(SyncMessage(SyncKind.Abort, epoch, ABORT_KEEP)))
    actions.append(RekeyFinished(False, reason))
    return s


def _advance_ap(s: KeySyncSession, event, now_ms, rng, actions) -> KeySyncSession:
    p = s.policy
    if isinstance(event, Timer):
        if event.name == "rekey":
            actions.append(ArmTimer("rekey", now_ms + p.interval_ms))
            if s.phase in (Phase.IDLE, Phase.ACTIVE) or (s.phase is Phase.DISCONNECTED and s.aligned):
                return _begin_rekey(s, now_ms, rng or random.Random(), actions)
            return s
        if event.name == "commit":
            if s.phase is Phase.PREPARE_SENT:
                if s.retransmissions < p.commit_retries:
                    actions += [SendSync(SyncMessage(SyncKind.Prepare, s.proposed_epoch,
                                                     ptk_digest(s.pending_ptk, s.proposed_epoch))),
                                ArmTimer("commit", now_ms + p.commit_retry_ms)]
                    return replace(s, retransmissions=s.retransmissions + 1)
                return _ap_abort_keep(s, actions, "prepare-timeout")
            if s.phase is Phase.COMMITTED:
                if s.aborting:
                    phase = _fallback_phase(s)
                    s = _goto(s, phase, actions, **_clear())
                    actions.append(ResumeData() if phase is Phase.ACTIVE else LinkDown())
                    actions.append(RekeyFinished(False, "commit-timeout"))
                    return s
                if s.retransmissions < p.commit_retries:
                    actions += [SendSync(SyncMessage(SyncKind.Commit, s.proposed_epoch)),
                                ArmTimer("commit", now_ms + p.commit_retry_ms)]
                    return replace(s, retransmissions=s.retransmissions + 1)
                # the STA may hold the new key: roll back, tell it, and stay paused
                # until its own deadline has forced it back as well
                actions += [RollbackKey(),
                            SendSync(SyncMessage(SyncKind.Abort, s.proposed_epoch, ABORT_KEEP)),
                            ArmTimer("commit", now_ms + p.abort_quarantine_ms)]
                return replace(s, aborting=True)
        return s

    if isinstance(event, LinkReport):
        s = replace(s, aligned=event.realigned)
        if s.phase is Phase.DISCONNECTED and event.realigned:
            return _begin_rekey(s, now_ms, rng or random.Random(), actions)
        return s

    if isinstance(event, PmkReady):
        if s.phase is Phase.PASSPHRASE_SENT:
            s = _goto(s, Phase.HANDSHAKING, actions)
            actions.append(StartHandshake(event.pmk))
        return s

    if isinstance(event, HandshakeOutcome):
        if s.phase is not Phase.HANDSHAKING:
            return s
        if not event.success:
            return _ap_fail_handshake(s, actions, f"handshake-{event.result.value}")
        epoch = s.proposed_epoch
        s = _goto(s, Phase.PTK_DERIVED, actions, pending_ptk=event.ptk)
        s = _goto(s, Phase.PREPARE_SENT, actions, retransmissions=0)
        actions += [SendSync(SyncMessage(SyncKind.Prepare, epoch, ptk_digest(event.ptk, epoch))),
                    ArmTimer("commit", now_ms + p.commit_retry_ms)]
        return s

    if isinstance(event, SyncMessage):
        if event.epoch != s.proposed_epoch:
            return s
        if event.kind is SyncKind.PrepareAck and s.phase is Phase.PREPARE_SENT:
            s = _goto(s, Phase.COMMITTED, actions, retransmissions=0)
            actions += [InstallKey(s.proposed_epoch, s.pending_ptk), PauseData(),
                        SendSync(SyncMessage(SyncKind.Commit, s.proposed_epoch)),
                        ArmTimer("commit", now_ms + p.commit_retry_ms)]
            return s
        if event.kind is SyncKind.CommitAck and s.phase is Phase.COMMITTED and not s.aborting:
            s = _goto(s, Phase.ACTIVE, actions, active_ptk=s.pending_ptk, epoch=s.proposed_epoch,
                      **_clear())
            actions += [CancelTimer("commit"), ResumeData(), RekeyFinished(True)]
            return s
        if event.kind is SyncKind.Abort and s.phase in (Phase.PTK_DERIVED, Phase.PREPARE_SENT):
            return _ap_abort_keep(s, actions, "sta-abort", notify=False)
    return s


# STA (participant) ---------------------------------------------------------------

def _sta_abandon(s, actions, phase, rollback):
    if rollback:
        actions.append(RollbackKey())
    actions += [StopHandshake(), CancelTimer("deadline")]
    s = _goto(s, phase, actions, **_clear())
    if phase is Phase.DISCONNECTED:
        actions.append(LinkDown())
    return s


def _deadline(s, at_ms, actions, **changes):
    actions.append(ArmTimer("deadline", at_ms))
    return replace(s, commit_deadline=at_ms, **changes)


def _advance_sta(s: KeySyncSession, event, now_ms, actions) -> KeySyncSession:
    p = s.policy
    if isinstance(event, LinkReport):
        return replace(s, aligned=event.realigned)

    if isinstance(event, PmkReady):
        if s.phase is Phase.HANDSHAKING:
            actions.append(StartHandshake(event.pmk))
        return s

    if isinstance(event, HandshakeOutcome):
        if s.phase is Phase.HANDSHAKING and event.success:
            s = _goto(s, Phase.PTK_DERIVED, actions, pending_ptk=event.ptk)
            return _deadline(s, now_ms + p.handshake_budget_ms + 2 * p.commit_timeout_ms, actions)
        return s

    if isinstance(event, KeyConfirmed):
        if s.phase is Phase.COMMITTED and event.epoch == s.proposed_epoch:
            s = _goto(s, Phase.ACTIVE, actions, active_ptk=s.pending_ptk, epoch=s.proposed_epoch,
                      **_clear())
            actions += [CancelTimer("deadline"), RekeyFinished(True)]
        return s

    if isinstance(event, Timer):
        if event.name != "deadline" or s.commit_deadline is None or now_ms < s.commit_deadline:
            return s
        if s.phase is Phase.HANDSHAKING:
            hold = p.hold_old_key_on_failure and s.active_ptk is not None
            s = _sta_abandon(s, actions, Phase.ACTIVE if hold else Phase.DISCONNECTED, False)
            actions.append(RekeyFinished(False, "deadline"))
        elif s.phase in (Phase.PTK_DERIVED, Phase.PREPARED, Phase.COMMITTED):
            s = _sta_abandon(s, actions, _fallback_phase(s), s.phase is Phase.COMMITTED)
            actions.append(RekeyFinished(False, "deadline"))
        return s

    if not isinstance(event, SyncMessage):
        return s
    msg = event
    kind = msg.kind

    if kind is SyncKind.PassphraseDeliver:
        if msg.epoch != s.proposed_epoch:
            return s
        if s.rekeying:
            if msg.payload == s.passphrase:
                return s  # duplicate delivery
            # the AP gave up on the previous attempt; its new proposal settles the outcome
            s = _sta_abandon(s, actions, _fallback_phase(s), s.phase is Phase.COMMITTED)
            actions.append(RekeyFinished(False, "superseded"))
        s = _goto(s, Phase.HANDSHAKING, actions, passphrase=msg.payload, pending_ptk=None)
        actions.append(DerivePmk(msg.payload))
        return _deadline(s, now_ms + p.pmk_derivation_ms + p.handshake_budget_ms, actions)

    if msg.epoch != s.proposed_epoch:
        return s

    if kind is SyncKind.Prepare and s.phase in (Phase.PTK_DERIVED, Phase.PREPARED):
        if not hmac.compare_digest(msg.payload, ptk_digest(s.pending_ptk, msg.epoch)):
            epoch = s.proposed_epoch
            s = _sta_abandon(s, actions, _fallback_phase(s), False)
            actions += [SendSync(SyncMessage(SyncKind.Abort, epoch, ABORT_KEEP)),
                        RekeyFinished(False, "digest-mismatch")]
            return s
        s = _goto(s, Phase.PREPARED, actions)
        actions.append(SendSync(SyncMessage(SyncKind.PrepareAck, msg.epoch)))
        return _deadline(s, now_ms + p.sta_commit_wait_ms, actions)

    if kind is SyncKind.Commit:
        if s.phase is Phase.PREPARED:
            s = _goto(s, Phase.COMMITTED, actions)
            actions += [InstallKey(msg.epoch, s.pending_ptk),
                        SendSync(SyncMessage(SyncKind.CommitAck, msg.epoch))]
            return _deadline(s, now_ms + p.sta_commit_wait_ms, actions)
        if s.phase is Phase.COMMITTED:
            actions.append(SendSync(SyncMessage(SyncKind.CommitAck, msg.epoch)))
        return s

    if kind is SyncKind.Abort:
        disconnect = msg.payload == ABORT_DISCONNECT
        if s.rekeying:
            phase = Phase.DISCONNECTED if disconnect else _fallback_phase(s)
            s = _sta_abandon(s, actions, phase, s.phase is Phase.COMMITTED)
            actions.append(RekeyFinished(False, "ap-abort"))
        elif disconnect and s.phase in (Phase.ACTIVE, Phase.IDLE):
            # the AP failed a rekey this STA never heard about
            s = _goto(s, Phase.DISCONNECTED, actions)
            actions.append(LinkDown())
        return s
    return s


def handle_link_report(session: KeySyncSession, report: LinkReport, now_ms: float = 0.0,
                       rng: random.Random | None = None) -> tuple[KeySyncSession, list[Action]]:
    return advance(session, report, now_ms, rng)


def commit_atomicity_check(ap: KeySyncSession, ap_link, sta: KeySyncSession, sta_link) -> bool:
    """False iff the two ends could exchange data under different keys and accept it.

    Links are duck-typed: they need ``state`` (Up/Paused/Down) and ``epoch``.
    """
    up_a = ap_link.state.value == "Up"
    up_b = sta_link.state.value == "Up"
    if up_a and up_b and ap_link.epoch != sta_link.epoch:
        return False
    if ap.phase is Phase.ACTIVE and up_b and sta_link.epoch != ap.epoch:
        return False
    if sta.phase is Phase.ACTIVE and up_a and ap_link.epoch != sta.epoch:
        return False
    if ap.phase is Phase.ACTIVE and sta.phase is Phase.ACTIVE:
        if ap.epoch != sta.epoch or ap.active_ptk != sta.active_ptk:
            return False
    return True
