"""Passive eavesdroppers: what can be recovered from one tap's transcript.

Two recovery paths exist:

* direct observation: a cleartext PassphraseDeliver plus the handshake nonces
  gives the PTK outright (only an in-cone LiFi tap ever sees these);
* dictionary attack: with M1's ANonce and M2's SNonce and MIC, each candidate
  passphrase is turned into a PTK and tested against the M2 MIC. This is the
  standard offline attack on a captured WPA2 handshake.

A recovered PTK is always confirmed against the M2 MIC before it is returned,
so a positive result is never a guess.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Sequence

from . import eapol
from .crypto import Ptk, derive_pmk, derive_ptk, new_passphrase, verify_mic
from .dataplane import is_data_frame, open_data_frame
from .keysync import SyncError, SyncKind, SyncMessage, is_sync
from .netsim import Medium, Transcript


class Method(str, Enum):
    DIRECT = "DirectObservation"
    DICTIONARY = "DictionaryAttack"
    FAILED = "Failed"


@dataclass(frozen=True)
class KnownParams:
    """Public values any listener learns from beacons and frame headers."""
    ssid: bytes
    aa: bytes
    spa: bytes


@dataclass(frozen=True)
class AttackResult:
    recovered_ptk: Ptk | None
    method: Method
    candidates_tried: int = 0
    passphrase: bytes | None = None

    def __post_init__(self):
        if (self.recovered_ptk is None) != (self.method is Method.FAILED):
            raise ValueError("recovered_ptk must be present iff method is not Failed")

    @property
    def recovered(self) -> bool:
        return self.recovered_ptk is not None


FAILED = AttackResult(None, Method.FAILED, 0)


@dataclass(frozen=True)
class CapturedExchange:
    anonce: bytes
    m2: eapol.EapolKeyFrame
    t_ms: float


class PmkTable:
    """Precomputed PMKs for one SSID: the attacker pays PBKDF2 once per candidate."""

    def __init__(self, ssid: bytes, dictionary: Iterable[bytes],
                 kdf: Callable[[bytes, bytes], bytes] = derive_pmk):
        self.ssid = ssid
        self._pmks = {p: kdf(p, ssid) for p in dictionary}

    def __len__(self) -> int:
        return len(self._pmks)

    def get(self, passphrase: bytes) -> bytes:
        pmk = self._pmks.get(passphrase)
        return pmk if pmk is not None else derive_pmk(passphrase, self.ssid)


def build_dictionary(truths: Sequence[bytes], size: int, rng: random.Random) -> list[bytes]:
    """Decoy passphrases with every true one placed at a seeded position."""
    truths = list(dict.fromkeys(truths))
    if len(truths) > size:
        raise ValueError("dictionary smaller than the set of true passphrases")
    seen = set(truths)
    words: list[bytes] = []
    while len(words) < size - len(truths):
        w = new_passphrase(rng)
        if w not in seen:
            seen.add(w)
            words.append(w)
    for t in truths:
        words.insert(rng.randrange(len(words) + 1), t)
    return words


def parse_transcript(transcript: Transcript):
    """Split a capture into handshake exchanges and cleartext passphrases, in order."""
    exchanges: list[CapturedExchange] = []
    passphrases: list[tuple[float, bytes]] = []
    anonce = None
    for t_ms, data in transcript.frames:
        if eapol.is_eapol(data):
            try:
                frame = eapol.decode(data)
            except eapol.EapolError:
                continue
            if frame.msg_kind in (eapol.MsgKind.M1, eapol.MsgKind.M3):
                anonce = frame.nonce
            elif frame.msg_kind is eapol.MsgKind.M2 and anonce is not None:
                exchanges.append(CapturedExchange(anonce, frame, t_ms))
        elif is_sync(data):
            try:
                msg = SyncMessage.decode(data)
            except SyncError:
                continue
            if msg.kind is SyncKind.PassphraseDeliver:
                passphrases.append((t_ms, msg.payload))
    return exchanges, passphrases


def _try(pmk: bytes, known: KnownParams, ex: CapturedExchange) -> Ptk | None:
    ptk = derive_ptk(pmk, known.aa, known.spa, ex.anonce, ex.m2.nonce)
    if verify_mic(ptk.kck, eapol.mic_scope(ex.m2), ex.m2.mic):
        return ptk
    return None


def attack(transcript: Transcript, dictionary: Sequence[bytes], known: KnownParams,
           pmk_for: Callable[[bytes], bytes] | None = None) -> AttackResult:
    exchanges, passphrases = parse_transcript(transcript)
    if not exchanges:
        return FAILED
    target = exchanges[-1]
    pmk_of = pmk_for or (lambda p: derive_pmk(p, known.ssid))
    # the passphrase that preceded the targeted handshake
    for t_ms, passphrase in reversed(passphrases):
        if t_ms <= target.t_ms:
            ptk = _try(pmk_of(passphrase), known, target)
            if ptk is not None:
                return AttackResult(ptk, Method.DIRECT, 0, passphrase)
    for k, candidate in enumerate(dictionary, start=1):
        ptk = _try(pmk_of(candidate), known, target)
        if ptk is not None:
            return AttackResult(ptk, Method.DICTIONARY, k, candidate)
    return AttackResult(None, Method.FAILED, len(dictionary))


def validate_recovery(ptk: Ptk, transcript_or_frames) -> bool:
    """True iff the key opens a captured data frame (ground truth check)."""
    frames = getattr(transcript_or_frames, "frames", transcript_or_frames)
    for item in frames:
        data = item[1] if isinstance(item, tuple) else item
        if is_data_frame(data):
            try:
                open_data_frame(ptk.tk, data)
                return True
            except ValueError:
                return False
    return False


KEY_FRAME_KINDS = ("PassphraseDeliver", "Prepare", "PrepareAck", "Commit", "CommitAck", "Abort",
                   "M1", "M2", "M3", "M4")


def key_frames_in(transcript: Transcript) -> list[tuple[float, str]]:
    """Every key-establishment frame in a capture, as (time, kind)."""
    out = []
    for t_ms, data in transcript.frames:
        if eapol.is_eapol(data) and len(data) > 3:
            try:
                out.append((t_ms, eapol.MsgKind(data[3]).name))
            except ValueError:
                out.append((t_ms, "EAPOL?"))
        elif is_sync(data):
            try:
                out.append((t_ms, SyncMessage.decode(data).kind.name))
            except SyncError:
                out.append((t_ms, "Sync?"))
    return out


@dataclass
class ConfinementReport:
    ok: bool
    violations: list[dict] = field(default_factory=list)
    results: dict[str, AttackResult] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.ok


def verify_confinement(transcripts: Iterable[Transcript], dictionary: Sequence[bytes], known: KnownParams,
                       pmk_for: Callable[[bytes], bytes] | None = None) -> ConfinementReport:
    """True iff no RF or out-of-cone LiFi capture yields a key or holds any
    key-establishment frame.

    Violations name the tap, the first key-establishment frame it captured,
    and the attack outcome, so a leak points straight at its source.
    """
    report = ConfinementReport(True)
    for tr in transcripts:
        if tr.medium is Medium.LIFI and tr.in_cone:
            continue
        result = attack(tr, dictionary, known, pmk_for)
        report.results[tr.tap_id] = result
        leaked = key_frames_in(tr)
        if result.recovered or leaked:
            report.ok = False
            first = leaked[0] if leaked else (None, None)
            report.violations.append({"tap_id": tr.tap_id, "medium": tr.medium.value,
                                      "t_ms": first[0], "frame_kind": first[1],
                                      "method": result.method.value})
    return report
