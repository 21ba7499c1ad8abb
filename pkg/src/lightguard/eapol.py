"""EAPOL-Key frame codec for handshake messages M1..M4.

Wire layout (all integers big-endian)::

    offset  size  field
    0       2     magic 0x4C47 ("LG")
    2       1     version 0x01
    3       1     msg_kind (1=M1 .. 4=M4)
    4       1     key_info: bit0 pairwise, bit1 install, bit2 ack,
                  bit3 mic_present, bit4 secure; bits 5-7 reserved (zero)
    5       8     replay_counter
    13      32    nonce
    45      16    mic
    61      2     key_data length L (<= 256)
    63      L     key_data
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from enum import IntEnum, IntFlag

from .crypto import MIC_LEN, NONCE_LEN

MAGIC = b"LG"
VERSION = 1
MAX_KEY_DATA = 256
_HEADER = struct.Struct(">2sBBBQ32s16sH")
HEADER_LEN = _HEADER.size  # 63

ZERO_NONCE = bytes(NONCE_LEN)
ZERO_MIC = bytes(MIC_LEN)


class MsgKind(IntEnum):
    M1 = 1
    M2 = 2
    M3 = 3
    M4 = 4


class KeyInfo(IntFlag):
    PAIRWISE = 0x01
    INSTALL = 0x02
    ACK = 0x04
    MIC = 0x08
    SECURE = 0x10


_KNOWN_BITS = int(KeyInfo.PAIRWISE | KeyInfo.INSTALL | KeyInfo.ACK | KeyInfo.MIC | KeyInfo.SECURE)

# flags that must be set / clear per message; SECURE is left unconstrained
_REQUIRED = {
    MsgKind.M1: (KeyInfo.PAIRWISE | KeyInfo.ACK, KeyInfo.MIC | KeyInfo.INSTALL),
    MsgKind.M2: (KeyInfo.PAIRWISE | KeyInfo.MIC, KeyInfo.ACK | KeyInfo.INSTALL),
    MsgKind.M3: (KeyInfo.PAIRWISE | KeyInfo.ACK | KeyInfo.INSTALL | KeyInfo.MIC, KeyInfo(0)),
    MsgKind.M4: (KeyInfo.PAIRWISE | KeyInfo.MIC, KeyInfo.ACK | KeyInfo.INSTALL),
}

DEFAULT_KEY_INFO = {
    MsgKind.M1: KeyInfo.PAIRWISE | KeyInfo.ACK,
    MsgKind.M2: KeyInfo.PAIRWISE | KeyInfo.MIC,
    MsgKind.M3: KeyInfo.PAIRWISE | KeyInfo.ACK | KeyInfo.INSTALL | KeyInfo.MIC | KeyInfo.SECURE,
    MsgKind.M4: KeyInfo.PAIRWISE | KeyInfo.MIC | KeyInfo.SECURE,
}


class EapolError(ValueError):
    pass


class TruncatedFrame(EapolError):
    pass


class UnknownMessageKind(EapolError):
    pass


class MalformedFrame(EapolError):
    """Bad magic, version, reserved bits, or length mismatch."""


class InvariantViolation(EapolError):
    def __init__(self, field: str, reason: str):
        super().__init__(f"{field}: {reason}")
        self.field = field


@dataclass(frozen=True)
class EapolKeyFrame:
    msg_kind: MsgKind
    key_info: KeyInfo
    replay_counter: int
    nonce: bytes = ZERO_NONCE
    mic: bytes = ZERO_MIC
    key_data: bytes = b""

    @classmethod
    def build(cls, kind: MsgKind, replay_counter: int, nonce: bytes = ZERO_NONCE,
              key_data: bytes = b"") -> EapolKeyFrame:
        return cls(kind, DEFAULT_KEY_INFO[kind], replay_counter, nonce, ZERO_MIC, key_data)

    def with_mic(self, mic: bytes) -> EapolKeyFrame:
        return replace(self, mic=mic)


def validate(frame: EapolKeyFrame) -> None:
    """Raise InvariantViolation naming the first offending field."""
    try:
        kind = MsgKind(frame.msg_kind)
    except ValueError:
        raise InvariantViolation("msg_kind", f"unknown kind {frame.msg_kind!r}") from None
    info = int(frame.key_info)
    if info & ~_KNOWN_BITS:
        raise InvariantViolation("key_info", "reserved bits set")
    must_set, must_clear = _REQUIRED[kind]
    if info & must_set != must_set:
        raise InvariantViolation("key_info", f"{kind.name} requires {must_set!r}")
    if info & must_clear:
        raise InvariantViolation("key_info", f"{kind.name} forbids {must_clear!r}")
    if not 0 <= frame.replay_counter < 1 << 64:
        raise InvariantViolation("replay_counter", "not an unsigned 64-bit value")
    if len(frame.nonce) != NONCE_LEN:
        raise InvariantViolation("nonce", f"must be {NONCE_LEN} octets")
    if kind is MsgKind.M4:
        if frame.nonce != ZERO_NONCE:
            raise InvariantViolation("nonce", "M4 carries no nonce")
    elif frame.nonce == ZERO_NONCE:
        raise InvariantViolation("nonce", f"{kind.name} requires a nonce")
    if len(frame.mic) != MIC_LEN:
        raise InvariantViolation("mic", f"must be {MIC_LEN} octets")
    if not info & KeyInfo.MIC and frame.mic != ZERO_MIC:
        raise InvariantViolation("mic", "MIC present without mic_present flag")
    if len(frame.key_data) > MAX_KEY_DATA:
        raise InvariantViolation("key_data", f"longer than {MAX_KEY_DATA} octets")


def _pack(frame: EapolKeyFrame) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, int(frame.msg_kind), int(frame.key_info),
                        frame.replay_counter, frame.nonce, frame.mic,
                        len(frame.key_data)) + frame.key_data


def encode(frame: EapolKeyFrame) -> bytes:
    validate(frame)
    return _pack(frame)


def decode(data: bytes) -> EapolKeyFrame:
    if len(data) < HEADER_LEN:
        raise TruncatedFrame(f"need {HEADER_LEN} octets, got {len(data)}")
    magic, version, kind, info, counter, nonce, mic, kd_len = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MalformedFrame(f"bad magic {magic!r}")
    if version != VERSION:
        raise MalformedFrame(f"unsupported version {version}")
    if kind not in MsgKind._value2member_map_:
        raise UnknownMessageKind(f"msg_kind {kind}")
    if kd_len > MAX_KEY_DATA:
        raise MalformedFrame(f"key_data length {kd_len} exceeds {MAX_KEY_DATA}")
    end = HEADER_LEN + kd_len
    if len(data) < end:
        raise TruncatedFrame(f"key_data needs {kd_len} octets, got {len(data) - HEADER_LEN}")
    if len(data) > end:
        raise MalformedFrame(f"{len(data) - end} trailing octets")
    if info & ~_KNOWN_BITS:
        raise MalformedFrame("reserved key_info bits set")
    frame = EapolKeyFrame(MsgKind(kind), KeyInfo(info), counter, nonce, mic, bytes(data[HEADER_LEN:end]))
    validate(frame)
    return frame


def mic_scope(frame: EapolKeyFrame) -> bytes:
    """Octets covered by the MIC: the encoding with the MIC field zeroed."""
    return encode(replace(frame, mic=ZERO_MIC))


def is_eapol(data: bytes) -> bool:
    return data[:2] == MAGIC
