"""WPA2 key hierarchy and data-plane protection.

PMK = PBKDF2-HMAC-SHA1(passphrase, ssid, 4096, 32)
PTK = PRF-384(PMK, "Pairwise key expansion", min(AA,SPA) || max(AA,SPA) ||
              min(ANonce,SNonce) || max(ANonce,SNonce))

The PTK is split KCK (0..15) | KEK (16..31) | TK (32..47), the CCMP layout.
"""

from __future__ import annotations

import hashlib
import hmac
import random
import string
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESCCM

PBKDF2_ITERATIONS = 4096
PMK_LEN = 32
PTK_LEN = 48
NONCE_LEN = 32
MAC_LEN = 6
MIC_LEN = 16
TK_LEN = 16
PN_LEN = 6
TAG_LEN = 16
PTK_LABEL = b"Pairwise key expansion"

_PASSPHRASE_ALPHABET = string.ascii_letters + string.digits


class CryptoError(ValueError):
    pass


class InvalidPassphrase(CryptoError):
    pass


class InvalidEndpoint(CryptoError):
    pass


class AuthenticationError(CryptoError):
    """Protected frame failed to authenticate under the given key."""


class ReplayError(CryptoError):
    pass


def check_passphrase(passphrase: str | bytes) -> bytes:
    if isinstance(passphrase, str):
        try:
            passphrase = passphrase.encode("ascii")
        except UnicodeEncodeError as exc:
            raise InvalidPassphrase("passphrase must be printable ASCII") from exc
    if not 8 <= len(passphrase) <= 63:
        raise InvalidPassphrase(f"passphrase length {len(passphrase)} not in [8, 63]")
    if any(not 0x20 <= b <= 0x7E for b in passphrase):
        raise InvalidPassphrase("passphrase contains non-printable octets")
    return bytes(passphrase)


def _as_bytes(value: str | bytes) -> bytes:
    return value.encode() if isinstance(value, str) else bytes(value)


def mac_address(text: str) -> bytes:
    """Parse ``"02:00:00:00:00:01"`` into 6 octets."""
    octets = bytes.fromhex(text.replace(":", "").replace("-", ""))
    if len(octets) != MAC_LEN:
        raise CryptoError(f"MAC address must be {MAC_LEN} octets: {text!r}")
    return octets


def new_nonce(rng: random.Random) -> bytes:
    return rng.getrandbits(NONCE_LEN * 8).to_bytes(NONCE_LEN, "big")


def new_passphrase(rng: random.Random, length: int = 20) -> bytes:
    # Seeded for reproducibility; a deployment would draw from `secrets`.
    return "".join(rng.choice(_PASSPHRASE_ALPHABET) for _ in range(length)).encode()


def derive_pmk(passphrase: str | bytes, ssid: str | bytes) -> bytes:
    passphrase = check_passphrase(passphrase)
    ssid = _as_bytes(ssid)
    if not 1 <= len(ssid) <= 32:
        raise CryptoError(f"SSID length {len(ssid)} not in [1, 32]")
    return hashlib.pbkdf2_hmac("sha1", passphrase, ssid, PBKDF2_ITERATIONS, PMK_LEN)


def prf_384(key: bytes, label: bytes, data: bytes) -> bytes:
    out = b""
    counter = 0
    while len(out) < PTK_LEN:
        out += hmac.new(key, label + b"\x00" + data + bytes([counter]), hashlib.sha1).digest()
        counter += 1
    return out[:PTK_LEN]


@dataclass(frozen=True)
class Ptk:
    kck: bytes
    kek: bytes
    tk: bytes

    def __post_init__(self):
        for name in ("kck", "kek", "tk"):
            if len(getattr(self, name)) != 16:
                raise CryptoError(f"{name} must be 16 octets")

    @classmethod
    def from_bytes(cls, raw: bytes) -> Ptk:
        if len(raw) != PTK_LEN:
            raise CryptoError(f"PTK must be {PTK_LEN} octets, got {len(raw)}")
        return cls(raw[:16], raw[16:32], raw[32:48])

    def __bytes__(self) -> bytes:
        return self.kck + self.kek + self.tk

    def __repr__(self) -> str:
        # Never print key material in logs or test failures.
        return f"Ptk(<{hashlib.sha256(bytes(self)).hexdigest()[:12]}>)"


def ptk_input(aa: bytes, spa: bytes, anonce: bytes, snonce: bytes) -> bytes:
    return min(aa, spa) + max(aa, spa) + min(anonce, snonce) + max(anonce, snonce)


def derive_ptk(pmk: bytes, aa: bytes, spa: bytes, anonce: bytes, snonce: bytes) -> Ptk:
    if len(aa) != MAC_LEN or len(spa) != MAC_LEN:
        raise InvalidEndpoint("addresses must be 6 octets")
    if aa == spa:
        raise InvalidEndpoint("authenticator and supplicant addresses are equal")
    if len(anonce) != NONCE_LEN or len(snonce) != NONCE_LEN:
        raise CryptoError("nonces must be 32 octets")
    return Ptk.from_bytes(prf_384(pmk, PTK_LABEL, ptk_input(aa, spa, anonce, snonce)))


def compute_mic(kck: bytes, frame_bytes: bytes) -> bytes:
    """HMAC-SHA1-128 over a frame whose MIC field is already zeroed."""
    return hmac.new(kck, frame_bytes, hashlib.sha1).digest()[:MIC_LEN]


def verify_mic(kck: bytes, frame_bytes: bytes, mic: bytes) -> bool:
    return hmac.compare_digest(compute_mic(kck, frame_bytes), mic)


def _ccm_nonce(packet_number: int, direction: int) -> bytes:
    # priority/direction octet | 6 reserved octets | 48-bit PN (CCMP-like)
    return bytes([direction & 0xFF]) + bytes(6) + packet_number.to_bytes(PN_LEN, "big")


def protect_frame(tk: bytes, packet_number: int, payload: bytes, *, direction: int = 0,
                  aad: bytes = b"", _aead: AESCCM | None = None) -> bytes:
    """AES-CCM with a 128-bit tag. Output is ``PN(6) || ciphertext || tag``."""
    if not 0 <= packet_number < 1 << (8 * PN_LEN):
        raise CryptoError("packet number out of 48-bit range")
    header = packet_number.to_bytes(PN_LEN, "big")
    aead = _aead or AESCCM(tk, tag_length=TAG_LEN)
    return header + aead.encrypt(_ccm_nonce(packet_number, direction), payload, aad + header)


def unprotect_frame(tk: bytes, frame: bytes, *, direction: int = 0, aad: bytes = b"",
                    _aead: AESCCM | None = None) -> tuple[int, bytes]:
    if len(frame) < PN_LEN + TAG_LEN:
        raise AuthenticationError("protected frame too short")
    header = frame[:PN_LEN]
    packet_number = int.from_bytes(header, "big")
    aead = _aead or AESCCM(tk, tag_length=TAG_LEN)
    try:
        payload = aead.decrypt(_ccm_nonce(packet_number, direction), frame[PN_LEN:], aad + header)
    except InvalidTag as exc:
        raise AuthenticationError("frame failed authentication") from exc
    return packet_number, payload


class ReplayWindow:
    """Receiver-side strictly-increasing packet number check."""

    def __init__(self):
        self.last: int | None = None

    def check(self, packet_number: int) -> None:
        if self.last is not None and packet_number <= self.last:
            raise ReplayError(f"packet number {packet_number} <= last accepted {self.last}")

    def accept(self, packet_number: int) -> None:
        self.check(packet_number)
        self.last = packet_number
