"""Seeded drop / duplicate / reorder / corrupt injection on selected frame kinds."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .channels import MediumTaggedFrame

COMMIT_KINDS = frozenset({"Prepare", "PrepareAck", "Commit", "CommitAck", "Abort"})


@dataclass
class FaultInjector:
    rng: random.Random
    kinds: frozenset[str] = COMMIT_KINDS
    drop: float = 0.0
    duplicate: float = 0.0
    delay: float = 0.0
    max_delay_ms: float = 10.0
    corrupt: float = 0.0
    always_drop: frozenset[str] = frozenset()
    active_from_ms: float = 0.0
    log: list[tuple[float, str, str]] = field(default_factory=list)

    def perturb(self, frame: MediumTaggedFrame, at_ms: float) -> list[tuple[float, bytes]]:
        if frame.kind in self.always_drop and frame.tx_time_ms >= self.active_from_ms:
            self.log.append((frame.tx_time_ms, frame.kind, "drop"))
            return []
        if frame.kind not in self.kinds or frame.tx_time_ms < self.active_from_ms:
            return [(at_ms, frame.payload)]
        rng = self.rng
        # fixed number of draws per frame keeps schedules comparable across seeds
        r_drop, r_dup, r_delay, r_corrupt = rng.random(), rng.random(), rng.random(), rng.random()
        extra = rng.uniform(0.0, self.max_delay_ms)
        dup_extra = rng.uniform(0.0, self.max_delay_ms)
        if r_drop < self.drop:
            self.log.append((frame.tx_time_ms, frame.kind, "drop"))
            return []
        payload = frame.payload
        if r_corrupt < self.corrupt and payload:
            idx = rng.randrange(len(payload))
            payload = payload[:idx] + bytes([payload[idx] ^ 0x01]) + payload[idx + 1:]
            self.log.append((frame.tx_time_ms, frame.kind, "corrupt"))
        first = at_ms
        if r_delay < self.delay:
            first = at_ms + extra
            self.log.append((frame.tx_time_ms, frame.kind, "delay"))
        copies = [(first, payload)]
        if r_dup < self.duplicate:
            copies.append((at_ms + dup_extra, payload))
            self.log.append((frame.tx_time_ms, frame.kind, "duplicate"))
        return copies
