"""Deterministic discrete-event simulation of the RF and LiFi media."""

from .channels import (
    Delivered,
    Dropped,
    LifiChannelModel,
    LifiMedium,
    Medium,
    MediumTaggedFrame,
    RfChannelModel,
    RfMedium,
    Tap,
    Transcript,
    derive_rng,
    lifi_transmit,
    rf_transmit,
)
from .clock import Hook, InvariantViolation, SchedulingError, SimClock, SimReport
from .faults import COMMIT_KINDS, FaultInjector

__all__ = [
    "COMMIT_KINDS", "Delivered", "Dropped", "FaultInjector", "Hook", "InvariantViolation",
    "LifiChannelModel", "LifiMedium", "Medium", "MediumTaggedFrame", "RfChannelModel",
    "RfMedium", "SchedulingError", "SimClock", "SimReport", "Tap", "Transcript",
    "derive_rng", "lifi_transmit", "rf_transmit",
]
