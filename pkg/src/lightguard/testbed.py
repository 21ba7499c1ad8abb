"""One AP and one STA joined by a LiFi link and an RF link, driven by a SimClock.

The testbed is the only place where the pure pieces meet side effects: it
executes the actions a KeySyncSession returns, runs handshake endpoints over
the LiFi medium, installs keys on the WiFi links, pumps traffic over RF, and
checks global invariants after every simulated event.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

from . import eapol
from .config import ScenarioConfig
from .crypto import Ptk, derive_pmk, mac_address
from .dataplane import LinkState, TrafficPump, WifiLink, is_data_frame, link_pair_state
from .fourway import (AuthenticatorEndpoint, AuthenticatorState, SupplicantEndpoint,
                      SupplicantState)
from .keysync import (REKEY_PHASES, ArmTimer, CancelTimer, DerivePmk, InstallKey, KeyConfirmed,
                      KeySyncSession, LinkDown, LinkReport, PauseData, Phase, PhaseChange,
                      PmkReady, RekeyFinished, ResumeData, Role, RollbackKey, SendSync,
                      StartHandshake, StopHandshake, SyncError, SyncMessage, Timer,
                      advance, commit_atomicity_check, is_sync)
from .netsim import (Hook, LifiMedium, Medium, MediumTaggedFrame, RfMedium, SimClock, SimReport,
                     Tap, derive_rng)

AP_WIFI_MAC = mac_address("02:00:00:00:00:01")
STA_WIFI_MAC = mac_address("02:00:00:00:00:02")
AP_LIFI_MAC = mac_address("02:00:00:00:01:01")
STA_LIFI_MAC = mac_address("02:00:00:00:01:02")

KEY_ESTABLISHMENT_KINDS = frozenset({"PassphraseDeliver", "Prepare", "PrepareAck", "Commit",
                                     "CommitAck", "Abort", "M1", "M2", "M3", "M4"})


def frame_kind(data: bytes) -> str:
    if eapol.is_eapol(data) and len(data) > 3:
        try:
            return eapol.MsgKind(data[3]).name
        except ValueError:
            return "EAPOL?"
    if is_sync(data):
        try:
            return SyncMessage.decode(data).kind.name
        except SyncError:
            return "Sync?"
    if is_data_frame(data):
        return "data"
    return "unknown"


@dataclass
class RekeyWindow:
    start_ms: float
    end_ms: float | None = None
    epoch: int = 0
    success: bool | None = None
    reason: str = ""


@dataclass
class Node:
    name: str
    role: Role
    wifi_mac: bytes
    lifi_mac: bytes
    session: KeySyncSession
    link: WifiLink
    rng: object
    timers: dict[str, int] = field(default_factory=dict)
    endpoint: object = None
    held_eapol: bytes | None = None


class Testbed:
    """A single seeded scenario.

    ``kdf`` can be swapped for a memoised derive_pmk when many runs share a
    passphrase stream. ``misroute`` names frame kinds to force onto RF, which
    exists only to prove the confinement checks catch it.
    """

    __test__ = False  # not a pytest class despite the name

    def __init__(self, config: ScenarioConfig, *, kdf: Callable[[bytes, bytes], bytes] = derive_pmk,
                 faults=None, misroute: frozenset[str] = frozenset(), check_invariants: bool = True,
                 traffic: bool | None = None, max_rekeys: int | None = None):
        self.config = config
        self.max_rekeys = max_rekeys
        seed = config.sim.seed
        self.seed = seed
        self.kdf = kdf
        self.ssid = config.sim.ssid.encode()
        self.baseline = config.sim.mode == "baseline"
        self.misroute = frozenset(misroute)
        self.clock = SimClock()
        self.taps = [Tap(t.id, Medium(t.medium), t.in_cone) for t in config.taps]
        self.lifi_model = config.lifi.model()
        self.lifi = LifiMedium(self.clock, self.lifi_model, derive_rng(seed, "lifi"), self.taps, faults)
        self.rf = RfMedium(self.clock, config.rf.model(), derive_rng(seed, "rf"), self.taps)
        self.faults = faults
        policy = config.rekey.policy()
        self.policy = policy
        tc = config.traffic

        def link(mac):
            return WifiLink(mac, tc.nominal_throughput_mbps, tc.base_latency_ms)

        self.ap = Node("AP", Role.AP, AP_WIFI_MAC, AP_LIFI_MAC, KeySyncSession(Role.AP, policy),
                       link(AP_WIFI_MAC), derive_rng(seed, "ap"))
        self.sta = Node("STA", Role.STA, STA_WIFI_MAC, STA_LIFI_MAC, KeySyncSession(Role.STA, policy),
                        link(STA_WIFI_MAC), derive_rng(seed, "sta"))
        self.lifi.attach(AP_LIFI_MAC, lambda f: self._on_lifi(self.ap, f))
        self.lifi.attach(STA_LIFI_MAC, lambda f: self._on_lifi(self.sta, f))
        self.rf.attach(AP_WIFI_MAC, lambda f: self._on_rf(self.ap, f))
        self.rf.attach(STA_WIFI_MAC, lambda f: self._on_rf(self.sta, f))

        self.traffic_enabled = tc.enabled if traffic is None else traffic
        self.pump = TrafficPump(self.clock, self.ap.link, self.sta.link, self._send_data,
                                offered_load_mbps=tc.offered_load_mbps,
                                frame_interval_ms=tc.frame_interval_ms,
                                sample_interval_ms=tc.sample_interval_ms, window_ms=tc.window_ms,
                                phase_probe=self._rekey_phase)
        self.pump.on_rx = self._on_sta_rx
        self._traffic_started = False
        self._rf_drained_at = 0.0

        self.events: list[dict] = []
        self.rekeys: list[RekeyWindow] = []
        self.passphrases: list[bytes] = []
        self.installed: dict[int, Ptk] = {}
        self.link_transitions: list[tuple[float, LinkState]] = [(0.0, link_pair_state(self.ap.link,
                                                                                      self.sta.link))]
        self._rf_checked = 0
        self._epochs = {"AP": 0, "STA": 0}
        self.hooks = [Hook("observer", self._observe)]
        if check_invariants:
            self.hooks += [Hook("commit_atomicity", self._atomicity),
                           Hook("medium_confinement", self._confinement),
                           Hook("epoch_monotonic", self._epoch_monotonic)]

        for step in sorted(config.lifi.angle_schedule, key=lambda s: s.at_ms):
            self.clock.schedule(step.at_ms, self._set_angle, step.angle_deg, label="angle")
        self._arm(self.ap, "rekey", config.rekey.first_rekey_ms)

    # running ------------------------------------------------------------------

    def run(self, until_ms: float | None = None, stop: Callable[[], bool] | None = None) -> SimReport:
        end = self.config.sim.duration_ms if until_ms is None else until_ms
        return self.clock.run_until(end, self.hooks, stop)

    def bootstrap_done(self) -> bool:
        return (not self.ap.session.rekeying and bool(self.rekeys) and self.rekeys[-1].end_ms is not None
                and not self.sta.session.rekeying)

    @property
    def keys_agree(self) -> bool:
        a, s = self.ap.session, self.sta.session
        return (a.phase is Phase.ACTIVE and s.phase is Phase.ACTIVE and a.epoch == s.epoch
                and a.active_ptk is not None and a.active_ptk == s.active_ptk)

    # invariants ---------------------------------------------------------------

    def _atomicity(self):
        return commit_atomicity_check(self.ap.session, self.ap.link, self.sta.session, self.sta.link) or (
            f"AP {self.ap.session.phase.value}/e{self.ap.session.epoch} link "
            f"{self.ap.link.state.value}/e{self.ap.link.epoch}; STA {self.sta.session.phase.value}/"
            f"e{self.sta.session.epoch} link {self.sta.link.state.value}/e{self.sta.link.epoch}")

    def _confinement(self):
        sent = self.rf.sent
        while self._rf_checked < len(sent):
            frame = sent[self._rf_checked]
            self._rf_checked += 1
            data = frame.payload
            if is_sync(data) or (eapol.is_eapol(data) and not self.baseline):
                return f"{frame_kind(data)} transmitted on RF at {frame.tx_time_ms} ms"
        return True

    def _epoch_monotonic(self):
        for node in (self.ap, self.sta):
            if node.session.epoch < self._epochs[node.name]:
                return f"{node.name} epoch went {self._epochs[node.name]} -> {node.session.epoch}"
            self._epochs[node.name] = node.session.epoch
        return True

    def _observe(self):
        state = link_pair_state(self.ap.link, self.sta.link)
        if state is not self.link_transitions[-1][1]:
            self.link_transitions.append((self.clock.now_ms, state))
        return True

    # media --------------------------------------------------------------------

    def _peer(self, node: Node) -> Node:
        return self.sta if node is self.ap else self.ap

    def _send_key_frame(self, node: Node, data: bytes, kind: str, *, eapol_frame: bool) -> None:
        peer = self._peer(node)
        on_rf = kind in self.misroute or (eapol_frame and self.baseline)
        medium = Medium.RF if on_rf else Medium.LIFI
        self._log(node, node.session.phase, node.session.phase, medium.value, kind)
        if on_rf:
            self.rf.transmit(data, node.wifi_mac, peer.wifi_mac, kind)
        else:
            self.lifi.transmit(data, node.lifi_mac, peer.lifi_mac, kind)

    def _send_data(self, data: bytes) -> bool:
        self._rf_drained_at = self.clock.now_ms + self.rf.model.propagation_delay_ms
        return self.rf.transmit(data, self.ap.wifi_mac, self.sta.wifi_mac, "data")

    def _on_lifi(self, node: Node, frame: MediumTaggedFrame) -> None:
        self._on_key_frame(node, frame.payload)

    def _on_rf(self, node: Node, frame: MediumTaggedFrame) -> None:
        data = frame.payload
        if is_data_frame(data):
            if node is self.sta:
                self.pump.receive(data)
            return
        self._on_key_frame(node, data)

    def _on_key_frame(self, node: Node, data: bytes) -> None:
        if eapol.is_eapol(data):
            if node.endpoint is not None:
                node.endpoint.receive(data)
            elif node is self.sta and node.session.phase is Phase.HANDSHAKING:
                # still deriving the PMK: hold the latest frame rather than lose it
                node.held_eapol = data
        elif is_sync(data):
            try:
                message = SyncMessage.decode(data)
            except SyncError:
                return
            self._dispatch(node, message)

    def _on_sta_rx(self, epoch: int) -> None:
        if self.sta.session.phase is Phase.COMMITTED:
            self._dispatch(self.sta, KeyConfirmed(epoch))

    def _set_angle(self, angle_deg: float) -> None:
        self.lifi_model.angle_deg = angle_deg
        report = LinkReport(angle_deg, self.lifi_model.is_aligned())
        self._dispatch(self.sta, report)
        self._dispatch(self.ap, report)

    # session plumbing -----------------------------------------------------------

    def _rekey_phase(self) -> str:
        phase = self.ap.session.phase
        return phase.value if phase in REKEY_PHASES else ""

    def _log(self, node: Node, frm: Phase, to: Phase, medium: str = "", kind: str = "") -> None:
        self.events.append({"time_ms": self.clock.now_ms, "node": node.name, "phase_from": frm.value,
                            "phase_to": to.value, "epoch": node.session.epoch, "medium": medium,
                            "message_kind": kind})

    def _arm(self, node: Node, name: str, at_ms: float) -> None:
        old = node.timers.pop(name, None)
        if old is not None:
            self.clock.cancel(old)
        node.timers[name] = self.clock.schedule(max(at_ms, self.clock.now_ms), self._fire, node, name,
                                                label=f"timer:{node.name}:{name}")

    def _fire(self, node: Node, name: str) -> None:
        node.timers.pop(name, None)
        if name == "rekey" and self.max_rekeys is not None and len(self.rekeys) >= self.max_rekeys:
            return
        self._dispatch(node, Timer(name))

    def _dispatch(self, node: Node, event) -> None:
        node.session, actions = advance(node.session, event, self.clock.now_ms, node.rng)
        for action in actions:
            self._act(node, action)

    def _act(self, node: Node, action) -> None:
        now = self.clock.now_ms
        if isinstance(action, SendSync):
            msg = action.message
            data = msg.encode()
            kind = msg.kind.name
            if node is self.ap and kind == "Commit" and self._rf_drained_at > now:
                # old-key frames already on the air must land before the STA switches
                self.clock.schedule(self._rf_drained_at, self._send_sync_later, node, data, kind,
                                    label="commit-send")
            else:
                self._send_key_frame(node, data, kind, eapol_frame=False)
        elif isinstance(action, DerivePmk):
            # a new attempt begins: the previous handshake endpoint must not swallow its frames
            self._stop_endpoint(node)
            node.held_eapol = None
            if node is self.ap:
                self.passphrases.append(action.passphrase)
            pmk = self.kdf(action.passphrase, self.ssid)
            self.clock.call_later(self.policy.pmk_derivation_ms, self._pmk_ready, node,
                                  action.passphrase, pmk, label=f"pmk:{node.name}")
        elif isinstance(action, StartHandshake):
            self._stop_endpoint(node)
            self._start_endpoint(node, action.pmk)
        elif isinstance(action, StopHandshake):
            self._stop_endpoint(node)
        elif isinstance(action, ArmTimer):
            self._arm(node, action.name, action.at_ms)
        elif isinstance(action, CancelTimer):
            old = node.timers.pop(action.name, None)
            if old is not None:
                self.clock.cancel(old)
        elif isinstance(action, InstallKey):
            node.link.install_key(action.epoch, action.ptk, now)
            if node is self.ap:
                self.installed[action.epoch] = action.ptk
        elif isinstance(action, RollbackKey):
            node.link.rollback()
        elif isinstance(action, PauseData):
            node.link.pause_for_switchover(now)
        elif isinstance(action, ResumeData):
            node.link.resume(now)
            if node is self.ap:
                self.pump.flush()
                self.pump.keepalive()
        elif isinstance(action, LinkDown):
            node.link.down()
            if node is self.ap:
                self.pump.flush()
        elif isinstance(action, PhaseChange):
            self._log(node, action.phase_from, action.phase_to)
            if node is self.ap:
                if action.phase_to is Phase.PASSPHRASE_SENT:
                    self.rekeys.append(RekeyWindow(now, epoch=action.epoch + 1))
                if action.phase_to is Phase.ACTIVE and not self._traffic_started and self.traffic_enabled:
                    self._traffic_started = True
                    self.pump.start(now, self.config.sim.duration_ms)
        elif isinstance(action, RekeyFinished):
            if node is self.ap and self.rekeys and self.rekeys[-1].end_ms is None:
                window = self.rekeys[-1]
                window.end_ms = now
                window.success = action.success
                window.reason = action.reason

    def _send_sync_later(self, node: Node, data: bytes, kind: str) -> None:
        if node.session.phase is Phase.COMMITTED and not node.session.aborting:
            self._send_key_frame(node, data, kind, eapol_frame=False)

    def _pmk_ready(self, node: Node, passphrase: bytes, pmk: bytes) -> None:
        if node.session.passphrase == passphrase:
            self._dispatch(node, PmkReady(pmk))

    def _start_endpoint(self, node: Node, pmk: bytes) -> None:
        def send(data: bytes) -> None:
            self._send_key_frame(node, data, frame_kind(data), eapol_frame=True)

        def outcome(result) -> None:
            if node.endpoint is endpoint:
                self._dispatch(node, result)

        if node is self.ap:
            state = AuthenticatorState.new(pmk, AP_WIFI_MAC, STA_WIFI_MAC, node.rng, self.policy.max_retries)
            endpoint = AuthenticatorEndpoint(self.clock, send, state, outcome, self.policy.handshake_timeout_ms)
            node.endpoint = endpoint
            endpoint.start()
        else:
            state = SupplicantState.new(pmk, AP_WIFI_MAC, STA_WIFI_MAC, node.rng)
            endpoint = SupplicantEndpoint(self.clock, send, state, outcome)
            node.endpoint = endpoint
            held, node.held_eapol = node.held_eapol, None
            if held is not None:
                endpoint.receive(held)

    def _stop_endpoint(self, node: Node) -> None:
        if node.endpoint is not None:
            node.endpoint.stop()
            node.endpoint = None

    # reporting ------------------------------------------------------------------

    def downtime_intervals(self, end_ms: float | None = None) -> list[tuple[float, float]]:
        """Spans where the link pair was Down after it first came Up."""
        end = self.clock.now_ms if end_ms is None else end_ms
        out: list[tuple[float, float]] = []
        seen_up = False
        down_since = None
        for t, state in self.link_transitions:
            if state is LinkState.DOWN:
                if seen_up and down_since is None:
                    down_since = t
            else:
                seen_up = True
                if down_since is not None:
                    out.append((down_since, t))
                    down_since = None
        if down_since is not None:
            out.append((down_since, end))
        return out

    def event_log_lines(self) -> list[str]:
        return [json.dumps(e, sort_keys=True) for e in self.events]

    def ground_truth_ptk(self, epoch: int) -> Ptk | None:
        return self.installed.get(epoch)

    def sample_data_frame(self) -> bytes | None:
        for frame in self.rf.sent:
            if is_data_frame(frame.payload):
                return frame.payload
        return None
