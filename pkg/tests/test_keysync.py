import random
from types import SimpleNamespace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lightguard.config import ScenarioConfig
from lightguard.crypto import Ptk
from lightguard.experiments import (cached_kdf, commit_fault_trial, fault_campaign_config,
                                    random_fault_schedule)
from lightguard.fourway import HandshakeOutcome, Result
from lightguard.keysync import (ABORT_DISCONNECT, ABORT_KEEP, ArmTimer, BusyError, InstallKey, KeyConfirmed,
                                KeySyncSession, LinkDown, LinkReport, Phase, PmkReady, RekeyFinished, RekeyPolicy,
                                Role, RoleError, RollbackKey, SendSync, StartHandshake, SyncError, SyncKind,
                                SyncMessage, Timer, advance, commit_atomicity_check, handle_link_report,
                                ptk_digest, start_rekey)
from lightguard.netsim import FaultInjector, derive_rng
from lightguard.testbed import Testbed

K0 = Ptk.from_bytes(bytes([7]) * 48)
K1 = Ptk.from_bytes(bytes([8]) * 48)
K_OTHER = Ptk.from_bytes(bytes([9]) * 48)


def sent(actions, kind=None):
    msgs = [a.message for a in actions if isinstance(a, SendSync)]
    return [m for m in msgs if kind is None or m.kind is kind]


def active(role, epoch=1, ptk=K0):
    return KeySyncSession(role, phase=Phase.ACTIVE, epoch=epoch, active_ptk=ptk)


# wire format -------------------------------------------------------------------

@given(st.sampled_from(list(SyncKind)), st.integers(0, 2**64 - 1), st.binary(max_size=100))
def test_sync_roundtrip(kind, epoch, payload):
    m = SyncMessage(kind, epoch, payload)
    assert SyncMessage.decode(m.encode()) == m


@pytest.mark.parametrize("raw", [b"LS", b"XX\x01\x01" + bytes(10), b"LS\x01\x09" + bytes(10),
                                 SyncMessage(SyncKind.Prepare, 1, b"abc").encode()[:-1]])
def test_sync_decode_errors(raw):
    with pytest.raises(SyncError):
        SyncMessage.decode(raw)


def test_digest_binds_epoch_and_key():
    assert ptk_digest(K1, 2) != ptk_digest(K1, 3)
    assert ptk_digest(K1, 2) != ptk_digest(K_OTHER, 2)
    assert len(ptk_digest(K1, 2)) == 32


# AP --------------------------------------------------------------------------------

def test_only_ap_starts_and_not_twice():
    with pytest.raises(RoleError):
        start_rekey(KeySyncSession(Role.STA), random.Random(0))
    s, msg = start_rekey(KeySyncSession(Role.AP), random.Random(0))
    assert msg.kind is SyncKind.PassphraseDeliver and msg.epoch == 1 and s.phase is Phase.PASSPHRASE_SENT
    with pytest.raises(BusyError):
        start_rekey(s, random.Random(0))


def _ap_at_prepare_sent():
    s = active(Role.AP)
    s, acts = advance(s, Timer("rekey"), 0.0, random.Random(1))
    assert sent(acts, SyncKind.PassphraseDeliver)
    s, acts = advance(s, PmkReady(b"p" * 32), 4.0)
    assert any(isinstance(a, StartHandshake) for a in acts)
    s, acts = advance(s, HandshakeOutcome(Result.SUCCESS, K1), 10.0)
    assert s.phase is Phase.PREPARE_SENT
    [prep] = sent(acts, SyncKind.Prepare)
    assert prep.payload == ptk_digest(K1, 2)
    return s


def test_ap_commit_sequence():
    s = _ap_at_prepare_sent()
    s, acts = advance(s, SyncMessage(SyncKind.PrepareAck, 2), 11.0)
    assert s.phase is Phase.COMMITTED
    kinds = [type(a).__name__ for a in acts if not type(a).__name__ == "PhaseChange"]
    assert kinds[:3] == ["InstallKey", "PauseData", "SendSync"]
    s, acts = advance(s, SyncMessage(SyncKind.CommitAck, 2), 12.0)
    assert s.phase is Phase.ACTIVE and s.epoch == 2 and s.active_ptk == K1
    assert RekeyFinished(True) in acts


def test_ap_ignores_wrong_epoch():
    s = _ap_at_prepare_sent()
    assert advance(s, SyncMessage(SyncKind.PrepareAck, 5), 11.0) == (s, [])


def test_ap_prepare_retries_then_keeps_old_key():
    s = _ap_at_prepare_sent()
    for i in range(4):
        s, acts = advance(s, Timer("commit"), 20.0 + i)
        assert sent(acts, SyncKind.Prepare)
    s, acts = advance(s, Timer("commit"), 30.0)
    assert s.phase is Phase.ACTIVE and s.epoch == 1 and s.active_ptk == K0
    [abort] = sent(acts, SyncKind.Abort)
    assert abort.payload == ABORT_KEEP
    assert RekeyFinished(False, "prepare-timeout") in acts


def test_ap_commit_timeout_rolls_back_then_quarantines():
    s = _ap_at_prepare_sent()
    s, _ = advance(s, SyncMessage(SyncKind.PrepareAck, 2), 11.0)
    for i in range(4):
        s, acts = advance(s, Timer("commit"), 20.0 + i)
        assert sent(acts, SyncKind.Commit)
    s, acts = advance(s, Timer("commit"), 40.0)
    assert RollbackKey() in acts and s.aborting and s.phase is Phase.COMMITTED
    [arm] = [a for a in acts if isinstance(a, ArmTimer)]
    assert arm.at_ms == 40.0 + s.policy.abort_quarantine_ms
    # a late CommitAck must not flip the AP onto the key it already rolled back
    s2, acts2 = advance(s, SyncMessage(SyncKind.CommitAck, 2), 41.0)
    assert s2 == s and acts2 == []
    s, acts = advance(s, Timer("commit"), arm.at_ms)
    assert s.phase is Phase.ACTIVE and s.epoch == 1 and s.active_ptk == K0
    assert RekeyFinished(False, "commit-timeout") in acts


def test_ap_handshake_failure_disconnects():
    s = active(Role.AP)
    s, _ = advance(s, Timer("rekey"), 0.0, random.Random(1))
    s, _ = advance(s, PmkReady(b"p" * 32), 4.0)
    s, acts = advance(s, HandshakeOutcome(Result.TIMEOUT), 504.0)
    assert s.phase is Phase.DISCONNECTED and LinkDown() in acts
    assert sent(acts, SyncKind.Abort)[0].payload == ABORT_DISCONNECT


def test_ap_handshake_failure_can_hold_old_key():
    s = KeySyncSession(Role.AP, RekeyPolicy(hold_old_key_on_failure=True), Phase.ACTIVE, 1, active_ptk=K0)
    s, _ = advance(s, Timer("rekey"), 0.0, random.Random(1))
    s, _ = advance(s, PmkReady(b"p" * 32), 4.0)
    s, acts = advance(s, HandshakeOutcome(Result.TIMEOUT), 504.0)
    assert s.phase is Phase.ACTIVE and LinkDown() not in acts


def test_link_reports_gate_rekeys():
    s = KeySyncSession(Role.AP, phase=Phase.DISCONNECTED, epoch=1)
    s, acts = handle_link_report(s, LinkReport(35.0, False), 10.0)
    assert not s.aligned and acts == []
    s, acts = advance(s, Timer("rekey"), 20.0, random.Random(0))
    assert s.phase is Phase.DISCONNECTED and not sent(acts)
    s, acts = handle_link_report(s, LinkReport(0.0, True), 30.0, random.Random(0))
    assert s.phase is Phase.PASSPHRASE_SENT and sent(acts, SyncKind.PassphraseDeliver)


def test_sta_abort_during_prepare():
    s = _ap_at_prepare_sent()
    s, acts = advance(s, SyncMessage(SyncKind.Abort, 2, ABORT_KEEP), 12.0)
    assert s.phase is Phase.ACTIVE and RekeyFinished(False, "sta-abort") in acts
    assert not sent(acts)


# STA ---------------------------------------------------------------------------------

def _sta_prepared(ptk=K1):
    s = active(Role.STA)
    s, acts = advance(s, SyncMessage(SyncKind.PassphraseDeliver, 2, b"secret-passphrase"), 1.0)
    assert s.phase is Phase.HANDSHAKING
    s, acts = advance(s, PmkReady(b"p" * 32), 5.0)
    s, _ = advance(s, HandshakeOutcome(Result.SUCCESS, ptk), 9.0)
    assert s.phase is Phase.PTK_DERIVED
    s, acts = advance(s, SyncMessage(SyncKind.Prepare, 2, ptk_digest(K1, 2)), 10.0)
    return s, acts


def test_sta_full_path():
    s, acts = _sta_prepared()
    assert s.phase is Phase.PREPARED and sent(acts, SyncKind.PrepareAck)
    s, acts = advance(s, SyncMessage(SyncKind.Commit, 2), 11.0)
    assert InstallKey(2, K1) in acts and sent(acts, SyncKind.CommitAck)
    # a duplicate Commit is re-acknowledged, nothing reinstalled
    s2, acts2 = advance(s, SyncMessage(SyncKind.Commit, 2), 11.5)
    assert sent(acts2, SyncKind.CommitAck) and not any(isinstance(a, InstallKey) for a in acts2)
    s, acts = advance(s, KeyConfirmed(2), 13.0)
    assert s.phase is Phase.ACTIVE and s.epoch == 2 and s.active_ptk == K1


def test_sta_digest_mismatch_aborts():
    s, acts = _sta_prepared(ptk=K_OTHER)
    assert s.phase is Phase.ACTIVE and s.epoch == 1 and s.active_ptk == K0
    [abort] = sent(acts, SyncKind.Abort)
    assert abort.payload == ABORT_KEEP
    assert RekeyFinished(False, "digest-mismatch") in acts


def test_sta_abort_after_install_rolls_back():
    s, _ = _sta_prepared()
    s, _ = advance(s, SyncMessage(SyncKind.Commit, 2), 11.0)
    s, acts = advance(s, SyncMessage(SyncKind.Abort, 2, ABORT_KEEP), 12.0)
    assert RollbackKey() in acts and s.phase is Phase.ACTIVE and s.epoch == 1


def test_sta_deadline_after_install_rolls_back():
    s, _ = _sta_prepared()
    s, _ = advance(s, SyncMessage(SyncKind.Commit, 2), 11.0)
    assert advance(s, Timer("deadline"), 12.0)[1] == []  # not yet
    s, acts = advance(s, Timer("deadline"), s.commit_deadline)
    assert RollbackKey() in acts and s.phase is Phase.ACTIVE


def test_sta_disconnect_abort_when_idle_or_active():
    s, acts = advance(active(Role.STA), SyncMessage(SyncKind.Abort, 2, ABORT_DISCONNECT), 1.0)
    assert s.phase is Phase.DISCONNECTED and LinkDown() in acts


def test_sta_ignores_out_of_sequence_passphrase():
    s = active(Role.STA)
    assert advance(s, SyncMessage(SyncKind.PassphraseDeliver, 5, b"x" * 20), 1.0) == (s, [])


def test_sta_new_proposal_supersedes_stale_attempt():
    s, _ = _sta_prepared()
    s, _ = advance(s, SyncMessage(SyncKind.Commit, 2), 11.0)
    s, acts = advance(s, SyncMessage(SyncKind.PassphraseDeliver, 2, b"another-passphrase"), 900.0)
    assert RollbackKey() in acts and RekeyFinished(False, "superseded") in acts
    assert s.phase is Phase.HANDSHAKING and s.epoch == 1


def test_policy_validation():
    with pytest.raises(ValueError):
        RekeyPolicy(interval_ms=0)
    with pytest.raises(ValueError):
        RekeyPolicy(max_retries=-1)
    p = RekeyPolicy()
    assert p.abort_quarantine_ms > p.sta_commit_wait_ms > p.commit_retry_ms * (p.commit_retries + 1)


# atomicity predicate ------------------------------------------------------------------

def _link(state, epoch):
    return SimpleNamespace(state=SimpleNamespace(value=state), epoch=epoch)


@pytest.mark.parametrize("ap,ap_link,sta,sta_link,ok", [
    (active(Role.AP, 1), _link("Up", 1), active(Role.STA, 1), _link("Up", 1), True),
    (active(Role.AP, 1), _link("Paused", 2), active(Role.STA, 1), _link("Up", 1), True),
    (active(Role.AP, 1), _link("Up", 2), active(Role.STA, 1), _link("Up", 1), False),
    (active(Role.AP, 2, K1), _link("Up", 2), active(Role.STA, 1), _link("Paused", 1), False),
    (active(Role.AP, 2, K1), _link("Up", 2), active(Role.STA, 2, K_OTHER), _link("Up", 2), False),
    (active(Role.AP, 1), _link("Down", 1), active(Role.STA, 1), _link("Down", 0), True),
])
def test_commit_atomicity_check(ap, ap_link, sta, sta_link, ok):
    assert commit_atomicity_check(ap, ap_link, sta, sta_link) is ok


# end to end over the simulated media ---------------------------------------------------

def _cfg(duration=500.0, interval=100.0):
    cfg = ScenarioConfig()
    cfg.sim.duration_ms = duration
    cfg.rekey.interval_ms = interval
    cfg.traffic.frame_interval_ms = 5.0
    return cfg.validate()


def test_lossless_rekeys_end_to_end():
    tb = Testbed(_cfg(490.0), kdf=cached_kdf)
    tb.run()
    assert [w.success for w in tb.rekeys] == [True] * 5
    assert tb.keys_agree and tb.ap.session.epoch == 5
    assert tb.ap.link.decrypt_failures == tb.sta.link.decrypt_failures == 0
    assert tb.pump.frames_delivered > 0


def test_commit_ack_always_dropped_falls_back_cleanly():
    faults = FaultInjector(derive_rng(0, "f"), always_drop=frozenset({"CommitAck"}), active_from_ms=50.0)
    tb = Testbed(_cfg(1000.0), kdf=cached_kdf, faults=faults, max_rekeys=2)
    tb.run()
    assert tb.rekeys[1].success is False and tb.rekeys[1].reason == "commit-timeout"
    assert tb.keys_agree and tb.ap.session.epoch == 1 and tb.ap.link.epoch == tb.sta.link.epoch == 1
    assert tb.ap.session.active_ptk == tb.ground_truth_ptk(1)
    assert tb.sta.link.decrypt_failures == 0


def test_prepare_always_dropped_keeps_old_key():
    faults = FaultInjector(derive_rng(0, "f"), always_drop=frozenset({"Prepare"}), active_from_ms=50.0)
    tb = Testbed(_cfg(1000.0), kdf=cached_kdf, faults=faults, max_rekeys=2)
    tb.run()
    assert tb.rekeys[1].reason == "prepare-timeout"
    assert tb.keys_agree and tb.ap.session.epoch == 1 and tb.sta.link.decrypt_failures == 0


@given(st.integers(0, 2**31))
@settings(max_examples=40)
def test_random_commit_faults_leave_consistent_keys(fault_seed):
    trial = commit_fault_trial(fault_campaign_config(), random_fault_schedule(fault_seed), fault_seed)
    assert trial.ok, trial


@pytest.mark.parametrize("mode", ["lightguard", "baseline"])
def test_rekeys_complete_without_retransmission(mode):
    # RF is faster than LiFi, so in baseline M1 can beat the STA's PMK derivation
    cfg = _cfg(490.0)
    cfg.sim.mode = mode
    tb = Testbed(cfg, kdf=cached_kdf)
    tb.run()
    assert all(w.success and w.end_ms - w.start_ms < 20.0 for w in tb.rekeys)
