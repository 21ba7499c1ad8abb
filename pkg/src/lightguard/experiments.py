"""Experiment drivers: angle sweep, throughput trace, adversarial A/B, commit faults.

Every driver is deterministic in its config and seeds. Outputs carry a schema
version in their header and are written with stable ordering and fixed float
formatting, so two runs of the same ExperimentSpec are byte-identical.
"""

from __future__ import annotations

import copy
import csv
import functools
import io
import json
import os
from dataclasses import dataclass, field
from multiprocessing import Pool
from pathlib import Path

from .adversary import (KnownParams, Method, PmkTable, attack, build_dictionary, validate_recovery,
                        verify_confinement)
from .config import SCHEMA_VERSION, ConfigError, ScenarioConfig
from .crypto import derive_pmk
from .netsim import COMMIT_KINDS, FaultInjector, InvariantViolation, Medium, derive_rng
from .testbed import AP_WIFI_MAC, STA_WIFI_MAC, Testbed

EXPERIMENT_NAMES = {"sweep": "angle-sweep", "trace": "trace", "adversarial": "adversarial"}


@functools.lru_cache(maxsize=8192)
def cached_kdf(passphrase: bytes, ssid: bytes) -> bytes:
    """derive_pmk is pure, so runs that replay a passphrase stream can share results."""
    return derive_pmk(passphrase, ssid)


def _num(x: float | None, digits: int = 4) -> str:
    if x is None:
        return ""
    if abs(x) < 0.5 * 10 ** -digits:
        x = 0.0  # no "-0.0000" in outputs
    return f"{x:.{digits}f}"


def _header(kind: str, cfg: ScenarioConfig) -> str:
    return f"# schema={SCHEMA_VERSION} experiment={kind} seed={cfg.sim.seed} mode={cfg.sim.mode}"


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


@dataclass
class ExperimentSpec:
    kind: str
    scenario: ScenarioConfig
    seeds: list[int]
    output_dir: Path

    def __post_init__(self):
        if self.kind not in EXPERIMENT_NAMES:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if not self.seeds:
            raise ConfigError("an experiment needs at least one seed")
        self.output_dir = Path(self.output_dir)
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output_dir {self.output_dir} is not writable: {exc}") from None
        if not os.access(self.output_dir, os.W_OK):
            raise ConfigError(f"output_dir {self.output_dir} is not writable")


# angle sweep ------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    angle_deg: float
    attempts: int
    successes: int

    @property
    def success_rate(self) -> float:
        return self.successes / self.attempts


@dataclass
class SweepResult:
    rows: list[SweepRow]
    threshold_deg: float | None
    files: list[Path] = field(default_factory=list)

    def rate(self, angle_deg: float) -> float:
        for row in self.rows:
            if abs(row.angle_deg - angle_deg) < 1e-9:
                return row.success_rate
        raise KeyError(angle_deg)


def rekey_attempt(cfg: ScenarioConfig, angle_deg: float, seed: int) -> bool:
    """One bootstrap rekey at a fixed misalignment; True iff both ends agree on a key."""
    c = copy.deepcopy(cfg)
    c.sim.seed = seed
    c.lifi.angle_deg = angle_deg
    c.lifi.angle_schedule = []
    c.rekey.first_rekey_ms = 0.0
    tb = Testbed(c, kdf=cached_kdf, traffic=False, max_rekeys=1)
    tb.run(until_ms=c.experiment.attempt_duration_ms, stop=tb.bootstrap_done)
    return tb.keys_agree and tb.ap.session.epoch == 1


def _sweep_angle(args) -> SweepRow:
    cfg, angle, seeds = args
    return SweepRow(angle, len(seeds), sum(rekey_attempt(cfg, angle, s) for s in seeds))


def failure_threshold(rows: list[SweepRow], floor: float = 0.01) -> float | None:
    """Smallest |angle| from which every row fails (success rate <= floor)."""
    mags = sorted({abs(r.angle_deg) for r in rows})
    for m in mags:
        if all(r.success_rate <= floor for r in rows if abs(r.angle_deg) >= m):
            return m
    return None


def run_angle_sweep(spec: ExperimentSpec, jobs: int = 1) -> SweepResult:
    cfg = spec.scenario
    ex = cfg.experiment
    seeds = spec.seeds if len(spec.seeds) == ex.attempts else [spec.seeds[0] + j for j in range(ex.attempts)]
    # the same seeds at every angle: differences between rows come from the angle alone
    work = [(cfg, angle, seeds) for angle in ex.angle_grid()]
    if jobs > 1:
        with Pool(jobs) as pool:
            rows = pool.map(_sweep_angle, work)
    else:
        rows = [_sweep_angle(w) for w in work]
    rows.sort(key=lambda r: r.angle_deg)
    result = SweepResult(rows, failure_threshold(rows))
    buf = io.StringIO()
    buf.write(_header("angle-sweep", cfg) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["angle_deg", "attempts", "successes", "success_rate"])
    for r in rows:
        w.writerow([_num(r.angle_deg, 1), r.attempts, r.successes, _num(r.success_rate)])
    out = spec.output_dir
    result.files.append(_write(out / "angle_sweep.csv", buf.getvalue()))
    summary = {"schema": SCHEMA_VERSION, "experiment": "angle-sweep", "attempts_per_angle": len(seeds),
               "first_seed": seeds[0], "threshold_deg": result.threshold_deg,
               "theta_full_deg": cfg.lifi.theta_full_deg, "theta_cut_deg": cfg.lifi.theta_cut_deg}
    result.files.append(_write(out / "angle_sweep_summary.json", _json(summary)))
    return result


# trace ----------------------------------------------------------------------------

@dataclass
class TraceResult:
    summary: dict
    testbed: Testbed
    files: list[Path] = field(default_factory=list)


def misaligned_intervals(cfg: ScenarioConfig) -> list[tuple[float, float]]:
    model = cfg.lifi.model()
    out = []
    start = None if model.is_aligned() else 0.0
    for step in sorted(cfg.lifi.angle_schedule, key=lambda s: s.at_ms):
        aligned = model.is_aligned(step.angle_deg)
        if not aligned and start is None:
            start = step.at_ms
        elif aligned and start is not None:
            out.append((start, step.at_ms))
            start = None
    if start is not None:
        out.append((start, cfg.sim.duration_ms))
    return out


def trace_summary(tb: Testbed) -> dict:
    cfg = tb.config
    samples = tb.pump.samples
    lat = tb.pump.latencies
    down = tb.downtime_intervals(cfg.sim.duration_ms)
    attempted = [w for w in tb.rekeys]
    return {
        "schema": SCHEMA_VERSION,
        "experiment": "trace",
        "seed": cfg.sim.seed,
        "mode": cfg.sim.mode,
        "duration_ms": cfg.sim.duration_ms,
        "rekeys_attempted": len(attempted),
        "rekeys_succeeded": sum(1 for w in attempted if w.success),
        "total_decrypt_failures": tb.ap.link.decrypt_failures + tb.sta.link.decrypt_failures,
        "downtime_ms": round(sum(b - a for a, b in down), 6),
        "downtime_intervals": [[round(a, 6), round(b, 6)] for a, b in down],
        "misaligned_intervals": [[a, b] for a, b in misaligned_intervals(cfg)],
        "mean_throughput": round(sum(s.throughput_mbps for s in samples) / len(samples), 6) if samples else 0.0,
        "mean_latency": round(sum(lat) / len(lat), 6) if lat else None,
        "switchover_pause_ms": [round(p, 6) for p in tb.ap.link.pause_durations_ms],
        "frames_offered": tb.pump.frames_offered,
        "frames_delivered": tb.pump.frames_delivered,
        "frames_dropped": tb.pump.frames_dropped,
        "final_epoch": tb.ap.session.epoch,
    }


def run_trace(spec: ExperimentSpec) -> TraceResult:
    cfg = copy.deepcopy(spec.scenario)
    cfg.sim.seed = spec.seeds[0]
    tb = Testbed(cfg, kdf=cached_kdf)
    tb.run()
    summary = trace_summary(tb)
    result = TraceResult(summary, tb)
    out = spec.output_dir

    buf = io.StringIO()
    buf.write(_header("trace", cfg) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_ms", "throughput_mbps", "latency_ms", "link_state", "epoch", "rekey_phase"])
    for s in tb.pump.samples:
        w.writerow([_num(s.t_ms, 3), _num(s.throughput_mbps), _num(s.latency_ms), s.link_state.value,
                    s.epoch, s.rekey_phase])
    result.files.append(_write(out / "trace_metrics.csv", buf.getvalue()))

    result.files.append(_write(out / "trace_summary.json", _json(summary)))

    lines = [json.dumps({"schema": SCHEMA_VERSION, "experiment": "trace-events"}, sort_keys=True)]
    for e in tb.events:
        rec = dict(e, time_ms=round(e["time_ms"], 6))
        lines.append(json.dumps(rec, sort_keys=True))
    result.files.append(_write(out / "trace_events.jsonl", "\n".join(lines) + "\n"))

    buf = io.StringIO()
    buf.write(_header("trace-rekeys", cfg) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["start_ms", "end_ms", "epoch", "success", "reason"])
    for r in tb.rekeys:
        w.writerow([_num(r.start_ms, 3), _num(r.end_ms, 3), r.epoch, int(bool(r.success)), r.reason])
    result.files.append(_write(out / "trace_rekeys.csv", buf.getvalue()))
    return result


# adversarial A/B ---------------------------------------------------------------------

@dataclass
class AttackRecord:
    run_seed: int
    mode: str
    tap_id: str
    medium: str
    in_cone: bool
    method: str
    candidates_tried: int
    recovered: bool
    validated: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class AdversarialReport:
    records: list[AttackRecord]
    confinement: dict[str, list[bool]]
    summary: dict
    files: list[Path] = field(default_factory=list)

    def tally(self, mode: str, medium: str, in_cone: bool | None = None) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.records:
            if r.mode == mode and r.medium == medium and (in_cone is None or r.in_cone == in_cone):
                out[r.method] = out.get(r.method, 0) + 1
        return out


def _adversarial_run(cfg: ScenarioConfig, mode: str, seed: int) -> Testbed:
    c = copy.deepcopy(cfg)
    c.sim.seed = seed
    c.sim.mode = mode
    tb = Testbed(c, kdf=cached_kdf, max_rekeys=1)
    tb.run()
    return tb


def run_adversarial(spec: ExperimentSpec, modes: tuple[str, ...] = ("lightguard", "baseline")) -> AdversarialReport:
    cfg = spec.scenario
    runs = {(mode, seed): _adversarial_run(cfg, mode, seed) for mode in modes for seed in spec.seeds}
    truths = []
    for seed in spec.seeds:
        for mode in modes:
            truths.extend(runs[(mode, seed)].passphrases)
    dictionary = build_dictionary(truths, cfg.experiment.dictionary_size,
                                  derive_rng(spec.seeds[0], "dictionary"))
    ssid = cfg.sim.ssid.encode()
    table = PmkTable(ssid, dictionary, kdf=cached_kdf)
    known = KnownParams(ssid, AP_WIFI_MAC, STA_WIFI_MAC)

    records: list[AttackRecord] = []
    confinement: dict[str, list[bool]] = {m: [] for m in modes}
    for mode in modes:
        for seed in spec.seeds:
            tb = runs[(mode, seed)]
            truth = tb.ground_truth_ptk(tb.ap.session.epoch)
            sample = tb.sample_data_frame()
            for tap in tb.taps:
                res = attack(tap.transcript, dictionary, known, table.get)
                validated = bool(res.recovered and res.recovered_ptk == truth and sample is not None
                                 and validate_recovery(res.recovered_ptk, [sample]))
                records.append(AttackRecord(seed, mode, tap.tap_id, tap.medium.value, tap.in_cone,
                                            res.method.value, res.candidates_tried, res.recovered, validated))
            verdict = verify_confinement([t.transcript for t in tb.taps], dictionary, known, table.get)
            confinement[mode].append(bool(verdict))

    summary: dict = {"schema": SCHEMA_VERSION, "experiment": "adversarial", "runs": len(spec.seeds),
                     "dictionary_size": len(dictionary), "modes": {}}
    report = AdversarialReport(records, confinement, summary)
    for mode in modes:
        per_tap = {}
        for tap in cfg.taps:
            recs = [r for r in records if r.mode == mode and r.tap_id == tap.id]
            per_tap[tap.id] = {
                "medium": tap.medium, "in_cone": tap.in_cone,
                "methods": {m.value: sum(1 for r in recs if r.method == m.value) for m in Method},
                "recovered": sum(r.recovered for r in recs),
                "validated": sum(r.validated for r in recs),
            }
        summary["modes"][mode] = {"taps": per_tap,
                                  "confinement_true_runs": sum(confinement[mode])}

    out = spec.output_dir
    lines = [json.dumps({"schema": SCHEMA_VERSION, "experiment": "adversarial-attacks"}, sort_keys=True)]
    for r in sorted(records, key=lambda r: (r.mode, r.run_seed, r.tap_id)):
        lines.append(json.dumps(r.as_dict(), sort_keys=True))
    report.files.append(_write(out / "attacks.jsonl", "\n".join(lines) + "\n"))
    report.files.append(_write(out / "adversarial_summary.json", _json(summary)))
    return report


# commit-phase fault campaign ----------------------------------------------------------

@dataclass(frozen=True)
class FaultTrial:
    fault_seed: int
    rekey_success: bool | None
    reason: str
    violation: str
    decrypt_failures: int
    old_key_kept: bool
    new_key_agreed: bool

    @property
    def ok(self) -> bool:
        if self.violation or self.decrypt_failures:
            return False
        return self.new_key_agreed if self.rekey_success else self.old_key_kept


def fault_campaign_config(base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Bootstrap at t=0, one targeted rekey at t=100 ms, light traffic throughout."""
    cfg = copy.deepcopy(base) if base is not None else ScenarioConfig()
    cfg.sim.duration_ms = 2_000.0
    cfg.rekey.first_rekey_ms = 0.0
    cfg.rekey.interval_ms = 100.0
    cfg.traffic.frame_interval_ms = 5.0
    return cfg


def random_fault_schedule(fault_seed: int, active_from_ms: float = 50.0) -> FaultInjector:
    r = derive_rng(fault_seed, "fault-schedule")
    kinds = sorted(COMMIT_KINDS)
    always = frozenset([r.choice(kinds)]) if r.random() < 0.2 else frozenset()
    return FaultInjector(derive_rng(fault_seed, "faults"), drop=r.uniform(0.0, 0.6),
                         duplicate=r.uniform(0.0, 0.4), delay=r.uniform(0.0, 0.5),
                         corrupt=r.uniform(0.0, 0.2), always_drop=always, active_from_ms=active_from_ms)


def commit_fault_trial(cfg: ScenarioConfig, faults: FaultInjector, fault_seed: int = 0,
                       tail_ms: float = 50.0) -> FaultTrial:
    tb = Testbed(cfg, kdf=cached_kdf, faults=faults, max_rekeys=2)

    def settled() -> bool:
        return len(tb.rekeys) == 2 and tb.rekeys[1].end_ms is not None and not tb.sta.session.rekeying

    violation = ""
    try:
        tb.run(stop=settled)
        # keep traffic flowing a little longer so a split key would surface as failures
        tb.run(until_ms=min(cfg.sim.duration_ms, tb.clock.now_ms + tail_ms))
    except InvariantViolation as exc:
        violation = str(exc)
    window = tb.rekeys[1] if len(tb.rekeys) > 1 else None
    old = tb.ground_truth_ptk(1)
    a, s = tb.ap, tb.sta
    old_kept = (a.session.active_ptk == old and s.session.active_ptk == old
                and a.link.epoch == 1 and s.link.epoch == 1 and a.session.epoch == 1 and s.session.epoch == 1)
    new_agreed = tb.keys_agree and a.session.epoch == 2 and a.link.epoch == 2 and s.link.epoch == 2
    return FaultTrial(fault_seed, window.success if window else None, window.reason if window else "",
                      violation, a.link.decrypt_failures + s.link.decrypt_failures, old_kept, new_agreed)


def run_commit_faults(n: int, base_seed: int = 0, cfg: ScenarioConfig | None = None) -> list[FaultTrial]:
    cfg = fault_campaign_config(cfg)
    return [commit_fault_trial(cfg, random_fault_schedule(base_seed + i), base_seed + i) for i in range(n)]


# plot data ----------------------------------------------------------------------------

def write_plot_data(in_dir: Path, out_dir: Path) -> list[Path]:
    """Whitespace-separated columns with comment headers, ready for gnuplot."""
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    written = []

    def rows(path: Path):
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        return list(csv.DictReader(lines))

    sweep = in_dir / "angle_sweep.csv"
    if sweep.exists():
        text = [f"# schema={SCHEMA_VERSION} plot=rekey-success-vs-angle", "# angle_deg success_rate"]
        text += [f"{r['angle_deg']} {r['success_rate']}" for r in rows(sweep)]
        written.append(_write(out_dir / "angle_sweep.dat", "\n".join(text) + "\n"))
    metrics = in_dir / "trace_metrics.csv"
    if metrics.exists():
        text = [f"# schema={SCHEMA_VERSION} plot=throughput-latency-vs-time",
                "# t_s throughput_mbps latency_ms in_rekey"]
        for r in rows(metrics):
            lat = r["latency_ms"] or "NaN"
            text.append(f"{float(r['t_ms']) / 1000:.3f} {r['throughput_mbps']} {lat} {int(bool(r['rekey_phase']))}")
        written.append(_write(out_dir / "trace.dat", "\n".join(text) + "\n"))
    rekeys = in_dir / "trace_rekeys.csv"
    if rekeys.exists():
        text = [f"# schema={SCHEMA_VERSION} plot=rekey-windows", "# start_s end_s success"]
        for r in rows(rekeys):
            text.append(f"{float(r['start_ms']) / 1000:.3f} {float(r['end_ms'] or r['start_ms']) / 1000:.3f} "
                        f"{r['success']}")
        written.append(_write(out_dir / "rekey_windows.dat", "\n".join(text) + "\n"))
    return written
