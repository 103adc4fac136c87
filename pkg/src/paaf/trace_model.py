"""Canonical data model for dual-operator measurement runs.

A run is stored as two newline-delimited JSON files plus an optional meta
sidecar:

* packet jsonl, one object per line:
  ``{"run_id", "seq", "op" ("A"|"B"), "dir" ("UL"|"DL"), "tx_us",
  "rx_us" (null if lost), "len"}``
* radio jsonl, one object per line:
  ``{"run_id", "op", "t_s", "rsrp_dbm", "ul_tx_pwr_dbm", "cell_id",
  "lat", "lon"}``

Packet timestamps are integer microseconds since the Unix epoch; radio
samples carry second-resolution times on a nominal 1 Hz grid. Lost packets
are stored with a null rx time; the 10 s sentinel used for statistics is
applied downstream, never persisted. Unknown fields in input files are
ignored.
"""

from __future__ import annotations

import json
import logging
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Optional

from .errors import InvariantError, SchemaError

log = logging.getLogger(__name__)

OPERATORS = ("A", "B")
DIRECTIONS = ("UL", "DL")
SCENARIOS = ("urban", "suburban", "rural", "synthetic")

PAYLOAD_LEN = 1436
RSRP_MIN_DBM = -156.0
RSRP_MAX_DBM = -31.0
ULTX_MIN_DBM = -50.0
ULTX_MAX_DBM = 26.0


@dataclass(frozen=True)
class PacketRecord:
    """One probe packet: identity, timestamps and delivery outcome."""

    seq: int
    operator: str  # "A" | "B"
    direction: str  # "UL" | "DL"
    tx_us: int
    rx_us: Optional[int]  # None = never received within the timeout
    payload_len: int = PAYLOAD_LEN


@dataclass(frozen=True)
class RadioSample:
    """Per-operator 1 Hz radio snapshot."""

    operator: str
    time_s: float
    rsrp_dbm: float
    ul_tx_pwr_dbm: float
    cell_id: str
    lat: Optional[float] = None
    lon: Optional[float] = None


@dataclass(frozen=True)
class ScenarioMeta:
    scenario: str = "synthetic"
    duration_s: float = 0.0
    distance_km: float = 0.0
    notes: str = ""


@dataclass
class DualTrace:
    """Time-aligned dual-operator packet and radio series for one run."""

    run_id: str
    target_rate_bps: float
    packets: list[PacketRecord] = field(default_factory=list)
    radio: dict[str, list[RadioSample]] = field(default_factory=dict)
    meta: ScenarioMeta = field(default_factory=ScenarioMeta)
    unparsable_lines: int = field(default=0, compare=False)
    _times_cache: dict = field(default_factory=dict, compare=False, repr=False)

    def packets_for(self, operator: str, direction: str) -> list[PacketRecord]:
        return [
            p
            for p in self.packets
            if p.operator == operator and p.direction == direction
        ]

    def radio_times(self, operator: str) -> list[float]:
        times = self._times_cache.get(operator)
        if times is None or len(times) != len(self.radio[operator]):
            times = [s.time_s for s in self.radio[operator]]
            self._times_cache[operator] = times
        return times


class RadioLookup(NamedTuple):
    sample: RadioSample
    extrapolated: bool


def radio_at(trace: DualTrace, operator: str, t_s: float) -> RadioLookup:
    """Zero-order-hold lookup: most recent sample with time <= t_s.

    Queries before the first sample return that sample flagged as
    extrapolated. The hold semantics mirror modem reporting, where each
    sample aggregates the preceding second.
    """
    samples = trace.radio.get(operator) or []
    if not samples:
        raise InvariantError(f"no radio samples for operator {operator!r}")
    times = trace.radio_times(operator)
    idx = bisect_right(times, t_s) - 1
    if idx < 0:
        return RadioLookup(samples[0], True)
    return RadioLookup(samples[idx], False)


# ---------------------------------------------------------------------------
# Validation


def validate_trace(trace: DualTrace, check_rate: bool = True) -> None:
    """Check every documented invariant; raise InvariantError on breach."""
    seen_ops = {p.operator for p in trace.packets}
    if not seen_ops.issuperset(OPERATORS):
        missing = sorted(set(OPERATORS) - seen_ops)
        raise InvariantError(f"trace {trace.run_id!r} missing operator(s) {missing}")

    last_seq: dict[tuple[str, str], int] = {}
    dl_seen: dict[str, set[int]] = {op: set() for op in OPERATORS}
    for p in trace.packets:
        if p.rx_us is not None and p.rx_us < p.tx_us:
            raise InvariantError(
                f"packet seq={p.seq} op={p.operator} dir={p.direction}: "
                f"rx_us {p.rx_us} precedes tx_us {p.tx_us}"
            )
        if p.direction == "UL":
            key = (p.operator, p.direction)
            prev = last_seq.get(key)
            if prev is not None and p.seq <= prev:
                raise InvariantError(
                    f"non-increasing seq {p.seq} after {prev} in "
                    f"op={p.operator} {p.direction} stream"
                )
            last_seq[key] = p.seq
        else:
            # DL echoes may legitimately reorder in flight; require unique seq.
            if p.seq in dl_seen[p.operator]:
                raise InvariantError(
                    f"duplicate DL seq {p.seq} for op={p.operator}"
                )
            dl_seen[p.operator].add(p.seq)

    for op, samples in trace.radio.items():
        prev_t = None
        for s in samples:
            if not (RSRP_MIN_DBM <= s.rsrp_dbm <= RSRP_MAX_DBM):
                raise InvariantError(
                    f"rsrp {s.rsrp_dbm} dBm out of reporting range at "
                    f"op={op} t={s.time_s}"
                )
            if not (ULTX_MIN_DBM <= s.ul_tx_pwr_dbm <= ULTX_MAX_DBM):
                raise InvariantError(
                    f"ul_tx_pwr {s.ul_tx_pwr_dbm} dBm out of range at "
                    f"op={op} t={s.time_s}"
                )
            if prev_t is not None and s.time_s <= prev_t:
                raise InvariantError(
                    f"non-monotone radio time {s.time_s} after {prev_t} for op={op}"
                )
            prev_t = s.time_s

    if trace.meta.duration_s <= 0:
        raise InvariantError("meta.duration_s must be > 0")
    if trace.meta.distance_km < 0:
        raise InvariantError("meta.distance_km must be >= 0")
    if trace.meta.scenario not in SCENARIOS:
        raise InvariantError(f"unknown scenario {trace.meta.scenario!r}")

    if check_rate and trace.target_rate_bps > 0:
        for op in OPERATORS:
            n_ul = sum(
                1 for p in trace.packets if p.operator == op and p.direction == "UL"
            )
            if n_ul == 0:
                raise InvariantError(f"no UL packets for operator {op}")
            rate = n_ul * PAYLOAD_LEN * 8 / trace.meta.duration_s
            if abs(rate - trace.target_rate_bps) > 0.10 * trace.target_rate_bps:
                raise InvariantError(
                    f"op={op} UL rate {rate:.0f} bps deviates more than 10% "
                    f"from target {trace.target_rate_bps:.0f} bps"
                )


# ---------------------------------------------------------------------------
# Serialization

_PACKET_FIELDS = ("run_id", "seq", "op", "dir", "tx_us", "rx_us", "len")
_RADIO_FIELDS = ("run_id", "op", "t_s", "rsrp_dbm", "ul_tx_pwr_dbm", "cell_id", "lat", "lon")


def _packet_obj(run_id: str, p: PacketRecord) -> dict:
    return {
        "run_id": run_id,
        "seq": p.seq,
        "op": p.operator,
        "dir": p.direction,
        "tx_us": p.tx_us,
        "rx_us": p.rx_us,
        "len": p.payload_len,
    }


def _radio_obj(run_id: str, s: RadioSample) -> dict:
    return {
        "run_id": run_id,
        "op": s.operator,
        "t_s": s.time_s,
        "rsrp_dbm": s.rsrp_dbm,
        "ul_tx_pwr_dbm": s.ul_tx_pwr_dbm,
        "cell_id": s.cell_id,
        "lat": s.lat,
        "lon": s.lon,
    }


def packet_sort_key(p: PacketRecord):
    return (p.tx_us, p.operator, p.direction, p.seq)


def save_trace(trace: DualTrace, packet_path, radio_path, meta_path=None) -> None:
    """Write the canonical jsonl representation (stable field and row order)."""
    packet_path = Path(packet_path)
    radio_path = Path(radio_path)
    with packet_path.open("w", encoding="utf-8") as f:
        for p in sorted(trace.packets, key=packet_sort_key):
            f.write(json.dumps(_packet_obj(trace.run_id, p), separators=(",", ":")))
            f.write("\n")
    with radio_path.open("w", encoding="utf-8") as f:
        for op in sorted(trace.radio):
            for s in trace.radio[op]:
                f.write(json.dumps(_radio_obj(trace.run_id, s), separators=(",", ":")))
                f.write("\n")
    if meta_path is not None:
        meta = {
            "run_id": trace.run_id,
            "target_rate_bps": trace.target_rate_bps,
            "scenario": trace.meta.scenario,
            "duration_s": trace.meta.duration_s,
            "distance_km": trace.meta.distance_km,
            "notes": trace.meta.notes,
        }
        Path(meta_path).write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def _require(obj: dict, key: str, types, path, line):
    if key not in obj:
        raise SchemaError(f"missing field {key!r}", path, line)
    val = obj[key]
    if not isinstance(val, types):
        raise SchemaError(
            f"field {key!r} has type {type(val).__name__}", path, line
        )
    return val


def load_packets(path) -> tuple[str, list[PacketRecord], int]:
    """Parse a packet jsonl file.

    Returns (run_id, records, unparsable_line_count). Lines that are not
    valid JSON are counted and skipped; parsed objects with missing or
    ill-typed fields raise SchemaError with line context.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"packet file not found: {path}")
    records: list[PacketRecord] = []
    run_id = ""
    bad = 0
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                bad += 1
                continue
            run_id = str(_require(obj, "run_id", str, path, lineno))
            seq = _require(obj, "seq", int, path, lineno)
            op = _require(obj, "op", str, path, lineno)
            if op not in OPERATORS:
                raise SchemaError(f"unknown operator {op!r}", path, lineno)
            dirn = _require(obj, "dir", str, path, lineno)
            if dirn not in DIRECTIONS:
                raise SchemaError(f"unknown direction {dirn!r}", path, lineno)
            tx_us = _require(obj, "tx_us", int, path, lineno)
            rx_us = obj.get("rx_us")
            if rx_us is not None and not isinstance(rx_us, int):
                raise SchemaError("field 'rx_us' must be int or null", path, lineno)
            length = _require(obj, "len", int, path, lineno)
            records.append(PacketRecord(seq, op, dirn, tx_us, rx_us, length))
    if bad:
        log.warning("%s: skipped %d unparsable line(s)", path, bad)
    return run_id, records, bad


def load_radio(path) -> tuple[str, dict[str, list[RadioSample]], int]:
    """Parse a radio jsonl file into per-operator ordered sample lists."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"radio file not found: {path}")
    per_op: dict[str, list[RadioSample]] = {}
    run_id = ""
    bad = 0
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                bad += 1
                continue
            run_id = str(_require(obj, "run_id", str, path, lineno))
            op = _require(obj, "op", str, path, lineno)
            if op not in OPERATORS:
                raise SchemaError(f"unknown operator {op!r}", path, lineno)
            t_s = _require(obj, "t_s", (int, float), path, lineno)
            rsrp = _require(obj, "rsrp_dbm", (int, float), path, lineno)
            ultx = _require(obj, "ul_tx_pwr_dbm", (int, float), path, lineno)
            cell = str(_require(obj, "cell_id", (str, int), path, lineno))
            lat = obj.get("lat")
            lon = obj.get("lon")
            per_op.setdefault(op, []).append(
                RadioSample(op, float(t_s), float(rsrp), float(ultx), cell, lat, lon)
            )
    if bad:
        log.warning("%s: skipped %d unparsable line(s)", path, bad)
    return run_id, per_op, bad


def load_trace(
    packet_path,
    radio_path,
    meta: Optional[ScenarioMeta] = None,
    target_rate_bps: Optional[float] = None,
    validate: bool = True,
) -> DualTrace:
    """Load and validate a run from its packet and radio jsonl files.

    When target_rate_bps is omitted it is inferred from the per-operator UL
    packet count over the run duration, and the rate-consistency check then
    holds by construction.
    """
    run_id, packets, bad_p = load_packets(packet_path)
    run_id_r, radio, bad_r = load_radio(radio_path)
    if run_id and run_id_r and run_id != run_id_r:
        raise InvariantError(
            f"run_id mismatch between files: {run_id!r} vs {run_id_r!r}"
        )
    packets.sort(key=packet_sort_key)
    if meta is None:
        if packets:
            span_us = max(p.tx_us for p in packets) - min(p.tx_us for p in packets)
            duration = max(span_us / 1e6, 1e-9)
        else:
            duration = 1e-9
        meta = ScenarioMeta(scenario="synthetic", duration_s=duration)
    if target_rate_bps is None:
        counts = [
            sum(1 for p in packets if p.operator == op and p.direction == "UL")
            for op in OPERATORS
        ]
        target_rate_bps = (
            (sum(counts) / len(counts)) * PAYLOAD_LEN * 8 / meta.duration_s
        )
    trace = DualTrace(
        run_id=run_id or run_id_r,
        target_rate_bps=target_rate_bps,
        packets=packets,
        radio=radio,
        meta=meta,
        unparsable_lines=bad_p + bad_r,
    )
    if validate:
        validate_trace(trace)
    return trace


def load_trace_dir(trace_dir, validate: bool = True) -> DualTrace:
    """Load a run stored as <dir>/packets.jsonl + radio.jsonl + meta.json."""
    trace_dir = Path(trace_dir)
    meta = None
    rate = None
    meta_path = trace_dir / "meta.json"
    if meta_path.exists():
        obj = json.loads(meta_path.read_text(encoding="utf-8"))
        meta = ScenarioMeta(
            scenario=obj.get("scenario", "synthetic"),
            duration_s=float(obj.get("duration_s", 0.0)),
            distance_km=float(obj.get("distance_km", 0.0)),
            notes=str(obj.get("notes", "")),
        )
        rate = obj.get("target_rate_bps")
    return load_trace(
        trace_dir / "packets.jsonl",
        trace_dir / "radio.jsonl",
        meta=meta,
        target_rate_bps=rate,
        validate=validate,
    )


def save_trace_dir(trace: DualTrace, trace_dir) -> None:
    trace_dir = Path(trace_dir)
    trace_dir.mkdir(parents=True, exist_ok=True)
    save_trace(
        trace,
        trace_dir / "packets.jsonl",
        trace_dir / "radio.jsonl",
        trace_dir / "meta.json",
    )


def with_run_id(trace: DualTrace, run_id: str) -> DualTrace:
    return replace(trace, run_id=run_id)
