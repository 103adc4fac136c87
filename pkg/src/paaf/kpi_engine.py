"""KPI computations over packet and radio series.

Covers one-way latency statistics, the late/true loss classification,
handover rate, rank correlation, the transmit-power-vs-RSRP regression with
saturation filtering, and the rate-to-SINR headroom bound.

Conventions fixed here so downstream golden files stay stable:

* Lost packets (no rx time) are assigned the 10 000 ms sentinel latency.
* A packet is useful below 800 ms; delivered at or above 800 ms it counts
  as a late loss; the sentinel value counts as a true loss.
* Percentiles use the nearest-rank method (ceil(q*N)-th order statistic).
* All transmit powers are treated as dBm. Vendor reports mix dB and dBm
  labels for the same quantity; the numbers are identical either way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvariantError
from .trace_model import DualTrace, PacketRecord, RadioSample, ScenarioMeta, radio_at

LOSS_SENTINEL_MS = 10_000.0
LATE_LOSS_THRESHOLD_MS = 800.0
SATURATION_DBM = 22.5

OK = "ok"
LATE_LOSS = "late_loss"
TRUE_LOSS = "true_loss"


@dataclass(frozen=True)
class LatencyStats:
    p50: float
    p90: float
    p95: float
    p99: float
    p999: float
    sample_count: int


@dataclass(frozen=True)
class LossReport:
    late_loss_ratio: float
    true_loss_ratio: float
    delivered_ok_ratio: float


@dataclass(frozen=True)
class RegressionFit:
    slope: float  # dB per dB
    intercept: float  # dBm
    sample_count: int
    excluded_saturated: int

    def predict(self, rsrp_dbm: float) -> float:
        return self.slope * rsrp_dbm + self.intercept


def effective_latency(p: PacketRecord) -> float:
    """One-way latency in ms; lost packets get the 10 s sentinel."""
    if p.rx_us is None:
        return LOSS_SENTINEL_MS
    return (p.rx_us - p.tx_us) / 1000.0


def classify_loss(latency_ms: float) -> str:
    if latency_ms < 0:
        raise InvariantError(f"negative latency {latency_ms} ms")
    if latency_ms > LOSS_SENTINEL_MS:
        raise InvariantError(
            f"latency {latency_ms} ms exceeds the {LOSS_SENTINEL_MS:.0f} ms sentinel"
        )
    if latency_ms < LATE_LOSS_THRESHOLD_MS:
        return OK
    if latency_ms < LOSS_SENTINEL_MS:
        return LATE_LOSS
    return TRUE_LOSS


def nearest_rank(sorted_values: np.ndarray, q: float) -> float:
    """ceil(q*N)-th order statistic of an ascending array."""
    n = len(sorted_values)
    idx = max(math.ceil(q * n), 1) - 1
    return float(sorted_values[min(idx, n - 1)])


def latency_percentiles(latencies_ms) -> LatencyStats:
    arr = np.asarray(latencies_ms, dtype=np.float64)
    if arr.size == 0:
        raise InvariantError("empty latency sequence")
    s = np.sort(arr)
    return LatencyStats(
        p50=nearest_rank(s, 0.50),
        p90=nearest_rank(s, 0.90),
        p95=nearest_rank(s, 0.95),
        p99=nearest_rank(s, 0.99),
        p999=nearest_rank(s, 0.999),
        sample_count=int(arr.size),
    )


def loss_report(latencies_ms) -> LossReport:
    arr = np.asarray(latencies_ms, dtype=np.float64)
    if arr.size == 0:
        raise InvariantError("empty latency sequence")
    if np.any(arr < 0) or np.any(arr > LOSS_SENTINEL_MS):
        raise InvariantError("latency outside [0, sentinel] range")
    n = arr.size
    late = int(np.sum((arr >= LATE_LOSS_THRESHOLD_MS) & (arr < LOSS_SENTINEL_MS)))
    true = int(np.sum(arr == LOSS_SENTINEL_MS))
    return LossReport(
        late_loss_ratio=late / n,
        true_loss_ratio=true / n,
        delivered_ok_ratio=(n - late - true) / n,
    )


def handover_rate(samples: list[RadioSample], meta: ScenarioMeta) -> float:
    """Cell-id changes per (km * minute) along one operator's sample series."""
    if meta.duration_s <= 0 or meta.distance_km <= 0:
        raise InvariantError("handover rate needs positive duration and distance")
    changes = sum(
        1
        for prev, cur in zip(samples, samples[1:])
        if cur.cell_id != prev.cell_id
    )
    return changes / (meta.distance_km * (meta.duration_s / 60.0))


def _midranks(x: np.ndarray) -> np.ndarray:
    """Average ranks (1-based), ties share the mean of their rank block."""
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(x, y) -> float:
    """Rank correlation: Pearson correlation of mid-ranks."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape:
        raise InvariantError("sequences must have equal length")
    if xa.size < 3:
        raise InvariantError("need at least 3 points")
    if np.all(xa == xa[0]) or np.all(ya == ya[0]):
        raise InvariantError("rank correlation undefined for constant sequences")
    rx = _midranks(xa)
    ry = _midranks(ya)
    rx -= rx.mean()
    ry -= ry.mean()
    return float(np.dot(rx, ry) / math.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))


def fit_power_regression(samples: list[RadioSample]) -> RegressionFit:
    """OLS of UL Tx Pwr on RSRP, excluding saturated reports (>= 22.5 dBm)."""
    rsrp = np.array([s.rsrp_dbm for s in samples], dtype=np.float64)
    ultx = np.array([s.ul_tx_pwr_dbm for s in samples], dtype=np.float64)
    keep = ultx < SATURATION_DBM
    excluded = int(np.sum(~keep))
    rsrp, ultx = rsrp[keep], ultx[keep]
    if rsrp.size < 2:
        raise InvariantError("fewer than 2 samples after saturation filtering")
    if np.all(rsrp == rsrp[0]):
        raise InvariantError("degenerate regression: all RSRP values equal")
    slope, intercept = np.polyfit(rsrp, ultx, 1)
    return RegressionFit(
        slope=float(slope),
        intercept=float(intercept),
        sample_count=int(rsrp.size),
        excluded_saturated=excluded,
    )


def regression_gap(fit_hi: RegressionFit, fit_lo: RegressionFit, rsrp_dbm: float) -> float:
    """Predicted transmit-power difference (hi minus lo) at one RSRP value."""
    return fit_hi.predict(rsrp_dbm) - fit_lo.predict(rsrp_dbm)


def delta_sinr_bound(r1_bps: float, r2_bps: float, bw_hz: float) -> float:
    """Required SINR headroom (dB) to carry r1 instead of r2 in bandwidth bw.

    10*log10((2^(r1/bw) - 1) / (2^(r2/bw) - 1)), from the band-limited
    capacity bound. Computed as a difference of logs so the result is
    exactly antisymmetric in (r1, r2) and exactly 0 for r1 == r2.
    """
    if r1_bps <= 0 or r2_bps <= 0 or bw_hz <= 0:
        raise InvariantError("rates and bandwidth must be positive")
    e1 = math.expm1(r1_bps / bw_hz * math.log(2.0))
    e2 = math.expm1(r2_bps / bw_hz * math.log(2.0))
    return 10.0 * (math.log10(e1) - math.log10(e2))


@dataclass(frozen=True)
class RsrpBin:
    lower_dbm: float
    latencies_ms: tuple
    losses: LossReport
    occupancy: float


def binned_latency_by_rsrp(
    trace: DualTrace, operator: str, bin_width_db: float = 5.0
) -> dict[float, RsrpBin]:
    """Group one operator's UL latencies by the RSRP seen at transmit time.

    Bin edges are aligned to integer multiples of the width; each packet is
    attributed the zero-order-hold RSRP at its tx instant.
    """
    if bin_width_db <= 0:
        raise InvariantError("bin width must be positive")
    ul = trace.packets_for(operator, "UL")
    if not ul:
        raise InvariantError(f"no UL packets for operator {operator}")
    per_bin: dict[float, list[float]] = {}
    for p in ul:
        rsrp = radio_at(trace, operator, p.tx_us / 1e6).sample.rsrp_dbm
        lower = math.floor(rsrp / bin_width_db) * bin_width_db
        per_bin.setdefault(lower, []).append(effective_latency(p))
    total = len(ul)
    out = {}
    for lower, lats in sorted(per_bin.items()):
        out[lower] = RsrpBin(
            lower_dbm=lower,
            latencies_ms=tuple(lats),
            losses=loss_report(lats),
            occupancy=len(lats) / total,
        )
    return out


KPI_CSV_COLUMNS = (
    "run_id",
    "operator",
    "direction",
    "sample_count",
    "p50_ms",
    "p90_ms",
    "p95_ms",
    "p99_ms",
    "p999_ms",
    "late_loss_ratio",
    "true_loss_ratio",
    "delivered_ok_ratio",
)


def kpi_report_rows(trace: DualTrace) -> list[dict]:
    """One row per (run, operator, direction) with latency and loss KPIs."""
    rows = []
    for op in sorted(trace.radio.keys() | {p.operator for p in trace.packets}):
        for dirn in ("UL", "DL"):
            pkts = trace.packets_for(op, dirn)
            if not pkts:
                continue
            lats = [effective_latency(p) for p in pkts]
            stats = latency_percentiles(lats)
            losses = loss_report(lats)
            rows.append(
                {
                    "run_id": trace.run_id,
                    "operator": op,
                    "direction": dirn,
                    "sample_count": stats.sample_count,
                    "p50_ms": stats.p50,
                    "p90_ms": stats.p90,
                    "p95_ms": stats.p95,
                    "p99_ms": stats.p99,
                    "p999_ms": stats.p999,
                    "late_loss_ratio": losses.late_loss_ratio,
                    "true_loss_ratio": losses.true_loss_ratio,
                    "delivered_ok_ratio": losses.delivered_ok_ratio,
                }
            )
    return rows
