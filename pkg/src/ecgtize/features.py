"""Fidelity metrics (PCC, RMSE, soft-DTW) and clinical fiducial extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import DegenerateInput, LengthMismatch, NoBeatsDetected

SDTW_DEFAULT_GAMMA = 1.0

# Fiducial search windows, seconds relative to the named landmark.
Q_SEARCH = 0.060          # local minimum before R
S_SEARCH = 0.080          # local minimum after R
T_SEARCH = (0.040, 0.400)  # after S
P_SEARCH = (0.280, 0.080)  # before R
ONSET_LEVEL = 0.02        # fraction of R deflection counted as baseline

BEAT_PRE = 200            # samples before R in a heartbeat window
BEAT_POST = 300           # samples after R


# ---------------------------------------------------------------------------
# Signal-to-signal metrics


def pcc(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation coefficient of two equal-length signals."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise DegenerateInput("need at least 2 samples")
    da = a - a.mean()
    db = b - b.mean()
    na = math.sqrt(float(da @ da))
    nb = math.sqrt(float(db @ db))
    if na == 0.0 or nb == 0.0:
        raise DegenerateInput("constant signal has no defined correlation")
    return float(da @ db) / (na * nb)


def rmse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise LengthMismatch("empty signals")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def _softmin3(x0, x1, x2, gamma: float):
    """Elementwise -gamma*log(sum(exp(-x/gamma))) over three arrays, stable."""
    m = np.minimum(np.minimum(x0, x1), x2)
    with np.errstate(invalid="ignore", over="ignore"):
        s = (np.exp(-(x0 - m) / gamma) + np.exp(-(x1 - m) / gamma)
             + np.exp(-(x2 - m) / gamma))
        out = m - gamma * np.log(s)
    return np.where(np.isinf(m), m, out)


def sdtw(a: np.ndarray, b: np.ndarray, gamma: float = SDTW_DEFAULT_GAMMA) -> float:
    """Soft dynamic time warping cost.

    Squared-difference ground cost; each cell soft-mins over its three
    monotone predecessors, so the result is the soft minimum of total cost
    over all monotone alignment paths.  gamma -> 0 recovers classic DTW.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise LengthMismatch("sdtw needs non-empty signals")
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    if a.size * b.size <= 64:
        return _sdtw_scalar(a, b, gamma)
    return _sdtw_diagonal(a, b, gamma)


def _sdtw_scalar(a: np.ndarray, b: np.ndarray, gamma: float) -> float:
    n, m = len(a), len(b)
    table = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            cost = (a[i] - b[j]) ** 2
            if i == 0 and j == 0:
                table[i][j] = cost
            elif i == 0:
                table[i][j] = cost + table[0][j - 1]
            elif j == 0:
                table[i][j] = cost + table[i - 1][0]
            else:
                table[i][j] = cost + _softmin3_scalar(
                    table[i - 1][j], table[i][j - 1], table[i - 1][j - 1], gamma)
    return table[n - 1][m - 1]


def _softmin3_scalar(x0: float, x1: float, x2: float, gamma: float) -> float:
    m = min(x0, x1, x2)
    if math.isinf(m):
        return m
    s = (math.exp(-(x0 - m) / gamma) + math.exp(-(x1 - m) / gamma)
         + math.exp(-(x2 - m) / gamma))
    return m - gamma * math.log(s)


def _sdtw_diagonal(a: np.ndarray, b: np.ndarray, gamma: float) -> float:
    """Anti-diagonal sweep; cells on a diagonal have no mutual dependence."""
    n, m = len(a), len(b)
    inf = np.inf
    # R is indexed 1..n x 1..m with a virtual border: R[0,0]=0, rest inf.
    # Three rolling buffers hold diagonals s-2, s-1 and s, indexed by i.
    prev2 = np.full(n + 1, inf)
    prev1 = np.full(n + 1, inf)
    cur = np.full(n + 1, inf)
    prev2[0] = 0.0                # R[0,0] lives on diagonal s=0
    for s in range(2, n + m + 1):
        lo = max(1, s - m)
        hi = min(n, s - 1)
        i = np.arange(lo, hi + 1)
        j = s - i
        cost = (a[i - 1] - b[j - 1]) ** 2
        up = prev1[i - 1]         # (i-1, j) on diagonal s-1
        left = prev1[i]           # (i, j-1) on diagonal s-1
        diag = prev2[i - 1]       # (i-1, j-1) on diagonal s-2
        cur.fill(inf)
        cur[lo:hi + 1] = cost + _softmin3(up, left, diag, gamma)
        prev2, prev1, cur = prev1, cur, prev2
    return float(prev1[n])


# ---------------------------------------------------------------------------
# Heartbeats and fiducials


@dataclass
class Heartbeat:
    """R-centered window: 200 samples before the peak, 300 after."""

    samples: np.ndarray
    r_index: int              # R position in the source lead
    partial: bool = False     # truncated at a record edge


@dataclass
class BeatFiducials:
    r: int
    p: int
    q: int
    s: int
    t: int
    amplitudes: dict[str, float]
    q_onset: float
    s_end: float
    t_end: float
    qt: float                 # seconds
    qrs: float                # seconds


@dataclass
class FiducialSet:
    beats: list[BeatFiducials]
    sample_rate: float
    r_peaks: list[int] = field(default_factory=list)

    FEATURES = ("p_pos", "q_pos", "s_pos", "t_pos", "qt", "qrs",
                "r_amp", "p_amp", "q_amp", "s_amp", "t_amp")

    def medians(self) -> dict[str, float]:
        """Per-record medians: wave positions in seconds from record start,
        durations in seconds, peak amplitudes in input units."""
        if not self.beats:
            raise NoBeatsDetected("no beats to summarize")
        fs = self.sample_rate
        out = {}
        for wave in "pqst":
            out[f"{wave}_pos"] = float(np.median([getattr(b, wave) for b in self.beats])) / fs
        out["qt"] = float(np.median([b.qt for b in self.beats]))
        out["qrs"] = float(np.median([b.qrs for b in self.beats]))
        for wave in ("r", "p", "q", "s", "t"):
            out[f"{wave}_amp"] = float(np.median(
                [b.amplitudes[wave] for b in self.beats]))
        return out


def detect_r_peaks(x: np.ndarray, fs: float = 500.0) -> list[int]:
    """R peak indices via band-limited energy and adaptive thresholds."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < fs:
        raise NoBeatsDetected("signal shorter than 1 s")
    if np.ptp(x) == 0:
        raise NoBeatsDetected("constant signal")
    nyq = fs / 2.0
    b, a = sps.butter(2, [5.0 / nyq, 15.0 / nyq], btype="band")
    filtered = sps.filtfilt(b, a, x)
    energy = np.gradient(filtered) ** 2
    win = max(1, int(0.150 * fs))
    integrated = np.convolve(energy, np.ones(win) / win, mode="same")

    refractory = int(0.200 * fs)
    candidates, _ = sps.find_peaks(integrated, distance=refractory)
    if candidates.size == 0:
        raise NoBeatsDetected("no energy peaks")

    slope = np.abs(np.gradient(filtered))

    def max_slope(c):
        lo = max(0, c - int(0.040 * fs))
        hi = min(len(x), c + int(0.040 * fs) + 1)
        return float(slope[lo:hi].max())

    spk = 0.25 * float(integrated[candidates].max())
    npk = 0.5 * float(np.median(integrated))
    baseline = float(np.median(x))
    peaks = []
    last_slope = 0.0
    for c in candidates:
        threshold = npk + 0.25 * (spk - npk)
        is_signal = integrated[c] > threshold
        if is_signal and peaks and c - peaks[-1] < 0.360 * fs \
                and max_slope(c) < 0.5 * last_slope:
            is_signal = False    # T wave: too close and too shallow
        if is_signal:
            lo = max(0, c - int(0.040 * fs))
            hi = min(len(x), c + int(0.040 * fs) + 1)
            r = lo + int(np.argmax(np.abs(x[lo:hi] - baseline)))
            if not peaks or r - peaks[-1] >= refractory:
                peaks.append(r)
                last_slope = max_slope(c)
            spk = 0.125 * float(integrated[c]) + 0.875 * spk
        else:
            npk = 0.125 * float(integrated[c]) + 0.875 * npk
    if not peaks:
        raise NoBeatsDetected("no peaks above threshold")
    return peaks


def segment_heartbeats(x: np.ndarray, r_peaks: list[int]) -> list[Heartbeat]:
    """Cut R-centered windows (200 before / 300 after); edge-truncated
    windows are flagged partial."""
    x = np.asarray(x, dtype=np.float64)
    beats = []
    for r in r_peaks:
        lo, hi = r - BEAT_PRE, r + BEAT_POST
        clo, chi = max(0, lo), min(len(x), hi)
        beats.append(Heartbeat(samples=x[clo:chi].copy(), r_index=r,
                               partial=(clo != lo or chi != hi)))
    return beats


def _onset_offset(x, start, stop, step, baseline, eps):
    """March from `start` toward `stop` until the signal settles to baseline."""
    i = start
    while (step > 0 and i < stop) or (step < 0 and i > stop):
        if abs(x[i] - baseline) <= eps:
            return float(i)
        i += step
    return float(stop)


def _tangent_end(x, peak, stop, baseline, fs):
    seg = x[peak:stop]
    if len(seg) < 3:
        return float(stop)
    grad = np.gradient(seg)
    if x[peak] >= baseline:
        k = int(np.argmin(grad))       # steepest descent back to baseline
    else:
        k = int(np.argmax(grad))
    slope = grad[k]
    if slope == 0:
        return float(stop)
    crossing = peak + k + (baseline - x[peak + k]) / slope
    return float(min(max(crossing, peak + k), stop))


def detect_fiducials(x: np.ndarray, fs: float = 500.0) -> FiducialSet:
    """Locate P/Q/R/S/T landmarks and QT/QRS durations per beat.

    Q and S are the local minima within 60/80 ms around R; T is the largest
    absolute deflection 40-400 ms after S; P the largest deflection
    280-80 ms before R.  QT runs from the Q onset (signal settling to
    baseline) to the T end found by the tangent method.
    """
    x = np.asarray(x, dtype=np.float64)
    r_peaks = detect_r_peaks(x, fs)
    baseline = float(np.median(x))
    beats = []
    for r in r_peaks:
        q_lo = r - int(Q_SEARCH * fs)
        if q_lo < 0 or r + int((S_SEARCH + T_SEARCH[1]) * fs) >= len(x) \
                or r - int(P_SEARCH[0] * fs) < 0:
            continue    # not enough room for every fiducial window
        q = q_lo + int(np.argmin(x[q_lo:r]))
        s_hi = r + int(S_SEARCH * fs) + 1
        s = r + 1 + int(np.argmin(x[r + 1:s_hi]))
        t_lo = s + int(T_SEARCH[0] * fs)
        t_hi = s + int(T_SEARCH[1] * fs)
        t = t_lo + int(np.argmax(np.abs(x[t_lo:t_hi] - baseline)))
        p_lo = r - int(P_SEARCH[0] * fs)
        p_hi = r - int(P_SEARCH[1] * fs)
        p = p_lo + int(np.argmax(x[p_lo:p_hi] - baseline))

        eps = max(ONSET_LEVEL * abs(x[r] - baseline), 1e-9)
        q_onset = _onset_offset(x, q, q_lo - 1, -1, baseline, eps)
        s_end = _onset_offset(x, s, t_lo, +1, baseline, eps)
        t_end = _tangent_end(x, t, t_hi, baseline, fs)
        t_end = max(t_end, s_end)
        beats.append(BeatFiducials(
            r=r, p=p, q=q, s=s, t=t,
            amplitudes={w: float(x[i] - baseline)
                        for w, i in (("r", r), ("p", p), ("q", q), ("s", s), ("t", t))},
            q_onset=q_onset, s_end=s_end, t_end=t_end,
            qt=(t_end - q_onset) / fs, qrs=(s_end - q_onset) / fs))
    if not beats:
        raise NoBeatsDetected("no beat had room for all fiducial windows")
    return FiducialSet(beats=beats, sample_rate=fs, r_peaks=r_peaks)


def compare_features(dig: FiducialSet, ref: FiducialSet) -> dict[str, float]:
    """Absolute differences of per-record medians, matching the feature-delta
    table layout (positions and durations in seconds, amplitudes in input
    units)."""
    dm = dig.medians()
    rm = ref.medians()
    return {name: abs(dm[name] - rm[name]) for name in FiducialSet.FEATURES}


# ---------------------------------------------------------------------------
# Report container


@dataclass
class LeadMetrics:
    pcc: float | None         # None when degenerate (excluded from means)
    rmse: float
    sdtw: float


@dataclass
class MetricsReport:
    scope: str                                  # observed | reconstructed | full
    per_lead: dict[str, LeadMetrics]

    def aggregate(self) -> dict[str, float]:
        pccs = [m.pcc for m in self.per_lead.values() if m.pcc is not None]
        out = {
            "pcc": float(np.mean(pccs)) if pccs else float("nan"),
            "rmse": float(np.mean([m.rmse for m in self.per_lead.values()])),
            "sdtw": float(np.mean([m.sdtw for m in self.per_lead.values()])),
            "degenerate": float(len(self.per_lead) - len(pccs)),
        }
        return out


def metrics_by_scope(dig_leads: np.ndarray, ref_leads: np.ndarray,
                     observed: np.ndarray, lead_names,
                     gamma: float = SDTW_DEFAULT_GAMMA) -> list[MetricsReport]:
    """PCC/RMSE/SDTW per lead for the observed, reconstructed and full
    sample scopes of a digitized-vs-reference pair.  Scopes with fewer than
    two selected samples for a lead omit that lead; degenerate correlations
    are recorded as None."""
    scopes = {"observed": observed, "reconstructed": ~observed,
              "full": np.ones_like(observed)}
    reports = []
    for scope, mask in scopes.items():
        per_lead: dict[str, LeadMetrics] = {}
        for i, lead in enumerate(lead_names):
            sel = mask[i]
            if sel.sum() < 2:
                continue
            a, b = dig_leads[i, sel], ref_leads[i, sel]
            try:
                r = pcc(a, b)
            except DegenerateInput:
                r = None
            per_lead[lead] = LeadMetrics(pcc=r, rmse=rmse(a, b),
                                         sdtw=sdtw(a, b, gamma))
        reports.append(MetricsReport(scope=scope, per_lead=per_lead))
    return reports
