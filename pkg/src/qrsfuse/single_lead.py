"""Per-lead QRS detection.

Pipeline: db6 subbands d4+d5 -> 7-term FIR smoother -> Hilbert transform ->
``s_H**2 / |s_H|`` -> adaptive threshold -> fiducial refinement on the raw
lead.
"""
from __future__ import annotations

from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps
from scipy.ndimage import maximum_filter1d

from .wavelet import DEFAULT_LEVELS, QRS_BANDS, DecompositionError, dwt_decompose, reconstruct

HILBERT_BLOCK = 2 ** 20
FIDUCIAL_WINDOW_MS = 40.0
RR_HISTORY = 8


@dataclass(frozen=True)
class DetectorConfig:
    refractory_ms: float = 200.0
    init_window_s: float = 2.0
    threshold_fraction: float = 0.4
    peak_memory: float = 0.875
    searchback_factor: float = 1.66
    searchback_fraction: float = 0.5
    t_wave_window_ms: float = 360.0
    t_wave_slope_ratio: float = 0.5
    bands: tuple = QRS_BANDS
    levels: int = DEFAULT_LEVELS

    def __post_init__(self):
        if not self.refractory_ms > 0:
            raise ValueError("refractory_ms must be positive")
        if not self.init_window_s > 0:
            raise ValueError("init_window_s must be positive")
        if self.t_wave_window_ms < 0:
            raise ValueError("t_wave_window_ms must be non-negative")
        for name in ("threshold_fraction", "peak_memory", "searchback_fraction",
                     "t_wave_slope_ratio"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if not self.searchback_factor > 1:
            raise ValueError("searchback_factor must be > 1")


@dataclass(frozen=True)
class LeadDetections:
    lead_index: int
    locations: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=np.int64)
        if loc.ndim != 1:
            raise ValueError("locations must be one-dimensional")
        if loc.size > 1 and np.any(np.diff(loc) <= 0):
            raise ValueError("locations must be strictly increasing")
        loc.setflags(write=False)
        object.__setattr__(self, "locations", loc)

    def __len__(self):
        return self.locations.size


def _eq4_taps():
    h = np.zeros(12)
    for n0 in range(1, 8):
        h[n0] += 12 / 5
        h[n0 + 2] -= 12 / 5
        h[n0 + 4] -= 11 / 10
    return h / 8


LOWPASS_TAPS = _eq4_taps()


def lowpass_eq4(s0):
    """Causal 12-tap FIR smoother; samples before the start read as zero.

    ``y[n] = 1/8 * sum_{k=1..7} (12/5 x[n-k] - 12/5 x[n-k-2] - 11/10 x[n-k-4])``
    """
    x = np.asarray(s0, dtype=float)
    return np.convolve(x, LOWPASS_TAPS)[:x.size]


def lowpass_delay(fs, freq=10.0):
    """Group delay (samples) of :data:`LOWPASS_TAPS` near the QRS band centre."""
    _, gd = sps.group_delay((LOWPASS_TAPS, [1.0]), w=[min(freq, 0.45 * fs)], fs=fs)
    return int(round(gd[0]))


def hilbert_transform(x, overlap=None, block=HILBERT_BLOCK):
    """Discrete Hilbert transform by the analytic-signal FFT method.

    Records longer than ``block`` samples are processed in overlapping blocks
    (``overlap`` samples of context on each side, discarded afterwards).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n <= block:
        return np.imag(sps.hilbert(x))
    if overlap is None:
        overlap = block // 16
    step = block - 2 * overlap
    if step <= 0:
        raise ValueError("overlap too large for the block size")
    out = np.empty(n)
    for start in range(0, n, step):
        lo = max(0, start - overlap)
        hi = min(n, start + step + overlap)
        h = np.imag(sps.hilbert(x[lo:hi]))
        stop = min(n, start + step)
        out[start:stop] = h[start - lo:stop - lo]
    return out


def nonlinear_transform(s_h):
    """``s_H**2 / |s_H|`` with 0/0 taken as 0 (i.e. ``|s_H|``)."""
    s_h = np.asarray(s_h, dtype=float)
    mag = np.abs(s_h)
    return np.divide(s_h * s_h, mag, out=np.zeros_like(mag), where=mag > 0)


def hilbert_envelope(x, fs=None, block=HILBERT_BLOCK):
    """Hilbert transform of ``x`` followed by the nonlinear transform.

    With ``fs`` given, long records use a one-second block overlap.
    """
    overlap = int(round(fs)) if fs else None
    return nonlinear_transform(hilbert_transform(x, overlap=overlap, block=block))


def analytic_envelope(x):
    """Magnitude of the analytic signal ``|x + j H{x}|``."""
    return np.abs(sps.hilbert(np.asarray(x, dtype=float)))


def adaptive_threshold(s_nl, fs, cfg=DetectorConfig(), lead_index=0, slope=None):
    """Pick QRS peaks from the enhanced envelope ``s_nl``.

    Candidates are the local maxima left after refractory-distance
    suppression.  A candidate is accepted when it exceeds the running
    threshold and lies at least one refractory period after the previous
    beat; each acceptance updates

        est <- (1 - peak_memory) * s_nl[p] + peak_memory * est
        thr <- threshold_fraction * est

    starting from ``est = max(s_nl[:init_window])``.  When no beat is found
    for ``searchback_factor`` times the mean of the last RR intervals, the
    gap is rescanned at ``searchback_fraction * thr`` and its largest
    qualifying candidate accepted.

    If ``slope`` is given (one value per candidate location, e.g. the peak
    raw-signal slope nearby), a candidate closer than ``t_wave_window_ms`` to
    the previous beat whose slope is below ``t_wave_slope_ratio`` times that
    beat's slope is taken for a T wave and rejected.
    """
    s = np.asarray(s_nl, dtype=float)
    if fs <= 0:
        raise ValueError("fs must be positive")
    if s.size == 0:
        raise ValueError("empty envelope")
    empty = LeadDetections(lead_index, np.empty(0, dtype=np.int64))
    if not np.any(s > 0):
        return empty
    refractory = max(1, int(round(cfg.refractory_ms * fs / 1000)))
    # a negligible decreasing ramp makes equal peaks resolve to the earlier one
    tilt = 1.0 - 1e-12 * np.arange(s.size) / s.size
    peaks, _ = sps.find_peaks(s * tilt, distance=refractory)
    if peaks.size == 0:
        return empty
    values = s[peaks]
    slopes = None if slope is None else np.asarray(slope, dtype=float)[peaks]
    t_window = int(round(cfg.t_wave_window_ms * fs / 1000))

    init = s[:max(1, int(round(cfg.init_window_s * fs)))]
    est = float(init.max()) or float(s.max())
    thr = cfg.threshold_fraction * est
    accepted = []
    rr = deque(maxlen=RR_HISTORY)
    pending = []            # rejected candidate indices (into peaks) since last beat

    def accept(j):
        nonlocal est, thr
        p = int(peaks[j])
        if accepted:
            rr.append(p - accepted[-1])
        accepted.append(p)
        if slopes is not None:
            last_slope[0] = slopes[j]
        est = (1 - cfg.peak_memory) * values[j] + cfg.peak_memory * est
        thr = cfg.threshold_fraction * est

    def is_t_wave(j):
        if slopes is None or not accepted:
            return False
        p = peaks[j]
        if p - accepted[-1] >= t_window:
            return False
        return slopes[j] < cfg.t_wave_slope_ratio * last_slope[0]

    last_slope = [0.0]

    def search_back(until):
        # rescan the gap before ``until`` while it is overdue
        nonlocal pending
        while accepted and rr and until - accepted[-1] > cfg.searchback_factor * np.mean(rr):
            floor = thr * cfg.searchback_fraction
            best = None
            for j in pending:
                p = peaks[j]
                if (p - accepted[-1] >= refractory and until - p >= refractory
                        and values[j] >= floor and not is_t_wave(j)
                        and (best is None or values[j] > values[best])):
                    best = j
            if best is None:
                return
            accept(best)
            pending = [j for j in pending if j > best]

    for j, p in enumerate(peaks):
        search_back(p)
        if (values[j] > thr and (not accepted or p - accepted[-1] >= refractory)
                and not is_t_wave(j)):
            accept(j)
            pending = []
        else:
            pending.append(j)
    search_back(s.size + refractory)
    return LeadDetections(lead_index, np.array(accepted, dtype=np.int64))


def local_slope(raw, fs, window_ms=FIDUCIAL_WINDOW_MS):
    """Largest absolute first difference of ``raw`` within +-window of each
    sample, aligned with the (delayed) envelope."""
    d = np.abs(np.diff(np.asarray(raw, dtype=float), prepend=raw[0]))
    w = max(1, int(round(window_ms * fs / 1000)))
    m = maximum_filter1d(d, 2 * w + 1, mode="nearest")
    delay = lowpass_delay(fs)
    return np.concatenate([np.full(delay, m[0]), m[:m.size - delay]]) if delay > 0 else m


def refine_fiducials(raw, locations, fs, window_ms=FIDUCIAL_WINDOW_MS, refractory=None):
    """Move each location to the largest deflection of ``raw`` within +-window.

    Deflection is measured from the window median so baseline offset does
    not bias the choice.  Locations that collapse to within ``refractory``
    samples of the previous one are dropped, keeping the larger deflection.
    """
    raw = np.asarray(raw, dtype=float)
    w = max(1, int(round(window_ms * fs / 1000)))
    out, amp = [], []
    for c in locations:
        lo, hi = max(0, c - w), min(raw.size, c + w + 1)
        if lo >= hi:
            continue
        seg = raw[lo:hi]
        dev = np.abs(seg - np.median(seg))
        k = int(np.argmax(dev))
        loc, a = lo + k, dev[k]
        if out and loc - out[-1] < (refractory or 1):
            if a > amp[-1]:
                out[-1], amp[-1] = loc, a
            continue
        out.append(loc)
        amp.append(a)
    return np.array(out, dtype=np.int64)


def detect_lead(signal, fs, cfg=DetectorConfig(), lead_index=0):
    """Detect QRS complexes in one lead; returns :class:`LeadDetections`."""
    x = np.asarray(signal, dtype=float)
    if x.size < cfg.init_window_s * fs:
        raise DecompositionError(
            f"lead has {x.size} samples, fewer than the {cfg.init_window_s:g} s "
            "initialisation window")
    dec = dwt_decompose(x, cfg.levels)
    s0 = reconstruct(dec, cfg.bands)
    s_lp = lowpass_eq4(s0)
    s_nl = hilbert_envelope(s_lp, fs)
    coarse = adaptive_threshold(s_nl, fs, cfg, lead_index, slope=local_slope(x, fs))
    if len(coarse) == 0:
        return coarse
    refractory = int(round(cfg.refractory_ms * fs / 1000))
    centred = coarse.locations - lowpass_delay(fs)
    return LeadDetections(lead_index, refine_fiducials(x, centred, fs, refractory=refractory))


def detect_record(record, cfg=DetectorConfig(), leads=None, jobs=None):
    """Run :func:`detect_lead` over the chosen leads of an :class:`EcgRecord`."""
    if leads is None:
        leads = range(record.header.num_signals)
    leads = list(leads)
    for i in leads:
        if not 0 <= i < record.header.num_signals:
            raise IndexError(f"lead {i} out of range")

    def run(i):
        return detect_lead(record.samples[i], record.fs, cfg, lead_index=i)

    if jobs == 1 or len(leads) == 1:
        return [run(i) for i in leads]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, leads))
