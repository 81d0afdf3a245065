"""Deterministic synthetic 12-lead ECG and corrupted detection streams.

Two levels of synthesis share one ground truth:

* :func:`generate_record` builds sampled signals (for the full detector);
* :func:`corrupt_detections` / :func:`corrupt_record_detections` perturb the
  truth directly into per-lead detection lists (for the fusion stage alone).

Randomness comes from numpy's PCG64 seeded through ``SeedSequence``; each
lead draws from its own child stream ``SeedSequence([seed, lead])`` so that
adding leads never changes the existing ones.  Beat times are drawn as
integers, so ground truth is identical across platforms.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .single_lead import LeadDetections
from .wfdb_io import EcgRecord, RecordHeader, SignalSpec, write_annotations, write_record

LEAD_NAMES = ("I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6")
# rough R amplitudes (mV) and polarity of a normal axis
LEAD_SCALES = (0.8, 1.2, 0.5, -0.9, 0.4, 0.8, -0.7, 1.0, 1.3, 1.6, 1.4, 1.1)
# T amplitude per lead relative to ``t_wave_amplitude``; tallest in V2-V4
T_WAVE_PROFILE = (0.6, 0.7, 0.3, 0.6, 0.3, 0.5, 0.4, 1.0, 1.0, 0.9, 0.7, 0.6)

MIN_RR_S = 0.3
T_WAVE_OFFSET_S = 0.3
T_WAVE_SIGMA_S = 0.04
REFRACTORY_MS = 200.0


@dataclass(frozen=True)
class SynthSpec:
    fs: float = 257.0
    duration_s: float = 30.0
    mean_rr_s: float = 0.8
    rr_jitter_s: float = 0.05
    qrs_width_ms: float = 90.0
    lead_scales: tuple = LEAD_SCALES
    t_wave_amplitude: float = 0.2
    t_wave_profile: tuple = T_WAVE_PROFILE
    noise_rms: float = 0.0
    fp_rate: float = 0.0
    fn_rate: float = 0.0
    detection_jitter_ms: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.fs > 0 or not self.duration_s > 0 or not self.mean_rr_s > 0:
            raise ValueError("fs, duration_s and mean_rr_s must be positive")
        if self.rr_jitter_s < 0 or self.detection_jitter_ms < 0 or self.noise_rms < 0:
            raise ValueError("jitters and noise must be non-negative")
        if not 80 <= self.qrs_width_ms <= 100:
            raise ValueError("qrs_width_ms must lie in [80, 100]")
        for name in ("fp_rate", "fn_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if len(self.lead_scales) < 1:
            raise ValueError("need at least one lead")
        if len(self.t_wave_profile) != len(self.lead_scales):
            raise ValueError("t_wave_profile needs one entry per lead")

    @property
    def n_leads(self):
        return len(self.lead_scales)

    def samples(self, ms):
        return int(round(ms * self.fs / 1000))


def ground_truth(spec):
    """Integer beat locations: RR ~ U[mean - jitter, mean + jitter], >= 300 ms."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0xB7]))
    fs = spec.fs
    mean = int(round(spec.mean_rr_s * fs))
    jit = int(round(spec.rr_jitter_s * fs))
    lo = max(int(np.ceil(MIN_RR_S * fs)), mean - jit)
    hi = max(lo, mean + jit)
    n = int(round(spec.duration_s * fs))
    # margin keeps the whole complex and T wave inside the record
    margin = int(round(0.5 * fs))
    beats = []
    t = margin
    while t < n - margin:
        beats.append(t)
        t += int(rng.integers(lo, hi + 1))
    if len(beats) < 5:
        raise ValueError("spec yields fewer than 5 beats")
    return np.array(beats, dtype=np.int64)


def _ricker(t, sigma):
    u = (t / sigma) ** 2
    return (1 - u) * np.exp(-u / 2)


def beat_template(spec):
    """(offsets, qrs, t_wave) sampled on a window around an R peak at offset 0."""
    fs = spec.fs
    half = int(round((T_WAVE_OFFSET_S + 4 * T_WAVE_SIGMA_S) * fs))
    k = np.arange(-half, half + 1)
    t = k / fs
    # negative lobes of the Ricker wavelet reach ~3 sigma on each side
    sigma = spec.qrs_width_ms / 1000 / 6
    qrs = _ricker(t, sigma)
    qrs[np.abs(t) > 4 * sigma] = 0.0
    tw = np.exp(-0.5 * ((t - T_WAVE_OFFSET_S) / T_WAVE_SIGMA_S) ** 2)
    return k, qrs, tw


def generate_record(spec=SynthSpec(), name="synth"):
    """Synthesize an :class:`EcgRecord` and its ground-truth R locations."""
    truth = ground_truth(spec)
    n = int(round(spec.duration_s * spec.fs))
    k, qrs, tw = beat_template(spec)
    train = np.zeros(n)
    train[truth] = 1.0
    qrs_sig = _place(train, k, qrs)
    tw_sig = _place(train, k, tw)
    leads = np.empty((spec.n_leads, n))
    for i, scale in enumerate(spec.lead_scales):
        t_amp = spec.t_wave_amplitude * spec.t_wave_profile[i]
        leads[i] = scale * (qrs_sig + t_amp * tw_sig)
        if spec.noise_rms > 0:
            rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 1000 + i]))
            leads[i] += rng.normal(0.0, spec.noise_rms, n)
    names = LEAD_NAMES if spec.n_leads == len(LEAD_NAMES) else [f"L{i + 1}" for i in range(spec.n_leads)]
    header = RecordHeader(
        record_name=name, num_signals=spec.n_leads, sampling_rate=spec.fs, num_samples=n,
        signals=tuple(SignalSpec(file_name=f"{name}.dat", storage_format=16, adc_gain=1000.0,
                                 baseline=0, adc_resolution=16, description=names[i])
                      for i in range(spec.n_leads)))
    # quantize to the 1 uV ADC grid so written and in-memory records agree
    mv = np.rint(leads * 1000.0) / 1000.0
    return EcgRecord(header, mv), truth


def _place(train, offsets, shape):
    # sum of ``shape`` centred on every nonzero of ``train``
    out = np.zeros(train.size)
    for t in np.flatnonzero(train):
        idx = t + offsets
        ok = (idx >= 0) & (idx < train.size)
        out[idx[ok]] += shape[ok]
    return out


def write_synth(directory, spec=SynthSpec(), name="synth"):
    """Write ``<name>.hea``/``.dat`` (format 16) and ``<name>.atr``."""
    record, truth = generate_record(spec, name)
    path = os.path.join(os.fspath(directory), name)
    write_record(path, record)
    write_annotations(path, truth)
    return path, record, truth


def _lead_rng(spec, lead):
    return np.random.default_rng(np.random.SeedSequence([spec.seed, lead]))


def _lead_events(truth, spec, lead):
    """(kept true detections, list of (interval, fp location)) for one lead."""
    truth = np.asarray(truth, dtype=np.int64)
    rng = _lead_rng(spec, lead)
    n = truth.size
    keep = rng.random(n) >= spec.fn_rate
    j = spec.samples(spec.detection_jitter_ms)
    jitter = rng.integers(-j, j + 1, n) if j else np.zeros(n, dtype=np.int64)
    beats = (truth + jitter)[keep]

    fps = []
    r = spec.samples(REFRACTORY_MS)
    counts = rng.poisson(spec.fp_rate, max(n - 1, 0)) if spec.fp_rate > 0 else np.zeros(max(n - 1, 0), int)
    for i in np.flatnonzero(counts):
        lo, hi = truth[i] + r + j, truth[i + 1] - r - j
        if hi < lo:
            continue
        placed = []
        for p in np.sort(rng.integers(lo, hi + 1, counts[i])):
            if not placed or p - placed[-1] >= r:
                placed.append(int(p))
        fps += [(int(i), p) for p in placed]
    return beats, fps


def corrupt_detections(truth, spec, lead):
    """Turn ground truth into one lead's detection list.

    Each beat is dropped with probability ``fn_rate`` and otherwise jittered
    uniformly within +-``detection_jitter_ms``; spurious detections arrive as
    a Poisson process of ``fp_rate`` per RR interval, kept at least a
    refractory period (plus jitter) away from the true beats.
    """
    beats, fps = _lead_events(truth, spec, lead)
    loc = np.sort(np.concatenate([beats, np.array([p for _, p in fps], dtype=np.int64)]))
    return LeadDetections(lead, loc)


def corrupt_record_detections(truth, spec, n_leads=None, max_fp_leads=4):
    """Detection lists for every lead, with at most ``max_fp_leads`` leads
    carrying a spurious detection in any one RR interval.

    Spurious detections in different intervals are more than two refractory
    periods apart, so no more than ``max_fp_leads`` of them can ever fall
    within one fusion window.  Returns ``(detections, fp_locations)`` where
    ``fp_locations[l]`` lists the spurious samples kept for lead ``l``.
    """
    n_leads = spec.n_leads if n_leads is None else n_leads
    events = [_lead_events(truth, spec, lead) for lead in range(n_leads)]
    by_interval = {}
    for lead, (_, fps) in enumerate(events):
        for interval, p in fps:
            by_interval.setdefault(interval, set()).add(lead)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0xCA9]))
    allowed = {}
    for interval in sorted(by_interval):
        leads = sorted(by_interval[interval])
        if len(leads) > max_fp_leads:
            leads = sorted(rng.choice(leads, max_fp_leads, replace=False).tolist())
        allowed[interval] = set(leads)
    out, fp_out = [], []
    for lead, (beats, fps) in enumerate(events):
        kept = [p for interval, p in fps if lead in allowed.get(interval, ())]
        loc = np.sort(np.concatenate([beats, np.array(kept, dtype=np.int64)]))
        out.append(LeadDetections(lead, loc))
        fp_out.append(kept)
    return out, fp_out
