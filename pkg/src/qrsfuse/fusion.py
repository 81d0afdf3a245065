"""Multi-lead fusion of per-lead QRS detections.

Each fusion cycle takes one candidate location per lead (the detection under
that lead's cursor), sorts them, and compares the group that sits within
``delta`` of the earliest candidate (``alpha1``) with the group within
``delta`` of the latest one (``alpha2``).  While the two disagree the vector
is repaired:

* ``card(alpha1) < card(alpha2)``: the earliest candidate is a false alarm;
  its lead moves on to its next detection.
* ``card(alpha1) > card(alpha2)``: the latest candidate belongs to a later
  beat (missed beat or T wave); it is withheld and offered again next cycle.
* equal cardinality, different elements: both of the above in one step.

Once ``alpha1 == alpha2`` every remaining candidate lies within ``delta`` of
the others; if there are at least ``min_leads`` of them their median is
emitted as the fused beat.
"""
from __future__ import annotations

import csv
import io
import json
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class FusionError(ValueError):
    pass


class Relation(Enum):
    ABSOLUTELY_IDENTICAL = "absolutely_identical"
    IDENTICAL = "identical"
    EQUIVALENT_NOT_IDENTICAL = "equivalent_not_identical"
    NEITHER = "neither_equivalent_nor_identical"


AGREEING = (Relation.ABSOLUTELY_IDENTICAL, Relation.IDENTICAL)

FALSE_POSITIVE_SKIPPED = "false_positive_skipped"
DEFERRED_TO_NEXT = "deferred_to_next"
BELOW_MIN_LEADS = "below_min_leads"


@dataclass(frozen=True)
class FusionConfig:
    delta_ms: float = 90.0
    min_leads: int = 6
    tie_epsilon: int = 0

    def __post_init__(self):
        if not 80 <= self.delta_ms <= 100:
            raise ValueError("delta_ms must lie in [80, 100]")
        if self.min_leads < 1:
            raise ValueError("min_leads must be >= 1")
        if self.tie_epsilon < 0:
            raise ValueError("tie_epsilon must be >= 0")

    def delta_samples(self, fs):
        return int(round(self.delta_ms * fs / 1000))


class BeatCandidateVector:
    """Candidate location per lead for one fusion cycle.

    ``candidates`` maps lead -> sample; leads absent from it are exhausted
    or withheld this cycle.  ``cursors`` maps lead -> index into that lead's
    detections (``streams``).  ``events`` accumulates ``(lead, sample,
    reason)`` for every repair applied so far.
    """

    __slots__ = ("beat_index", "candidates", "cursors", "streams", "deferred", "events", "kinds")

    def __init__(self, beat_index, candidates, cursors, streams, deferred=None,
                 events=None, kinds=None):
        self.beat_index = beat_index
        self.candidates = candidates
        self.cursors = cursors
        self.streams = streams
        self.deferred = {} if deferred is None else deferred
        self.events = [] if events is None else events
        self.kinds = [] if kinds is None else kinds

    @classmethod
    def start(cls, beat_index, streams, cursors):
        cand = {lead: s[cursors[lead]] for lead, s in streams.items() if cursors[lead] < len(s)}
        return cls(beat_index, cand, dict(cursors), streams)

    def copy(self):
        return BeatCandidateVector(self.beat_index, dict(self.candidates), dict(self.cursors),
                                   self.streams, dict(self.deferred), list(self.events),
                                   list(self.kinds))

    def __len__(self):
        return len(self.candidates)

    def __repr__(self):
        return f"BeatCandidateVector(n={self.beat_index}, candidates={self.candidates})"


@dataclass(frozen=True)
class FusionWindows:
    """Sorted candidates ``f`` as ``(sample, lead)`` pairs and the two
    delta-windows anchored at its ends."""
    f: tuple
    qrs_min: int
    qrs_max: int
    alpha1: tuple
    alpha2: tuple

    @property
    def card1(self):
        return len(self.alpha1)

    @property
    def card2(self):
        return len(self.alpha2)


@dataclass(frozen=True)
class FusedBeat:
    sample: int
    case: str
    leads: tuple
    discarded: tuple = ()


@dataclass
class FusedBeats:
    beats: list
    fs: float
    delta_samples: int
    # per lead: contributed, skipped as FP, discarded in small groups, unconsumed
    tally: dict = field(default_factory=dict)
    dropped_groups: list = field(default_factory=list)

    @property
    def locations(self):
        return np.array([b.sample for b in self.beats], dtype=np.int64)

    def __len__(self):
        return len(self.beats)


def build_windows(candidates, delta_samples):
    """Sort the candidates and form ``alpha1``/``alpha2``.

    ``candidates`` is a :class:`BeatCandidateVector` or a ``lead -> sample``
    mapping.  Both windows are closed intervals; equal samples are ordered by
    lead index.
    """
    if isinstance(candidates, BeatCandidateVector):
        candidates = candidates.candidates
    if not candidates:
        raise FusionError("no candidates to fuse")
    f = sorted((loc, lead) for lead, loc in candidates.items())
    locs = [p[0] for p in f]
    qmin, qmax = locs[0], locs[-1]
    a1 = bisect_right(locs, qmin + delta_samples)
    a2 = bisect_left(locs, qmax - delta_samples)
    return FusionWindows(tuple(f), qmin, qmax, tuple(f[:a1]), tuple(f[a2:]))


def classify(w, n_active, tie_epsilon=0):
    """Relation between ``alpha1`` and ``alpha2``.

    Both windows are drawn from the same sorted vector, so identical windows
    imply every candidate lies within delta of the others; for a fresh vector
    that means all ``n_active`` leads agree.  Plain ``IDENTICAL`` therefore
    only shows up after repairs have shrunk the vector.
    """
    if w.card1 != w.card2:
        return Relation.NEITHER
    same = all(abs(x[0] - y[0]) <= tie_epsilon for x, y in zip(w.alpha1, w.alpha2))
    if not same:
        return Relation.EQUIVALENT_NOT_IDENTICAL
    if w.card1 == n_active:
        return Relation.ABSOLUTELY_IDENTICAL
    return Relation.IDENTICAL


def median_locate(agreed, K=None):
    """Median of ascending samples; an even count averages the two middle
    values, rounding half up."""
    agreed = list(agreed)
    if K is None:
        K = len(agreed)
    if K < 1 or K != len(agreed):
        raise FusionError("median of an empty or mis-sized group")
    if K % 2:
        return int(agreed[(K + 1) // 2 - 1])
    a, b = int(agreed[K // 2 - 1]), int(agreed[K // 2])
    return (a + b + 1) // 2


def _remaining_less(v, a, b):
    # lexicographic comparison of the detections still ahead of two leads
    sa, sb = v.streams[a], v.streams[b]
    i, j = v.cursors[a], v.cursors[b]
    while i < len(sa) and j < len(sb):
        if sa[i] != sb[j]:
            return sa[i] < sb[j]
        i += 1
        j += 1
    return len(sa) - i < len(sb) - j


def _pick(v, entries, loc):
    """Lead to repair among those tied at ``loc``.

    Chosen by the lead's remaining detections rather than its index, so
    relabelling leads cannot change the fused output; leads with identical
    remaining detections are interchangeable.
    """
    tied = [lead for s, lead in entries if s == loc]
    best = tied[0]
    for lead in tied[1:]:
        if _remaining_less(v, lead, best):
            best = lead
    return best


def _replace_min(v, w):
    loc = w.qrs_min
    lead = _pick(v, w.alpha1, loc)
    v.events.append((lead, loc, FALSE_POSITIVE_SKIPPED))
    stream = v.streams[lead]
    v.cursors[lead] += 1
    if v.cursors[lead] < len(stream):
        v.candidates[lead] = stream[v.cursors[lead]]
    else:
        del v.candidates[lead]


def _defer_max(v, w):
    loc = w.qrs_max
    lead = _pick(v, w.alpha2, loc)
    v.events.append((lead, loc, DEFERRED_TO_NEXT))
    v.deferred[lead] = loc
    del v.candidates[lead]


def repair_step(v, w, case3="defer"):
    """One repair of a disagreeing vector; returns a new vector.

    ``card(alpha1) < card(alpha2)`` replaces the earliest candidate with its
    lead's next detection (or drops the lead if it has none left);
    ``card(alpha1) > card(alpha2)`` withholds the latest candidate for the
    next cycle.  For equal cardinalities ``case3="both"`` applies both
    repairs at once; the default ``"defer"`` only withholds, which never
    consumes a detection and lets the earlier group be settled first.
    """
    if case3 not in ("defer", "both"):
        raise ValueError(f"unknown case3 mode {case3!r}")
    v = v.copy()
    if w.card1 < w.card2:
        _replace_min(v, w)
        v.kinds.append("4i")
    elif w.card1 > w.card2 or case3 == "defer":
        _defer_max(v, w)
        v.kinds.append("4ii" if w.card1 > w.card2 else "3")
    else:
        _replace_min(v, w)
        _defer_max(v, w)
        v.kinds.append("3")
    return v


def _case_label(kinds, relation):
    if not kinds:
        return "1" if relation is Relation.ABSOLUTELY_IDENTICAL else "2"
    distinct = set(kinds)
    if len(distinct) == 1 and distinct != {"3"}:
        return distinct.pop()
    return "mixed"


def fuse_cycle(v, delta_samples, n_active, min_leads, tie_epsilon=0, max_steps=None):
    """Repair ``v`` until its windows agree or fewer than ``min_leads``
    candidates remain.  Returns ``(vector, windows, relation)``; windows is
    ``None`` if every candidate was removed."""
    if max_steps is None:
        max_steps = sum(len(s) for s in v.streams.values()) + len(v.streams)
    w = build_windows(v, delta_samples)
    for _ in range(max_steps):
        rel = classify(w, n_active, tie_epsilon)
        if rel in AGREEING or len(v) < min_leads:
            return v, w, rel
        v = repair_step(v, w)
        if not v.candidates:
            return v, None, None
        w = build_windows(v, delta_samples)
    raise FusionError("fusion cycle did not converge")


def fuse_record(all_leads, fs, cfg=FusionConfig()):
    """Fuse per-lead detections into one beat sequence.

    ``all_leads`` is a list of :class:`~qrsfuse.single_lead.LeadDetections`
    (or plain sequences, indexed by position).  Emitted beats are the medians
    of agreeing groups of at least ``cfg.min_leads`` leads; smaller agreeing
    groups are consumed without output.  Fusion stops once fewer than
    ``min_leads`` leads have detections left.
    """
    streams = {}
    for i, d in enumerate(all_leads):
        lead = getattr(d, "lead_index", i)
        if lead in streams:
            raise FusionError(f"duplicate lead index {lead}")
        loc = getattr(d, "locations", d)
        streams[lead] = [int(x) for x in loc]
    if cfg.min_leads > len(streams):
        raise FusionError(f"min_leads={cfg.min_leads} exceeds the {len(streams)} leads given")
    if sum(1 for s in streams.values() if s) < cfg.min_leads:
        raise FusionError(f"fewer than {cfg.min_leads} leads have detections")

    delta = cfg.delta_samples(fs)
    cursors = {lead: 0 for lead in streams}
    tally = {lead: {"contributed": 0, "skipped": 0, "discarded": 0, "unconsumed": 0}
             for lead in streams}
    beats, dropped = [], []
    n = 0
    while True:
        v = BeatCandidateVector.start(n, streams, cursors)
        n_active = len(v)
        if n_active < cfg.min_leads:
            break
        v, w, rel = fuse_cycle(v, delta, n_active, cfg.min_leads, cfg.tie_epsilon)
        cursors = v.cursors
        for lead, _, reason in v.events:
            if reason == FALSE_POSITIVE_SKIPPED:
                tally[lead]["skipped"] += 1
        agreed = list(w.alpha1) if w is not None else []
        for _, lead in agreed:
            cursors[lead] += 1
        if len(agreed) >= cfg.min_leads:
            for _, lead in agreed:
                tally[lead]["contributed"] += 1
            beats.append(FusedBeat(
                sample=median_locate([p[0] for p in agreed]),
                case=_case_label(v.kinds, rel),
                leads=tuple(sorted(lead for _, lead in agreed)),
                discarded=tuple(v.events)))
        elif agreed:
            for _, lead in agreed:
                tally[lead]["discarded"] += 1
            dropped.append(tuple(agreed))
        n += 1
    for lead, s in streams.items():
        tally[lead]["unconsumed"] = len(s) - cursors[lead]
    return FusedBeats(beats, fs, delta, tally, dropped)


# ---------------------------------------------------------------- output

def fused_to_dict(fused, record="", lead_names=None):
    def name(lead):
        return lead_names[lead] if lead_names else lead

    return {
        "record": record,
        "fs": fused.fs,
        "beats": [
            {
                "sample": b.sample,
                "time_s": round(b.sample / fused.fs, 6),
                "case": b.case,
                "leads": [name(lead) for lead in b.leads],
                "discarded": [{"lead": name(lead), "sample": s, "reason": r}
                              for lead, s, r in b.discarded],
            }
            for b in fused.beats
        ],
    }


def fused_to_json(fused, record="", lead_names=None):
    return json.dumps(fused_to_dict(fused, record, lead_names), indent=1)


def fused_to_csv(fused):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample", "time_s", "case"])
    for b in fused.beats:
        w.writerow([b.sample, f"{b.sample / fused.fs:.6f}", b.case])
    return buf.getvalue()
