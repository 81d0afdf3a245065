"""Beat-by-beat scoring of detections against reference annotations."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .fusion import FusionConfig, FusionError, fuse_record

DEFAULT_TOLERANCE_MS = 150.0

REPORT_COLUMNS = ("record", "actual", "tp", "fn", "fp", "se_pct", "ppr_pct",
                  "mean_err_ms", "mean_abs_err_ms", "std_err_ms")


@dataclass
class MatchResult:
    tp: int
    fn: int
    fp: int
    pairs: list
    localization_errors_ms: list = field(default_factory=list)

    @property
    def errors_samples(self):
        return [d - r for r, d in self.pairs]


def tolerance_samples(fs, tolerance_ms=DEFAULT_TOLERANCE_MS):
    return int(round(tolerance_ms * fs / 1000))


def _match_cluster(R, D, tol):
    # best non-crossing matching of two short ascending lists: most pairs,
    # then smallest total |error|; ties prefer pairing, then the earlier reference
    a, b = len(R), len(D)
    key = [[(0, 0)] * (b + 1) for _ in range(a + 1)]
    move = [[None] * (b + 1) for _ in range(a + 1)]
    for i in range(a - 1, -1, -1):
        for j in range(b - 1, -1, -1):
            best, mv = key[i][j + 1], "d"
            if key[i + 1][j] > best:
                best, mv = key[i + 1][j], "r"
            err = abs(R[i] - D[j])
            if err <= tol:
                tp, neg = key[i + 1][j + 1]
                if (tp + 1, neg - err) >= best:
                    best, mv = (tp + 1, neg - err), "p"
            key[i][j], move[i][j] = best, mv
    pairs = []
    i = j = 0
    while i < a and j < b:
        mv = move[i][j]
        if mv == "p":
            pairs.append((R[i], D[j]))
            i += 1
            j += 1
        elif mv == "r":
            i += 1
        else:
            j += 1
    return pairs


def bxb_match(reference, detected, tolerance_samples, fs=None):
    """Pair reference beats with detections lying within the tolerance.

    The result is a maximum matching; among maximum matchings it has the
    smallest total absolute error, and a detection equally close to two
    references goes to the earlier one.  The merged time line is cut
    wherever consecutive events are more than the tolerance apart (no pair
    can straddle such a gap) and each cluster, normally a single beat, is
    solved exactly, so the cost is linear for realistic inputs.
    """
    ref = np.asarray(reference, dtype=np.int64).ravel()
    det = np.asarray(detected, dtype=np.int64).ravel()
    tol = int(tolerance_samples)
    n = ref.size
    pairs = []
    if n and det.size:
        allt = np.concatenate([ref, det])
        order = np.argsort(allt, kind="stable")
        cuts = np.flatnonzero(np.diff(allt[order]) > tol) + 1
        bounds = np.concatenate([[0], cuts, [allt.size]])
        refs_before = np.concatenate([[0], np.cumsum(order < n)])
        r0, r1 = refs_before[bounds[:-1]], refs_before[bounds[1:]]
        d0, d1 = bounds[:-1] - r0, bounds[1:] - r1
        for ra, rb, da, db in zip(r0.tolist(), r1.tolist(), d0.tolist(), d1.tolist()):
            if ra == rb or da == db:
                continue
            if rb - ra == 1 and db - da == 1:
                pairs.append((int(ref[ra]), int(det[da])))
            else:
                pairs += _match_cluster(ref[ra:rb].tolist(), det[da:db].tolist(), tol)
    tp = len(pairs)
    errs = [1000.0 * (d - r) / fs for r, d in pairs] if fs else []
    return MatchResult(tp=tp, fn=len(ref) - tp, fp=len(det) - tp, pairs=pairs,
                       localization_errors_ms=errs)


def sensitivity(tp, fn):
    """Se = 100 TP / (TP + FN); ``None`` when there are no reference beats."""
    return None if tp + fn == 0 else 100.0 * tp / (tp + fn)


def positive_predictivity(tp, fp):
    """+Pr = 100 TP / (TP + FP); ``None`` when nothing was detected."""
    return None if tp + fp == 0 else 100.0 * tp / (tp + fp)


@dataclass
class RecordScore:
    actual: int
    tp: int
    fn: int
    fp: int
    se_pct: float | None
    ppr_pct: float | None
    mean_err_ms: float | None = None
    mean_abs_err_ms: float | None = None
    std_err_ms: float | None = None
    errors_ms: list = field(default_factory=list, repr=False)

    @classmethod
    def from_match(cls, m):
        e = np.asarray(m.localization_errors_ms, dtype=float)
        stats = (float(e.mean()), float(np.abs(e).mean()), float(e.std())) if e.size else (None,) * 3
        return cls(m.tp + m.fn, m.tp, m.fn, m.fp, sensitivity(m.tp, m.fn),
                   positive_predictivity(m.tp, m.fp), *stats,
                   errors_ms=list(m.localization_errors_ms))


@dataclass
class EvalReport:
    per_record: dict = field(default_factory=dict)

    def add(self, name, score):
        self.per_record[name] = score

    @property
    def aggregate(self):
        tp = sum(s.tp for s in self.per_record.values())
        fn = sum(s.fn for s in self.per_record.values())
        fp = sum(s.fp for s in self.per_record.values())
        errs = [e for s in self.per_record.values() for e in s.errors_ms]
        m = MatchResult(tp, fn, fp, [], errs)
        return RecordScore.from_match(m)

    def failing(self, min_se=None, min_ppr=None):
        """Records whose Se or +Pr falls below the given floors (percent)."""
        bad = []
        for name, s in self.per_record.items():
            if min_se is not None and s.se_pct is not None and s.se_pct < min_se:
                bad.append(name)
            elif min_ppr is not None and s.ppr_pct is not None and s.ppr_pct < min_ppr:
                bad.append(name)
        return bad


def score_record(reference, detected, fs, tolerance_ms=DEFAULT_TOLERANCE_MS):
    m = bxb_match(reference, detected, tolerance_samples(fs, tolerance_ms), fs=fs)
    return RecordScore.from_match(m)


def lead_count_sweep(detections, reference, fs, min_leads_range=range(4, 12),
                     delta_ms=90.0, tolerance_ms=DEFAULT_TOLERANCE_MS):
    """Fuse and score once per ``min_leads`` value.

    Returns a list of dicts with keys ``min_leads, tp, fn, fp, se_pct,
    ppr_pct``.  Raises :class:`FusionError` if a value exceeds the number of
    leads.
    """
    rows = []
    for k in min_leads_range:
        if k > len(detections):
            raise FusionError(f"min_leads={k} exceeds the {len(detections)} available leads")
        fused = fuse_record(detections, fs, FusionConfig(delta_ms=delta_ms, min_leads=k))
        s = score_record(reference, fused.locations, fs, tolerance_ms)
        rows.append({"min_leads": k, "tp": s.tp, "fn": s.fn, "fp": s.fp,
                     "se_pct": s.se_pct, "ppr_pct": s.ppr_pct})
    return rows


def sweep_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["min_leads", "tp", "fn", "fp", "se_pct", "ppr_pct"])
    for r in rows:
        w.writerow([r["min_leads"], r["tp"], r["fn"], r["fp"],
                    _fmt(r["se_pct"]), _fmt(r["ppr_pct"])])
    return buf.getvalue()


def _fmt(x, digits=2):
    return "" if x is None else f"{x:.{digits}f}"


def _row(name, s):
    return [name, s.actual, s.tp, s.fn, s.fp, _fmt(s.se_pct), _fmt(s.ppr_pct),
            _fmt(s.mean_err_ms), _fmt(s.mean_abs_err_ms), _fmt(s.std_err_ms)]


def render_report(report, fmt="text"):
    """Render per-record rows plus a ``Total`` row (omitted when empty)."""
    rows = [_row(name, s) for name, s in report.per_record.items()]
    if report.per_record:
        rows.append(_row("Total", report.aggregate))
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        w.writerows(rows)
        return buf.getvalue()
    if fmt == "json":
        def dump(s):
            d = asdict(s)
            d.pop("errors_ms")
            return d
        out = {"records": {n: dump(s) for n, s in report.per_record.items()}}
        if report.per_record:
            out["total"] = dump(report.aggregate)
        return json.dumps(out, indent=1)
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    head = ["Records", "Actual", "TP", "FN", "FP", "Se%", "+Pr%", "err", "|err|", "sd"]
    table = [head] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(head))]
    lines = ["  ".join(c.rjust(wd) for c, wd in zip(r, widths)) for r in table]
    return "\n".join(lines) + "\n"
