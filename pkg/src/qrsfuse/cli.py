"""Command-line entry point: ``qrsfuse detect|run|eval|sweep|synth``.

Exit codes: 0 success, 1 usage error, 2 unreadable input, 3 quality gate
(a record below ``--min-se``/``--min-ppr``).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import evaluation, fusion, single_lead, synth, wfdb_io
from .wavelet import DecompositionError

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_GATE = 0, 1, 2, 3
DATA_DIR_ENV = "QRSFUSE_DATA_DIR"


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------- pipeline

def resolve_record(path):
    """Record path without extension; falls back to ``$QRSFUSE_DATA_DIR``."""
    path = os.fspath(path)
    if path.endswith(".hea"):
        path = path[:-4]
    if os.path.exists(path + ".hea"):
        return path
    root = os.environ.get(DATA_DIR_ENV)
    if root and os.path.exists(os.path.join(root, path) + ".hea"):
        return os.path.join(root, path)
    raise InputError(f"record {path!r} not found (no {path}.hea)")


def load_record(path):
    try:
        return wfdb_io.read_record(resolve_record(path))
    except (OSError, wfdb_io.WfdbError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def process_record(record, det_cfg, fus_cfg, leads=None, jobs=None):
    """Detect on every selected lead and fuse.  Returns (detections, fused, timings)."""
    t0 = time.perf_counter()
    detections = single_lead.detect_record(record, det_cfg, leads=leads, jobs=jobs)
    t1 = time.perf_counter()
    fused = fusion.fuse_record(detections, record.fs, fus_cfg)
    t2 = time.perf_counter()
    return detections, fused, {"detect_and_fuse": t2 - t0, "fusion": t2 - t1}


def evaluate_one(path, det_cfg, fus_cfg, leads, tolerance_ms, annotation_ext):
    record = load_record(path)
    try:
        ref = wfdb_io.read_annotations(resolve_record(path), annotation_ext)
    except (OSError, wfdb_io.WfdbError) as exc:
        raise InputError(f"{path}.{annotation_ext}: {exc}") from exc
    _, fused, _ = process_record(record, det_cfg, fus_cfg, leads)
    return record.header.record_name, evaluation.score_record(
        ref.samples, fused.locations, record.fs, tolerance_ms)


def sweep_one(path, det_cfg, leads, min_leads_range, delta_ms, tolerance_ms, annotation_ext):
    record = load_record(path)
    try:
        ref = wfdb_io.read_annotations(resolve_record(path), annotation_ext)
    except (OSError, wfdb_io.WfdbError) as exc:
        raise InputError(f"{path}.{annotation_ext}: {exc}") from exc
    dets = single_lead.detect_record(record, det_cfg, leads=leads)
    return evaluation.lead_count_sweep(dets, ref.samples, record.fs, min_leads_range,
                                       delta_ms, tolerance_ms)


def read_manifest(path):
    base = os.path.dirname(os.path.abspath(path))
    try:
        with open(path) as fh:
            lines = [ln.split("#", 1)[0].strip() for ln in fh]
    except OSError as exc:
        raise InputError(f"manifest {path}: {exc}") from exc
    out = []
    for ln in lines:
        if not ln:
            continue
        cand = ln if os.path.isabs(ln) else os.path.join(base, ln)
        out.append(cand if os.path.exists(cand + ".hea") else ln)
    return out


def _map(fn, items, jobs):
    if not jobs or jobs <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*items)))


# ------------------------------------------------------------- arguments

def _detector_config(args):
    return single_lead.DetectorConfig(
        refractory_ms=args.refractory_ms, threshold_fraction=args.threshold_fraction,
        bands=tuple(args.bands.split(",")), levels=args.levels)


def _fusion_config(args):
    return fusion.FusionConfig(delta_ms=args.delta_ms, min_leads=args.min_leads)


def _add_detector_flags(p):
    d = single_lead.DetectorConfig()
    p.add_argument("--bands", default=",".join(d.bands),
                   help="comma-separated subbands summed before enveloping (default d4,d5)")
    p.add_argument("--levels", type=int, default=d.levels, help="DWT depth (default 5)")
    p.add_argument("--refractory-ms", type=float, default=d.refractory_ms)
    p.add_argument("--threshold-fraction", type=float, default=d.threshold_fraction)


def _add_fusion_flags(p):
    f = fusion.FusionConfig()
    p.add_argument("--min-leads", type=int, default=f.min_leads,
                   help="smallest agreeing group that yields a beat (default 6)")
    p.add_argument("--delta-ms", type=float, default=f.delta_ms,
                   help="agreement window in ms, 80-100 (default 90)")
    p.add_argument("--leads", type=lambda s: [int(x) for x in s.split(",")],
                   help="comma-separated lead indices (default: all)")
    p.add_argument("--jobs", type=int, default=None, help="parallel workers")


def _records(args):
    records = list(args.records)
    if args.manifest:
        records += read_manifest(args.manifest)
    return records


def build_parser():
    parser = _Parser(prog="qrsfuse", description="Multi-lead QRS detection and fusion")
    parser.add_argument("--config", metavar="FILE",
                        help="JSON file of flag defaults, e.g. {\"min_leads\": 7}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", help="single-lead detections")
    p.add_argument("record")
    p.add_argument("--lead", type=int, action="append",
                   help="lead index (repeatable; default all)")
    p.add_argument("--output", choices=("json", "csv", "text"), default="json")
    p.add_argument("-o", "--out", help="write to file instead of stdout")
    _add_detector_flags(p)

    p = sub.add_parser("run", help="detect on all leads and fuse")
    p.add_argument("record")
    p.add_argument("--output", choices=("json", "csv", "text"), default="json")
    p.add_argument("-o", "--out")
    p.add_argument("--timing", type=int, default=0, metavar="N",
                   help="repeat N times and report processing-time statistics")
    _add_detector_flags(p)
    _add_fusion_flags(p)

    for name, helptext in (("eval", "score fused beats against annotations"),
                           ("sweep", "Se/+Pr versus min_leads")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("records", nargs="*")
        p.add_argument("--manifest", help="file listing one record per line")
        p.add_argument("--annotation-ext", default="atr")
        p.add_argument("--tolerance-ms", type=float, default=evaluation.DEFAULT_TOLERANCE_MS)
        p.add_argument("-o", "--out")
        _add_detector_flags(p)
        _add_fusion_flags(p)
        if name == "eval":
            p.add_argument("--output", choices=("json", "csv", "text"), default="text")
            p.add_argument("--min-se", type=float, help="quality gate: minimum Se%% per record")
            p.add_argument("--min-ppr", type=float, help="quality gate: minimum +Pr%% per record")
        else:
            p.add_argument("--range", default="4:11", help="min_leads range lo:hi inclusive")

    p = sub.add_parser("synth", help="write a synthetic WFDB record with annotations")
    p.add_argument("outdir")
    p.add_argument("--name", default="synth")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fs", type=float, default=257.0)
    p.add_argument("--duration-s", type=float, default=30.0)
    p.add_argument("--beats", type=int, help="approximate beat count (overrides --duration-s)")
    p.add_argument("--mean-rr-s", type=float, default=0.8)
    p.add_argument("--rr-jitter-s", type=float, default=0.05)
    p.add_argument("--qrs-width-ms", type=float, default=90.0)
    p.add_argument("--t-wave", type=float, default=0.2, help="T amplitude relative to QRS")
    p.add_argument("--noise-rms", type=float, default=0.0, help="additive noise, mV")
    return parser


# ------------------------------------------------------------- commands

def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_detect(args):
    record = load_record(args.record)
    leads = args.lead
    for i in leads or ():
        if not 0 <= i < record.header.num_signals:
            raise UsageError(f"--lead {i}: record has {record.header.num_signals} leads")
    dets = single_lead.detect_record(record, _detector_config(args), leads=leads)
    names = record.lead_names
    fs = record.fs
    if args.output == "json":
        out = {"record": record.header.record_name, "fs": fs,
               "leads": [{"lead": d.lead_index, "name": names[d.lead_index],
                          "samples": d.locations.tolist()} for d in dets]}
        text = json.dumps(out, indent=1) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n", delimiter="," if args.output == "csv" else "\t")
        w.writerow(["lead", "sample", "time_s"])
        for d in dets:
            for s in d.locations:
                w.writerow([d.lead_index, int(s), f"{s / fs:.6f}"])
        text = buf.getvalue()
    _emit(text, args.out)
    return EXIT_OK


def cmd_run(args):
    record = load_record(args.record)
    det_cfg, fus_cfg = _detector_config(args), _fusion_config(args)
    _, fused, timing = process_record(record, det_cfg, fus_cfg, args.leads, args.jobs)
    if args.timing:
        runs = [timing] + [process_record(record, det_cfg, fus_cfg, args.leads, args.jobs)[2]
                           for _ in range(args.timing - 1)]
        for key in ("fusion", "detect_and_fuse"):
            t = np.array([r[key] for r in runs])
            print(f"{key}: mean={t.mean():.4f}s var={t.var():.4f} std={t.std():.4f} "
                  f"n={t.size}", file=sys.stderr)
    if args.output == "csv":
        text = fusion.fused_to_csv(fused)
    elif args.output == "text":
        text = "".join(f"{b.sample}\t{b.sample / fused.fs:.3f}\t{b.case}\t{len(b.leads)}\n"
                       for b in fused.beats)
    else:
        text = fusion.fused_to_json(fused, record.header.record_name, record.lead_names) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_eval(args):
    det_cfg, fus_cfg = _detector_config(args), _fusion_config(args)
    items = [(r, det_cfg, fus_cfg, args.leads, args.tolerance_ms, args.annotation_ext)
             for r in _records(args)]
    report = evaluation.EvalReport()
    for name, score in _map(evaluate_one, items, args.jobs):
        report.add(name, score)
    _emit(evaluation.render_report(report, args.output), args.out)
    if report.failing(args.min_se, args.min_ppr):
        print("quality gate failed: " + ", ".join(report.failing(args.min_se, args.min_ppr)),
              file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


def cmd_sweep(args):
    try:
        lo, hi = (int(x) for x in args.range.split(":"))
    except ValueError:
        raise UsageError(f"bad --range {args.range!r}") from None
    det_cfg = _detector_config(args)
    items = [(r, det_cfg, args.leads, range(lo, hi + 1), args.delta_ms, args.tolerance_ms,
              args.annotation_ext) for r in _records(args)]
    per_record = _map(sweep_one, items, args.jobs)
    rows = []
    for k in range(lo, hi + 1):
        sel = [r for rec in per_record for r in rec if r["min_leads"] == k]
        tp, fn, fp = (sum(r[c] for r in sel) for c in ("tp", "fn", "fp"))
        rows.append({"min_leads": k, "tp": tp, "fn": fn, "fp": fp,
                     "se_pct": evaluation.sensitivity(tp, fn),
                     "ppr_pct": evaluation.positive_predictivity(tp, fp)})
    _emit(evaluation.sweep_to_csv(rows), args.out)
    return EXIT_OK


def cmd_synth(args):
    duration = args.duration_s
    if args.beats is not None:
        if args.beats < 5:
            raise UsageError("--beats must be at least 5")
        duration = args.beats * args.mean_rr_s + 1.0
    try:
        spec = synth.SynthSpec(fs=args.fs, duration_s=duration, mean_rr_s=args.mean_rr_s,
                               rr_jitter_s=args.rr_jitter_s, qrs_width_ms=args.qrs_width_ms,
                               t_wave_amplitude=args.t_wave, noise_rms=args.noise_rms,
                               seed=args.seed)
        os.makedirs(args.outdir, exist_ok=True)
        path, _, truth = synth.write_synth(args.outdir, spec, args.name)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(f"{path}: {truth.size} beats")
    return EXIT_OK


COMMANDS = {"detect": cmd_detect, "run": cmd_run, "eval": cmd_eval,
            "sweep": cmd_sweep, "synth": cmd_synth}


def load_config(path):
    """Flag defaults from a JSON object; keys use flag names with ``_`` or ``-``."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, ValueError) as exc:
        raise InputError(f"config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InputError(f"config {path}: expected a JSON object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def apply_config(parser, cfg):
    unknown = set(cfg)
    for sub in parser._subparsers._group_actions[0].choices.values():
        dests = {a.dest for a in sub._actions}
        known = {k: v for k, v in cfg.items() if k in dests}
        sub.set_defaults(**known)
        unknown -= set(known)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            apply_config(parser, load_config(args.config))
            args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"qrsfuse: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (UsageError, fusion.FusionError, DecompositionError, ValueError, IndexError) as exc:
        print(f"qrsfuse: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"qrsfuse: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
