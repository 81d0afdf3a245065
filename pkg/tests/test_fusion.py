import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qrsfuse import fusion, synth
from qrsfuse.fusion import (DEFERRED_TO_NEXT, FALSE_POSITIVE_SKIPPED, BeatCandidateVector,
                            FusionConfig, FusionError, Relation, build_windows, classify,
                            fuse_record, median_locate, repair_step)
from qrsfuse.single_lead import LeadDetections

from fixtures import FS, i29_case_4i, i35_case_4ii

DELTA = 23


def vector(locs):
    streams = {i: [x] for i, x in enumerate(locs)}
    return BeatCandidateVector.start(0, streams, {i: 0 for i in streams})


# ------------------------------------------------------------------ config

def test_config():
    assert FusionConfig().delta_samples(257) == DELTA
    for kw in (dict(delta_ms=79), dict(delta_ms=101), dict(min_leads=0)):
        with pytest.raises(ValueError):
            FusionConfig(**kw)


# ------------------------------------------------------------------ windows

def test_windows_all_equal():
    w = build_windows(vector([1000] * 12), DELTA)
    assert w.card1 == w.card2 == 12
    assert [lead for _, lead in w.f] == list(range(12))


def test_windows_outlier_above():
    w = build_windows(vector([1000, 1005, 1010, 1015, 1020, 1025, 1200]), DELTA)
    assert [s for s, _ in w.alpha1] == [1000, 1005, 1010, 1015, 1020]
    # 1025 - 1000 = 25 > 23, so the sixth entry falls outside alpha1
    assert [s for s, _ in w.alpha2] == [1200]
    assert classify(w, 7) is Relation.NEITHER


def test_windows_first_six_with_closed_boundary():
    w = build_windows(vector([1000, 1004, 1008, 1012, 1016, 1023, 1200]), DELTA)
    assert w.card1 == 6 and w.card2 == 1


def test_windows_boundary_inclusive():
    w = build_windows(vector([1000, 1023]), DELTA)
    assert w.card1 == w.card2 == 2
    assert classify(w, 2) is Relation.ABSOLUTELY_IDENTICAL


def test_windows_empty():
    with pytest.raises(FusionError):
        build_windows({}, DELTA)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 300), min_size=1, max_size=12))
def test_window_invariants(locs):
    w = build_windows(vector(locs), DELTA)
    f = [s for s, _ in w.f]
    assert f == sorted(f)
    assert w.qrs_min == f[0] and w.qrs_max == f[-1]
    assert w.alpha1 == w.f[:w.card1] and w.alpha2 == w.f[len(f) - w.card2:]
    assert w.card1 == sum(x <= f[0] + DELTA for x in f)
    assert w.card2 == sum(x >= f[-1] - DELTA for x in f)


# ------------------------------------------------------------------ classify

def test_classify_cases():
    assert classify(build_windows(vector([1000] * 12), DELTA), 12) is Relation.ABSOLUTELY_IDENTICAL
    reduced = build_windows({0: 1000, 1: 1002, 2: 1004}, DELTA)
    assert classify(reduced, 12) is Relation.IDENTICAL
    split = build_windows({0: 1000, 1: 1001, 2: 1100, 3: 1101}, DELTA)
    assert classify(split, 4) is Relation.EQUIVALENT_NOT_IDENTICAL


# ------------------------------------------------------------------ median

def test_median_examples():
    assert median_locate([10, 12, 13, 15, 20]) == 13
    assert median_locate([10, 12, 14, 16]) == 13
    assert median_locate([1000]) == 1000
    assert median_locate([10, 13]) == 12          # 11.5 rounds up
    with pytest.raises(FusionError):
        median_locate([])


def test_median_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100_000):
        k = int(rng.integers(1, 13))
        v = np.sort(rng.integers(0, 10_000, k))
        expected = int(np.floor(np.median(v) + 0.5))
        assert median_locate(v.tolist()) == expected


# ------------------------------------------------------------------ repair

def test_outlier_below_replaced():
    streams = {0: [500, 1002]}
    streams.update({i: [1000] for i in range(1, 12)})
    v = BeatCandidateVector.start(0, streams, {i: 0 for i in streams})
    w = build_windows(v, DELTA)
    assert (w.card1, w.card2) == (1, 11)
    v2 = repair_step(v, w)
    assert v2.candidates[0] == 1002 and v2.cursors[0] == 1
    assert v2.events == [(0, 500, FALSE_POSITIVE_SKIPPED)]
    assert classify(build_windows(v2, DELTA), 12) is Relation.ABSOLUTELY_IDENTICAL
    assert v.candidates[0] == 500            # input left untouched


def test_outlier_above_deferred():
    v = vector([1000] * 11 + [1300])
    v2 = repair_step(v, build_windows(v, DELTA))
    assert 11 not in v2.candidates and v2.deferred == {11: 1300}
    assert v2.cursors[11] == 0
    assert v2.events == [(11, 1300, DEFERRED_TO_NEXT)]


def test_equal_cardinality_modes():
    v = BeatCandidateVector.start(0, {0: [1000, 1100], 1: [1200]}, {0: 0, 1: 0})
    w = build_windows(v, DELTA)
    both = repair_step(v, w, case3="both")
    assert both.candidates == {0: 1100} and both.deferred == {1: 1200}
    defer = repair_step(v, w)
    assert defer.candidates == {0: 1000} and defer.deferred == {1: 1200}
    assert defer.cursors == v.cursors
    with pytest.raises(ValueError):
        repair_step(v, w, case3="x")


def test_equal_groups_do_not_starve_the_later_beat():
    # five leads on an early beat, five of six on the next: the later group
    # must survive intact and be emitted in the following cycle
    early, late = 962, 1179
    streams = [[early]] * 4 + [[1583]] + [[late]] * 5 + [[early, late]] + [[1583]]
    leads = [LeadDetections(i, s) for i, s in enumerate(streams)]
    fused = fuse_record(leads, FS)
    assert fused.locations.tolist() == [late]
    assert len(fused.beats[0].leads) == 6


def test_exhausted_lead_drops_out():
    v = vector([500] + [1000] * 11)
    v2 = repair_step(v, build_windows(v, DELTA))
    assert 0 not in v2.candidates and v2.cursors[0] == 1


@settings(max_examples=300, deadline=None)
@given(st.lists(st.lists(st.integers(0, 400), min_size=1, max_size=3), min_size=2, max_size=12))
def test_repair_is_monotone(raw):
    # every step either removes a candidate or moves one strictly later
    streams = {i: sorted(set(s)) for i, s in enumerate(raw)}
    v = BeatCandidateVector.start(0, streams, {i: 0 for i in streams})
    n = len(v)
    steps = 0
    while v.candidates:
        w = build_windows(v, DELTA)
        if classify(w, n) in fusion.AGREEING:
            break
        v2 = repair_step(v, w)
        before = sorted(v.candidates.values())
        after = sorted(v2.candidates.values())
        assert len(after) < len(before) or after > before
        v = v2
        steps += 1
    assert steps <= sum(len(s) for s in streams.values())


# ------------------------------------------------------------------ narrated traces

def test_i29_trace():
    leads, annotation, skipped = i29_case_4i()
    fused = fuse_record(leads, FS, FusionConfig())
    first = fused.beats[0]
    assert first.case == "4i"
    assert {(lead, s) for lead, s, r in first.discarded if r == FALSE_POSITIVE_SKIPPED} \
        == set(skipped.items())
    agreed = sorted(d.locations[d.locations > 2200][0] for d in leads)
    assert first.sample == median_locate(agreed) == 2260
    assert round(first.sample / FS, 3) == 8.794
    assert abs(first.sample - annotation) / FS * 1000 == pytest.approx(7.78, abs=0.01)
    assert len(first.leads) == 12


def test_i35_trace():
    leads, annotation, deferred = i35_case_4ii()
    fused = fuse_record(leads, FS, FusionConfig())
    first = fused.beats[0]
    assert first.case == "4ii"
    events = [(lead, s) for lead, s, r in first.discarded]
    assert all(r == DEFERRED_TO_NEXT for *_, r in first.discarded)
    assert sorted(events) == sorted(deferred.items())
    assert first.sample == median_locate(list(range(2471, 2480))) == 2475
    assert round(first.sample / FS, 3) == 9.630
    assert (first.sample - annotation) / FS * 1000 == pytest.approx(3.89, abs=0.01)
    # the withheld locations join the following beat
    assert len(fused) == 2 and len(fused.beats[1].leads) == 12


# ------------------------------------------------------------------ fuse_record

def test_identical_streams():
    truth = synth.ground_truth(synth.SynthSpec(duration_s=60, seed=2))
    fused = fuse_record([LeadDetections(i, truth) for i in range(12)], FS)
    assert np.array_equal(fused.locations, truth)
    assert all(b.case == "1" for b in fused.beats)


def test_errors():
    leads = [LeadDetections(i, [100, 400]) for i in range(12)]
    with pytest.raises(FusionError):
        fuse_record(leads, FS, FusionConfig(min_leads=13))
    sparse = leads[:5] + [LeadDetections(i, []) for i in range(5, 12)]
    with pytest.raises(FusionError):
        fuse_record(sparse, FS)


def test_fp_injection_rejected():
    spec = synth.SynthSpec(duration_s=800, fp_rate=0.1, detection_jitter_ms=20, seed=5)
    truth = synth.ground_truth(spec)
    leads, fps = synth.corrupt_record_detections(truth, spec)
    assert sum(map(len, fps)) > 0
    fused = fuse_record(leads, spec.fs)
    assert fused.locations.size == truth.size
    assert np.max(np.abs(fused.locations - truth)) <= spec.samples(20)


def test_small_groups_consumed_without_output():
    # three leads fire early, four agree later: neither group reaches six
    leads = [LeadDetections(i, [100]) for i in range(3)]
    leads += [LeadDetections(i, [300]) for i in range(3, 7)]
    fused = fuse_record(leads, FS)
    # two early leads are skipped, the vector falls to five, and the last
    # early lead is consumed without output; the later four are left over
    assert len(fused) == 0
    assert [len(g) for g in fused.dropped_groups] == [1]
    t = fused.tally
    assert sum(x["skipped"] for x in t.values()) == 2
    assert sum(x["discarded"] for x in t.values()) == 1
    assert sum(x["unconsumed"] for x in t.values()) == 4


def random_streams(draw_seed, n_leads=12):
    spec = synth.SynthSpec(duration_s=20, fp_rate=0.3, fn_rate=0.2, detection_jitter_ms=30,
                           seed=draw_seed)
    truth = synth.ground_truth(spec)
    return [synth.corrupt_detections(truth, spec, lead) for lead in range(n_leads)]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12))
def test_structural_invariants(seed, min_leads):
    leads = random_streams(seed)
    cfg = FusionConfig(min_leads=min_leads)
    fused = fuse_record(leads, FS, cfg)
    loc = fused.locations
    assert np.all(np.diff(loc) > 0)
    for b in fused.beats:
        assert len(b.leads) >= min_leads
    for d in leads:
        t = fused.tally[d.lead_index]
        assert len(d) == t["contributed"] + t["skipped"] + t["discarded"] + t["unconsumed"]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(-5000, 5000))
def test_time_shift_equivariance(seed, shift):
    leads = random_streams(seed)
    base = fuse_record(leads, FS).locations
    shifted = [LeadDetections(d.lead_index, d.locations + shift + 5000) for d in leads]
    assert np.array_equal(fuse_record(shifted, FS).locations, base + shift + 5000)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.permutations(list(range(12))))
def test_permutation_invariance(seed, perm):
    leads = random_streams(seed)
    relabelled = [LeadDetections(perm[d.lead_index], d.locations) for d in leads]
    assert np.array_equal(fuse_record(relabelled, FS).locations, fuse_record(leads, FS).locations)


def test_serialization(tmp_path):
    leads, _, _ = i29_case_4i()
    fused = fuse_record(leads, FS)
    d = fusion.fused_to_dict(fused, "I29", ["L%d" % i for i in range(12)])
    assert d["record"] == "I29" and d["fs"] == FS
    assert d["beats"][0]["sample"] == 2260 and d["beats"][0]["case"] == "4i"
    assert d["beats"][0]["discarded"][0]["reason"] == FALSE_POSITIVE_SKIPPED
    csv_text = fusion.fused_to_csv(fused)
    assert csv_text.splitlines()[0] == "sample,time_s,case"
    assert csv_text.splitlines()[1] == "2260,8.793774,4i"
