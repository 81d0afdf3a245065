"""Replay two hand-built fusion traces: false alarms skipped (4i) and a
missed beat deferred (4ii)."""
from qrsfuse.fusion import (AGREEING, BeatCandidateVector, FusionConfig, build_windows, classify,
                            fuse_record, repair_step)
from qrsfuse.single_lead import LeadDetections

FS = 257.0
NAMES = ("I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6")
DELTA = FusionConfig().delta_samples(FS)


def trace(per_lead, annotation):
    streams = {i: locs for i, locs in enumerate(per_lead)}
    v = BeatCandidateVector.start(0, streams, {i: 0 for i in streams})
    n = len(v)
    while True:
        w = build_windows(v, DELTA)
        rel = classify(w, n)
        print(f"  |a1|={w.card1:2d} |a2|={w.card2:2d} qrs_min={w.qrs_min} "
              f"qrs_max={w.qrs_max} -> {rel.value}")
        if rel in AGREEING:
            break
        v = repair_step(v, w)
        lead, loc, why = v.events[-1]
        print(f"    {why}: {NAMES[lead]} at {loc} ({loc / FS:.3f} s)")
    fused = fuse_record([LeadDetections(i, s) for i, s in enumerate(per_lead)], FS)
    b = fused.beats[0]
    print(f"  fused at {b.sample} ({b.sample / FS:.3f} s), case {b.case}, "
          f"error {(b.sample - annotation) / FS * 1000:.2f} ms vs annotation\n")


# ----------------------------------------------------------------------
# V1 and V2 fire on an artefact near 8.33 s

beat = [2256, 2257, 2258, 2259, 2260, 2260, 2259, 2261, 2260, 2261, 2262, 2263]
per_lead = [[b, b + 200] for b in beat]
per_lead[6] = [2142, 2259, 2459]
per_lead[7] = [2140, 2261, 2461]
print("false alarms in V1/V2:")
trace(per_lead, 2258)

# ----------------------------------------------------------------------
# aVL, V3 and V4 miss the beat at 9.63 s and offer the next one

nine = dict(zip((0, 1, 2, 3, 5, 6, 7, 10, 11), range(2471, 2480)))
per_lead = [[nine[i], 2585] if i in nine else [{4: 2594, 8: 2580, 9: 2580}[i]]
            for i in range(12)]
print("missed beat in aVL/V3/V4:")
trace(per_lead, 2474)
