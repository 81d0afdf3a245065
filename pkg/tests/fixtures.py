"""Hand-built detection vectors replaying two narrated fusion traces."""
import numpy as np

from qrsfuse.single_lead import LeadDetections

FS = 257.0
LEADS = ("I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6")


def _streams(per_lead):
    return [LeadDetections(i, sorted(locs)) for i, locs in enumerate(per_lead)]


def i29_case_4i():
    """V1 and V2 fire early (~8.33 s) on an artefact; the true beat is at
    ~8.79 s in every lead.  Annotation at 2258 (8.786 s)."""
    beat = [2256, 2257, 2258, 2259, 2260, 2260, 2259, 2261, 2260, 2261, 2262, 2263]
    per_lead = [[b, b + 200] for b in beat]
    per_lead[6] = [2142, 2259, 2459]      # V1
    per_lead[7] = [2140, 2261, 2461]      # V2
    return _streams(per_lead), 2258, {6: 2142, 7: 2140}


def i35_case_4ii():
    """aVL, V3 and V4 miss the beat at ~9.63 s and offer their next-cycle
    detections (10.04-10.09 s) instead.  Annotation at 2474 (9.626 s)."""
    nine = dict(zip((0, 1, 2, 3, 5, 6, 7, 10, 11), range(2471, 2480)))
    per_lead = []
    for lead in range(12):
        if lead in nine:
            per_lead.append([nine[lead], 2585 + lead % 3])
        else:
            per_lead.append([{4: 2594, 8: 2580, 9: 2580}[lead]])
    return _streams(per_lead), 2474, {4: 2594, 8: 2580, 9: 2580}
