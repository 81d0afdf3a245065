"""How many agreeing leads should a fused beat need?  Sweep min_leads on
records with noisy detection streams."""
import numpy as np

from qrsfuse import evaluation, synth

# ----------------------------------------------------------------------
# Detection streams with misses, false alarms and timing jitter

rows = {}
for seed in range(5):
    spec = synth.SynthSpec(duration_s=600, fn_rate=0.15, fp_rate=0.25,
                           detection_jitter_ms=15, seed=seed)
    truth = synth.ground_truth(spec)
    leads = [synth.corrupt_detections(truth, spec, lead) for lead in range(12)]
    for r in evaluation.lead_count_sweep(leads, truth, spec.fs, range(1, 13)):
        acc = rows.setdefault(r["min_leads"], np.zeros(3, dtype=int))
        acc += [r["tp"], r["fn"], r["fp"]]

# ----------------------------------------------------------------------
# Too few leads lets false alarms through; too many starts dropping beats

print("min_leads    Se%     +Pr%")
for k, (tp, fn, fp) in sorted(rows.items()):
    se = evaluation.sensitivity(tp, fn)
    ppr = evaluation.positive_predictivity(tp, fp)
    print(f"{k:9d}  {se:6.2f}  {ppr:7.2f}")
