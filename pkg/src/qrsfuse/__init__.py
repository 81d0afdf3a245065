"""Multi-lead QRS detection: per-lead wavelet/Hilbert detector, cross-lead
fusion and beat-by-beat evaluation."""

from .evaluation import (EvalReport, MatchResult, bxb_match, lead_count_sweep,
                         positive_predictivity, render_report, sensitivity)
from .fusion import (BeatCandidateVector, FusedBeats, FusionConfig, FusionError,
                     FusionWindows, Relation, build_windows, classify, fuse_record,
                     median_locate, repair_step)
from .single_lead import (DetectorConfig, LeadDetections, adaptive_threshold, detect_lead,
                          detect_record, hilbert_envelope, lowpass_eq4)
from .synth import SynthSpec, corrupt_detections, corrupt_record_detections, generate_record
from .wavelet import Decomposition, dwt_decompose, reconstruct_band
from .wfdb_io import (EcgRecord, RecordHeader, parse_annotations, parse_header, read_annotations,
                      read_record)

__version__ = "0.1.0"
