import numpy as np
import pytest

from qrsfuse import single_lead, synth


@pytest.fixture(scope="session")
def clean_record():
    spec = synth.SynthSpec(duration_s=30.0, t_wave_amplitude=0.0, seed=3)
    record, truth = synth.generate_record(spec)
    return spec, record, truth


@pytest.fixture(scope="session")
def clean_detections(clean_record):
    _, record, _ = clean_record
    return single_lead.detect_record(record, jobs=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if not mod or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        status, detail = mod.RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")
