import pytest
from hypothesis import HealthCheck, settings

from faithcheck.core import LabeledSample, SynthRecord, serialize_tagged, label_to_answer

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_record(i, label=1, predicted=None, think="step by step", reason="because", doc=None, claim=None):
    predicted = label if predicted is None else predicted
    answer = predicted if isinstance(predicted, str) else label_to_answer(predicted)
    sample = LabeledSample(id=f"r{i}", doc=doc or f"Document number {i} says x{i}.", claim=claim or f"Claim {i}.", label=label)
    return SynthRecord.from_raw(sample, serialize_tagged(f"{think} {i}", f"{reason} {i}", answer), "test")


@pytest.fixture
def record_factory():
    return make_record


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
