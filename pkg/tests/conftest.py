from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from belief.clients import RecordingTextClient, ReplayRetriever, ReplayStore, ReplayTextClient
from belief.frame import make_frame
from belief.pipeline import Clients, load_dataset

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
DATASET = FIXTURES / "dataset.jsonl"
REPLAY = FIXTURES / "replay.jsonl"

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def abc():
    return make_frame(["A", "B", "C"])


@pytest.fixture
def ynm():
    return make_frame(["yes", "no", "maybe"])


@pytest.fixture(scope="session")
def store() -> ReplayStore:
    return ReplayStore.load(REPLAY)


@pytest.fixture(scope="session")
def records():
    return load_dataset(DATASET)


@pytest.fixture
def replay_clients(store):
    return Clients(ReplayTextClient(store), ReplayRetriever(store))


@pytest.fixture
def recording_clients(store):
    return Clients(RecordingTextClient(ReplayTextClient(store)), ReplayRetriever(store))


def read_jsonl(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]


# ---------------------------------------------------------------- acceptance report

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): an acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    outcome = "PASS" if call.excinfo is None else "FAIL"
    previous = _CRITERIA.get(number)
    if previous is None or previous[1] == "PASS":
        _CRITERIA[number] = (title, outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, outcome = _CRITERIA[number]
        terminalreporter.write_line(f"[{outcome}] criterion {number:2d}: {title}")
