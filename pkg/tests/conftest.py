import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from rnnet.events import EventStream

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_stream(rng, width=8, height=6, duration=10_000, n=200):
    return EventStream.from_arrays(
        width, height, duration,
        rng.integers(0, duration + 1, n), rng.integers(0, width, n),
        rng.integers(0, height, n), rng.integers(0, 2, n),
    )


@st.composite
def streams(draw, max_events=60):
    w = draw(st.integers(1, 12))
    h = draw(st.integers(1, 12))
    dur = draw(st.integers(0, 5_000))
    n = draw(st.integers(0, max_events))
    ev = st.tuples(st.integers(0, dur), st.integers(0, w - 1), st.integers(0, h - 1), st.integers(0, 1))
    rows = draw(st.lists(ev, min_size=n, max_size=n))
    cols = np.array(rows, dtype=np.int64).reshape(-1, 4)
    return EventStream.from_arrays(w, h, dur, *cols.T)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run whatever the capture mode
_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    def record(number: int, ok: bool, detail: str):
        _ACCEPTANCE[number] = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        print(_ACCEPTANCE[number])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
