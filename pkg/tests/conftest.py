import warnings

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


# acceptance verdicts, one entry per (criterion, part); printed at the end of the run
ACCEPTANCE = {}


@pytest.fixture
def verdict():
    def record(k: int, part: str, ok: bool, detail: str) -> None:
        ACCEPTANCE.setdefault(k, {})[part] = (bool(ok), detail)
        print(f"Criterion {k} [{part}]: {'PASS' if ok else 'FAIL'} {detail}")
    return record


def acceptance_lines():
    lines = []
    for k in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[k]
        ok = all(v for v, _ in parts.values())
        detail = "; ".join(f"{p}: {'ok' if v else 'FAIL'} {d}" for p, (v, d) in parts.items())
        lines.append(f"Criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
    return lines


def pytest_terminal_summary(terminalreporter):
    lines = acceptance_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
