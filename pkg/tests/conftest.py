import numpy as np
import pytest

from sampled_attention import AttentionWorkload, zoo_workload


def random_workload(rng, n=None, d=None, scale=1.0):
    n = n if n is not None else int(rng.integers(1, 65))
    d = d if d is not None else int(rng.integers(1, 9))
    return AttentionWorkload(
        q=scale * rng.standard_normal(d),
        keys=rng.standard_normal((n, d)),
        values=rng.standard_normal((n, d)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20241017)


@pytest.fixture
def zoo():
    return zoo_workload()


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion for the terminal summary."""

    def record(label, passed, detail=""):
        _ACCEPTANCE.append((label, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _ACCEPTANCE:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {label}" + (f"  ({detail})" if detail else ""))
