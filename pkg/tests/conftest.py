import numpy as np
import pytest

from bbabc.numerics import substream

# (criterion, passed, detail) lines reported by the acceptance suite
ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


@pytest.fixture
def stream():
    return substream(20240917, 0)


@pytest.fixture
def make_stream():
    def make(index=0, seed=20240917):
        return substream(seed, index)

    return make


@pytest.fixture
def report_criterion():
    def report(name, passed, detail=""):
        ACCEPTANCE_LINES.append((name, bool(passed), detail))
        assert passed, f"{name}: {detail}"

    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


def chi_square_pvalue(observed, expected):
    from scipy import stats

    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(expected, dtype=float)
    stat = ((observed - expected) ** 2 / expected).sum()
    return stats.chi2.sf(stat, observed.size - 1)
