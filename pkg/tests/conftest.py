import re
from functools import lru_cache

import pytest

from nframes.disc_solvers import PolarGrid
from nframes.normal_bundle import euler_gram_schmidt_frame
from nframes.surface_catalog import builtin_surface

_CRITERIA: dict[int, list[str]] = {}
_CRITERION_RE = re.compile(r"test_criterion_(\d+)")


@lru_cache(maxsize=None)
def grid(nr: int, ntheta: int | None = None) -> PolarGrid:
    return PolarGrid(nr, ntheta or 2 * nr)


@lru_cache(maxsize=None)
def euler_frame(name: str, nr: int, **params):
    return euler_gram_schmidt_frame(builtin_surface(name, params), grid(nr))


@pytest.fixture
def w2_frame_32():
    return euler_frame("holomorphic_graph", 32)


def pytest_runtest_logreport(report):
    m = _CRITERION_RE.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or report.outcome != "passed":
        _CRITERIA.setdefault(int(m.group(1)), []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        outcomes = _CRITERIA[k]
        ok = all(o == "passed" for o in outcomes)
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'} ({len(outcomes)} check(s))")
