import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vqpd.instances import gen_ball1, gen_qp1

settings.register_profile(
    "default", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def qp1():
    return gen_qp1()


@pytest.fixture
def ball1():
    return gen_ball1(n=1, c=[1.0])


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    # keep reference caches and default outputs out of the user's home
    monkeypatch.setenv("VQPD_CACHE_DIR", str(tmp_path / "cache"))
    monkeypatch.setenv("VQPD_OUTPUT_DIR", str(tmp_path / "out"))


def scan_min(fun, lo, hi, h):
    """Brute-force minimum of a vectorized scalar function on a uniform grid."""
    xs = np.arange(lo, hi + 0.5 * h, h)
    xs = xs[xs <= hi]
    v = fun(xs)
    j = int(np.argmin(v))
    return xs[j], v[j]


# ---------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion at the end of the run

_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        status, title, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"[{status}] {k:>2}. {title}: {detail}")
