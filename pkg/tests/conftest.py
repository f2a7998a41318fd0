import numpy as np
import pytest

from darksight import kernels


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion (a criterion passes only if all its tests do)."""
    results = {}
    for key in ("passed", "failed", "xfailed", "xpassed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            name = getattr(rep, "nodeid", "").rsplit("::", 1)[-1]
            if not (rep.nodeid.startswith("tests/test_acceptance.py") and name.startswith("test_c")):
                continue
            if key == "passed" and rep.when != "call":
                continue
            num = int(name[6:8])
            ok = key == "passed"
            results.setdefault(num, []).append((name, ok))
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        names = ", ".join(n for n, _ in results[num])
        status = "PASS" if all(ok for _, ok in results[num]) else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d}: {status}  ({names})")
