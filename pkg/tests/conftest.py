import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


# Acceptance criteria outcomes, printed one line per criterion after the run.
_ACCEPTANCE: dict[str, list[tuple[str, str]]] = {}


@pytest.fixture
def criterion():
    """Record ``(criterion_id, status, detail)``; status is PASS, FAIL or SKIP."""
    def record(cid: str, status: str, detail: str) -> None:
        _ACCEPTANCE.setdefault(cid, []).append((status, detail))
        print(f"{cid} {status}: {detail}")
    return record


def _criterion_key(cid: str) -> int:
    return int(cid.lstrip("A"))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_ACCEPTANCE, key=_criterion_key):
        parts = _ACCEPTANCE[cid]
        statuses = {s for s, _ in parts}
        status = "FAIL" if "FAIL" in statuses else "SKIP" if "SKIP" in statuses else "PASS"
        terminalreporter.write_line(f"{cid} {status}: " + "; ".join(d for _, d in parts))
