import pytest

CRITERIA = {
    1: "weight zeros and lower bounds, single_L rows over F_4",
    2: "design rates",
    3: "stopping-set zeros and lower bounds",
    4: "standard-profile zeros",
    5: "potential threshold upper bounds, F_3 QSC",
    6: "erasure-channel oracle thresholds",
    7: "exact enumeration oracles",
    8: "functional identities",
    9: "monotonicity",
    10: "potential identities",
}
RESULTS: dict[int, list] = {}


@pytest.fixture
def report():
    """Record one sub-check of an acceptance criterion; returns the verdict for asserting."""
    def rec(n, ok, detail=""):
        RESULTS.setdefault(n, []).append((bool(ok), detail))
        return bool(ok)
    return rec


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, name in CRITERIA.items():
        subs = RESULTS.get(n)
        if subs is None:
            terminalreporter.write_line(f"[ -- ] {n:2d} {name}: not run")
            continue
        ok = all(s[0] for s in subs)
        detail = "; ".join(d for _, d in subs if d)
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d} {name}: {detail}")
