import math

import pytest

from aggrekit import cli, diagnostics, solver

ACCEPTANCE_LINES: list[str] = []
COMPLETED_DRIFTS: list[tuple[str, float]] = []


def record_acceptance(number: int, title: str, passed: bool, detail: str = ""):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


@pytest.fixture(autouse=True)
def _mass_drift_guard(request, monkeypatch):
    """Every Completed run made by any test must conserve mass to 1e-10."""
    real_run = solver.run
    made = []

    def tracked(cfg):
        res = real_run(cfg)
        if res.termination is solver.Termination.COMPLETED and res.series.mass[0] != 0:
            made.append(diagnostics.mass_drift(res.series))
        return res

    monkeypatch.setattr(solver, "run", tracked)
    monkeypatch.setattr(cli, "run", tracked)
    yield
    for d in made:
        COMPLETED_DRIFTS.append((request.node.nodeid, d))
    bad = [d for d in made if not d < 1e-10]
    assert not bad, f"completed run(s) with mass drift {bad}"


def pytest_collection_modifyitems(items):
    # acceptance last, so the mass criterion sees every Completed run of the suite
    items.sort(key=lambda it: (it.path.name == "test_acceptance.py", it.name == "test_criterion_02_mass_conservation"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
    if COMPLETED_DRIFTS:
        worst = max(d for _, d in COMPLETED_DRIFTS)
        terminalreporter.write_line(
            f"completed runs checked for mass drift: {len(COMPLETED_DRIFTS)}, worst {worst:.3g}"
            + (" (all < 1e-10)" if worst < 1e-10 else "")
        )


def finite(x) -> bool:
    return isinstance(x, float) and math.isfinite(x)
