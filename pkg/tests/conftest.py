import numpy as np
import pytest

from modeswitch import trajectories


@pytest.fixture(scope="session")
def small_ds():
    # 40 trajectories, enough for every split to hold each class
    return trajectories.generate_dataset(10, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" not in props:
                continue
            verdict = "PASS" if outcome == "passed" else "FAIL"
            n, name = props["criterion"].split(" ", 1)
            lines.append((int(n), f"criterion {n} {name}: {verdict}  {props.get('detail', '')}"))
    if lines:
        terminalreporter.section("acceptance")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
