from pathlib import Path

import numpy as np
import pytest

from datamin import synth
from datamin.forest import ForestConfig
from datamin.tabular import Dataset, SplitSpec

DATA = Path(__file__).resolve().parent / "data" / "v1"

# small forests keep the suite fast; determinism does not depend on size
FAST = ForestConfig(n_trees=10, seed=0)
SPLIT = SplitSpec(0.3, 0, "task")


@pytest.fixture(scope="session")
def tiny() -> Dataset:
    return synth.generate(synth.PRESETS["tiny"])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def toy(n=200, seed=0) -> Dataset:
    """f0 decides the task, f1 is the user id, f2 is noise."""
    r = np.random.default_rng(seed)
    task = r.integers(0, 2, n)
    user = r.integers(0, 4, n)
    X = np.column_stack([np.where(task == 1, 1.0, -1.0) * r.uniform(0.5, 2.0, n),
                         user + r.uniform(0, 0.5, n),
                         r.random(n)])
    return Dataset(X, ("f0", "f1", "f2"), task, user)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE[criterion])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
