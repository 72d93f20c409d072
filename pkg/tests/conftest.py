import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from owofmtl.fairness import FairnessSpec  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def wide_spec():
    """alpha = 1 with a utility box wide enough for the hand examples."""
    return FairnessSpec(alpha=1.0, u_min=0.25, u_max=4.0, num_users=1)


def random_utilities(rng, spec, n):
    return rng.uniform(spec.u_min, spec.u_max, size=(n, spec.num_users))


def random_weights(rng, spec, n):
    return rng.uniform(spec.w_lower, spec.w_upper, size=(n, spec.num_users))


_ACCEPTANCE: dict = {}


def record_acceptance(n, name, ok, detail):
    _ACCEPTANCE[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {name}  ({detail})"
    print(_ACCEPTANCE[n])


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
