import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from hdpmpm.model import ModelState, sticks_from_weights  # noqa: E402
from hdpmpm.rng import RandomStream  # noqa: E402


def frozen_state(pi, phi, x, beta=None, alpha0=1.0, gamma=1.0, z=None):
    """A hand-built state with consistent sticks; z defaults to cluster 0."""
    pi = np.atleast_2d(np.asarray(pi, dtype=float))
    phi = np.asarray(phi, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=np.int64))
    n, K = pi.shape
    if beta is None:
        beta = np.full(K, 1.0 / K)
    beta = np.asarray(beta, dtype=float)
    if z is None:
        z = np.zeros_like(x)
    return ModelState(z=np.asarray(z, dtype=np.int64), x=x, phi=phi, V=sticks_from_weights(beta),
                      beta=beta, u=sticks_from_weights(pi), pi=pi, gamma=gamma, alpha0=alpha0,
                      t=np.full(n, 0.5), s=np.zeros((n, K), dtype=np.int64))


@pytest.fixture
def stream():
    return RandomStream(12345)


# acceptance criterion number -> (passed, detail)
ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
