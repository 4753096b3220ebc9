import numpy as np
import pytest

from augan import tensor as T

GRAD_TOL = 1e-4


def projected(f, shape_out, seed=0):
    """Wrap a tensor-valued f into a scalar via a fixed random projection."""
    r = np.random.default_rng(seed).standard_normal(shape_out)
    return lambda x: T.sum(f(x) * r)


def grad_error(f, x, out_shape=None, seed=0, step=1e-5):
    """finite_diff_check of f composed with a random projection when f is not scalar."""
    if out_shape is None:
        out_shape = f(T.Tensor(x)).shape
    return T.finite_diff_check(projected(f, out_shape, seed), x, step=step)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
