import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def central_diff(fun, x, h=1e-6):
    """Central finite difference of a scalar function over a flat array."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for k in range(x.size):
        xp = x.copy()
        xp.flat[k] += h
        xm = x.copy()
        xm.flat[k] -= h
        g.flat[k] = (fun(xp) - fun(xm)) / (2.0 * h)
    return g


def rel_err(a, b):
    """Scale-aware relative error used by every gradient check."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))
