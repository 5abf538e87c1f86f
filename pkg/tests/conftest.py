import numpy as np
import pytest

from metaprior import graph


def finite_diff(f, x, h=1e-5):
    """Central finite differences of a scalar function of a flat array."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros(x.size)
    flat = x.ravel()
    for i in range(x.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        g[i] = (fp - fm) / (2 * h)
    return g.reshape(x.shape)


def check_grad(build, x0, h=1e-5, rtol=1e-6, atol=1e-9):
    """Compare backward() against central differences for scalar build(x)."""
    x0 = np.asarray(x0, dtype=np.float64)
    leaf = graph.leaf(x0)
    out = build(leaf)
    graph.backward(out)
    analytic = leaf.grad

    def f(arr):
        return float(build(graph.leaf(arr)).value)

    numeric = finite_diff(f, x0.copy(), h=h)
    np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol)
    return analytic, numeric


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
