"""Compiled and numpy kernels must agree to rounding."""
import numpy as np
import pytest

from structfl import kernels

pytestmark = pytest.mark.skipif(kernels.compiled is None, reason="compiled kernels not built")


@pytest.mark.parametrize("hidden", [0, 6])
@pytest.mark.parametrize("classify", [True, False])
def test_loss_grad_backends_agree(hidden, classify, rng):
    c, p = kernels.get_backend("compiled"), kernels.get_backend("python")
    n_in, n_out = 5, 4
    n_params = n_in * n_out + n_out if hidden == 0 else n_in * hidden + hidden + hidden * n_out + n_out
    for _ in range(10):
        theta = rng.normal(size=n_params)
        x = rng.normal(size=(9, n_in))
        y = rng.integers(0, n_out, 9) if classify else rng.normal(size=(9, n_out))
        la, ga = c.loss_grad(theta, x, y, n_in, hidden, n_out, classify)
        lb, gb = p.loss_grad(theta, x, y, n_in, hidden, n_out, classify)
        assert la == pytest.approx(lb, rel=1e-12, abs=1e-14)
        np.testing.assert_allclose(ga, gb, rtol=1e-10, atol=1e-13)
        np.testing.assert_allclose(c.predict(theta, x, n_in, hidden, n_out, classify),
                                   p.predict(theta, x, n_in, hidden, n_out, classify),
                                   rtol=1e-12, atol=1e-14)


def test_propagate_and_distances_agree(rng):
    c, p = kernels.get_backend("compiled"), kernels.get_backend("python")
    a = rng.random((7, 7))
    a /= a.sum(axis=1, keepdims=True)
    u = rng.normal(size=(7, 11))
    for m in (0, 1, 4):
        np.testing.assert_allclose(c.propagate(a, u, m), p.propagate(a, u, m), rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(c.sq_dists(u), p.sq_dists(u), rtol=1e-12, atol=1e-12)


def test_backend_names():
    assert kernels.BACKEND in ("compiled", "python")
    with pytest.raises(ValueError):
        kernels.get_backend("gpu")
