import numpy as np
import pytest

from mmdfn import kernels
from mmdfn.numerics import autodiff as ad
from mmdfn.numerics.autodiff import Tensor
from mmdfn.numerics.gradcheck import finite_difference_check

IMPLS = kernels.implementations()


def _gru_inputs(rng, steps=5, hidden=3):
    return (rng.standard_normal((steps, 3 * hidden)), rng.standard_normal((3 * hidden, hidden)) * 0.5,
            rng.standard_normal(3 * hidden) * 0.5)


def _adjacency_inputs(rng, n=7, d=4):
    x = rng.standard_normal((n, d))
    x[2] = 0.0  # degenerate row
    x[5] = -x[4]  # antipodal pair
    x[6] = x[0] * 3.0  # parallel pair
    mask = rng.uniform(size=(n, n)) < 0.6
    mask = mask | mask.T
    np.fill_diagonal(mask, False)
    return x, mask


@pytest.mark.parametrize("name", sorted(IMPLS))
def test_gru_matches_torch(name, rng):
    torch = pytest.importorskip("torch")
    gi_x = rng.standard_normal((6, 4))
    cell = torch.nn.GRU(4, 3, batch_first=True).double()
    w_ih, w_hh = cell.weight_ih_l0.detach().numpy(), cell.weight_hh_l0.detach().numpy()
    b_ih, b_hh = cell.bias_ih_l0.detach().numpy(), cell.bias_hh_l0.detach().numpy()
    expected = cell(torch.from_numpy(gi_x)[None])[0][0].detach().numpy()
    hs = IMPLS[name].gru_forward(gi_x @ w_ih.T + b_ih, w_hh, b_hh)[0]
    np.testing.assert_allclose(hs, expected, rtol=0, atol=1e-12)


def test_backends_agree(rng):
    if "numba" not in IMPLS:
        pytest.skip("numba unavailable")
    gi, w, b = _gru_inputs(rng)
    fwd = [IMPLS[k].gru_forward(gi, w, b) for k in ("numpy", "numba")]
    for a, c in zip(*fwd):
        np.testing.assert_allclose(a, c, rtol=0, atol=1e-13)
    dhs = rng.standard_normal(fwd[0][0].shape)
    back = [IMPLS[k].gru_backward(dhs, w, *f) for k, f in zip(("numpy", "numba"), fwd)]
    for a, c in zip(*back):
        np.testing.assert_allclose(a, c, rtol=0, atol=1e-12)

    x, mask = _adjacency_inputs(rng)
    (a1, c1), (a2, c2) = (IMPLS[k].angular_adjacency_forward(x, mask) for k in ("numpy", "numba"))
    np.testing.assert_allclose(a1, a2, rtol=0, atol=1e-13)
    g = rng.standard_normal(a1.shape)
    np.testing.assert_allclose(IMPLS["numpy"].angular_adjacency_backward(g, x, mask, c1),
                               IMPLS["numba"].angular_adjacency_backward(g, x, mask, c2),
                               rtol=0, atol=1e-12)


@pytest.mark.parametrize("name", sorted(IMPLS))
def test_gru_gradients(name, rng, monkeypatch):
    monkeypatch.setattr(kernels, "active", IMPLS[name])
    gi, w, b = _gru_inputs(rng)
    weights = rng.standard_normal((5, 3))
    f = lambda p: ad.total(ad.mul(ad.gru_recurrence(p["gi"], p["w"], p["b"]), Tensor(weights)))
    errs = finite_difference_check(f, {"gi": gi, "w": w, "b": b})
    assert max(errs.values()) <= 1e-6


@pytest.mark.parametrize("name", sorted(IMPLS))
def test_adjacency_gradients(name, rng, monkeypatch):
    monkeypatch.setattr(kernels, "active", IMPLS[name])
    x, mask = _adjacency_inputs(rng)
    # the zero row, the antipodal pair and the parallel pair sit on kinks
    x[2] = rng.standard_normal(4)
    x[5] = -x[4] + 0.3
    x[6] = x[0] * 3.0 + 0.3
    weights = rng.standard_normal((7, 7))
    f = lambda p: ad.total(ad.mul(ad.angular_adjacency(p["x"], mask), Tensor(weights)))
    assert finite_difference_check(f, {"x": x})["x"] <= 1e-6


def test_adjacency_values(rng):
    x, mask = _adjacency_inputs(rng)
    adj, _ = kernels.active.angular_adjacency_forward(x, mask)
    for i in range(7):
        for j in range(7):
            if not mask[i, j]:
                assert adj[i, j] == 0.0
            elif i == 2 or j == 2:
                assert adj[i, j] == 0.5
            else:
                cos = x[i] @ x[j] / np.linalg.norm(x[i]) / np.linalg.norm(x[j])
                expected = 1 - np.arccos(np.clip(cos, -1, 1)) / np.pi
                # arccos amplifies rounding near +-1 to ~sqrt(ulp)
                tol = 1e-7 if abs(cos) > 1 - 1e-12 else 1e-12
                assert abs(adj[i, j] - expected) < tol


@pytest.mark.parametrize("env, expected", [({"MMDFN_DISABLE_NUMBA": "1"}, "numpy"),
                                           ({"MMDFN_BACKEND": "numpy"}, "numpy"),
                                           ({}, "numba")])
def test_backend_env_flag(env, expected):
    import os
    import subprocess
    import sys

    clean = {k: v for k, v in os.environ.items() if not k.startswith("MMDFN_")}
    code = "from mmdfn import kernels; print(kernels.BACKEND, kernels.active.__name__)"
    out = subprocess.run([sys.executable, "-c", code], env=clean | env, capture_output=True,
                         text=True, check=True).stdout.split()
    if expected == "numba" and "numba" not in kernels.implementations():
        expected = "numpy"
    assert out[0] == expected and out[1].endswith(f"{expected}_impl")
