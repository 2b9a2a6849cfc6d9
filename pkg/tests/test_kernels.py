import numpy as np
import pytest

from qauction import _kernels
from qauction.allocation import AuctionConfig
from qauction.search import PackedStep, Scheme, cost_phases, driver_phases
from qauction.statevec import UnitaryMatrix

pytestmark = pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba not installed")


def _case(seed, n=3, b=2):
    rng = np.random.default_rng(seed)
    cfg = AuctionConfig.single_item(n, b)
    d = 2 ** b
    adj = [UnitaryMatrix.random(d, rng, (j,)) for j in range(n)]
    fwd = [UnitaryMatrix.random(d, rng, (j,)) for j in range(n)]
    psi = rng.normal(size=cfg.layout.size) + 1j * rng.normal(size=cfg.layout.size)
    return cfg, PackedStep.build(adj, fwd, cfg.layout), psi / np.linalg.norm(psi)


@pytest.mark.parametrize("seed", range(5))
def test_backends_agree_on_step(seed):
    cfg, p, psi = _case(seed)
    c, d = cost_phases(cfg), driver_phases(cfg.layout, Scheme.PERMUTED)
    args = (p.adj, p.fwd, p.dims, p.lefts, p.rights, c, d, 0.37, 1.0)
    a = _kernels._search_step_np(psi.copy(), *args)
    b = _kernels._search_step_nb(psi.copy(), *args)
    assert np.max(np.abs(a - b)) <= 1e-13


def test_backends_agree_on_loop():
    cfg, p, psi = _case(9, 2, 3)
    c, d = cost_phases(cfg), driver_phases(cfg.layout, Scheme.HAMMING)
    out = {}
    for name in ("numpy", "numba"):
        prev = _kernels.set_backend(name)
        out[name] = _kernels.search_loop(psi.copy(), p.adj, p.fwd, p.dims, p.lefts, p.rights, c, d, 200, 0.9)
        _kernels.set_backend(prev)
    assert np.max(np.abs(out["numpy"][0] - out["numba"][0])) <= 1e-11
    assert np.max(np.abs(out["numpy"][1] - out["numba"][1])) <= 1e-12


def test_fused_loop_equals_stepwise():
    cfg, p, psi = _case(3)
    c, d = cost_phases(cfg), driver_phases(cfg.layout, Scheme.PERMUTED)
    fused, _ = _kernels.search_loop(psi.copy(), p.adj, p.fwd, p.dims, p.lefts, p.rights, c, d, 25, 1.0)
    step = psi.copy()
    for s in range(1, 26):
        step = _kernels.search_step(step, p.adj, p.fwd, p.dims, p.lefts, p.rights, c, d, s / 25, 1.0)
    assert np.array_equal(fused, step)


def test_set_backend_validates():
    with pytest.raises(ValueError):
        _kernels.set_backend("cuda")


def test_env_flag_disables_numba(monkeypatch):
    monkeypatch.setenv("QAUCTION_DISABLE_NUMBA", "1")
    assert _kernels._env_disabled()
