import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from trinomial_pde import _accel

SCRIPT = textwrap.dedent("""
    import sys
    import numpy as np
    from trinomial_pde import _accel
    from trinomial_pde.generator import get_problem
    from trinomial_pde.lattice import solve_tree
    assert _accel.BACKEND == sys.argv[2], _accel.BACKEND
    rng = np.random.default_rng(0)
    a = rng.normal(size=(7, 40, 5))
    m = rng.normal(size=(50, 4, 4))
    out = {
        "codes": _accel.ternary_codes(123, np.arange(5000), 3, 12, 0.3),
        "stencil": _accel.stencil3(a, 0.25, 0.5, 0.25),
        "eig": np.sort(_accel.jacobi_eigvalsh(m + m.transpose(0, 2, 1)), axis=1),
        "tree": np.array([solve_tree(get_problem("ex6.1"), None, None, 8).value]),
    }
    np.savez(sys.argv[1], **out)
""")


def run_backend(path, backend):
    env = dict(os.environ)
    if backend == "numpy":
        env["TRINOMIAL_PDE_NO_NUMBA"] = "1"
    else:
        env.pop("TRINOMIAL_PDE_NO_NUMBA", None)
    subprocess.run([sys.executable, "-c", SCRIPT, str(path), backend], check=True, env=env, capture_output=True)
    return np.load(path)


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")
def test_numba_and_numpy_agree(tmp_path):
    fast = run_backend(tmp_path / "fast.npz", "numba")
    slow = run_backend(tmp_path / "slow.npz", "numpy")
    np.testing.assert_array_equal(fast["codes"], slow["codes"])
    np.testing.assert_allclose(fast["stencil"], slow["stencil"], rtol=1e-15, atol=1e-15)
    np.testing.assert_allclose(fast["eig"], slow["eig"], atol=1e-12)
    assert fast["tree"][0] == pytest.approx(slow["tree"][0], abs=1e-13)


def test_code_frequencies():
    codes = _accel.ternary_codes(5, np.arange(200_000), 0, 3, 0.3)
    for v, target in ((1, 0.15), (-1, 0.15), (0, 0.7)):
        freq = np.mean(codes == v)
        assert abs(freq - target) <= 4 * np.sqrt(target * (1 - target) / codes.size)


def test_derive_seed_distinct():
    seeds = {_accel.derive_seed(42, r) for r in range(1000)}
    assert len(seeds) == 1000
    assert all(0 <= s < 2**63 for s in seeds)


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("TRINOMIAL_PDE_THREADS", "4")
    assert _accel.thread_count() == 4
    monkeypatch.setenv("TRINOMIAL_PDE_THREADS", "zero")
    assert _accel.thread_count() == 1
    monkeypatch.delenv("TRINOMIAL_PDE_THREADS")
    assert _accel.thread_count() == 1

