import os
import subprocess
import sys

import numpy as np
import pytest

from dbartau import _kernels_py, kernels

compiled = pytest.importorskip("dbartau._kernels", reason="compiled extension not built")


@pytest.fixture
def points(rng):
    n = 300
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    s = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    w = rng.random(n) + 0j
    return z, s, w


@pytest.mark.parametrize("power", [1, 2, 3])
def test_cauchy_matrix_backends(points, power):
    z, s, w = points
    a = compiled.cauchy_matrix(z, s, w, power)
    b = _kernels_py.cauchy_matrix(z, s, w, power)
    assert np.allclose(a, b, rtol=1e-12, atol=0)


def test_cauchy_matrix_skip_self(points):
    z, _, w = points
    a = compiled.cauchy_matrix(z, z, w, 1, True)
    b = _kernels_py.cauchy_matrix(z, z, w, 1, True)
    assert np.all(np.diag(a) == 0)
    assert np.allclose(a, b, rtol=1e-12, atol=0)


def test_cauchy_sum_backends(points, rng):
    z, s, _ = points
    c = rng.standard_normal((len(s), 4)) + 1j * rng.standard_normal((len(s), 4))
    a = compiled.cauchy_sum(z, s, c, 2)
    b = _kernels_py.cauchy_sum(z, s, c, 2)
    scale = np.abs(c).sum() * np.max(np.abs(1 / (s[None] - z[:, None])) ** 2)
    assert np.max(np.abs(a - b)) <= 1e-13 * scale


def test_kernel_matrix_backends(rng):
    N, r, n = 120, 2, 2
    z = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    z[5] = z[6] + 1e-9
    F, G, DF = (rng.standard_normal((N, r, n)) + 1j * rng.standard_normal((N, r, n)) for _ in range(3))
    sw = np.sqrt(rng.random(N))
    a = compiled.integrable_kernel_matrix(z, F, G, DF, sw, 1e-6)
    b = _kernels_py.integrable_kernel_matrix(z, F, G, DF, sw, 1e-6)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_dispatch_uses_compiled():
    if os.environ.get("DBARTAU_BACKEND", "").lower() == "python":
        pytest.skip("fallback forced by the environment")
    assert kernels.BACKEND == "compiled"


def test_environment_forces_fallback():
    env = dict(os.environ, DBARTAU_BACKEND="python")
    code = ("import dbartau, numpy as np;"
            "from dbartau.nls import NLSScenario, solve_nls, psi_extract;"
            "from dbartau.geometry import disk;"
            "print(dbartau.BACKEND, repr(psi_extract(solve_nls(NLSScenario(disk(1j, .5), x=.3, t=.1,"
            " radial=10, angular=20)))[0]))")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    backend, psi = out.stdout.split(maxsplit=1)
    assert backend == "python"
    from dbartau.nls import NLSScenario, psi_extract, solve_nls
    from dbartau.geometry import disk

    here = psi_extract(solve_nls(NLSScenario(disk(1j, .5), x=.3, t=.1, radial=10, angular=20)))[0]
    assert abs(complex(psi.strip()) - here) <= 1e-12 * abs(here)
