import os
import subprocess
import sys

import numpy as np
import pytest

from lagsync import kernels
from lagsync.dynamics import default_model

needs_cython = pytest.mark.skipif("cython" not in kernels.available_backends(),
                                  reason="compiled kernels not built")


def _inputs(model, p, rng):
    n = model.n
    a, g = model.batch_args(p)
    a = a * rng.uniform(0.5, 2.0, size=(p, 1))
    return a, g, *(rng.uniform(-2, 2, (p, n)) for _ in range(5))


@needs_cython
@pytest.mark.parametrize("kind", ["two-link-arm", "cart-double-pendulum"])
def test_backends_agree(kind, rng):
    model = default_model(kind)
    cy, py = kernels.get_backend("cython"), kernels.get_backend("python")
    a, g, q, v, vr, ar, tau = _inputs(model, 5, rng)
    code = model.code
    for x, y in zip(cy.mcg(code, a, g, q, v), py.mcg(code, a, g, q, v)):
        np.testing.assert_allclose(x, y, rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(cy.forward_dynamics(code, a, g, q, v, tau),
                               py.forward_dynamics(code, a, g, q, v, tau), rtol=1e-11, atol=1e-12)
    np.testing.assert_allclose(cy.inverse_dynamics(code, a, g, q, v, vr, ar),
                               py.inverse_dynamics(code, a, g, q, v, vr, ar), rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(cy.regressor(code, g, q, v, vr, ar),
                               py.regressor(code, g, q, v, vr, ar), rtol=1e-13, atol=1e-13)
    n = model.n
    L = rng.normal(size=(5 * n, 5 * n))
    lam = rng.uniform(0, 5, n)
    for mode in (kernels.FF_INVERSE, kernels.FF_NONE, kernels.FF_GRAVITY):
        for dist in (None, tau * 0.1):
            r1 = cy.closed_loop(code, a, g, q, v, vr, ar, tau, lam, L, mode, dist)
            r2 = py.closed_loop(code, a, g, q, v, vr, ar, tau, lam, L, mode, dist)
            for x, y in zip(r1, r2):
                np.testing.assert_allclose(x, y, rtol=1e-11, atol=1e-11)


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
    assert kernels.get_backend() is kernels.get_backend(kernels.BACKEND)


def test_environment_forces_fallback():
    env = dict(os.environ, LAGSYNC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import lagsync; print(lagsync.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_fallback_simulation_matches_compiled(tmp_path):
    code = ("from lagsync.config import build_experiment, load_preset\n"
            "from lagsync.simulator import Simulator\n"
            "exp = build_experiment(load_preset('fig4'), t_final=1.0)\n"
            "log = Simulator(exp.scenario, exp.sim).run()\n"
            "print(repr(log.group(0).q[-1].ravel().tolist()))\n")
    res = {}
    for flag in ("", "1"):
        env = dict(os.environ)
        env.pop("LAGSYNC_PURE_PYTHON", None)
        if flag:
            env["LAGSYNC_PURE_PYTHON"] = flag
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        res[flag] = np.array(eval(out.stdout.strip()))
    np.testing.assert_allclose(res[""], res["1"], rtol=1e-10, atol=1e-12)
