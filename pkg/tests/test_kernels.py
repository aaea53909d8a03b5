import importlib
import subprocess
import sys

import numpy as np
import pytest

from etclab import _kernels_py, kernels


def _compiled():
    try:
        return importlib.import_module("etclab._kernels")
    except ImportError:
        return None


@pytest.mark.parametrize("n", [1, 2, 3])
def test_backends_bitwise_equal(n):
    comp = _compiled()
    if comp is None:
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(n)
    dW = rng.standard_normal((5, 3000, n)) * 0.03
    out = []
    for mod in (comp, _kernels_py):
        X = np.zeros((5, n))
        cost = np.zeros(5)
        ev = np.zeros(5, dtype=np.int64)
        mod.etc_segment(dW, X, 0.4, 1e-3, cost, ev)
        X2 = np.zeros((5, n))
        cost2 = np.zeros(5)
        ev2 = np.zeros(5, dtype=np.int64)
        ph = np.zeros(5, dtype=np.int64)
        mod.ttc_segment(dW, X2, 97, ph, 1e-3, cost2, ev2)
        out.append((X, cost, ev, X2, cost2, ev2, ph))
    for a, b in zip(*out):
        assert np.array_equal(a, b)
    assert out[0][2].sum() > 0


def test_kernel_semantics():
    dW = np.zeros((1, 4, 1))
    dW[0, :, 0] = [0.5, 0.5, 0.1, 0.1]
    X = np.zeros((1, 1))
    cost = np.zeros(1)
    ev = np.zeros(1, dtype=np.int64)
    kernels.etc_segment(dW, X, 0.9, 1.0, cost, ev)
    # left-point cost 0 + 0.25 + 0 + 0.01; reset when x^2 = 1 >= 0.9
    assert ev[0] == 1 and cost[0] == pytest.approx(0.26) and X[0, 0] == pytest.approx(0.2)


def test_pure_python_override():
    code = "from etclab import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env={"ETCLAB_PURE_PYTHON": "1", "PATH": ""},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
