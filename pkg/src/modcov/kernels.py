"""Kernel backend selection.

Two builds of ``_kernels_impl`` live side by side: the module itself (plain
numpy) and, when numba imports cleanly and the MODCOV_NUMBA environment
variable is not a falsy value ("0", "false", "no", "off"), a second copy with
the hot functions compiled by ``numba.njit``. The compiled build is the
default. Selection happens once at import time; ``backend_name()`` reports
the winner, and the benchmark script imports both builds directly.
"""

import importlib.util
import os

from . import _kernels_impl as numpy_build

_FALSY = {"0", "false", "no", "off"}


def numba_enabled():
    flag = os.environ.get("MODCOV_NUMBA", "").strip().lower()
    if flag in _FALSY:
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def compile_numba_build():
    """Load a fresh copy of the kernel source and jit its hot functions."""
    import numba

    spec = importlib.util.find_spec("modcov._kernels_impl")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    for name in module.JIT_NAMES:
        setattr(module, name, numba.njit(cache=True)(getattr(module, name)))
    return module


USE_NUMBA = numba_enabled()
active = compile_numba_build() if USE_NUMBA else numpy_build

cd_solve = active.cd_solve
cox_curvature = active.cox_curvature


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
