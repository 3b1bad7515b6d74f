"""Batched model kernels with a compiled core and a numpy fallback.

The Cython extension ``_ckernels`` is used when it was built; otherwise the
pure numpy module ``_pykernels`` is selected. Setting the environment
variable ``LAGSYNC_PURE_PYTHON=1`` forces the fallback.
"""

import os
from types import ModuleType

from . import _pykernels

ARM2 = _pykernels.ARM2
CARTPEND3 = _pykernels.CARTPEND3
NDOF = _pykernels.NDOF
NPARAM = _pykernels.NPARAM
FF_INVERSE = _pykernels.FF_INVERSE
FF_NONE = _pykernels.FF_NONE
FF_GRAVITY = _pykernels.FF_GRAVITY


def _load_compiled():
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


_compiled = _load_compiled()

if _compiled is not None and not os.environ.get("LAGSYNC_PURE_PYTHON"):
    _impl: ModuleType = _compiled
    BACKEND = "cython"
else:
    _impl = _pykernels
    BACKEND = "python"


def available_backends():
    """Names of the kernel backends importable in this environment."""
    return ["cython", "python"] if _compiled is not None else ["python"]


def get_backend(name=None):
    """Return the kernel module for ``name`` ("cython" or "python").

    ``None`` returns the active backend.
    """
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


mcg = _impl.mcg
inverse_dynamics = _impl.inverse_dynamics
forward_dynamics = _impl.forward_dynamics
regressor = _impl.regressor
closed_loop = _impl.closed_loop
