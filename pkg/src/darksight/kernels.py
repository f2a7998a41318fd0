"""Backend selection for the hot kernels.

The compiled extension is used when importable; setting the environment
variable ``DARKSIGHT_PURE_PYTHON=1`` forces the numpy fallback. Both
backends are reachable through :func:`get_backend` for tests and benchmarks.
"""
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available_backends():
    return sorted(_BACKENDS)


def get_backend(name=None):
    if name is None:
        return _active
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}; "
                         f"available: {available_backends()}") from None


if _ckernels is not None and os.environ.get("DARKSIGHT_PURE_PYTHON") != "1":
    BACKEND = "cython"
else:
    BACKEND = "python"
_active = _BACKENDS[BACKEND]
