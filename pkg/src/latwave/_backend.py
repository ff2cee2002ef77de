"""Select the compiled kernels when built, else the numpy fallback.

Set ``LATWAVE_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

python = _pykernels
compiled = None

if os.environ.get("LATWAVE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled  # type: ignore[no-redef]
    except ImportError:  # extension not built
        compiled = None

kernels = compiled if compiled is not None else _pykernels
NAME = kernels.NAME


def get(name: str | None = None):
    """Return a kernel module by name ('cython' or 'python'); default is the active one."""
    if name in (None, "auto"):
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        if compiled is None:
            raise ImportError("compiled kernels are not available; rebuild the extension")
        return compiled
    raise ValueError(f"unknown backend '{name}'")
