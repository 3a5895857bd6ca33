"""Kernel selection: the compiled extension when importable, numpy otherwise.

Set ``SCOUTSTACK_KERNELS=python`` to force the numpy kernels.
"""

import importlib
import os

from . import _pykernels


def load(name):
    if name == "python":
        return _pykernels
    if name == "cython":
        return importlib.import_module("scoutstack._kernels")
    raise ValueError(f"unknown kernel backend {name!r}")


def available():
    names = ["python"]
    try:
        load("cython")
        names.insert(0, "cython")
    except ImportError:
        pass
    return names


_requested = os.environ.get("SCOUTSTACK_KERNELS", "auto")
if _requested == "auto":
    BACKEND = available()[0]
else:
    BACKEND = _requested
kernels = load(BACKEND)
