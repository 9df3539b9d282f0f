"""Hot spatial kernels with import-time backend selection.

The compiled extension (``pvlab._ckernels``) is preferred. Set
``PVLAB_PURE_PYTHON=1`` before import to force the numpy fallback, or call
:func:`use_backend` at runtime (mainly for benchmarks and tests).
"""
from __future__ import annotations

import os
from types import ModuleType

from pvlab import _pykernels

try:
    from pvlab import _ckernels
except ImportError:  # extension not built
    _ckernels = None

__all__ = [
    "BACKEND",
    "available_backends",
    "component_labels",
    "get_backend",
    "hull2d",
    "knn_table",
    "radius_pairs",
    "shot_field",
    "use_backend",
]

_active: ModuleType
BACKEND: str


def available_backends() -> list[str]:
    return ["cython", "python"] if _ckernels is not None else ["python"]


def get_backend(name: str) -> ModuleType:
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built; reinstall with Cython available")
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def use_backend(name: str) -> None:
    global _active, BACKEND
    _active = get_backend(name)
    BACKEND = name


def radius_pairs(points, r):
    return _active.radius_pairs(points, r)


def component_labels(n, pairs):
    return _active.component_labels(n, pairs)


def knn_table(points, k):
    return _active.knn_table(points, k)


def hull2d(points):
    return _active.hull2d(points)


def shot_field(nodes, points, kind, reach, amplitude, core=1.0, exponent=0.0):
    return _active.shot_field(nodes, points, kind, reach, amplitude, core, exponent)


if _ckernels is not None and not os.environ.get("PVLAB_PURE_PYTHON"):
    use_backend("cython")
else:
    use_backend("python")
