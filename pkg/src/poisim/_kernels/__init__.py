"""Hot kernels with a compiled core and a pure numpy fallback.

The compiled module is used when it imports; set ``POISIM_KERNEL=python``
to force the fallback.
"""

import os
import warnings

from . import _fallback

BACKENDS = {"python": _fallback}

try:
    from . import _core
except ImportError:  # extension not built
    _core = None
else:
    BACKENDS["cython"] = _core


def _select():
    wanted = os.environ.get("POISIM_KERNEL", "").strip().lower()
    if wanted and wanted not in ("python", "cython"):
        raise ValueError(f"unknown POISIM_KERNEL {wanted!r}")
    if wanted == "python":
        return "python"
    if _core is None:
        if wanted == "cython":
            warnings.warn("compiled kernels unavailable; using numpy fallback", RuntimeWarning)
        return "python"
    return "cython"


BACKEND = _select()
_impl = BACKENDS[BACKEND]

social_forces = _impl.social_forces
advance = _impl.advance
exposure_increment = _impl.exposure_increment
voronoi_areas = _impl.voronoi_areas


def get_backend(name):
    """Kernel module by name ("python" or "cython")."""
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available") from None
