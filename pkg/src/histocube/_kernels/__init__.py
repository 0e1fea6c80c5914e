"""Kernel backend selection.

The compiled extension is preferred when it imports; otherwise the numpy
implementation is used.  Set HISTOCUBE_KERNELS=numpy or =compiled to force
one (forcing the compiled backend raises if it is not built).  Both
backends produce bit-identical output.
"""
from __future__ import annotations

import os

from . import _numpy

_forced = os.environ.get("HISTOCUBE_KERNELS", "").strip().lower()

if _forced == "numpy":
    _impl = _numpy
    BACKEND = "numpy"
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise ImportError(
                "HISTOCUBE_KERNELS=compiled but the extension is not built; "
                "run pip install -e . --no-build-isolation")
        _impl = _numpy
        BACKEND = "numpy"

direct_cube = _impl.direct_cube
direct_level = _impl.direct_level
noncyclic_cube = _impl.noncyclic_cube
noncyclic_level = _impl.noncyclic_level
# mass accumulation is slice arithmetic either way; share one implementation
noncyclic_mass = _numpy.noncyclic_mass
