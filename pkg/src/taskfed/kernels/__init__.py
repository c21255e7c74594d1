"""Flat float64 kernels with a compiled core and a numpy fallback.

The compiled extension (``taskfed.kernels._core``, built from Cython) is
preferred when importable; otherwise the numpy implementations in ``_py`` are
used.  Selection can be forced with the environment variable
``TASKFED_KERNELS``:

* ``auto`` (default) -- compiled if available, else numpy
* ``c``              -- compiled, raise if the extension is missing
* ``py``             -- numpy, even when the extension is built

``BACKEND`` reports which implementation is active.  Both backends implement
identical update/stop rules, so numerical results agree to rounding noise,
but runs are only guaranteed byte-reproducible against the same backend.
"""

import os

from . import _py

_requested = os.environ.get("TASKFED_KERNELS", "auto").lower()
if _requested not in ("auto", "c", "py"):
    raise ValueError(f"TASKFED_KERNELS must be auto|c|py, got {_requested!r}")

_impl = None
if _requested in ("auto", "c"):
    try:
        from . import _core as _impl
    except ImportError:
        if _requested == "c":
            raise ImportError(
                "TASKFED_KERNELS=c but the compiled extension is not built; "
                "run `pip install -e . --no-build-isolation`"
            ) from None
if _impl is None:
    _impl = _py

BACKEND = "py" if _impl is _py else "c"

mean_rows = _impl.mean_rows
weighted_rows = _impl.weighted_rows
axpy = _impl.axpy
scale = _impl.scale
dot = _impl.dot
nrm2 = _impl.nrm2
project_simplex = _impl.project_simplex
dual_pgd = _impl.dual_pgd


def available_backends():
    """Names of the importable kernel backends."""
    names = ["py"]
    try:
        from . import _core  # noqa: F401
    except ImportError:
        pass
    else:
        names.append("c")
    return names
