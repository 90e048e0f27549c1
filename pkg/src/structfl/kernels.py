"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``STRUCTFL_BACKEND=python`` to force the fallback or
``STRUCTFL_BACKEND=compiled`` to fail loudly when the extension is missing.
"""
import os

from . import _kernels_py

_choice = os.environ.get("STRUCTFL_BACKEND", "auto").lower()

compiled = None
if _choice != "python":
    try:
        from . import _kernels as compiled
    except ImportError:
        if _choice == "compiled":
            raise

_impl = compiled if compiled is not None else _kernels_py
BACKEND = "compiled" if compiled is not None else "python"

loss_grad = _impl.loss_grad
predict = _impl.predict
propagate = _impl.propagate
sq_dists = _impl.sq_dists


def get_backend(name: str):
    """Return the kernel module ``"compiled"`` or ``"python"`` explicitly."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if compiled is None:
            raise ImportError("compiled kernels are not built")
        return compiled
    raise ValueError(f"unknown backend {name!r}")
