"""Hot-loop kernels for softmax regression.

The compiled ``_ckernels`` extension is preferred; the numpy fallback in
``_pykernels`` is selected when the extension is missing or when the
environment variable ``FEDSIM_KERNELS=python`` is set. ``BACKEND`` names the
active implementation.
"""

from __future__ import annotations

import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

_forced = os.environ.get("FEDSIM_KERNELS", "").strip().lower()

if _forced == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        if _forced == "cython":
            raise
        log.debug("compiled kernels unavailable; using numpy fallback")
        _impl = _pykernels
        BACKEND = "python"

predict_proba = _impl.predict_proba
loss_only = _impl.loss_only
loss_grad = _impl.loss_grad
sgd = _impl.sgd


def get_backend(name: str):
    """Return the kernel module named ``"python"`` or ``"cython"``."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


__all__ = ["BACKEND", "get_backend", "loss_grad", "loss_only", "predict_proba", "sgd"]
