"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``LOBCAST_KERNELS=python`` to force the fallback.
"""
import logging
import os
from types import ModuleType

from lobcast.tcn import _pykernels

logger = logging.getLogger(__name__)

_compiled: ModuleType | None
try:
    from lobcast.tcn import _ckernels as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None


def available_backends() -> list[str]:
    return ["cython", "python"] if _compiled is not None else ["python"]


def get_backend(name: str) -> ModuleType:
    if name == "python":
        return _pykernels
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; reinstall with Cython available")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


def _select() -> tuple[str, ModuleType]:
    wanted = os.environ.get("LOBCAST_KERNELS", "").strip().lower()
    if wanted == "python" or _compiled is None:
        if wanted == "cython":
            logger.warning("LOBCAST_KERNELS=cython requested but extension missing; using numpy")
        return "python", _pykernels
    return "cython", _compiled


BACKEND, _impl = _select()

causal_conv1d_forward = _impl.causal_conv1d_forward
causal_conv1d_backward = _impl.causal_conv1d_backward
relu_dropout_forward = _impl.relu_dropout_forward
relu_dropout_backward = _impl.relu_dropout_backward


def use_backend(name: str) -> str:
    """Switch the module-level kernels; returns the previously active backend name."""
    global BACKEND, _impl, causal_conv1d_forward, causal_conv1d_backward
    global relu_dropout_forward, relu_dropout_backward
    previous = BACKEND
    _impl = get_backend(name)
    BACKEND = name
    causal_conv1d_forward = _impl.causal_conv1d_forward
    causal_conv1d_backward = _impl.causal_conv1d_backward
    relu_dropout_forward = _impl.relu_dropout_forward
    relu_dropout_backward = _impl.relu_dropout_backward
    return previous
