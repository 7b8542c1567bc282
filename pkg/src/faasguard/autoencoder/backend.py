"""Kernel backend selection.

The recurrent-layer kernels are written once in a numba-compatible numpy
subset. By default they are compiled with numba's @njit; setting
FAASGUARD_BACKEND=numpy selects the uncompiled fallback. FAASGUARD_BACKEND=
numba fails loudly when numba is unavailable instead of degrading silently.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

from ..errors import ConfigError

_ENV_VAR = "FAASGUARD_BACKEND"


def _requested() -> str:
    value = os.environ.get(_ENV_VAR, "").strip().lower()
    if value not in ("", "numba", "numpy"):
        raise ConfigError(
            f"{_ENV_VAR} must be 'numba' or 'numpy', got {value!r}"
        )
    return value


def build_kernels(use_numba: bool) -> SimpleNamespace:
    """Build the kernel namespace, compiled or plain.

    Both variants wrap the same source functions, so the numpy path is the
    literal fallback, not a re-implementation.
    """
    from . import kernels as k

    if use_numba:
        from numba import njit  # raises ImportError when missing

        wrap = lambda fn: njit(cache=True, fastmath=False)(fn)
    else:
        wrap = lambda fn: fn
    return SimpleNamespace(
        lstm_layer_forward=wrap(k.lstm_layer_forward_impl),
        lstm_layer_backward=wrap(k.lstm_layer_backward_impl),
        dense_sigmoid_forward=wrap(k.dense_sigmoid_forward_impl),
        dense_sigmoid_backward=wrap(k.dense_sigmoid_backward_impl),
    )


def _select() -> tuple[str, SimpleNamespace]:
    requested = _requested()
    if requested == "numpy":
        return "numpy", build_kernels(use_numba=False)
    try:
        return "numba", build_kernels(use_numba=True)
    except ImportError:
        if requested == "numba":
            raise ConfigError(f"{_ENV_VAR}=numba but numba is not importable")
        return "numpy", build_kernels(use_numba=False)


ACTIVE_BACKEND, KERNELS = _select()
