"""
Numba is optional. Set ``OFFSETOPT_DISABLE_JIT=1`` to run every kernel through
its pure Python/numpy fallback (useful for debugging and for the benchmark).
"""

import os

_FALSEY = ("1", "true", "yes", "on")

JIT_ENABLED = os.environ.get("OFFSETOPT_DISABLE_JIT", "0").strip().lower() not in _FALSEY

if JIT_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        JIT_ENABLED = False

if not JIT_ENABLED:

    def njit(func=None, **kwargs):
        if func is not None:
            return func

        def wrapper(f):
            return f

        return wrapper


def pick(jitted, fallback):
    """Return the compiled kernel when JIT is on, else the numpy fallback."""
    return jitted if JIT_ENABLED else fallback


def py_func(f):
    """Underlying Python function of a (possibly) jitted kernel."""
    return getattr(f, "py_func", f)
