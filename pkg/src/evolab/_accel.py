"""Numba detection and the switch between jitted and pure-numpy kernels.

Set ``EVOLAB_DISABLE_NUMBA=1`` to force the numpy path (also used when numba
is not importable).
"""
import os

_FALSEY = {"", "0", "false", "no", "off"}


def numba_requested():
    return os.environ.get("EVOLAB_DISABLE_NUMBA", "").strip().lower() in _FALSEY


try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is an optional accelerator
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and numba_requested()


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def thread_cap():
    """Harness parallelism cap from ``EVOLAB_THREADS`` (None = machine default)."""
    raw = os.environ.get("EVOLAB_THREADS", "").strip()
    if not raw:
        return None
    try:
        value = int(raw)
    except ValueError:
        return None
    return value if value > 0 else None


def apply_thread_cap():
    cap = thread_cap()
    if cap is not None and HAVE_NUMBA:
        _numba.set_num_threads(min(cap, _numba.config.NUMBA_NUM_THREADS))
    return cap
