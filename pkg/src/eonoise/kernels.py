"""Hot inner loops.

Two implementations of every kernel live here: a numba-compiled loop and a
numpy fallback. The module-level names (:func:`first_order_hold_response`,
:func:`exponential_smoothing`) dispatch to one of them according to
:data:`eonoise._accel.USE_JIT`. Both are importable directly for benchmarks
and equivalence tests.
"""

import numpy as np

from ._accel import HAS_NUMBA, USE_JIT, njit


def _foh_loop(t, u, tau, gain, n0):
    out = np.empty(t.shape[0])
    n = n0
    out[0] = n
    for k in range(1, t.shape[0]):
        h = t[k] - t[k - 1]
        if h > 0.0:
            x = h / tau
            a = np.exp(-x)
            q = -np.expm1(-x) / x
            n = a * n + gain * ((1.0 - q) * u[k] + (q - a) * u[k - 1])
        out[k] = n
    return out


def _smooth_loop(x, a, y0):
    nt, nc = x.shape
    y = np.empty((nt, nc))
    b = 1.0 - a
    acc = y0.copy()
    # row-major walk: the inner loop runs over contiguous columns
    for k in range(nt):
        for j in range(nc):
            acc[j] = a * acc[j] + b * x[k, j]
            y[k, j] = acc[j]
    return y


def foh_response_numpy(t, u, tau, gain, n0):
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    h = np.diff(t)
    x = h / tau
    pos = x > 0
    a = np.ones_like(h)
    c1 = np.zeros_like(h)
    c0 = np.zeros_like(h)
    xp = x[pos]
    a[pos] = np.exp(-xp)
    q = -np.expm1(-xp) / xp
    c1[pos] = 1.0 - q
    c0[pos] = q - a[pos]
    drive = gain * (c1 * u[1:] + c0 * u[:-1])
    out = np.empty(t.shape[0])
    n = float(n0)
    out[0] = n
    # scalar recurrence; lists keep the interpreter loop cheap
    for k, (ak, dk) in enumerate(zip(a.tolist(), drive.tolist()), start=1):
        n = ak * n + dk
        out[k] = n
    return out


def smoothing_numpy(x, a, y0):
    x = np.asarray(x, dtype=float)
    y = np.empty_like(x)
    b = 1.0 - a
    acc = np.array(y0, dtype=float)
    for k in range(x.shape[0]):
        acc = a * acc + b * x[k]
        y[k] = acc
    return y


if HAS_NUMBA:
    foh_response_jit = njit(_foh_loop)
    smoothing_jit = njit(_smooth_loop)
else:  # pragma: no cover
    foh_response_jit = foh_response_numpy
    smoothing_jit = smoothing_numpy


def first_order_hold_response(t, u, tau, gain=1.0, n0=0.0):
    """Exact solution of ``dn/dt = (gain*u(t) - n)/tau`` for piecewise-linear ``u``.

    ``u`` is linear between consecutive entries of ``t``. Repeated time
    points encode a jump in ``u`` (zero-length segment, state unchanged).
    """
    t = np.ascontiguousarray(t, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    if t.shape != u.shape or t.ndim != 1:
        raise ValueError("t and u must be 1-D arrays of equal length")
    if t.shape[0] == 0:
        return np.empty(0)
    if USE_JIT:
        return foh_response_jit(t, u, float(tau), float(gain), float(n0))
    return foh_response_numpy(t, u, tau, gain, n0)


def exponential_smoothing(x, a, y0):
    """Column-wise ``y[k] = a*y[k-1] + (1-a)*x[k]`` with ``y[-1] = y0``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    y0 = np.ascontiguousarray(np.broadcast_to(np.asarray(y0, dtype=np.float64), x.shape[1:]))
    if USE_JIT:
        y = smoothing_jit(x, float(a), y0)
    else:
        y = smoothing_numpy(x, a, y0)
    return y[:, 0] if squeeze else y
