"""Hot numeric kernels with two interchangeable backends.

The numba backend JIT-compiles the inner loops; the numpy backend expresses
the same arithmetic with vectorized operations. Both accumulate in the same
pinned order (per-cell in input order; per-tap ascending), so their outputs
are bit-identical — tests assert exact equality, not tolerances.

Backend selection happens once at import via the LUMIFUSE_BACKEND environment
variable: "numba", "numpy", or "auto" (default: numba when importable).
"""

from __future__ import annotations

import os

import numpy as np

from .errors import InputError

BACKEND_ENV_VAR = "LUMIFUSE_BACKEND"

KERNEL_NAMES = ("scatter_add_3", "conv_valid_h", "conv_valid_v", "backproject_points")


# ── numpy backend ────────────────────────────────────────────────────────

def _np_scatter_add_3(out, idx, vals):
    # np.add.at is unbuffered: adds happen in index order, matching the
    # sequential loop of the numba kernel bit for bit.
    np.add.at(out, idx, vals)


def _np_conv_valid_h(a, w):
    k = w.shape[0]
    wout = a.shape[1] - k + 1
    acc = w[0] * a[:, 0:wout]
    for j in range(1, k):
        acc += w[j] * a[:, j:j + wout]
    return acc


def _np_conv_valid_v(a, w):
    k = w.shape[0]
    hout = a.shape[0] - k + 1
    acc = w[0] * a[0:hout, :]
    for j in range(1, k):
        acc += w[j] * a[j:j + hout, :]
    return acc


def _np_backproject_points(depth, stride, fx, fy, cx, cy, rot, t):
    d = depth[::stride, ::stride]
    vs, us = np.nonzero((d > 0) & np.isfinite(d))
    dd = d[vs, us].astype(np.float64)
    u = us.astype(np.int64) * stride
    v = vs.astype(np.int64) * stride
    x = dd * ((u + 0.5 - cx) / fx)
    y = dd * ((v + 0.5 - cy) / fy)
    m0 = x - t[0]
    m1 = y - t[1]
    m2 = dd - t[2]
    px = rot[0, 0] * m0 + rot[1, 0] * m1 + rot[2, 0] * m2
    py = rot[0, 1] * m0 + rot[1, 1] * m1 + rot[2, 1] * m2
    pz = rot[0, 2] * m0 + rot[1, 2] * m1 + rot[2, 2] * m2
    pos = np.empty((dd.shape[0], 3), dtype=np.float64)
    pos[:, 0] = px
    pos[:, 1] = py
    pos[:, 2] = pz
    return pos, u, v


_NUMPY_IMPL = {
    "scatter_add_3": _np_scatter_add_3,
    "conv_valid_h": _np_conv_valid_h,
    "conv_valid_v": _np_conv_valid_v,
    "backproject_points": _np_backproject_points,
}


# ── numba backend ────────────────────────────────────────────────────────

def _build_numba_impl():
    from numba import njit

    @njit(cache=True)
    def scatter_add_3(out, idx, vals):
        for i in range(idx.shape[0]):
            j = idx[i]
            out[j, 0] += vals[i, 0]
            out[j, 1] += vals[i, 1]
            out[j, 2] += vals[i, 2]

    @njit(cache=True)
    def conv_valid_h(a, w):
        h = a.shape[0]
        k = w.shape[0]
        wout = a.shape[1] - k + 1
        out = np.empty((h, wout), dtype=np.float64)
        for i in range(h):
            for j in range(wout):
                s = w[0] * a[i, j]
                for m in range(1, k):
                    s += w[m] * a[i, j + m]
                out[i, j] = s
        return out

    @njit(cache=True)
    def conv_valid_v(a, w):
        w_ = a.shape[1]
        k = w.shape[0]
        hout = a.shape[0] - k + 1
        out = np.empty((hout, w_), dtype=np.float64)
        for i in range(hout):
            for j in range(w_):
                s = w[0] * a[i, j]
                for m in range(1, k):
                    s += w[m] * a[i + m, j]
                out[i, j] = s
        return out

    @njit(cache=True)
    def backproject_points(depth, stride, fx, fy, cx, cy, rot, t):
        h, w = depth.shape
        n = 0
        for v in range(0, h, stride):
            for u in range(0, w, stride):
                d = depth[v, u]
                if d > 0 and np.isfinite(d):
                    n += 1
        pos = np.empty((n, 3), dtype=np.float64)
        us = np.empty(n, dtype=np.int64)
        vs = np.empty(n, dtype=np.int64)
        i = 0
        for v in range(0, h, stride):
            for u in range(0, w, stride):
                d = depth[v, u]
                if d > 0 and np.isfinite(d):
                    dd = np.float64(d)
                    x = dd * ((u + 0.5 - cx) / fx)
                    y = dd * ((v + 0.5 - cy) / fy)
                    m0 = x - t[0]
                    m1 = y - t[1]
                    m2 = dd - t[2]
                    pos[i, 0] = rot[0, 0] * m0 + rot[1, 0] * m1 + rot[2, 0] * m2
                    pos[i, 1] = rot[0, 1] * m0 + rot[1, 1] * m1 + rot[2, 1] * m2
                    pos[i, 2] = rot[0, 2] * m0 + rot[1, 2] * m1 + rot[2, 2] * m2
                    us[i] = u
                    vs[i] = v
                    i += 1
        return pos, us, vs

    return {
        "scatter_add_3": scatter_add_3,
        "conv_valid_h": conv_valid_h,
        "conv_valid_v": conv_valid_v,
        "backproject_points": backproject_points,
    }


# ── selection ────────────────────────────────────────────────────────────

def load_impl(name: str) -> dict:
    """Return the kernel table for an explicit backend name ("numpy"/"numba")."""
    if name == "numpy":
        return _NUMPY_IMPL
    if name == "numba":
        return _build_numba_impl()
    raise InputError(f"unknown kernel backend {name!r} (expected 'numba' or 'numpy')")


def _select():
    requested = os.environ.get(BACKEND_ENV_VAR, "auto").strip().lower()
    if requested in ("numba", "numpy"):
        return requested, load_impl(requested)
    if requested not in ("", "auto"):
        raise InputError(
            f"invalid {BACKEND_ENV_VAR}={requested!r} (expected 'auto', 'numba' or 'numpy')"
        )
    try:
        return "numba", load_impl("numba")
    except ImportError:
        return "numpy", _NUMPY_IMPL


_ACTIVE_NAME, _ACTIVE = _select()

scatter_add_3 = _ACTIVE["scatter_add_3"]
conv_valid_h = _ACTIVE["conv_valid_h"]
conv_valid_v = _ACTIVE["conv_valid_v"]
backproject_points = _ACTIVE["backproject_points"]


def active_backend() -> str:
    return _ACTIVE_NAME
