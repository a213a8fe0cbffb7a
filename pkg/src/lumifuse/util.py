"""Small shared helpers: deterministic rounding/formatting and atomic file output."""

from __future__ import annotations

import math
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np


def round_half_away(x):
    """Round to nearest integer with halves away from zero; works on arrays."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def format_float(v: float) -> str:
    """Shortest decimal form of a float64 that parses back bit-identically.

    Integral values collapse to plain integers ("-2", "0"); a negative zero
    keeps its sign so the round trip stays exact.
    """
    v = float(v)
    if math.isfinite(v) and v == math.floor(v) and abs(v) < 1e16:
        if v == 0.0 and math.copysign(1.0, v) < 0:
            return "-0"
        return str(int(v))
    return repr(v)


@contextmanager
def atomic_output(path):
    """Yield a temp path in the target directory, renamed over `path` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    # mkstemp creates 0600; give the final file ordinary umask-controlled bits.
    umask = os.umask(0)
    os.umask(umask)
    os.chmod(tmp, 0o666 & ~umask)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_bytes(path, data: bytes) -> None:
    with atomic_output(path) as tmp:
        tmp.write_bytes(data)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
