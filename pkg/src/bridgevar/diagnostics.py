"""Process-wide event counters for clamps, floors and fallbacks.

Numerical routines never warn per call; they bump a named counter instead.
Callers snapshot the counters around a computation to see what happened.
"""

import threading
from collections import Counter

_lock = threading.Lock()
_counts = Counter()


def bump(name, k=1):
    if k:
        with _lock:
            _counts[name] += int(k)


def snapshot():
    with _lock:
        return dict(_counts)


def reset():
    with _lock:
        _counts.clear()


def delta(before, after=None):
    """Counter increments between two snapshots (``after`` defaults to now)."""
    after = snapshot() if after is None else after
    out = {}
    for key, val in after.items():
        d = val - before.get(key, 0)
        if d:
            out[key] = d
    return out
