# Small helpers shared by the solvers, the studies and the command line.

import math
from typing import Iterable, List, Sequence

import numpy as np


# Parses "0.1, 0.05,0.025" into floats; empty items are skipped
def parse_float_list(text: str) -> List[float]:
    items = [x.strip() for x in text.split(',')] if text else []
    try:
        return [float(x) for x in items if x]
    except ValueError as exc:
        raise ValueError(f"not a comma separated list of numbers: {text!r}") from exc


def parse_int_list(text: str) -> List[int]:
    items = [x.strip() for x in text.split(',')] if text else []
    try:
        return [int(x) for x in items if x]
    except ValueError as exc:
        raise ValueError(f"not a comma separated list of integers: {text!r}") from exc


def fit_order(ns: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of -log(error) against log(n).

    Returns nan when fewer than two positive errors are available.
    """
    pairs = [(n, e) for n, e in zip(ns, errors) if e > 0 and math.isfinite(e)]
    if len(pairs) < 2:
        return float('nan')
    logn = np.log([p[0] for p in pairs])
    loge = np.log([p[1] for p in pairs])
    slope = np.polyfit(logn, loge, 1)[0]
    return float(-slope)


# True when max/min of the positive values stays within the given factor
def stable_within(values: Iterable[float], factor: float = 2.0) -> bool:
    vals = [v for v in values if math.isfinite(v)]
    if not vals:
        return False
    lo, hi = min(vals), max(vals)
    if hi == 0:
        return True
    if lo <= 0:
        return False
    return hi / lo <= factor


def relative_gap(value: float, reference: float) -> float:
    if reference == 0:
        return abs(value)
    return abs(value - reference) / abs(reference)


def is_monotone_decreasing(values: Sequence[float], band: float = 0.0) -> bool:
    """Each entry at most (1 + band) times its predecessor."""
    return all(b <= a * (1.0 + band) + 1e-300 for a, b in zip(values, values[1:]))
