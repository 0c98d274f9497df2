"""One-dimensional piecewise-linear functions (PLFs).

A PLF is a sorted list of key/value pairs.  Between keys it interpolates
linearly; outside the key range it is held constant at the end values.
Keys are fixed once built; only the values are trained.
"""

import numpy as np

from gon.errors import DegenerateInput, NotInvertibleAtValue

# Relative spacing used to pull apart coincident quantile keys.
QUANTILE_TIE_EPS = 1e-6


class PiecewiseLinearFn:
    """Key/value pairs defining a clamped piecewise-linear function.

    Args:
        keys: strictly increasing input locations, at least two.
        values: output at each key, same length as ``keys``.
    """

    def __init__(self, keys, values):
        keys = np.array(keys, dtype=float)
        values = np.array(values, dtype=float)
        if keys.ndim != 1 or keys.size < 2:
            raise ValueError("a PLF needs at least two keys")
        if values.shape != keys.shape:
            raise ValueError(
                f"keys and values differ in length: {keys.size} vs {values.size}")
        if not np.all(np.diff(keys) > 0):
            raise ValueError("keys must be strictly increasing")
        keys.setflags(write=False)
        self._keys = keys
        self.values = values

    @property
    def keys(self):
        return self._keys

    def __len__(self):
        return self._keys.size

    def __repr__(self):
        return f"PiecewiseLinearFn(keys={self._keys.tolist()}, values={self.values.tolist()})"

    def __call__(self, x):
        return plf_eval(self, x)

    def copy(self):
        return PiecewiseLinearFn(self._keys, self.values.copy())

    def to_dict(self):
        return {"keys": self._keys.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["keys"], doc["values"])


def plf_eval(f, x):
    """Evaluates ``f`` at a scalar or array ``x`` with clamped extrapolation."""
    out = np.interp(x, f.keys, f.values)
    return float(out) if np.ndim(out) == 0 else out


def segment_weights(keys, x):
    """Vectorised interpolation weights.

    Returns ``(lo, w_hi)`` such that the PLF value at each ``x`` equals
    ``(1 - w_hi) * values[lo] + w_hi * values[lo + 1]``.  Points outside the
    key range get ``w_hi`` of exactly 0 or 1.
    """
    x = np.asarray(x, dtype=float)
    lo = np.clip(np.searchsorted(keys, x, side="left") - 1, 0, keys.size - 2)
    left = keys[lo]
    w_hi = np.clip((x - left) / (keys[lo + 1] - left), 0.0, 1.0)
    return lo, w_hi


def plf_value_weights(f, x):
    """Sparse gradient of ``plf_eval(f, x)`` with respect to ``f.values``.

    Returns a dict mapping value index to weight.  There are at most two
    entries and they sum to one; zero weights are dropped.
    """
    lo, w_hi = segment_weights(f.keys, float(x))
    lo, w_hi = int(lo), float(w_hi)
    weights = {}
    if w_hi < 1.0:
        weights[lo] = 1.0 - w_hi
    if w_hi > 0.0:
        weights[lo + 1] = w_hi
    return weights


def plf_invert_at(f, y, atol=1e-9):
    """Smallest ``x`` with ``f(x) == y`` for non-decreasing ``f``.

    Finds the first key whose value reaches ``y`` and inverts the linear
    segment to its left.  On a flat run at level ``y`` this lands on the run's
    left end, which is what treating the rightmost tied value as slightly
    larger gives.

    Args:
        f: PLF with non-decreasing values.
        y: target output level.
        atol: levels this close outside the value range are snapped onto it,
            absorbing round-off left by the constraint projection.

    Raises:
        NotInvertibleAtValue: ``y`` lies outside ``[values[0], values[-1]]``
            or the values are not non-decreasing.
    """
    keys, values = f.keys, f.values
    if np.any(np.diff(values) < -atol):
        raise NotInvertibleAtValue("PLF values are not non-decreasing")
    lo, hi = values[0], values[-1]
    if not (lo - atol <= y <= hi + atol):
        raise NotInvertibleAtValue(
            f"level {y:.6g} is outside the PLF range [{lo:.6g}, {hi:.6g}]")
    y = min(max(y, lo), hi)
    k = int(np.searchsorted(values, y, side="left"))
    if k == 0:
        return float(keys[0])
    k = min(k, keys.size - 1)
    v0, v1 = values[k - 1], values[k]
    if v1 <= v0:
        return float(keys[k])
    t = (y - v0) / (v1 - v0)
    return float(keys[k - 1] + t * (keys[k] - keys[k - 1]))


def init_keys_from_quantiles(samples, num_keys, domain):
    """Fixed calibrator keys: domain endpoints plus interior sample quantiles.

    The ``num_keys - 2`` interior keys sit at evenly spaced quantile levels
    ``i / (num_keys - 1)`` of ``samples`` (linear interpolation between order
    statistics).  Runs of equal keys are spread apart in steps of
    ``1e-6 * width`` so the result is strictly increasing.

    Raises:
        DegenerateInput: the domain has zero (or negative) width.
    """
    lo, hi = float(domain[0]), float(domain[1])
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise DegenerateInput("domain endpoints must be finite")
    if not hi > lo:
        raise DegenerateInput(f"domain [{lo}, {hi}] has zero width")
    if num_keys < 2:
        raise ValueError("need at least two keys")
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise DegenerateInput("no samples to take quantiles from")
    eps = QUANTILE_TIE_EPS * (hi - lo)

    levels = np.arange(1, num_keys - 1) / (num_keys - 1)
    interior = np.clip(np.quantile(samples, levels), lo, hi)
    keys = np.concatenate([[lo], interior, [hi]])

    # Spread each run of coincident keys symmetrically around its value.
    start = 0
    while start < keys.size:
        stop = start + 1
        while stop < keys.size and keys[stop] == keys[start]:
            stop += 1
        run = stop - start
        if run > 1:
            offsets = (2 * np.arange(run) - (run - 1)) * eps
            keys[start:stop] = keys[start] + offsets
        start = stop

    # Endpoints are pinned; push interior keys inward where a spread crossed them.
    keys[0], keys[-1] = lo, hi
    for i in range(1, keys.size - 1):
        keys[i] = max(keys[i], keys[i - 1] + eps)
    for i in range(keys.size - 2, 0, -1):
        keys[i] = min(keys[i], keys[i + 1] - eps)
    return keys
