"""Multilinear look-up tables on a centred integer grid.

Vertex coordinates along dimension ``d`` run over the integers
``-floor((V[d]-1)/2) .. ceil((V[d]-1)/2)``, so for odd sizes the middle
vertex is the origin.  Parameters are stored flat in row-major order over
the grid, dimension 0 slowest.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from gon.errors import OutOfDomain

DOMAIN_ATOL = 1e-9


@dataclass
class VertexWeightSet:
    """The ``2**D`` vertices around a point and their interpolation weights."""

    vertices: np.ndarray  # (2**D, D) integer coordinates
    weights: np.ndarray  # (2**D,)


class Lattice:
    """A lattice function with per-dimension sizes and flat parameters."""

    def __init__(self, sizes, params=None):
        sizes = np.array(sizes, dtype=int)
        if sizes.ndim != 1 or sizes.size == 0 or np.any(sizes < 2):
            raise ValueError(f"lattice sizes must all be >= 2, got {sizes.tolist()}")
        self.sizes = sizes
        self.lower = -((sizes - 1) // 2)
        self.upper = (sizes - 1) - (sizes - 1) // 2
        # Row-major strides with dimension 0 slowest.
        self.strides = np.ones(sizes.size, dtype=int)
        for d in range(sizes.size - 2, -1, -1):
            self.strides[d] = self.strides[d + 1] * sizes[d + 1]
        self._corners = np.array(list(itertools.product((0, 1), repeat=sizes.size)), dtype=int)
        n = int(np.prod(sizes))
        if params is None:
            params = np.zeros(n)
        params = np.array(params, dtype=float)
        if params.shape != (n,):
            raise ValueError(f"expected {n} lattice parameters, got {params.size}")
        self.params = params

    @property
    def dims(self):
        return self.sizes.size

    @property
    def num_params(self):
        return self.params.size

    def flat_index(self, vertex):
        """Flat parameter index of integer vertex coordinates (any leading shape)."""
        vertex = np.asarray(vertex, dtype=int)
        return (vertex - self.lower) @ self.strides

    def vertices(self):
        """All vertices, in flat-index order."""
        axes = [np.arange(lo, hi + 1) for lo, hi in zip(self.lower, self.upper)]
        return np.array(list(itertools.product(*axes)), dtype=int)

    def copy(self):
        return Lattice(self.sizes, self.params.copy())

    def to_dict(self):
        return {"sizes": self.sizes.tolist(), "params": self.params.tolist()}

    # Batched kernels.  ``points`` has shape (n, D) and must lie in the domain.

    def _cell(self, points):
        lower = np.clip(np.floor(points), self.lower, self.upper - 1).astype(int)
        frac = points - lower
        # (n, 2**D, D) corner coordinates and per-dimension linear factors.
        corners = lower[:, None, :] + self._corners[None, :, :]
        factors = np.where(self._corners[None, :, :] == 1, frac[:, None, :], 1.0 - frac[:, None, :])
        return corners, factors

    def _check(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.dims:
            raise ValueError(f"expected {self.dims}-dimensional points, got {points.shape[1]}")
        if np.any(points < self.lower - DOMAIN_ATOL) or np.any(points > self.upper + DOMAIN_ATOL):
            raise OutOfDomain("point lies outside the lattice domain")
        return np.clip(points, self.lower, self.upper)

    def weights_batch(self, points):
        """Flat vertex indices and weights, each of shape (n, 2**D)."""
        points = self._check(points)
        corners, factors = self._cell(points)
        return corners @ self.strides - self.lower @ self.strides, np.prod(factors, axis=2)

    def eval_batch(self, points):
        idx, w = self.weights_batch(points)
        return np.sum(self.params[idx] * w, axis=1)

    def forward_batch(self, points):
        """``(idx, w, values, partials)`` in one pass, for training."""
        idx, w = self.weights_batch(points)
        values = np.sum(self.params[idx] * w, axis=1)
        return idx, w, values, self._partials(idx, w)

    def _partials(self, idx, w):
        out = np.empty((idx.shape[0], self.dims))
        for d in range(self.dims):
            on_lower = self._corners[:, d] == 0
            ceil = idx + on_lower * self.strides[d]
            floor = ceil - self.strides[d]
            out[:, d] = np.sum(w * (self.params[ceil] - self.params[floor]), axis=1)
        return out

    def partials_batch(self, points):
        """Input gradient, shape (n, D).

        Each cell vertex contributes its weight times the parameter step
        along ``d`` across the cell edge it lies on:
        ``sum_v w_v * (theta[ceil_d(v)] - theta[floor_d(v)])``, where
        ``ceil_d(v)`` is ``v`` moved up one step along ``d`` if ``v`` is on
        the cell's lower face in ``d``, else ``v`` itself.
        """
        return self._partials(*self.weights_batch(points))


def clamp_to_domain(lat, x):
    """Componentwise clamp of ``x`` into the lattice box."""
    return np.clip(np.asarray(x, dtype=float), lat.lower, lat.upper)


def neighbor_cell(lat, x):
    """Vertices of the cell containing ``x`` and their weights.

    The cell's lower corner is ``floor(x)``, moved down by one in any
    dimension where ``x`` sits on the upper boundary.
    """
    x = lat._check(x)
    corners, factors = lat._cell(x)
    return VertexWeightSet(corners[0], np.prod(factors[0], axis=1))


def lattice_eval(lat, x):
    return float(lat.eval_batch(np.asarray(x, dtype=float)[None, :])[0])


def lattice_param_weights(lat, x):
    """Sparse gradient of ``lattice_eval`` with respect to the flat parameters."""
    idx, w = lat.weights_batch(np.asarray(x, dtype=float)[None, :])
    weights = {}
    for i, wi in zip(idx[0].tolist(), w[0].tolist()):
        if wi != 0.0:
            weights[i] = weights.get(i, 0.0) + wi
    return weights


def lattice_input_partial(lat, x, d):
    """Partial derivative along dimension ``d``.

    At integer coordinates this is the derivative from the cell above, or
    from the cell below on the upper boundary.
    """
    return float(lat.partials_batch(np.asarray(x, dtype=float)[None, :])[0, d])
