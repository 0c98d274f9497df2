"""GON and conditional GON models built from calibrators and lattice ensembles.

A GON maps inputs through one increasing PLF per dimension into the box
``[-V, V]**D`` and then through an ensemble of unimodal lattices peaked at
the origin:

    h(x) = alpha0 + sum_t alpha_t * u_t(pi_t(c(x)))

With ``alpha_t >= 0`` the ensemble is itself unimodal about the origin, so
the maximizer is found by inverting each calibrator at zero.  A CGON feeds
``(c(x) + r(z)) / 2`` to the ensemble instead, where ``r`` sums one PLF per
(conditional input, output dimension) pair.
"""

import json
from dataclasses import dataclass

import numpy as np

from gon.calibrators import PiecewiseLinearFn, plf_invert_at, segment_weights
from gon.constraints import (
    ConstraintSet,
    ParameterLayout,
    box_constraints,
    monotone_range_constraints,
    nonnegative_constraints,
    unimodal_lattice_constraints,
    zero_crossing_constraints,
)
from gon.errors import ConditionalMaximizerOutOfRange, InvalidArity
from gon.lattice import Lattice

FORMAT_VERSION = 1


@dataclass
class Maximizer:
    point: np.ndarray
    value: float

    def to_dict(self):
        return {"x": self.point.tolist(), "value": self.value}


class GonModel:
    """Calibrators, a lattice ensemble and its weights.

    Args:
        calibrators: one PiecewiseLinearFn per input.
        lattices: T Lattice objects, each with odd sizes.
        projections: T lists of input indices feeding each lattice.
        alpha0: ensemble bias.
        alphas: T non-negative ensemble weights.
        margin: strictness margin used when generating constraints.
    """

    kind = "gon"

    def __init__(self, calibrators, lattices, projections, alpha0=0.0, alphas=None,
                 margin=0.0, features=None, label=None, label_scaler=None):
        self.calibrators = list(calibrators)
        self.lattices = list(lattices)
        self.projections = [np.array(p, dtype=int) for p in projections]
        if len(self.projections) != len(self.lattices):
            raise ValueError("need one projection per lattice")
        for p, lat in zip(self.projections, self.lattices):
            if p.size != lat.dims or np.any(p < 0) or np.any(p >= len(self.calibrators)):
                raise ValueError(f"bad projection {p.tolist()} for a {lat.dims}-D lattice")
        sizes = {int(s) for lat in self.lattices for s in lat.sizes}
        if len(sizes) != 1 or sizes.pop() % 2 == 0:
            raise ValueError("all lattice sizes must share one odd value")
        self.alpha0 = float(alpha0)
        self.alphas = (np.full(len(self.lattices), 1.0 / len(self.lattices))
                       if alphas is None else np.array(alphas, dtype=float))
        self.margin = float(margin)
        self.features = list(features) if features else [f"x{d}" for d in range(self.dims)]
        self.label = label
        self.label_scaler = label_scaler

    @property
    def dims(self):
        return len(self.calibrators)

    @property
    def lattice_size(self):
        return int(self.lattices[0].sizes[0])

    @property
    def half_width(self):
        """V: the calibrated box is ``[-V, V]`` per dimension."""
        return (self.lattice_size - 1) // 2

    # Flat parameter vector.

    def layout(self):
        layout = ParameterLayout()
        for d, c in enumerate(self.calibrators):
            layout.add(f"c{d}", len(c))
        for t, lat in enumerate(self.lattices):
            layout.add(f"lattice{t}", lat.num_params)
        layout.add("alpha0", 1)
        layout.add("alphas", len(self.lattices))
        return layout

    def get_params(self):
        parts = [c.values for c in self.calibrators]
        parts += [lat.params for lat in self.lattices]
        parts += [[self.alpha0], self.alphas]
        return np.concatenate(parts).astype(float)

    def set_params(self, phi):
        layout = self.layout()
        for d, c in enumerate(self.calibrators):
            c.values = np.array(phi[layout.slice(f"c{d}")], dtype=float)
        for t, lat in enumerate(self.lattices):
            lat.params = np.array(phi[layout.slice(f"lattice{t}")], dtype=float)
        self.alpha0 = float(phi[layout.slice("alpha0")][0])
        self.alphas = np.array(phi[layout.slice("alphas")], dtype=float)

    def constraints(self):
        """Every shape constraint on the flat parameter vector."""
        layout = self.layout()
        V = self.half_width
        cs = ConstraintSet([], layout)
        for d in range(self.dims):
            cs = cs + monotone_range_constraints(layout, f"c{d}", -V, V, self.margin)
            cs = cs + self._calibrator_extra(layout, d)
        for t, lat in enumerate(self.lattices):
            cs = cs + unimodal_lattice_constraints(layout, f"lattice{t}", lat.sizes)
        cs = cs + nonnegative_constraints(layout, "alphas")
        return cs

    def _calibrator_extra(self, layout, d):
        return zero_crossing_constraints(layout, f"c{d}")

    # Evaluation.

    def calibrate(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dims:
            raise ValueError(f"expected {self.dims} inputs, got {X.shape[1]}")
        return np.column_stack([np.interp(X[:, d], c.keys, c.values)
                                for d, c in enumerate(self.calibrators)])

    def ensemble(self, S):
        """The unimodal part ``alpha0 + sum_t alpha_t u_t(pi_t(S))`` on calibrated points."""
        S = np.clip(np.atleast_2d(np.asarray(S, dtype=float)), -self.half_width, self.half_width)
        out = np.full(S.shape[0], self.alpha0)
        for a, lat, proj in zip(self.alphas, self.lattices, self.projections):
            out += a * lat.eval_batch(S[:, proj])
        return out

    def _inner(self, X, Z=None):
        return self.calibrate(X)

    def predict(self, X, Z=None):
        """Raw model output for each row of ``X`` (scaled-label units)."""
        return self.ensemble(self._inner(X, Z))

    # Gradients.

    def backward(self, X, upstream, Z=None):
        """Gradient of ``sum_i upstream[i] * h(X[i])`` over the flat parameters."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        upstream = np.broadcast_to(np.asarray(upstream, dtype=float), (X.shape[0],))
        layout = self.layout()
        grad = np.zeros(layout.size)
        C = self.calibrate(X)
        S_raw = self._combine(C, Z)
        V = self.half_width
        inside = (S_raw >= -V) & (S_raw <= V)
        S = np.clip(S_raw, -V, V)

        dS = np.zeros_like(S)
        grad[layout.slice("alpha0")] = upstream.sum()
        alpha_grad = np.empty(len(self.lattices))
        for t, (a, lat, proj) in enumerate(zip(self.alphas, self.lattices, self.projections)):
            idx, w, u, partials = lat.forward_batch(S[:, proj])
            alpha_grad[t] = upstream @ u
            g_theta = np.bincount(idx.ravel(), weights=(a * upstream[:, None] * w).ravel(),
                                  minlength=lat.num_params)
            grad[layout.slice(f"lattice{t}")] += g_theta
            # A projection may list an input once only, so plain indexing is safe.
            dS[:, proj] += a * upstream[:, None] * partials
        grad[layout.slice("alphas")] = alpha_grad
        dS *= inside
        self._backward_inputs(X, Z, dS, grad, layout)
        return grad

    def _combine(self, C, Z):
        return C

    def _backward_inputs(self, X, Z, dS, grad, layout):
        _plf_backward(self.calibrators, X, dS, grad, layout, "c{}")

    # Maximizer.

    def maximizer(self):
        """``c^{-1}(0)``, one PLF inversion per input."""
        point = np.array([plf_invert_at(c, 0.0) for c in self.calibrators])
        return Maximizer(point, float(self.predict(point[None, :])[0]))

    # Serialisation.

    def to_dict(self):
        doc = {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "dims": self.dims,
            "cond_dims": 0,
            "lattice_size": self.lattice_size,
            "calibrators": [c.to_dict() for c in self.calibrators],
            "lattices": [{"sizes": lat.sizes.tolist(), "inputs": p.tolist(),
                          "params": lat.params.tolist()}
                         for lat, p in zip(self.lattices, self.projections)],
            "alpha0": self.alpha0,
            "alphas": self.alphas.tolist(),
            "r_calibrators": [],
            "features": self.features,
            "cond_features": [],
            "label": self.label,
            "label_scaler": self.label_scaler,
            "margin": self.margin,
        }
        return doc


class CgonModel(GonModel):
    """Conditional GON.  ``r_calibrators[i][j]`` maps ``z[i]`` into output ``j``."""

    kind = "cgon"

    def __init__(self, calibrators, lattices, projections, r_calibrators, cond_features=None,
                 **kwargs):
        super().__init__(calibrators, lattices, projections, **kwargs)
        self.r_calibrators = [list(row) for row in r_calibrators]
        if not self.r_calibrators or any(len(row) != self.dims for row in self.r_calibrators):
            raise ValueError("r_calibrators must be an M x D grid of PLFs with M >= 1")
        self.cond_features = (list(cond_features) if cond_features
                              else [f"z{i}" for i in range(self.cond_dims)])

    @property
    def cond_dims(self):
        return len(self.r_calibrators)

    def layout(self):
        layout = super().layout()
        for i, row in enumerate(self.r_calibrators):
            for j, plf in enumerate(row):
                layout.add(f"r{i}_{j}", len(plf))
        return layout

    def get_params(self):
        parts = [super().get_params()]
        parts += [plf.values for row in self.r_calibrators for plf in row]
        return np.concatenate(parts)

    def set_params(self, phi):
        super().set_params(phi)
        layout = self.layout()
        for i, row in enumerate(self.r_calibrators):
            for j, plf in enumerate(row):
                plf.values = np.array(phi[layout.slice(f"r{i}_{j}")], dtype=float)

    def constraints(self):
        cs = super().constraints()
        layout = cs.layout
        bound = self.half_width / self.cond_dims
        for i, row in enumerate(self.r_calibrators):
            for j in range(len(row)):
                cs = cs + box_constraints(layout, f"r{i}_{j}", -bound, bound)
        return cs

    def _calibrator_extra(self, layout, d):
        return ConstraintSet([], layout)

    def conditional_shift(self, Z):
        """``r(z)`` for each row of ``Z``, shape (n, D)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.cond_dims:
            raise ValueError(f"expected {self.cond_dims} conditional inputs, got {Z.shape[1]}")
        R = np.zeros((Z.shape[0], self.dims))
        for i, row in enumerate(self.r_calibrators):
            for j, plf in enumerate(row):
                R[:, j] += np.interp(Z[:, i], plf.keys, plf.values)
        return R

    def _combine(self, C, Z):
        if Z is None:
            raise ValueError("a CGON needs conditional inputs")
        return 0.5 * (C + self.conditional_shift(Z))

    def _inner(self, X, Z=None):
        return self._combine(self.calibrate(X), Z)

    def _backward_inputs(self, X, Z, dS, grad, layout):
        half = 0.5 * dS
        _plf_backward(self.calibrators, X, half, grad, layout, "c{}")
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        for i, row in enumerate(self.r_calibrators):
            for j, plf in enumerate(row):
                lo, w_hi = segment_weights(plf.keys, Z[:, i])
                g = np.bincount(lo, weights=half[:, j] * (1 - w_hi), minlength=len(plf))
                g += np.bincount(lo + 1, weights=half[:, j] * w_hi, minlength=len(plf))
                grad[layout.slice(f"r{i}_{j}")] += g

    def maximizer(self, z=None):
        """``x`` with ``c(x) = -r(z)``, one PLF inversion per input."""
        if z is None:
            raise ValueError("a CGON maximizer needs a conditioning vector")
        z = np.asarray(z, dtype=float)
        target = -self.conditional_shift(z[None, :])[0]
        point = np.empty(self.dims)
        for d, c in enumerate(self.calibrators):
            lo, hi = c.values[0], c.values[-1]
            if not (lo - 1e-9 <= target[d] <= hi + 1e-9):
                raise ConditionalMaximizerOutOfRange(d, target[d], lo, hi)
            point[d] = plf_invert_at(c, target[d])
        return Maximizer(point, float(self.predict(point[None, :], z[None, :])[0]))

    def to_dict(self):
        doc = super().to_dict()
        doc["cond_dims"] = self.cond_dims
        doc["r_calibrators"] = [[plf.to_dict() for plf in row] for row in self.r_calibrators]
        doc["cond_features"] = self.cond_features
        return doc


def _plf_backward(plfs, X, dOut, grad, layout, name):
    for d, plf in enumerate(plfs):
        lo, w_hi = segment_weights(plf.keys, X[:, d])
        g = np.bincount(lo, weights=dOut[:, d] * (1 - w_hi), minlength=len(plf))
        g += np.bincount(lo + 1, weights=dOut[:, d] * w_hi, minlength=len(plf))
        grad[layout.slice(name.format(d))] += g


# Function-style API.


def gon_eval(m, x):
    return float(m.predict(np.asarray(x, dtype=float)[None, :])[0])


def cgon_eval(m, x, z):
    return float(m.predict(np.asarray(x, dtype=float)[None, :],
                           np.asarray(z, dtype=float)[None, :])[0])


def gon_maximizer(m):
    if m.kind != "gon":
        raise TypeError("use cgon_maximizer for conditional models")
    return m.maximizer()


def cgon_maximizer(m, z):
    return m.maximizer(z)


def gon_backward(m, x, upstream=1.0, z=None):
    Z = None if z is None else np.asarray(z, dtype=float)[None, :]
    return m.backward(np.asarray(x, dtype=float)[None, :], [upstream], Z)


def build_random_projections(D, Q, T, seed, max_attempts=10000):
    """T lists of Q distinct inputs that together cover all D inputs.

    Raises:
        InvalidArity: ``Q`` is not in ``1..D`` or ``T * Q < D``.
    """
    if not 1 <= Q <= D:
        raise InvalidArity(f"lattice dimension {Q} must be between 1 and {D}")
    if T < 1 or T * Q < D:
        raise InvalidArity(f"{T} lattices of {Q} inputs cannot cover {D} inputs")
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        lists = [rng.choice(D, size=Q, replace=False) for _ in range(T)]
        if np.unique(np.concatenate(lists)).size == D:
            return [lst.tolist() for lst in lists]
    raise InvalidArity(f"no covering projection found in {max_attempts} draws")


def model_from_dict(doc):
    if not isinstance(doc, dict):
        raise ValueError("a model document must be a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {doc.get('format_version')!r}")
    calibrators = [PiecewiseLinearFn.from_dict(c) for c in doc["calibrators"]]
    lattices = [Lattice(lat["sizes"], lat["params"]) for lat in doc["lattices"]]
    projections = [lat["inputs"] for lat in doc["lattices"]]
    common = dict(alpha0=doc["alpha0"], alphas=doc["alphas"], margin=doc.get("margin", 0.0),
                  features=doc.get("features"), label=doc.get("label"),
                  label_scaler=doc.get("label_scaler"))
    if doc["kind"] == "gon":
        return GonModel(calibrators, lattices, projections, **common)
    if doc["kind"] == "cgon":
        r = [[PiecewiseLinearFn.from_dict(p) for p in row] for row in doc["r_calibrators"]]
        return CgonModel(calibrators, lattices, projections, r,
                         cond_features=doc.get("cond_features"), **common)
    raise ValueError(f"unknown model kind {doc['kind']!r}")


def save_model(m, path):
    with open(path, "w") as f:
        json.dump(m.to_dict(), f, indent=1)
        f.write("\n")


def load_model(path):
    with open(path) as f:
        return model_from_dict(json.load(f))
