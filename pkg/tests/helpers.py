"""Shared builders for the test suite: fixtures, random feasible models, oracles."""

import itertools

import numpy as np

from gon.calibrators import PiecewiseLinearFn
from gon.constraints import ConstraintSet, ParameterLayout, project_dykstra, unimodal_lattice_constraints
from gon.lattice import Lattice
from gon.model import CgonModel, GonModel, build_random_projections


def counterexample_lattice():
    """3x3 lattice peaked at the origin whose composition with monotone maps is not unimodal."""
    lat = Lattice([3, 3])
    for v in lat.vertices():
        a, b = int(v[0]), int(v[1])
        if a == 0 and b == 0:
            val = 3.0
        elif b == 0:
            val = 2.0
        elif a == 0:
            val = 0.0
        else:
            val = 1.0
        lat.params[lat.flat_index(v)] = val
    return lat


def counterexample_model():
    c1 = PiecewiseLinearFn([0, 1, 3], [-1, 0, 1])
    c2 = PiecewiseLinearFn([0, 2, 3], [-1, 1, 1])
    return GonModel([c1, c2], [counterexample_lattice()], [[0, 1]], alpha0=0.0, alphas=[1.0])


def lattice_layout(lat):
    layout = ParameterLayout()
    layout.add("lat", lat.num_params)
    return layout


def project_lattice(lat, tol=1e-13):
    """Euclidean projection of the lattice parameters onto the unimodal set."""
    layout = lattice_layout(lat)
    cs = unimodal_lattice_constraints(layout, "lat", lat.sizes)
    theta, info = project_dykstra(lat.params, cs, 20000, tol=tol)
    assert info.converged, info
    return Lattice(lat.sizes, theta), cs


def random_feasible_lattice(rng, sizes, scale=1.0):
    lat = Lattice(sizes, scale * rng.standard_normal(int(np.prod(sizes))))
    return project_lattice(lat)[0]


def _random_keys(rng, K, lo=None, hi=None):
    lo = rng.uniform(-3, 0) if lo is None else lo
    hi = lo + rng.uniform(1, 5) if hi is None else hi
    inner = np.sort(rng.uniform(lo, hi, K - 2))
    keys = np.concatenate([[lo], inner, [hi]])
    assert np.all(np.diff(keys) > 0)
    return keys


def _interior_values(rng, K, V):
    """Increasing values strictly inside (-V, V) whose range contains 0."""
    while True:
        vals = np.sort(rng.uniform(-0.95 * V, 0.95 * V, K))
        if vals[0] < 0 < vals[-1] and np.all(np.diff(vals) > 1e-3):
            return vals


def random_model(rng, D, K=5, lattice_size=3, Q=None, T=None, M=0, project=False):
    """Random feasible GON (or CGON when ``M > 0``).

    Calibrator values sit strictly inside the calibrated box so the model is
    differentiable almost everywhere; lattices are projected to unimodality
    and ensemble weights are positive.  ``project=True`` instead draws every
    parameter at random and projects the whole vector onto the constraints.
    """
    V = (lattice_size - 1) // 2
    Q = min(D, 3) if Q is None else Q
    T = max(1, D) if T is None else T
    projections = build_random_projections(D, Q, T, int(rng.integers(1 << 30)))
    cals = [PiecewiseLinearFn(_random_keys(rng, K), _interior_values(rng, K, V))
            for _ in range(D)]
    lats = [random_feasible_lattice(rng, [lattice_size] * Q) for _ in range(T)]
    kwargs = dict(alpha0=float(rng.normal()), alphas=rng.uniform(0.1, 1.5, T))
    if M:
        r = [[PiecewiseLinearFn(_random_keys(rng, K), rng.uniform(-V / M, V / M, K) * 0.9)
              for _ in range(D)] for _ in range(M)]
        model = CgonModel(cals, lats, projections, r, **kwargs)
    else:
        model = GonModel(cals, lats, projections, **kwargs)
    if project:
        phi = model.get_params() + rng.standard_normal(model.layout().size)
        phi, info = project_dykstra(phi, model.constraints(), 50000, tol=1e-13)
        assert info.converged
        model.set_params(phi)
    return model


def key_domain(model):
    lo = np.array([c.keys[0] for c in model.calibrators])
    hi = np.array([c.keys[-1] for c in model.calibrators])
    return lo, hi


def brute_force_projection(x0, A, b):
    """Nearest point to ``x0`` in ``{x : A x >= b}`` by trying every active set.

    For each subset of rows, project onto the affine set where those rows hold
    with equality; the feasible candidate closest to ``x0`` is the answer.
    """
    x0 = np.asarray(x0, dtype=float)
    best, best_d = None, np.inf
    m = A.shape[0]
    for k in range(m + 1):
        for rows in itertools.combinations(range(m), k):
            if rows:
                As, bs = A[list(rows)], b[list(rows)]
                lam = np.linalg.lstsq(As @ As.T, bs - As @ x0, rcond=None)[0]
                x = x0 + As.T @ lam
                if np.max(np.abs(As @ x - bs)) > 1e-9:
                    continue
            else:
                x = x0
            if np.all(A @ x >= b - 1e-10):
                d = float(np.sum((x - x0) ** 2))
                if d < best_d:
                    best, best_d = x, d
    return best


def constraint_matrix(cs):
    A = np.zeros((len(cs), cs.layout.size))
    b = np.zeros(len(cs))
    for r, c in enumerate(cs):
        for i, a in c.coeffs:
            A[r, i] = a
        b[r] = c.bound
    return A, b


def empty_set(layout):
    return ConstraintSet([], layout)


def violating_lattice(rng, sizes, gap=0.1, attempts=50):
    """Lattice breaking exactly one unimodality row by at least ``gap``.

    Picks a random (vertex, cell) row, flips it to ``-a . theta >= gap`` and
    projects a random start onto the flipped row plus every other row.
    Returns ``(lattice, vertex, delta, row)``; ``row`` is the violated
    LinearConstraint.
    """
    from gon.constraints import LinearConstraint, lattice_unimodality_candidates

    lat = Lattice(sizes)
    layout = lattice_layout(lat)
    full = unimodal_lattice_constraints(layout, "lat", sizes)
    cands = [c for c in lattice_unimodality_candidates(sizes) if any(c[0])]
    for _ in range(attempts):
        v, delta, terms = cands[int(rng.integers(len(cands)))]
        row = LinearConstraint.build([(lat.flat_index(vert), a) for vert, a in terms])
        flipped = LinearConstraint.build([(i, -a) for i, a in row.coeffs], gap)
        cs = ConstraintSet([c for c in full if c != row] + [flipped], layout)
        theta, info = project_dykstra(rng.standard_normal(lat.num_params), cs, 20000, tol=1e-12)
        if info.converged:
            return Lattice(sizes, theta), np.array(v), np.array(delta), row
    raise RuntimeError("could not isolate a single violated row")


def violating_region(v, delta, frac=0.25):
    """Sub-box of the cell with lower corner ``v - (1 - delta)``, hugging vertex ``v``."""
    lo = v - (1 - delta)
    hi = lo + 1.0
    # v is the corner of the cell at offset (1 - delta) from lo.
    r_lo = np.where(delta == 0, hi - frac, lo)
    r_hi = np.where(delta == 0, hi, lo + frac)
    return r_lo.astype(float), r_hi.astype(float)
