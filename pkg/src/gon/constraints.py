"""Linear shape constraints, their projection, and a ray-based unimodality check.

Every constraint is a halfspace ``dot(coeffs, phi) >= bound`` over one flat
parameter vector ``phi``.  The layout object maps named parameter blocks
(one per calibrator, lattice, ...) onto slices of ``phi``.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from gon.errors import EvenKeypointCount, EvenLatticeSize, InvalidRange


class ParameterLayout:
    """Ordered named blocks laid end to end in one flat vector."""

    def __init__(self):
        self._blocks = {}
        self.size = 0

    def add(self, name, size):
        if name in self._blocks:
            raise KeyError(f"duplicate parameter block {name!r}")
        self._blocks[name] = (self.size, int(size))
        self.size += int(size)
        return self._blocks[name][0]

    def index(self, name, local):
        offset, size = self._blocks[name]
        if not 0 <= local < size:
            raise IndexError(f"index {local} out of range for block {name!r} of size {size}")
        return offset + local

    def slice(self, name):
        offset, size = self._blocks[name]
        return slice(offset, offset + size)

    def block_size(self, name):
        return self._blocks[name][1]

    def names(self):
        return list(self._blocks)

    def __contains__(self, name):
        return name in self._blocks


@dataclass(frozen=True)
class LinearConstraint:
    """``sum(coeffs[i] * phi[i]) >= bound``."""

    coeffs: tuple  # sorted ((flat_index, coefficient), ...)
    bound: float = 0.0

    @classmethod
    def build(cls, coeffs, bound=0.0):
        """From a mapping or (index, coeff) pairs; merges repeats, drops zeros.

        Returns None when nothing is left.
        """
        items = coeffs.items() if isinstance(coeffs, dict) else coeffs
        merged = {}
        for i, c in items:
            merged[int(i)] = merged.get(int(i), 0.0) + float(c)
        merged = tuple(sorted((i, c) for i, c in merged.items() if c != 0.0))
        if not merged:
            return None
        return cls(merged, float(bound))

    def value(self, phi):
        return sum(c * phi[i] for i, c in self.coeffs)

    def indices(self):
        return [i for i, _ in self.coeffs]


@dataclass
class ConstraintSet:
    constraints: list
    layout: ParameterLayout
    _compiled: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        seen = set()
        unique = []
        for c in self.constraints:
            if c is None or c in seen:
                continue
            if any(i >= self.layout.size for i in c.indices()):
                raise IndexError("constraint refers to a parameter outside the layout")
            seen.add(c)
            unique.append(c)
        self.constraints = unique

    def __len__(self):
        return len(self.constraints)

    def __iter__(self):
        return iter(self.constraints)

    def __add__(self, other):
        if other.layout is not self.layout:
            raise ValueError("cannot merge constraint sets over different layouts")
        return ConstraintSet(self.constraints + other.constraints, self.layout)

    def compiled(self):
        if self._compiled is None:
            self._compiled = _CompiledConstraints(self.constraints, self.layout.size)
        return self._compiled

    def slack(self, phi):
        """``A @ phi - b`` for every constraint (negative means violated)."""
        return self.compiled().slack(np.asarray(phi, dtype=float))

    def max_violation(self, phi):
        if not self.constraints:
            return 0.0
        return float(max(0.0, -np.min(self.slack(phi))))


class _CompiledConstraints:
    """Constraints packed into index arrays and coloured into disjoint groups.

    Halfspaces within one group touch disjoint parameters, so projecting onto
    all of them at once gives the same result as projecting one after another.
    """

    def __init__(self, constraints, size):
        self.size = size
        rows, cols, vals = [], [], []
        for r, c in enumerate(constraints):
            for i, a in c.coeffs:
                rows.append(r)
                cols.append(i)
                vals.append(a)
        self.rows = np.array(rows, dtype=int)
        self.cols = np.array(cols, dtype=int)
        self.vals = np.array(vals, dtype=float)
        self.bounds = np.array([c.bound for c in constraints], dtype=float)
        self.count = len(constraints)

        # Greedy colouring by shared parameters, in constraint order.
        used = []
        colour = []
        for c in constraints:
            idx = set(c.indices())
            for g, taken in enumerate(used):
                if not taken & idx:
                    taken |= idx
                    colour.append(g)
                    break
            else:
                used.append(set(idx))
                colour.append(len(used) - 1)
        colour = np.array(colour, dtype=int)

        self.groups = []
        for g in range(len(used)):
            members = np.flatnonzero(colour == g)
            local = {r: k for k, r in enumerate(members)}
            mask = np.isin(self.rows, members)
            g_rows = np.array([local[r] for r in self.rows[mask]], dtype=int)
            g_cols = self.cols[mask]
            g_vals = self.vals[mask]
            norm2 = np.bincount(g_rows, weights=g_vals**2, minlength=members.size)
            self.groups.append((g_rows, g_cols, g_vals, self.bounds[members], norm2, members.size))

    def slack(self, phi):
        if self.count == 0:
            return np.zeros(0)
        dots = np.bincount(self.rows, weights=self.vals * phi[self.cols], minlength=self.count)
        return dots - self.bounds


@dataclass
class ProjectionInfo:
    sweeps: int
    max_violation: float
    converged: bool


def project_dykstra(phi, cs, sweeps, tol=None, until_stationary=False):
    """Dykstra's alternating projection onto the intersection of halfspaces.

    Each sweep visits every halfspace once, projecting the corrected iterate
    onto it in closed form and keeping the per-halfspace correction terms
    that make the limit the Euclidean projection rather than just some
    feasible point.

    Args:
        phi: starting parameter vector (not modified).
        cs: the ConstraintSet.
        sweeps: maximum number of full passes.
        tol: stop once the worst violation is at most ``tol``.  None runs all
            sweeps.
        until_stationary: additionally require the iterate and every
            correction term to move by at most ``tol`` over the last sweep
            before stopping.  The iterate alone can stall for a sweep while
            the corrections are still changing.

    Returns:
        ``(projected, ProjectionInfo)``.
    """
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    x = np.array(phi, dtype=float)
    comp = cs.compiled()
    if comp.count == 0:
        return x, ProjectionInfo(0, 0.0, True)
    corrections = [np.zeros(g[1].size) for g in comp.groups]
    done = 0
    converged = False
    for done in range(1, sweeps + 1):
        before = (x.copy(), [c.copy() for c in corrections]) if until_stationary else None
        for (g_rows, g_cols, g_vals, g_bounds, norm2, m), corr in zip(comp.groups, corrections):
            z = x[g_cols] + corr
            # z holds the group's support; a parameter appears at most once per group.
            dots = np.bincount(g_rows, weights=g_vals * z, minlength=m)
            step = np.maximum(g_bounds - dots, 0.0) / norm2
            z_new = z + g_vals * step[g_rows]
            corr[:] = z - z_new
            x[g_cols] = z_new
        if tol is not None:
            violation = max(0.0, -float(np.min(comp.slack(x))))
            moved = 0.0
            if before is not None:
                moved = max([float(np.max(np.abs(x - before[0])))]
                            + [float(np.max(np.abs(c - c0), initial=0.0))
                               for c, c0 in zip(corrections, before[1])])
            if violation <= tol and moved <= tol:
                converged = True
                break
    violation = max(0.0, -float(np.min(comp.slack(x))))
    return x, ProjectionInfo(done, violation, converged)


# Constraint generators.  Each returns a ConstraintSet over ``layout``.


def monotone_range_constraints(layout, block, lower, upper, margin=0.0):
    """Increasing chain of PLF values held inside ``[lower, upper]``.

    ``v[k+1] - v[k] >= margin`` for consecutive values, ``v[0] >= lower``
    and ``-v[-1] >= -upper``.
    """
    if not lower < upper:
        raise InvalidRange(f"need lower < upper, got [{lower}, {upper}]")
    if margin < 0:
        raise InvalidRange("margin must be non-negative")
    K = layout.block_size(block)
    idx = [layout.index(block, k) for k in range(K)]
    out = [LinearConstraint.build({idx[k + 1]: 1.0, idx[k]: -1.0}, margin) for k in range(K - 1)]
    out.append(LinearConstraint.build({idx[0]: 1.0}, lower))
    out.append(LinearConstraint.build({idx[-1]: -1.0}, -upper))
    return ConstraintSet(out, layout)


def unimodal_plf_constraints(layout, block, K, margin=0.0):
    """Values increase up to the middle keypoint and decrease after it."""
    if K < 3 or K % 2 == 0:
        raise EvenKeypointCount(f"a unimodal PLF needs an odd keypoint count >= 3, got {K}")
    if layout.block_size(block) != K:
        raise ValueError(f"block {block!r} holds {layout.block_size(block)} values, not {K}")
    idx = [layout.index(block, k) for k in range(K)]
    mid = (K - 1) // 2
    out = []
    for k in range(K - 1):
        if k < mid:
            out.append(LinearConstraint.build({idx[k + 1]: 1.0, idx[k]: -1.0}, margin))
        else:
            out.append(LinearConstraint.build({idx[k]: 1.0, idx[k + 1]: -1.0}, margin))
    return ConstraintSet(out, layout)


def lattice_unimodality_candidates(sizes):
    """Every (vertex, delta) pair whose two neighbours along each axis exist.

    Yields ``(v, delta, coeffs)`` with ``coeffs`` a list of
    ``(vertex, coefficient)`` terms of ``sum_d (theta[v - (1-delta_d) e_d] -
    theta[v + delta_d e_d]) * v[d]``, before merging or pruning.
    """
    sizes = np.asarray(sizes, dtype=int)
    D = sizes.size
    lower = -((sizes - 1) // 2)
    upper = (sizes - 1) - (sizes - 1) // 2
    axes = [range(lo, hi + 1) for lo, hi in zip(lower, upper)]
    for v in itertools.product(*axes):
        v = np.array(v)
        for delta in itertools.product((0, 1), repeat=D):
            delta = np.array(delta)
            up = v + delta
            down = v - (1 - delta)
            if np.any(up > upper) or np.any(down < lower):
                continue
            terms = []
            for d in range(D):
                e = np.zeros(D, dtype=int)
                e[d] = 1
                terms.append((tuple(v - (1 - delta[d]) * e), float(v[d])))
                terms.append((tuple(v + delta[d] * e), -float(v[d])))
            yield tuple(v), tuple(delta), terms


def unimodal_lattice_constraints(layout, block, sizes):
    """Necessary and sufficient unimodality constraints about the origin.

    For each vertex and each choice of cell around it, the directional
    derivative along the ray from the origin, taken at that vertex from
    inside that cell, must be non-positive.  Empty and repeated rows are
    dropped.
    """
    sizes = np.asarray(sizes, dtype=int)
    if np.any(sizes < 3) or np.any(sizes % 2 == 0):
        raise EvenLatticeSize(f"unimodal lattice sizes must be odd and >= 3, got {sizes.tolist()}")
    lower = -((sizes - 1) // 2)
    strides = np.ones(sizes.size, dtype=int)
    for d in range(sizes.size - 2, -1, -1):
        strides[d] = strides[d + 1] * sizes[d + 1]
    out = []
    for _, _, terms in lattice_unimodality_candidates(sizes):
        coeffs = [(layout.index(block, int((np.array(vert) - lower) @ strides)), c)
                  for vert, c in terms]
        out.append(LinearConstraint.build(coeffs, 0.0))
    return ConstraintSet(out, layout)


def nonnegative_constraints(layout, block):
    n = layout.block_size(block)
    return ConstraintSet([LinearConstraint.build({layout.index(block, k): 1.0}, 0.0)
                          for k in range(n)], layout)


def box_constraints(layout, block, lower, upper):
    n = layout.block_size(block)
    out = []
    for k in range(n):
        i = layout.index(block, k)
        out.append(LinearConstraint.build({i: 1.0}, lower))
        out.append(LinearConstraint.build({i: -1.0}, -upper))
    return ConstraintSet(out, layout)


def zero_crossing_constraints(layout, block):
    """First PLF value <= 0 <= last, so the PLF's image contains 0."""
    K = layout.block_size(block)
    return ConstraintSet([
        LinearConstraint.build({layout.index(block, 0): -1.0}, 0.0),
        LinearConstraint.build({layout.index(block, K - 1): 1.0}, 0.0),
    ], layout)


# Ray-based unimodality verification.


@dataclass
class RayReport:
    """Adjacent sample pairs along rays where the function went up."""

    n_rays: int
    n_steps: int
    violations: list  # (ray, step, increase)

    @property
    def ok(self):
        return not self.violations

    def max_increase(self):
        return max((inc for _, _, inc in self.violations), default=0.0)

    def to_csv(self):
        lines = ["ray,step,increase"]
        lines += [f"{r},{s},{inc!r}" for r, s, inc in self.violations]
        return "\n".join(lines) + "\n"


def _ray_exit(center, direction, lo, hi):
    with np.errstate(divide="ignore", invalid="ignore"):
        t_hi = np.where(direction > 0, (hi - center) / direction, np.inf)
        t_lo = np.where(direction < 0, (lo - center) / direction, np.inf)
    return float(np.min(np.minimum(t_hi, t_lo)))


def verify_unimodal_by_rays(u, domain, n_rays, n_steps, tol=1e-9, seed=0,
                            center=None, region=None, directions=None):
    """Samples rays out of ``center`` and reports where ``u`` increases.

    Args:
        u: vectorised function mapping an (n, D) array to n values.
        domain: ``(lower, upper)`` box containing ``center``.
        n_rays: number of random rays (ignored if ``directions`` is given).
        n_steps: evenly spaced samples per ray.
        tol: increases up to this size are not reported.
        seed: seeds the direction generator.
        center: ray origin, default the zero vector.
        region: optional ``(lower, upper)`` sub-box.  Rays then aim at random
            points of the region and are sampled only across the stretch
            where they pass through it.
        directions: explicit ray directions, shape (n, D).

    Returns:
        RayReport.
    """
    lo = np.asarray(domain[0], dtype=float)
    hi = np.asarray(domain[1], dtype=float)
    D = lo.size
    center = np.zeros(D) if center is None else np.asarray(center, dtype=float)
    rng = np.random.default_rng(seed)

    if directions is not None:
        directions = np.atleast_2d(np.asarray(directions, dtype=float))
    elif region is not None:
        r_lo, r_hi = (np.asarray(b, dtype=float) for b in region)
        directions = r_lo + rng.random((n_rays, D)) * (r_hi - r_lo) - center
    else:
        directions = rng.standard_normal((n_rays, D))
    directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)

    violations = []
    for ray, direction in enumerate(directions):
        if region is None:
            t0, t1 = 0.0, _ray_exit(center, direction, lo, hi)
        else:
            # Entry and exit of the ray through the region box (slab method).
            with np.errstate(divide="ignore", invalid="ignore"):
                a = (r_lo - center) / direction
                b = (r_hi - center) / direction
            near = np.where(direction != 0, np.minimum(a, b), -np.inf)
            far = np.where(direction != 0, np.maximum(a, b), np.inf)
            t0 = max(0.0, float(np.max(near)))
            t1 = min(float(np.min(far)), _ray_exit(center, direction, lo, hi))
            if not t1 > t0:
                continue
        ts = np.linspace(t0, t1, n_steps)
        points = np.clip(center + ts[:, None] * direction, lo, hi)
        values = np.asarray(u(points), dtype=float)
        rises = np.diff(values)
        for step in np.flatnonzero(rises > tol):
            violations.append((ray, int(step), float(rises[step])))
    return RayReport(len(directions), n_steps, violations)
