"""Rosenbrock/Griewank response-surface benchmark.

Each cell draws a noisy training set on ``[-2, 2]**D``, fits a GON to
minimise the label, and scores the predicted minimizer on the noiseless
function.  The sample-best baseline (the training input with the lowest
noisy label) is scored on the same data.
"""

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from gon.errors import ArityTooSmall, GonError
from gon.training import MAXIMIZE, MINIMIZE, Hyperparams, TrainConfig, fit

BOX = (-2.0, 2.0)
REPORT_COLUMNS = ["fn", "D", "N", "sigma", "seed", "g_at_xhat", "wall_ms"]


def rosenbrock(x):
    """Sum of ``100 (x[i+1] - x[i]**2)**2 + (1 - x[i])**2``; rows if 2-D."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 2:
        raise ArityTooSmall("rosenbrock needs at least two inputs")
    head, tail = x[..., :-1], x[..., 1:]
    return np.sum(100.0 * (tail - head**2) ** 2 + (1.0 - head) ** 2, axis=-1)


def griewank(x):
    """Griewank function shifted so its minimum is at the all-ones point."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 1:
        raise ArityTooSmall("griewank needs at least one input")
    s = x - 1.0
    i = np.arange(1, x.shape[-1] + 1)
    return 1.0 + np.sum(s**2, axis=-1) / 4000.0 - np.prod(np.cos(s / np.sqrt(i)), axis=-1)


FUNCTIONS = {"rosenbrock": rosenbrock, "griewank": griewank}


@dataclass(frozen=True)
class BenchFunction:
    name: str
    dims: int

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise ValueError(f"unknown benchmark function {self.name!r}")
        if self.dims < (2 if self.name == "rosenbrock" else 1):
            raise ArityTooSmall(f"{self.name} needs more than {self.dims} inputs")

    def __call__(self, x):
        return FUNCTIONS[self.name](x)


@dataclass(frozen=True)
class SimConfig:
    """One benchmark cell.  ``conditional`` splits off the last D/4 inputs as z."""

    function: str
    D: int
    N: int
    sigma: float
    seed: int
    conditional: bool = False

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.conditional and (self.D % 4 or self.D < 4):
            raise ValueError("the conditional benchmark needs D divisible by 4")

    @property
    def fn(self):
        return BenchFunction(self.function, self.D)

    @property
    def cond_dims(self):
        return self.D // 4 if self.conditional else 0


def noisy_labels(g, sigma, rng):
    """``g + eps`` with ``eps`` normal of variance ``sigma * g``, floored at zero."""
    g = np.asarray(g, dtype=float)
    return g + rng.standard_normal(g.shape) * np.sqrt(np.maximum(sigma * g, 0.0))


def gen_dataset(cfg):
    """Uniform inputs on the box and noisy labels from ``noisy_labels``."""
    rng = np.random.default_rng(cfg.seed)
    X = rng.uniform(BOX[0], BOX[1], size=(cfg.N, cfg.D))
    return X, noisy_labels(cfg.fn(X), cfg.sigma, rng)


def sample_best(X, y, direction=MINIMIZE):
    """Training row with the best label (first on ties)."""
    y = np.asarray(y, dtype=float)
    i = int(np.argmin(y) if direction == MINIMIZE else np.argmax(y))
    return np.asarray(X)[i]


def dense_argmax_oracle(h, domain, n_samples, seed=0, chunk=200_000):
    """Best of ``n_samples`` uniform draws from the box under vectorised ``h``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    lo = np.asarray(domain[0], dtype=float)
    hi = np.asarray(domain[1], dtype=float)
    rng = np.random.default_rng(seed)
    best_x, best_v = None, -np.inf
    remaining = n_samples
    while remaining:
        m = min(chunk, remaining)
        pts = lo + rng.random((m, lo.size)) * (hi - lo)
        vals = np.asarray(h(pts), dtype=float)
        i = int(np.argmax(vals))
        if best_x is None or vals[i] > best_v:
            best_x, best_v = pts[i], vals[i]
        remaining -= m
    return best_x


@dataclass
class BenchRecord:
    fn: str
    D: int
    N: int
    sigma: float
    seed: int
    g_at_xhat: float
    wall_ms: float
    g_sample_best: float = math.nan
    error: str = None

    @property
    def ok(self):
        return self.error is None


@dataclass
class SliceStats:
    count: int
    mean: float
    half_width: float


def slice_stats(values):
    """Mean and normal-approximation 95% half-width."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return SliceStats(0, math.nan, math.nan)
    half = 0.0 if v.size < 2 else 1.96 * float(np.std(v, ddof=1)) / math.sqrt(v.size)
    return SliceStats(int(v.size), float(np.mean(v)), half)


@dataclass
class BenchReport:
    records: list = field(default_factory=list)

    @property
    def runtime_ms(self):
        return sum(r.wall_ms for r in self.records)

    def values(self, **where):
        return [r.g_at_xhat for r in self.records
                if r.ok and all(getattr(r, k) == v for k, v in where.items())]

    def slices(self):
        """Statistics over successful runs, grouped by each grid axis."""
        out = {}
        for axis in ("fn", "D", "N", "sigma"):
            for key in sorted({getattr(r, axis) for r in self.records}, key=str):
                out[(axis, key)] = slice_stats(self.values(**{axis: key}))
        return out

    def to_csv(self, timing=True, baseline=False):
        """Per-run CSV.  ``timing=False`` leaves ``wall_ms`` blank for byte-stable output."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS + (["g_sample_best"] if baseline else []))
        for r in self.records:
            row = [r.fn, r.D, r.N, repr(r.sigma), r.seed,
                   repr(r.g_at_xhat) if r.ok else "",
                   f"{r.wall_ms:.3f}" if timing else ""]
            if baseline:
                row.append(repr(r.g_sample_best))
            w.writerow(row)
        return buf.getvalue()

    def slices_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["axis", "value", "count", "mean", "half_width"])
        for (axis, key), s in self.slices().items():
            w.writerow([axis, key, s.count, repr(s.mean), repr(s.half_width)])
        return buf.getvalue()


def run_cell(cfg, hyperparams=None, train_config=None):
    """Generate data, fit, and score one benchmark cell."""
    start = time.perf_counter()
    fn = cfg.fn
    X, y = gen_dataset(cfg)
    train_config = train_config or TrainConfig()
    train_config = TrainConfig(**{**train_config.__dict__, "seed": cfg.seed})
    record = BenchRecord(cfg.function, cfg.D, cfg.N, cfg.sigma, cfg.seed, math.nan, 0.0)
    try:
        if cfg.conditional:
            Dx = cfg.D - cfg.cond_dims
            model, _ = fit(X[:, :Dx], y, train_config, hyperparams, Z=X[:, Dx:],
                           direction=MINIMIZE, domains=[BOX] * Dx,
                           cond_domains=[BOX] * cfg.cond_dims)
            xhat = model.maximizer(np.zeros(cfg.cond_dims)).point
            record.g_at_xhat = float(fn(np.concatenate([xhat, np.zeros(cfg.cond_dims)])))
        else:
            model, _ = fit(X, y, train_config, hyperparams, direction=MINIMIZE,
                           domains=[BOX] * cfg.D)
            record.g_at_xhat = float(fn(model.maximizer().point))
            record.g_sample_best = float(fn(sample_best(X, y, MINIMIZE)))
    except (GonError, RuntimeError) as e:
        record.error = f"{type(e).__name__}: {e}"
    record.wall_ms = 1000.0 * (time.perf_counter() - start)
    return record


def run_benchmark(grid, hyperparams=None, train_config=None, progress=None):
    """Runs every cell in order and collects a BenchReport.

    Cells that fail are kept with their error; slice statistics skip them.
    """
    if not grid:
        raise ValueError("empty benchmark grid")
    report = BenchReport()
    for cfg in grid:
        report.records.append(run_cell(cfg, hyperparams, train_config))
        if progress:
            progress(report.records[-1])
    return report


def make_grid(function, dims, sizes, sigmas, seeds, conditional=False):
    """Cartesian product of the grid axes, seeds innermost."""
    return [SimConfig(function, D, N, float(s), seed, conditional)
            for D in dims for N in sizes for s in sigmas for seed in seeds]


__all__ = [
    "BOX", "MAXIMIZE", "MINIMIZE", "BenchFunction", "BenchRecord", "BenchReport", "Hyperparams",
    "SimConfig", "SliceStats", "dense_argmax_oracle", "gen_dataset", "griewank", "make_grid",
    "noisy_labels", "rosenbrock", "run_benchmark", "run_cell", "sample_best", "slice_stats",
]
