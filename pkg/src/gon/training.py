"""Constrained least-squares fitting of GON and CGON models.

Mini-batch ADAM on mean squared error, with a few Dykstra sweeps after every
batch to pull the parameters back toward the constraint set and a full
projection at the end so the returned model satisfies every constraint.
"""

import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from gon.calibrators import PiecewiseLinearFn, init_keys_from_quantiles
from gon.constraints import project_dykstra
from gon.errors import DataError, DegenerateInput, DegenerateLabels, InvalidHyperparameters
from gon.lattice import Lattice
from gon.model import CgonModel, GonModel, build_random_projections

log = logging.getLogger(__name__)

MAXIMIZE = "maximize"
MINIMIZE = "minimize"

FINAL_PROJECTION_SWEEPS = 1000


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = None  # None means min(N, 100)
    epochs: int = 100
    dykstra_sweeps: int = 10
    margin: float = 0.0
    seed: int = 0
    final_projection_tol: float = 1e-10

    def __post_init__(self):
        for name in ("learning_rate", "epochs", "dykstra_sweeps", "final_projection_tol"):
            if not getattr(self, name) > 0:
                raise InvalidHyperparameters(f"{name} must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidHyperparameters("batch_size must be positive")
        if self.margin < 0:
            raise InvalidHyperparameters("margin must be non-negative")


@dataclass
class Hyperparams:
    """Model shape.

    ``lattice_dim`` defaults to ``min(3, D)`` and ``num_lattices`` to ``D``,
    i.e. D lattices each fusing three inputs.
    """

    keypoints: int = 10
    lattice_size: int = 3
    lattice_dim: int = None
    num_lattices: int = None
    cond_keypoints: int = None

    def resolved(self, D):
        if self.keypoints < 2:
            raise InvalidHyperparameters("keypoints must be >= 2")
        if self.lattice_size < 3 or self.lattice_size % 2 == 0:
            raise InvalidHyperparameters(
                f"lattice_size must be odd and >= 3, got {self.lattice_size}")
        Q = min(3, D) if self.lattice_dim is None else self.lattice_dim
        T = D if self.num_lattices is None else self.num_lattices
        if not 1 <= Q <= D:
            raise InvalidHyperparameters(f"lattice_dim {Q} must be in 1..{D}")
        if T < 1 or T * Q < D:
            raise InvalidHyperparameters(f"{T} lattices of {Q} inputs cannot cover {D} inputs")
        ck = self.keypoints if self.cond_keypoints is None else self.cond_keypoints
        if ck < 2:
            raise InvalidHyperparameters("cond_keypoints must be >= 2")
        return Hyperparams(self.keypoints, self.lattice_size, Q, T, ck)


def split_config(doc):
    """Splits a flat JSON config into (TrainConfig, Hyperparams, leftovers)."""
    train_keys = {f.name for f in fields(TrainConfig)}
    hp_keys = {f.name for f in fields(Hyperparams)}
    unknown = set(doc) - train_keys - hp_keys - {"feature_domains"}
    if unknown:
        raise InvalidHyperparameters(f"unknown config keys: {sorted(unknown)}")
    try:
        cfg = TrainConfig(**{k: v for k, v in doc.items() if k in train_keys})
        hp = Hyperparams(**{k: v for k, v in doc.items() if k in hp_keys})
    except TypeError as e:
        raise InvalidHyperparameters(str(e)) from e
    return cfg, hp, {k: v for k, v in doc.items() if k == "feature_domains"}


# Label scaling.


@dataclass
class LabelScaler:
    y_min: float
    y_max: float
    direction: str = MAXIMIZE

    def scale(self, y):
        s = (np.asarray(y, dtype=float) - self.y_min) / (self.y_max - self.y_min)
        return 1.0 - s if self.direction == MINIMIZE else s

    def unscale(self, s):
        s = np.asarray(s, dtype=float)
        if self.direction == MINIMIZE:
            s = 1.0 - s
        return self.y_min + s * (self.y_max - self.y_min)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


def scale_labels(y, direction=MAXIMIZE):
    """Affine map of labels onto [0, 1], flipped when minimising."""
    if direction not in (MAXIMIZE, MINIMIZE):
        raise ValueError(f"direction must be {MAXIMIZE!r} or {MINIMIZE!r}")
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise DataError("no labels")
    lo, hi = float(np.min(y)), float(np.max(y))
    if not hi > lo:
        raise DegenerateLabels("all labels are equal; nothing to fit")
    scaler = LabelScaler(lo, hi, direction)
    return scaler.scale(y), scaler


# Initialisation.


def _column_domains(A, domains):
    if domains is not None:
        return [tuple(map(float, d)) for d in domains]
    out = []
    for j in range(A.shape[1]):
        lo, hi = float(np.min(A[:, j])), float(np.max(A[:, j]))
        if not hi > lo:
            raise DegenerateInput(f"column {j} is constant; its domain has zero width")
        out.append((lo, hi))
    return out


def tent_params(lat):
    """Feasible starting lattice peaked at the origin: ``-sum|v| / D``."""
    return -np.abs(lat.vertices()).sum(axis=1) / lat.dims


def init_model(X, hyperparams, seed, Z=None, domains=None, cond_domains=None, margin=0.0,
               features=None, cond_features=None):
    """A feasible starting model for data ``X`` (and conditional inputs ``Z``).

    Calibrator keys come from the column domains and quantiles; calibrator
    values are evenly spaced over the lattice box; lattices start as tents;
    ``alpha0 = 0.5``, ``alpha_t = 1/T`` and every conditional PLF is zero.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    D = X.shape[1]
    hp = hyperparams.resolved(D)
    V = (hp.lattice_size - 1) // 2
    K = hp.keypoints
    lo_v, hi_v = -V + margin * K, V - margin * K
    if not hi_v > lo_v:
        raise InvalidHyperparameters(f"margin {margin} leaves no room for {K} keypoints")

    calibrators = []
    for d, (lo, hi) in enumerate(_column_domains(X, domains)):
        keys = init_keys_from_quantiles(X[:, d], K, (lo, hi))
        calibrators.append(PiecewiseLinearFn(keys, np.linspace(lo_v, hi_v, K)))

    projections = build_random_projections(D, hp.lattice_dim, hp.num_lattices, seed)
    lattices = []
    for _ in projections:
        lat = Lattice([hp.lattice_size] * hp.lattice_dim)
        lat.params = tent_params(lat)
        lattices.append(lat)
    common = dict(alpha0=0.5, alphas=np.full(len(lattices), 1.0 / len(lattices)),
                  margin=margin, features=features)
    if Z is None:
        return GonModel(calibrators, lattices, projections, **common)

    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    r = []
    for i, (lo, hi) in enumerate(_column_domains(Z, cond_domains)):
        keys = init_keys_from_quantiles(Z[:, i], hp.cond_keypoints, (lo, hi))
        r.append([PiecewiseLinearFn(keys, np.zeros(keys.size)) for _ in range(D)])
    return CgonModel(calibrators, lattices, projections, r, cond_features=cond_features, **common)


# Optimiser.


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    step: int = 0
    m: np.ndarray = None
    v: np.ndarray = None


def adam_step(state, params, grads, lr):
    """One bias-corrected ADAM update.  Mutates ``state``; returns new params."""
    grads = np.asarray(grads, dtype=float)
    if state.m is None:
        state.m = np.zeros_like(grads)
        state.v = np.zeros_like(grads)
    state.step += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1 - state.beta2) * grads**2
    m_hat = state.m / (1 - state.beta1**state.step)
    v_hat = state.v / (1 - state.beta2**state.step)
    return np.asarray(params, dtype=float) - lr * m_hat / (np.sqrt(v_hat) + state.eps)


# Fitting.


@dataclass
class TrainingReport:
    initial_loss: float
    epoch_losses: list
    final_loss: float
    train_rmse: float
    max_violation: float
    projection_sweeps: int
    num_constraints: int
    seconds: float
    maximizer: list = field(default=None)

    def to_dict(self):
        return asdict(self)


def batch_loss_and_grad(model, X, y, Z=None):
    """Mean squared error over a batch and its gradient over the flat parameters."""
    resid = model.predict(X, Z) - y
    loss = float(np.mean(resid**2))
    grad = model.backward(X, 2.0 * resid / resid.size, Z)
    return loss, grad


def _check_data(X, y, Z):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise DataError(f"{X.shape[0]} rows of features but {y.size} labels")
    if y.size < 2:
        raise DataError("need at least two samples")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("features and labels must be finite")
    if Z is not None:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[0] != y.size:
            raise DataError("conditional inputs and labels differ in row count")
        if not np.all(np.isfinite(Z)):
            raise DataError("conditional inputs must be finite")
    return X, y, Z


def fit(X, y, config=None, hyperparams=None, Z=None, direction=MAXIMIZE, domains=None,
        cond_domains=None, features=None, cond_features=None, label=None):
    """Fits a GON (or a CGON when ``Z`` is given) to ``(X, y)``.

    Labels are scaled to [0, 1] first (flipped for ``direction="minimize"``),
    so the model's maximizer predicts the label optimum in either case.

    Returns:
        ``(model, TrainingReport)``.  The model satisfies every shape
        constraint to within ``config.final_projection_tol``.
    """
    config = config or TrainConfig()
    hyperparams = hyperparams or Hyperparams()
    start = time.perf_counter()
    X, y, Z = _check_data(X, y, Z)
    y_scaled, scaler = scale_labels(y, direction)
    model = init_model(X, hyperparams, config.seed, Z=Z, domains=domains,
                       cond_domains=cond_domains, margin=config.margin, features=features,
                       cond_features=cond_features)
    model.label = label
    model.label_scaler = scaler.to_dict()
    cs = model.constraints()

    def full_loss():
        return float(np.mean((model.predict(X, Z) - y_scaled) ** 2))

    n = y.size
    batch = config.batch_size or min(n, 100)
    rng = np.random.default_rng(config.seed)
    adam = AdamState()
    initial = full_loss()
    losses = []
    phi = model.get_params()
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for s in range(0, n, batch):
            rows = order[s:s + batch]
            _, grad = batch_loss_and_grad(model, X[rows], y_scaled[rows],
                                          None if Z is None else Z[rows])
            phi = adam_step(adam, phi, grad, config.learning_rate)
            phi, _ = project_dykstra(phi, cs, config.dykstra_sweeps)
            model.set_params(phi)
        losses.append(full_loss())
        log.debug("epoch %d loss %.6g", epoch, losses[-1])

    phi, info = project_dykstra(phi, cs, FINAL_PROJECTION_SWEEPS, tol=config.final_projection_tol)
    sweeps = info.sweeps
    while info.max_violation > config.final_projection_tol and sweeps < 100 * FINAL_PROJECTION_SWEEPS:
        phi, info = project_dykstra(phi, cs, FINAL_PROJECTION_SWEEPS,
                                    tol=config.final_projection_tol)
        sweeps += info.sweeps
    if info.max_violation > config.final_projection_tol:
        raise RuntimeError(f"final projection left violation {info.max_violation:.3g}")
    model.set_params(phi)

    pred = scaler.unscale(model.predict(X, Z))
    report = TrainingReport(
        initial_loss=initial,
        epoch_losses=losses,
        final_loss=full_loss(),
        train_rmse=float(np.sqrt(np.mean((pred - y) ** 2))),
        max_violation=cs.max_violation(model.get_params()),
        projection_sweeps=sweeps,
        num_constraints=len(cs),
        seconds=time.perf_counter() - start,
    )
    if model.kind == "gon":
        report.maximizer = model.maximizer().point.tolist()
    return model, report
