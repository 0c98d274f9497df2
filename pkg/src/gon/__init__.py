"""Generalized unimodal optimization networks (GON) with a closed-form maximizer.

A GON composes per-input monotone calibrators with an ensemble of unimodal
lattices.  Its maximizer is read off the calibrators directly, so fitting
noisy samples of a response surface yields an optimum estimate without any
search.
"""

__version__ = "0.1.0"

from gon.calibrators import PiecewiseLinearFn, init_keys_from_quantiles, plf_eval, plf_invert_at
from gon.constraints import ConstraintSet, LinearConstraint, project_dykstra, verify_unimodal_by_rays
from gon.lattice import Lattice, lattice_eval
from gon.model import (CgonModel, GonModel, cgon_eval, cgon_maximizer, gon_eval, gon_maximizer,
                       load_model, save_model)
from gon.training import Hyperparams, TrainConfig, fit

__all__ = [
    "CgonModel", "ConstraintSet", "GonModel", "Hyperparams", "Lattice", "LinearConstraint",
    "PiecewiseLinearFn", "TrainConfig", "cgon_eval", "cgon_maximizer", "fit", "gon_eval",
    "gon_maximizer", "init_keys_from_quantiles", "lattice_eval", "load_model", "plf_eval",
    "plf_invert_at", "project_dykstra", "save_model", "verify_unimodal_by_rays",
]
