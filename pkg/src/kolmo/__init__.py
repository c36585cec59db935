"""Constant-coefficient degenerate Kolmogorov operators.

Structure checks, Lie-group geometry, Gaussian fundamental solutions, SDE
sampling, minimum-energy control and Harnack chains.
"""

from .conditions import BoundaryVerdict, ConditionReport, check_all, fichera_classify
from .control import (
    AdmissibleCurve,
    Bounded,
    ControlGrid,
    Domain,
    L2Budget,
    Unbounded,
    attainable_contains,
    attainable_grid,
    attainable_sample,
    integrate_admissible,
    min_energy_curve,
    optimal_cost,
    reach_min_energy,
    unit_box,
)
from .errors import KolmoError
from .gramian import GramianBundle, gramian, propagator
from .group import CylinderParams, CylinderShape, compose, cylinder_contains, distance, inverse, norm_additive, norm_implicit
from .harnack import HarnackChain, HarnackParams, build_chain, harnack_bound, strong_max_report, tube_radius
from .kernel import gamma, gamma0, grad_x_gamma, mean_value_verify
from .operator import OperatorSpec, dilate, dilation_exponents, load_operator, make_operator, validate_operator
from .point import GroupPoint
from .sde import euler_maruyama, sample_exact

__version__ = "0.1.0"

__all__ = [
    "AdmissibleCurve", "BoundaryVerdict", "Bounded", "ConditionReport", "ControlGrid", "CylinderParams",
    "CylinderShape", "Domain", "GramianBundle", "GroupPoint", "HarnackChain", "HarnackParams", "KolmoError",
    "L2Budget", "OperatorSpec", "Unbounded", "attainable_contains", "attainable_grid", "attainable_sample",
    "build_chain", "check_all", "compose", "cylinder_contains", "dilate", "dilation_exponents", "distance",
    "euler_maruyama", "fichera_classify", "gamma", "gamma0", "gramian", "grad_x_gamma", "harnack_bound",
    "integrate_admissible", "inverse", "load_operator", "make_operator", "mean_value_verify", "min_energy_curve",
    "norm_additive", "norm_implicit", "optimal_cost", "propagator", "reach_min_energy", "sample_exact",
    "strong_max_report", "tube_radius", "unit_box", "validate_operator",
]
