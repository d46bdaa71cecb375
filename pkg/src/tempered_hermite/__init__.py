"""Tempered Hermite processes: special functions, quadrature, kernels,
moments and cumulants, simulation, and nonparametric regression."""
from .kernels import FilterParams, HermiteParams, params_from_H
from .moments import (CheckReport, ConvergenceError, cov_filtered_hermite, cov_hermite, cumulant_I2_discrete,
                      cumulant_limit_rosenblatt, cumulant_rosenblatt, cumulant_filtered_rosenblatt)
from .quadrature import QuadratureSpec, integrate_1d, integrate_2d_diag_singular, integrate_md
from .specfun import bessel_k, bessel_k_smallarg, gamma, hermite_poly

__version__ = "0.1.0"
