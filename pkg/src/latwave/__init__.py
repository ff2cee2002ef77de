"""Traveling fronts of delayed nonlocal lattice equations

    u_t(x, t) = d [u(x+1) - 2u(x) + u(x-1)] + f(u(x, t), (h*u)(x, t - tau)).

Minimal speeds and tail rates (:mod:`dispersion`), front profiles
(:mod:`wavefront`), time integration (:mod:`lattice`), perturbation decay
experiments (:mod:`stability`) and the linear tools behind the decay
estimates (:mod:`greenlab`).
"""
__version__ = "0.1.0"

from . import _backend
from .dispersion import (Problem, analyze, find_cstar, find_decay_rate, find_lambda_roots,
                         find_upsilon, solve_rate_equation)
from .kernels import DiracKernel, GaussianKernel, LatticeSumKernel, TabulatedKernel, make_kernel
from .lattice import Grid, integrate
from .models import age_structured, custom, host_vector, make_builtin, nicholson
from .stability import make_perturbation, run_stability_experiment
from .wavefront import relax_profile

BACKEND = _backend.NAME

__all__ = [
    "__version__", "BACKEND", "Problem", "analyze", "find_cstar", "find_decay_rate",
    "find_lambda_roots", "find_upsilon", "solve_rate_equation", "DiracKernel", "GaussianKernel",
    "LatticeSumKernel", "TabulatedKernel", "make_kernel", "Grid", "integrate", "age_structured",
    "custom", "host_vector", "make_builtin", "nicholson", "make_perturbation",
    "run_stability_experiment", "relax_profile",
]
