"""Mollified fractional Brownian motion at small Hurst index: kernels,
diagram reduction, signature moments, driven ODEs and KPZ noise."""

from .poset_core import BoundaryValues, Poset, PosetError, build_chain, disjoint_sum, linear_extensions_count, \
    polytope_volume, quotient_by_pairs
from .kernel_lab import KernelModel, c_candidates, constant_c, get_mollifier, k_eps, kbar_eps, kernel_profile, \
    scaling_constant
from .graph_calculus import Diagram, DiagramSum, apply_I, apply_J, classify_limit_order, detect_parallel, \
    reduce_I_infinity, reduce_J_infinity, validate_diagram
from .moment_engine import MomentSpec, limit_cumulant, limit_moment, predict_special_identities
from .fbm_path import Grid, MCConfig, iterated_integrals, mc_moment, mollify, sample_fbm
from .dynamics import builtin_system, compare_laws, solve_driven_ode, solve_limit_sde
from .kpz_noise import SpaceTimeGrid, build_chi_xi, decorrelation_and_cumulants, kpz_constants, solve_kpz
from .harness import ExperimentConfig, ResultTable, Row

__version__ = "0.1.0"
