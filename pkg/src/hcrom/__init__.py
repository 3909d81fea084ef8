"""Contrast-robust reduced models for piecewise-constant diffusion on the unit square."""

from .errors import (ConfigError, HcromError, InfiniteEnergyError, LimitSpaceWarning, NumericalError,
                     ResolutionWarning, SolverError, StabilityError)
from .mesh import (FemSystem, StructuredMesh, SubdomainPartition, assemble, build_mesh, build_system,
                   framing_constants, h_minus1_norm, make_partition, subdomain_h_minus1)
from .param import (INF, Box, DyadicRectangle, ParamVector, RectangleCover, enumerate_cover,
                    level_for_degree, locate_rectangle, normalize)
from .reduced_basis import (ReducedBasis, TrainingSet, error_study, galerkin_project, h10_project,
                            make_training_set, select)
from .solver import build_merged, norms, solve_full, spd_solve
from .surrogate import build_global_space, build_local_space, build_rectangle_surrogate, evaluate_surrogate
from .inverse import build_pbdw, build_suite, estimate_params, mu, pbdw_reconstruct

__version__ = "0.1.0"
