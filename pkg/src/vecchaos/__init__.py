"""Numerics for vector-valued Gaussian stationary fields and their Wiener chaos."""
from .errors import (ConsistencyError, GridMismatch, NonEvenMeasure, NotPSD, NotRealKernel,
                     SymmetryViolation, VecChaosError)
from .grid import Box, RegularSystem, build_symmetric_grid, refine, unit_torus
from .spectral import (MatrixSpectralMeasure, correlation, from_density, moderate_increase_check,
                       random_measure, rescale, test_integral, trace_measure, validate)
from .sampler import SpectralSample, integrate_one_fold, sample, synthesize_field
from .chaos import (SimpleKernel, analytic_covariance, evaluate, evaluate_tensor, permute_kernel,
                    random_kernel, second_moment_bound, tensor_kernel)
from .diagram import (Diagram, contract, corollary_expansion, enumerate_diagrams,
                      product_expansion)
from .wick import (GaussianExpression, gaussian_moment, hermite, ito_both_sides, shift_kernel,
                   shift_sample, wick_expand, wick_project, wick_recursion_check)
from .limits import LimitExperiment, LongMemoryModel, WickSpec, convergence_report
from .io import data_path, load_experiment, load_measure, save_measure

__version__ = "0.1.0"
