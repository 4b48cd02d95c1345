"""Long-range voter model on Z^d: jump kernels, lattice Green functions,
dual coalescing walks, forward dynamics and occupation-time limit laws."""
from .errors import ConfigError, DivergentError, DomainError, GridTooSmall, GuardViolation, RecurrentError
from .kernel import (ESCAPE_COORD, JumpSampler, KernelParams, LatticeVector, TorusKernel, kernel_mass,
                     kernel_weight, sample_jump, sample_jumps, torus_kernel)
from .spectral import (LCLTResult, SpectralModel, StableDensity, char_fn_walk, lambda_branch, lclt_error,
                       scaling_h, scaling_Lambda, stable_char, stable_density, stable_density_origin,
                       symbol_phi, transient_by_integral, transition_table)
from .green import (GreenModel, capacity_constant, double_tail, escape_probability, green_function,
                    green_tail, capacity_identity, occupation_autocov, occupation_variance, resolvent,
                    resolvent_norm_sq, return_probability, stationary_covariance)
from .coalesce import (CoalescingSystem, Estimate, dual_cardinalities, dual_moment, estimate_capacity,
                       estimate_escape, origin_lineages, sample_stationary, simulate_coalescing,
                       simulate_walk, stationary_batch)
from .voter import (Explicit, FieldObservable, OccupationConfig, Product, Stationary, VoterState,
                    centered_occupation_paths, field_second_moment, field_second_moment_predictor,
                    finite_size_guard, forward_moment, gaussian_bump, init_state, occupation_time, run,
                    stationary_autocov)
from .limits import (FbmOracle, LimitLaw, compare, fbm_cov, fbm_sample, hurst_estimate, limit_law,
                     scaling_regression, theoretical_cov)
from .streams import ReplicaStreams, seed_streams

__version__ = "0.1.0"
