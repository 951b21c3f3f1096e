"""Fractional reaction-diffusion depth restoration."""

from .contconv import (
    DiracKernel,
    PatchCoefficients,
    approx_patch_integral,
    box_kernel,
    continuous_convolve,
    dirac_convolve,
    is_compact,
    kernel_to_impulses,
    patch_coefficients,
    repeated_integral,
    tent_kernel,
)
from .diffusion import ConductanceSpec, conductance, diffusion_term, estimate_kappa, reaction_term
from .field import DepthField, Metrics, compute_metrics, directional_differences, pad_neumann
from .fractional import (
    FractionalState,
    InstabilityError,
    caputo_weights,
    fractional_step,
    gamma,
    memory_correction,
    stability_limit,
    stable_tau,
)
from .pipeline import (
    AdaptiveAlpha,
    InitBuilder,
    RestorationConfig,
    RestorationTrace,
    alpha_for_iteration,
    build_initial_state,
    run_restoration,
)
from .synth import (
    DegradationSpec,
    SceneSpec,
    degrade,
    generate_scene,
    make_rng,
    run_benchmark,
    standard_normal,
)

__version__ = "0.1.0"
