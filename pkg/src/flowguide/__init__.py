"""Classifier-free guidance for rectified flows over Gaussian-mixture data.

Velocities are exact (joint-Gaussian conditioning per mixture component), so
ratios, guidance schedules and divergence bounds can be checked without any
learned model.
"""
from ._kernels import BACKEND
from .errors import FlowGuideError
from .guidance import (
    Constant,
    FitResult,
    GuidanceSchedule,
    Linear,
    Piecewise,
    Raag,
    Sigmoid,
    Table,
    alternative_schedules,
    cfg_combine,
    fit_exponential,
    schedule_from_dict,
)
from .metrics import (
    BoundConstants,
    EnergyScorer,
    QualityScore,
    energy_distance,
    estimate_bound_constants,
    quality,
)
from .mixture import (
    UNDEFINED_RATIO,
    ClassSpec,
    MixtureSpec,
    VelocityPair,
    conditional_velocity,
    initial_ratio_closed_form,
    mc_velocity,
    sample_data,
    unconditional_velocity,
    velocity_pair,
)
from .presets import PRESETS, preset
from .sampler import Integrator, Trajectory, integrate, sample, sample_batch

__version__ = "0.1.0"
