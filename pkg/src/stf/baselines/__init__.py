"""Bayesian and observation-only baseline estimators."""

from stf.baselines.gaussian import (
    GaussianBelief,
    GaussianModel,
    LinearGaussianModel,
    kf_step,
    ekf_step,
    ukf_step,
    run_filter,
    rts_smooth,
    smooth_records,
    wiener_acceleration,
    wiener_velocity,
)
from stf.baselines.imm import ImmBank, imm_forecast, imm_smooth, imm_step, run_imm
from stf.baselines.o2 import SignState, mc_bias, o2_debias, o2_project, o2_triangulate
from stf.baselines.particle import ParticleSet, heavy_tail_weights, pf_step, systematic_resample

__all__ = [
    "GaussianBelief",
    "GaussianModel",
    "LinearGaussianModel",
    "kf_step",
    "ekf_step",
    "ukf_step",
    "run_filter",
    "rts_smooth",
    "smooth_records",
    "wiener_acceleration",
    "wiener_velocity",
    "ImmBank",
    "imm_forecast",
    "imm_smooth",
    "imm_step",
    "run_imm",
    "SignState",
    "mc_bias",
    "o2_debias",
    "o2_project",
    "o2_triangulate",
    "ParticleSet",
    "heavy_tail_weights",
    "pf_step",
    "systematic_resample",
]
