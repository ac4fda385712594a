"""Differentiable annealed importance sampling with resampling.

A numpy-based reverse-mode tape (``dsmcs.tape``) drives a sequential Monte
Carlo sampler whose annealing schedule and step sizes are trained by gradient
ascent on a per-step evidence lower bound.  Resampling comes in detached and
gapped straight-through variants, optionally behind an ESS-driven Bernoulli
gate.
"""

from . import tape
from .config import DEFAULT_TARGET, RunConfig
from .kernels import (hamiltonian_log_incremental_weight, hamiltonian_transition,
                      langevin_log_incremental_weight, langevin_step,
                      langevin_transition, leapfrog, refresh_momentum)
from .resampling import (SCHEMES, apply_resampling, bernoulli_gate_prob,
                         categorical_resample, ess, ess_from_log_weights,
                         gst_binary, gst_resample)
from .sampler import (BoundEstimate, NonFiniteBoundError, ParticleSystem,
                      RandomPlan, SamplerParams, elbo_batch, run_chain,
                      run_system)
from .targets import (AnnealedDensity, GaussianInitial, GaussianMixtureTarget,
                      PointStats, build_schedule, target_from_config)
from .training import (EpochRecord, TrainState, TrainingDiverged, init_state,
                       load_checkpoint, save_checkpoint, train)
from .verify import gradient_audit, theorem1_check, unbiasedness_check, verify_all

__version__ = "0.1.0"

__all__ = [
    "tape",
    "RunConfig", "DEFAULT_TARGET",
    "GaussianInitial", "GaussianMixtureTarget", "AnnealedDensity",
    "PointStats", "build_schedule", "target_from_config",
    "langevin_step", "langevin_log_incremental_weight", "langevin_transition",
    "leapfrog", "refresh_momentum", "hamiltonian_log_incremental_weight",
    "hamiltonian_transition",
    "SCHEMES", "ess", "ess_from_log_weights", "categorical_resample",
    "bernoulli_gate_prob", "gst_resample", "gst_binary", "apply_resampling",
    "ParticleSystem", "SamplerParams", "RandomPlan", "BoundEstimate",
    "NonFiniteBoundError", "run_system", "run_chain", "elbo_batch",
    "TrainState", "TrainingDiverged", "EpochRecord", "init_state", "train",
    "save_checkpoint", "load_checkpoint",
    "theorem1_check", "gradient_audit", "unbiasedness_check", "verify_all",
]
