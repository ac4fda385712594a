"""The annealed particle transport forward pass and its stochastic lower bound.

One chain: draw N particles from the initial density, run K kernel
transitions with importance reweighting, optionally resample after each
step, and sum the per-step log terms

    L = sum_k log sum_i alpha_k^i w~_k^i,

where alpha_k^i are the normalized weights *entering* step k (exactly 1/N
right after a resampling reset).  Replicates are vectorized: positions are a
(batch, N, dim) array on a single tape, which is numerically identical to
independent chains averaged in fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels, resampling, tape as T
from .rng import substream
from .targets import AnnealedDensity, PointStats

__all__ = [
    "ParticleSystem",
    "SamplerParams",
    "RandomPlan",
    "BoundEstimate",
    "NonFiniteBoundError",
    "run_system",
    "run_chain",
    "elbo_batch",
]


class NonFiniteBoundError(RuntimeError):
    def __init__(self, step, particle):
        super().__init__(f"non-finite bound term at step {step}, particle {particle}")
        self.step = step
        self.particle = particle


@dataclass
class ParticleSystem:
    """Batched particle state between transitions."""

    positions: T.Var                 # (..., N, n)
    log_weights: T.Var               # (..., N), normalized
    momenta: Optional[T.Var] = None  # (..., N, n), Hamiltonian only
    stats: Optional[PointStats] = None
    step: int = 0


@dataclass
class SamplerParams:
    """Tape variables the chain consumes; built per-evaluation from TrainState."""

    annealed: AnnealedDensity
    betas: T.Var                     # (K+1,), beta_0 = 0 .. beta_K = 1
    deltas: T.Var                    # (K,), positive step sizes
    rho: Optional[T.Var] = None      # damping in (0, 1), Hamiltonian only
    mass: Optional[T.Var] = None     # mass-matrix scale c > 0

    @classmethod
    def constants(cls, annealed, betas, deltas, rho=None, mass=None):
        """Untrainable parameters for tests and plain evaluation."""
        return cls(annealed=annealed,
                   betas=T.asvar(betas), deltas=T.asvar(deltas),
                   rho=None if rho is None else T.asvar(rho),
                   mass=None if mass is None else T.asvar(mass))


@dataclass
class RandomPlan:
    """All randomness of one evaluation, drawn up front so it can be frozen.

    ``resample_u`` and ``gate_u`` hold uniforms; fixing ``indices``/``gates``
    replays recorded discrete outcomes exactly (for finite-difference audits).
    """

    init_noise: np.ndarray                     # (B, N, n)
    step_noise: list                           # K x (B, N, n)
    mom_init_noise: Optional[np.ndarray] = None
    mom_noise: Optional[list] = None           # K x (B, N, n)
    resample_u: Optional[list] = None          # K x (B, N)
    gate_u: Optional[list] = None              # K x (B,)
    indices: Optional[list] = None             # frozen categorical draws
    gates: Optional[list] = None               # frozen gate bits

    @classmethod
    def draw(cls, cfg, batch, rng=None, seed_path=None):
        """Draw from a Generator, or from counter-based substreams when a
        ``seed_path`` tuple is given (stable under batch-size changes)."""
        k, n, d = cfg.num_steps, cfg.num_particles, cfg.dim
        if seed_path is not None:
            stream = lambda *p: substream(cfg.seed, *seed_path, *p)
        else:
            stream = lambda *p: rng
        hamiltonian = cfg.kernel == "hamiltonian"
        return cls(
            init_noise=stream("init").standard_normal((batch, n, d)),
            step_noise=[stream("noise", i).standard_normal((batch, n, d))
                        for i in range(k)],
            mom_init_noise=(stream("mom-init").standard_normal((batch, n, d))
                            if hamiltonian else None),
            mom_noise=([stream("mom-noise", i).standard_normal((batch, n, d))
                        for i in range(k)] if hamiltonian else None),
            resample_u=[stream("resample", i).random((batch, n)) for i in range(k)],
            gate_u=[stream("gate", i).random((batch,)) for i in range(k)],
        )

    def freeze_from(self, record):
        """Return a copy that replays the discrete outcomes in ``record``."""
        return RandomPlan(self.init_noise, self.step_noise, self.mom_init_noise,
                          self.mom_noise, self.resample_u, self.gate_u,
                          indices=record["indices"], gates=record["gates"])


@dataclass
class BoundEstimate:
    """The bound, its per-step decomposition, and per-step diagnostics."""

    elbo: T.Var                      # scalar, mean over replicates
    per_replicate: T.Var             # (B,)
    step_terms: list                 # K Vars of shape (B,)
    step_ess: np.ndarray             # (K, B)
    resample_flags: np.ndarray       # (K, B) 0/1
    record: dict = field(default_factory=dict)  # drawn indices/gates

    @property
    def value(self):
        return float(self.elbo.value)


def _resample(cfg, system, plan, k, record, probe=None):
    scheme = cfg.resampling
    n = cfg.num_particles
    if scheme == "none" or n == 1:
        record["indices"].append(None)
        record["gates"].append(None)
        return system, np.zeros(system.log_weights.value.shape[:-1])

    logw = system.log_weights
    if probe is not None:
        # zero-valued additive probe: d(bound)/d(probe) is exactly the
        # gradient entering the resampling logits
        logw = logw + probe
    probs = np.exp(logw.value)
    frozen_idx = plan.indices[k] if plan.indices is not None else None
    frozen_gate = plan.gates[k] if plan.gates is not None else None

    if scheme in ("cat", "bern-cat"):
        idx = frozen_idx
        if idx is None:
            idx = resampling.categorical_resample(probs, u=plan.resample_u[k])
        if scheme == "bern-cat":
            gate = frozen_gate
            if gate is None:
                p = resampling.bernoulli_gate_prob(T.stop_gradient(logw), n).value
                gate = (plan.gate_u[k] < p).astype(np.int64)
            idx = resampling.gated_indices(idx, gate, n)
            outcome = resampling.ResamplingOutcome(indices=idx, gate=gate)
            flags = gate.astype(np.float64)
        else:
            outcome = resampling.ResamplingOutcome(indices=idx)
            flags = np.ones(idx.shape[:-1])
        record["indices"].append(idx)
        record["gates"].append(outcome.gate)
        return resampling.apply_resampling(system, outcome), flags

    # straight-through schemes
    idx, matrix = resampling.gst_resample(logw, cfg.tau, cfg.gap,
                                          u=plan.resample_u[k], indices=frozen_idx)
    if scheme == "bern-gst":
        p = resampling.bernoulli_gate_prob(logw, n)
        gate, gate_st = resampling.gst_binary(p, cfg.tau, cfg.gap,
                                              u=plan.gate_u[k], b=frozen_gate)
        outcome = resampling.ResamplingOutcome(indices=idx, gate=gate,
                                               matrix=matrix, gate_st=gate_st)
        flags = gate.astype(np.float64)
    else:
        outcome = resampling.ResamplingOutcome(indices=idx, matrix=matrix)
        flags = np.ones(idx.shape[:-1])
    record["indices"].append(idx)
    record["gates"].append(outcome.gate)
    return resampling.apply_resampling(system, outcome), flags


def run_system(cfg, params, plan, logit_probe=None):
    """Run the batched chain under a fixed randomness plan.

    ``logit_probe`` (K zero-valued Vars) is added to the log-weights entering
    each resampling step; it exists so verification code can read off the
    gradient flowing through the resampling logits.
    """
    k_steps, n = cfg.num_steps, cfg.num_particles
    batch = plan.init_noise.shape[0]
    annealed = params.annealed
    hamiltonian = cfg.kernel == "hamiltonian"

    z = T.asvar(annealed.initial.sample((batch, n), noise=plan.init_noise))
    v = None
    if hamiltonian:
        v = T.sqrt(params.mass) * plan.mom_init_noise
    logw = T.asvar(np.full((batch, n), -np.log(n)))

    system = ParticleSystem(positions=z, log_weights=logw, momenta=v)
    terms = []
    ess_trace = np.empty((k_steps, batch))
    flags_trace = np.empty((k_steps, batch))
    record = {"indices": [], "gates": []}

    for k in range(1, k_steps + 1):
        beta_k = params.betas[k]
        beta_km1 = params.betas[k - 1]
        delta_k = params.deltas[k - 1]
        if system.stats is None:
            system.stats = annealed.stats(system.positions)
        # diagnostic: ESS of the weights entering step k (N right after a
        # resampling reset, and exactly N at k = 1)
        ess_trace[k - 1] = resampling.ess_from_log_weights(
            T.stop_gradient(system.log_weights)).value

        if hamiltonian:
            z_new, v_new, stats_new, logwt = kernels.hamiltonian_transition(
                system.positions, system.momenta, system.stats, annealed,
                beta_k, beta_km1, delta_k, params.mass, params.rho,
                plan.mom_noise[k - 1])
            system.momenta = v_new
        else:
            z_new, stats_new, logwt = kernels.langevin_transition(
                system.positions, system.stats, annealed,
                beta_k, beta_km1, delta_k, plan.step_noise[k - 1])

        term = T.logsumexp(system.log_weights + logwt, axis=-1)     # (B,)
        if not np.all(np.isfinite(term.value)):
            bad = np.argwhere(~np.isfinite(logwt.value))
            particle = int(bad[0][-1]) if len(bad) else -1
            raise NonFiniteBoundError(k, particle)
        terms.append(term)
        system.positions = z_new
        system.stats = stats_new
        system.log_weights = (system.log_weights + logwt) - T.expand_last(term)

        system, flags = _resample(
            cfg, system, plan, k - 1, record,
            probe=None if logit_probe is None else logit_probe[k - 1])
        flags_trace[k - 1] = flags
        system.step = k

    per_replicate = terms[0]
    for t in terms[1:]:
        per_replicate = per_replicate + t
    elbo = T.vmean(per_replicate)
    return BoundEstimate(elbo=elbo, per_replicate=per_replicate,
                         step_terms=terms, step_ess=ess_trace,
                         resample_flags=flags_trace, record=record)


def run_chain(cfg, params, rng, plan=None):
    """Single-replicate chain (batch of one)."""
    if plan is None:
        plan = RandomPlan.draw(cfg, 1, rng=rng)
    return run_system(cfg, params, plan)


def elbo_batch(cfg, params, rng, batch, plan=None):
    """Mean bound over ``batch`` independent replicates (fixed reduction order)."""
    if plan is None:
        plan = RandomPlan.draw(cfg, batch, rng=rng)
    return run_system(cfg, params, plan)
