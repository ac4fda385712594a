"""Numerical verification: gradient audits, the zero-resampling-gradient
construction, and Monte Carlo unbiasedness checks.

Every operation is deterministic given its seed and returns a JSON-friendly
report dict with a boolean ``pass`` field.
"""

from __future__ import annotations

import numpy as np

from . import tape as T
from .config import RunConfig
from .rng import substream
from .sampler import RandomPlan, SamplerParams, run_system
from .targets import (AnnealedDensity, GaussianInitial, GaussianMixtureTarget,
                      build_schedule)
from .training import build_params, init_state

__all__ = [
    "theorem1_check",
    "gradient_audit",
    "unbiasedness_check",
    "verify_all",
]

FD_EPS = 1e-5
AUDIT_THRESHOLD = 1e-4
THEOREM_THRESHOLD = 1e-12
Z_LIMIT = 3.0


# ---------------------------------------------------------------------------
# Theorem 1: with all particles identical the resampling gradient vanishes

def _identical_particle_plan(cfg, batch, perturb=0.0):
    """A randomness plan whose initial draw is copied across particles and
    whose kernel noise is zero, so particles stay bit-identical."""
    rng = substream(cfg.seed, "theorem1")
    n, d, k = cfg.num_particles, cfg.dim, cfg.num_steps
    one = rng.standard_normal((batch, 1, d))
    init = np.repeat(one, n, axis=1)
    if perturb:
        init = init.copy()
        init[:, 0, :] += perturb
    zeros = np.zeros((batch, n, d))
    return RandomPlan(
        init_noise=init,
        step_noise=[zeros] * k,
        mom_init_noise=np.repeat(rng.standard_normal((batch, 1, d)), n, axis=1)
        if cfg.kernel == "hamiltonian" else None,
        mom_noise=[zeros] * k if cfg.kernel == "hamiltonian" else None,
        resample_u=[rng.random((batch, n)) for _ in range(k)],
        gate_u=[rng.random((batch,)) for _ in range(k)],
    )


def _probe_gradients(cfg, batch, perturb=0.0):
    tape = T.Tape()
    state = init_state(cfg)
    params, leaves = build_params(cfg, state, tape)
    probes = [tape.leaf(np.zeros((batch, cfg.num_particles)), name=f"probe{k}")
              for k in range(cfg.num_steps)]
    plan = _identical_particle_plan(cfg, batch, perturb=perturb)
    est = run_system(cfg, params, plan, logit_probe=probes)
    grads = T.backward(est.elbo)
    probe_grad = max(float(np.abs(grads[p]).max()) for p in probes)
    kernel_grad = max(float(np.abs(grads[v]).max())
                      for name, v in leaves.items() if name.startswith("net."))
    return probe_grad, kernel_grad


def theorem1_check(cfg: RunConfig, batch=4) -> dict:
    """Resampling-logit gradient with bit-identical particles.

    With every particle identical the bound is invariant to the resampling
    outcome, so the gradient entering the resampling logits must vanish
    exactly; kernel-parameter gradients must not.  A slightly perturbed
    system is probed as well (reported, not asserted).
    """
    probe_grad, kernel_grad = _probe_gradients(cfg, batch)
    perturbed_grad, _ = _probe_gradients(cfg, batch, perturb=1e-3)
    return {
        "check": "theorem1",
        "kernel": cfg.kernel,
        "scheme": cfg.resampling,
        "resampling_logit_grad": probe_grad,
        "kernel_parameter_grad": kernel_grad,
        "perturbed_logit_grad": perturbed_grad,
        "threshold": THEOREM_THRESHOLD,
        "pass": bool(probe_grad <= THEOREM_THRESHOLD and kernel_grad > 0.0),
    }


# ---------------------------------------------------------------------------
# Finite-difference audit of the full bound

def _elbo_value(cfg, overrides, plan):
    state = init_state(cfg)
    state.params.update(overrides)
    tape = T.Tape()
    params, _ = build_params(cfg, state, tape)
    return run_system(cfg, params, plan).value


def gradient_audit(cfg: RunConfig, batch=2, eps=FD_EPS, corrupt_group=None) -> dict:
    """Central finite differences vs. tape gradients, per parameter group.

    Noise and discrete resampling outcomes are frozen, so the bound is a
    smooth deterministic function of the parameters.  ``corrupt_group``
    deliberately biases one group's tape gradient (test plumbing for the
    audit's own failure path).
    """
    state = init_state(cfg)
    tape = T.Tape()
    params, leaves = build_params(cfg, state, tape)
    draw = RandomPlan.draw(cfg, batch, seed_path=("audit",))
    est = run_system(cfg, params, draw)
    plan = draw.freeze_from(est.record)
    # re-run under the frozen plan so tape gradients match the FD evaluations
    tape = T.Tape()
    params, leaves = build_params(cfg, state, tape)
    est = run_system(cfg, params, plan)
    grads = T.backward(est.elbo)

    groups = {}
    for name in sorted(state.params):
        g = np.asarray(grads[leaves[name]], dtype=np.float64).copy()
        if corrupt_group == name:
            g += 1e-2
        base = state.params[name]
        worst = 0.0
        flat = base.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            up = flat.copy(); up[i] += eps
            dn = flat.copy(); dn[i] -= eps
            fp = _elbo_value(cfg, {name: up.reshape(base.shape)}, plan)
            fm = _elbo_value(cfg, {name: dn.reshape(base.shape)}, plan)
            fd = (fp - fm) / (2.0 * eps)
            scale = max(abs(fd) + abs(gflat[i]), 1e-6)
            worst = max(worst, abs(fd - gflat[i]) / scale)
        groups[name] = worst
    max_err = max(groups.values())
    failing = sorted(n for n, e in groups.items() if e > AUDIT_THRESHOLD)
    return {
        "check": "gradient_audit",
        "kernel": cfg.kernel,
        "scheme": cfg.resampling,
        "groups": groups,
        "max_relative_error": max_err,
        "failing_groups": failing,
        "threshold": AUDIT_THRESHOLD,
        "pass": not failing,
    }


# ---------------------------------------------------------------------------
# Unbiasedness of the evidence estimator on a tractable 1-d problem

def unbiasedness_check(scheme, replicates=100000, num_particles=3, num_steps=2,
                       delta=0.2, seed=0) -> dict:
    """Z-score of the evidence estimator on 1-d Gaussian -> Gaussian (Z = 1).

    The estimator is exp of the summed per-step log terms; its expectation is
    the normalizing constant for any fixed kernel parameters, so the Monte
    Carlo mean over many replicates must sit within sampling error of 1.
    """
    cfg = RunConfig(
        kernel="langevin", resampling=scheme, num_steps=num_steps,
        num_particles=num_particles, delta_hat=1.0, seed=seed, epochs=0,
        target={"type": "gaussian-mixture", "dim": 1, "components": 1,
                "mean_seed": seed, "component_variance": 1.0,
                "init_mean": 0.0, "init_variance": 9.0},
    )
    initial = GaussianInitial(dim=1, mean=0.0, var=9.0)
    rng = substream(seed, "unbias-target")
    target = GaussianMixtureTarget(means=3.0 + rng.standard_normal((1, 1)))
    annealed = AnnealedDensity(initial, target)
    betas = np.linspace(0.0, 1.0, num_steps + 1)
    params = SamplerParams.constants(annealed, betas,
                                     np.full(num_steps, delta))

    total = 0.0
    total_sq = 0.0
    count = 0
    chunk = 20000
    chunk_idx = 0
    while count < replicates:
        b = min(chunk, replicates - count)
        plan = RandomPlan.draw(cfg, b, seed_path=("unbias", chunk_idx))
        est = run_system(cfg, params, plan)
        z_hat = np.exp(est.per_replicate.value)
        total += z_hat.sum()
        total_sq += np.square(z_hat).sum()
        count += b
        chunk_idx += 1
    mean = total / count
    var = max(total_sq / count - mean ** 2, 0.0)
    stderr = np.sqrt(var / count)
    z = (mean - 1.0) / stderr
    return {
        "check": "unbiasedness",
        "scheme": scheme,
        "replicates": count,
        "mean": float(mean),
        "stderr": float(stderr),
        "z_score": float(z),
        "limit": Z_LIMIT,
        "pass": bool(abs(z) < Z_LIMIT),
    }


# ---------------------------------------------------------------------------

def _small_target(dim=2):
    return {"type": "gaussian-mixture", "dim": dim, "components": 2,
            "mean_seed": 0, "component_variance": 1.0,
            "init_mean": 0.0, "init_variance": 9.0}


def verify_all(suites=("grad", "theorem", "unbiased"), replicates=100000) -> dict:
    """Run the requested verification suites and collect their reports."""
    reports = []
    if "grad" in suites:
        for kernel in ("langevin", "hamiltonian"):
            cfg = RunConfig(kernel=kernel, resampling="bern-cat", num_steps=2,
                            num_particles=2, delta_hat=0.5, hidden_width=4,
                            target=_small_target(), epochs=0)
            reports.append(gradient_audit(cfg))
    if "theorem" in suites:
        for scheme in ("gst", "bern-gst"):
            cfg = RunConfig(kernel="langevin", resampling=scheme, num_steps=3,
                            num_particles=4, delta_hat=0.5, tau=0.1,
                            hidden_width=4, target=_small_target(), epochs=0)
            reports.append(theorem1_check(cfg))
    if "unbiased" in suites:
        for scheme in ("none", "cat", "bern-cat"):
            reports.append(unbiasedness_check(scheme, replicates=replicates))
    return {"reports": reports, "pass": all(r["pass"] for r in reports)}
