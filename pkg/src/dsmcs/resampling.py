"""Effective sample size and the four resampling schemes.

Schemes:
  - ``cat``      : multinomial resampling, no gradient through the weights.
  - ``bern-cat`` : ``cat`` behind an ESS-driven Bernoulli gate, no gradients.
  - ``gst``      : multinomial forward, gapped straight-through backward.
  - ``bern-gst`` : ``gst`` with the gate itself reparameterized the same way.

All randomness is supplied as uniform draws so outcomes can be frozen and
replayed; the forward law of every scheme is plain multinomial resampling.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import tape as T

__all__ = [
    "SCHEMES",
    "ess",
    "ess_from_log_weights",
    "categorical_resample",
    "bernoulli_gate_prob",
    "gst_resample",
    "gst_binary",
    "ResamplingOutcome",
    "apply_resampling",
    "gated_indices",
]

SCHEMES = ("none", "cat", "bern-cat", "gst", "bern-gst")


def ess(weights):
    """1 / sum_i w_i^2 for normalized weights; lies in [1, N]."""
    w = T.asvar(weights)
    return 1.0 / T.vsum(T.square(w), axis=-1)


def ess_from_log_weights(log_w):
    """ESS from normalized log-weights, computed in log space."""
    return T.exp(-T.logsumexp(2.0 * T.asvar(log_w), axis=-1))


def _indices_from_uniforms(probs, u):
    """Inverse-CDF draws: probs (..., N) rows, u (..., N) uniforms."""
    cum = np.cumsum(probs, axis=-1)
    idx = (u[..., None] >= cum[..., None, :]).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def categorical_resample(weights, rng=None, u=None):
    """Index map iota: N i.i.d. categorical draws per row, no gradients."""
    probs = weights.value if isinstance(weights, T.Var) else np.asarray(weights)
    if u is None:
        u = rng.random(probs.shape)
    return _indices_from_uniforms(probs, u)


def bernoulli_gate_prob(log_w, n):
    """P(resample) = 1 - (ESS - 1) / (N - 1); 0 at uniform weights, 1 at one-hot."""
    if n < 2:
        return T.asvar(np.zeros(log_w.value.shape[:-1]))
    return 1.0 - (ess_from_log_weights(log_w) - 1.0) / (n - 1.0)


def _gapped_logits(logits_value, indices, gap):
    """Minimally perturbed logits: sampled entry raised to the row max, every
    other entry lowered to keep a margin of ``gap`` below it."""
    row_max = logits_value.max(axis=-1, keepdims=True)
    clipped = np.minimum(logits_value, row_max - gap)
    n = logits_value.shape[-1]
    out = np.broadcast_to(clipped[..., None, :],
                          clipped.shape[:-1] + (indices.shape[-1], n)).copy()
    np.put_along_axis(out, indices[..., None],
                      np.broadcast_to(row_max[..., None], out.shape[:-1] + (1,)),
                      axis=-1)
    return out


def gst_resample(log_w, tau, gap, rng=None, u=None, indices=None):
    """Gapped straight-through resampling.

    Forward: hard one-hot rows drawn exactly like ``categorical_resample``.
    Backward: gradient of softmax(perturbed logits / tau) with respect to the
    (non-detached) log-weights.  Returns (indices, surrogate matrix).
    """
    if tau <= 0:
        raise ValueError("gst temperature must be positive")
    log_w = T.asvar(log_w)
    probs = np.exp(log_w.value)
    if indices is None:
        if u is None:
            u = rng.random(probs.shape)
        indices = _indices_from_uniforms(probs, u)

    perturbation = _gapped_logits(log_w.value, indices, gap) - log_w.value[..., None, :]
    base = T.reshape(log_w, log_w.value.shape[:-1] + (1,) + log_w.value.shape[-1:])
    soft = T.softmax((base + perturbation) * (1.0 / tau), axis=-1)
    hard = np.zeros(soft.value.shape)
    np.put_along_axis(hard, indices[..., None], 1.0, axis=-1)
    # group (soft - soft) first so the forward value is bit-exactly the
    # hard one-hot matrix
    matrix = T.asvar(hard) + (soft - T.stop_gradient(soft))
    return indices, matrix


def gst_binary(p, tau, gap, rng=None, u=None, b=None):
    """Straight-through Bernoulli: hard 0/1 forward, GST backward through p.

    Returns (b, b_st) where ``b_st`` has forward value exactly ``b`` and
    carries gradient into ``p`` (a Var of resampling probabilities).
    """
    p = T.asvar(p)
    if b is None:
        if u is None:
            u = rng.random(p.value.shape)
        b = (u < p.value).astype(np.int64)
    # logits of the two-category distribution (keep, resample); the epsilon
    # only guards log(0) at the extremes and never touches the forward value
    logits = T.concat([
        T.expand_last(T.log((1.0 - p) + 1e-12)),
        T.expand_last(T.log(p + 1e-12)),
    ], axis=-1)
    perturbation = _gapped_logits(logits.value, b[..., None], gap) - logits.value[..., None, :]
    base = T.reshape(logits, logits.value.shape[:-1] + (1,) + logits.value.shape[-1:])
    soft = T.softmax((base + perturbation) * (1.0 / tau), axis=-1)
    pick = soft[..., 0, 1]
    b_st = T.asvar(b.astype(np.float64)) + (pick - T.stop_gradient(pick))
    return b, b_st


@dataclass
class ResamplingOutcome:
    """Result of one resampling decision for a batch of particle systems."""

    indices: np.ndarray                    # (..., N) int, identity if gated off
    gate: Optional[np.ndarray] = None      # (...,) 0/1, None when ungated
    matrix: Optional[T.Var] = None         # (..., N, N) surrogate, GST schemes
    gate_st: Optional[T.Var] = None        # (...,) straight-through gate


def apply_resampling(particles, outcome):
    """Clone particle state (positions, momenta, weights) under the index map.

    Detached schemes gather by index; straight-through schemes multiply by
    the surrogate one-hot matrix so position gradients reach the resampling
    probabilities.  Resampled rows restart at uniform weights; gated-off rows
    keep their weights.
    """
    n = particles.positions.value.shape[-2]
    log_uniform = np.full(particles.log_weights.value.shape, -np.log(n))

    if outcome.matrix is not None:
        new_pos = T.matmul(outcome.matrix, particles.positions)
        new_mom = None if particles.momenta is None else T.matmul(outcome.matrix, particles.momenta)
        new_logw = T.asvar(log_uniform)
        if outcome.gate_st is not None:
            g1 = T.expand_last(T.expand_last(outcome.gate_st))
            new_pos = particles.positions + g1 * (new_pos - particles.positions)
            if new_mom is not None:
                new_mom = particles.momenta + g1 * (new_mom - particles.momenta)
            g0 = T.expand_last(outcome.gate_st)
            new_logw = particles.log_weights + g0 * (T.asvar(log_uniform) - particles.log_weights)
        return replace(particles, positions=new_pos, momenta=new_mom,
                       log_weights=new_logw, stats=None)

    idx = outcome.indices
    new_pos = T.gather(particles.positions, idx[..., None], axis=-2)
    new_mom = None if particles.momenta is None else T.gather(particles.momenta, idx[..., None], axis=-2)
    stats = (None if particles.stats is None
             else particles.stats.gather(idx, positions=new_pos))
    if outcome.gate is None:
        new_logw = T.asvar(log_uniform)
    else:
        # gated-off rows keep their accumulated weights
        keep = (outcome.gate == 0).astype(np.float64)[..., None]
        new_logw = T.asvar(keep) * particles.log_weights + T.asvar((1.0 - keep) * log_uniform)
    return replace(particles, positions=new_pos, momenta=new_mom,
                   log_weights=new_logw, stats=stats)


def gated_indices(indices, gate, n):
    """Compose the Bernoulli gate with categorical draws: identity where b=0."""
    ident = np.broadcast_to(np.arange(n), indices.shape)
    return np.where(gate[..., None] == 1, indices, ident)
