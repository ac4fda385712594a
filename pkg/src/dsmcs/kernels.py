"""Differentiable Markov transitions and their incremental importance weights.

Two kernel families: unadjusted overdamped Langevin, and Hamiltonian dynamics
(one leapfrog step with partial momentum refresh).  There is deliberately no
Metropolis-Hastings correction, which keeps every transition differentiable.

Noise enters only as an explicit argument (reparameterization), so tests can
freeze randomness and the tape can differentiate through sampling.
"""

from __future__ import annotations

import numpy as np

from . import tape as T

__all__ = [
    "langevin_step",
    "langevin_log_incremental_weight",
    "langevin_transition",
    "leapfrog",
    "refresh_momentum",
    "hamiltonian_log_incremental_weight",
    "hamiltonian_transition",
]


# ---------------------------------------------------------------------------
# Langevin kernel
#
#   F_k(z | x) = N(z | x + delta * score_k(x), 2 delta I)
#   B_k = F_k (same functional form, arguments swapped)

def langevin_step(z, delta, score, noise):
    """One unadjusted Langevin move; ``score`` is grad log gamma_k at ``z``."""
    return z + delta * score + T.sqrt(2.0 * delta) * noise


def langevin_log_incremental_weight(z_new, z_old, delta, annealed, beta_k, beta_km1):
    """log w~_k for a Langevin move from ``z_old`` to ``z_new`` (standalone form)."""
    stats_old = annealed.stats(z_old)
    stats_new = annealed.stats(z_new)
    return _langevin_weight(z_new, stats_new, z_old, stats_old,
                            stats_old.score(beta_k), delta, beta_k, beta_km1)


def _langevin_weight(z_new, stats_new, z_old, stats_old, drift_old, delta, beta_k, beta_km1):
    var = 2.0 * delta
    log_f = T.gaussian_log_density(z_new, z_old + delta * drift_old, var)
    log_b = T.gaussian_log_density(z_old, z_new + delta * stats_new.score(beta_k), var)
    return (stats_new.log_density(beta_k) + log_b
            - stats_old.log_density(beta_km1) - log_f)


def langevin_transition(z, stats, annealed, beta_k, beta_km1, delta, noise):
    """Full step k: move all particles and return (z', stats', log w~_k).

    ``stats`` are the cached densities/scores at ``z``.  Because ``z_new`` is
    the reparameterized draw z + delta s + sqrt(2 delta) eps, the forward
    density collapses identically to -||eps||^2 / 2 - (n/2) log(4 pi delta),
    so only the backward density needs a full Gaussian evaluation.
    """
    drift = stats.score(beta_k)
    z_new = z + delta * drift + T.sqrt(2.0 * delta) * noise
    stats_new = annealed.stats(z_new)
    n = z.value.shape[-1]
    log_f = (T.asvar(-0.5 * np.square(noise).sum(axis=-1))
             - (0.5 * n) * T.log(4.0 * np.pi * delta))
    log_b = T.gaussian_log_density(
        z, z_new + delta * stats_new.score(beta_k), 2.0 * delta)
    logwt = (stats_new.log_density(beta_k) + log_b
             - stats.log_density(beta_km1) - log_f)
    return z_new, stats_new, logwt


# ---------------------------------------------------------------------------
# Hamiltonian kernel

def leapfrog(z, v, delta, mass, score):
    """One leapfrog step; ``score`` maps positions to grad log gamma_k.

    v_half = v + (delta/2) score(z);  z' = z + delta v_half / mass;
    v' = v_half + (delta/2) score(z').
    """
    v_half = v + 0.5 * delta * score(z)
    z_new = z + delta * v_half / mass
    v_new = v_half + 0.5 * delta * score(z_new)
    return z_new, v_new


def refresh_momentum(v, rho, mass, noise):
    """Partial refresh: v~ = rho v + sqrt((1 - rho^2) mass) eps.

    Leaves N(0, mass I) invariant for any rho in (0, 1).
    """
    return rho * v + T.sqrt((1.0 - rho * rho) * mass) * noise


def hamiltonian_log_incremental_weight(z_new, v_new, z_old, v_old, v_tilde,
                                       rho, mass, annealed, beta_k, beta_km1):
    """log w~_k for a Hamiltonian move (standalone form).

    The extended densities add log N(v | 0, mass I) to the annealed position
    density; the two partial-refresh Gaussians enter with swapped arguments.
    """
    stats_old = annealed.stats(z_old)
    stats_new = annealed.stats(z_new)
    refresh_var = (1.0 - rho * rho) * mass
    return (stats_new.log_density(beta_k)
            + T.gaussian_log_density(v_new, 0.0, mass)
            + T.gaussian_log_density(v_old, rho * v_tilde, refresh_var)
            - stats_old.log_density(beta_km1)
            - T.gaussian_log_density(v_old, 0.0, mass)
            - T.gaussian_log_density(v_tilde, rho * v_old, refresh_var))


def hamiltonian_transition(z, v, stats, annealed, beta_k, beta_km1,
                           delta, mass, rho, noise):
    """Full step k: refresh momentum, leapfrog, and weight in one pass.

    The forward refresh density at the reparameterized v~ simplifies to
    -||eps||^2 / 2 - (n/2) log(2 pi (1 - rho^2) mass), analogous to the
    Langevin forward kernel.
    """
    refresh_var = (1.0 - rho * rho) * mass
    v_tilde = rho * v + T.sqrt(refresh_var) * noise

    v_half = v_tilde + 0.5 * delta * stats.score(beta_k)
    z_new = z + delta * v_half / mass
    stats_new = annealed.stats(z_new)
    v_new = v_half + 0.5 * delta * stats_new.score(beta_k)

    n = z.value.shape[-1]
    log_fwd_refresh = (T.asvar(-0.5 * np.square(noise).sum(axis=-1))
                       - (0.5 * n) * T.log(2.0 * np.pi * refresh_var))
    logwt = (stats_new.log_density(beta_k)
             + T.gaussian_log_density(v_new, 0.0, mass)
             + T.gaussian_log_density(v, rho * v_tilde, refresh_var)
             - stats.log_density(beta_km1)
             - T.gaussian_log_density(v, 0.0, mass)
             - log_fwd_refresh)
    return z_new, v_new, stats_new, logwt
