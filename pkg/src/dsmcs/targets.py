"""Initial and target densities and the annealed interpolation between them.

The benchmark problem: estimate log Z of an isotropic Gaussian mixture
(log Z = 0 by construction) starting from a wide diagonal Gaussian.  All
log-densities and scores are built from tape primitives, so they are
differentiable with respect to positions and schedule parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape as T
from .rng import substream

__all__ = [
    "GaussianInitial",
    "GaussianMixtureTarget",
    "AnnealedDensity",
    "PointStats",
    "build_schedule",
    "target_from_config",
]


@dataclass
class GaussianInitial:
    """Diagonal Gaussian N(mean, var * I)."""

    dim: int
    mean: float = 0.0
    var: float = 9.0

    def __post_init__(self):
        if self.var <= 0:
            raise ValueError("initial variance must be positive")

    def log_density(self, x):
        return T.gaussian_log_density(x, np.full(self.dim, self.mean), self.var)

    def score(self, x):
        return (self.mean - T.asvar(x)) * (1.0 / self.var)

    def sample(self, shape, rng=None, noise=None):
        """Reparameterized draw: mean + sqrt(var) * eps."""
        if noise is None:
            noise = rng.standard_normal(shape + (self.dim,))
        return self.mean + np.sqrt(self.var) * noise


@dataclass
class GaussianMixtureTarget:
    """Mixture of M isotropic Gaussians with uniform weights; log Z = 0."""

    means: np.ndarray           # (M, n)
    var: float = 1.0
    log_weights: np.ndarray = None  # (M,), normalized

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        m = self.means.shape[0]
        if self.log_weights is None:
            self.log_weights = np.full(m, -np.log(m))
        self.log_weights = np.asarray(self.log_weights, dtype=np.float64)
        total = np.exp(self.log_weights).sum()
        if abs(total - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")
        if self.var <= 0:
            raise ValueError("component variance must be positive")

    @classmethod
    def from_seed(cls, dim, components, mean_seed, var=1.0, mean_loc=3.0):
        """Component means drawn elementwise i.i.d. from N(mean_loc, 1)."""
        rng = substream(mean_seed, "target-means")
        means = mean_loc + rng.standard_normal((components, dim))
        return cls(means=means, var=var)

    @property
    def dim(self):
        return self.means.shape[1]

    def _component_logits(self, x, xsq=None):
        """Per-component log(w_m N(x | mu_m, var I)) as a (..., M) Var."""
        n = self.dim
        msq = np.square(self.means).sum(axis=1)           # (M,)
        const = (self.log_weights - 0.5 * msq / self.var
                 - 0.5 * n * np.log(2.0 * np.pi * self.var))
        if xsq is None:
            xsq = T.sum_square(x, axis=-1)                # (...)
        xm = T.matmul(x, self.means.T)                    # (..., M)
        return (xm - 0.5 * T.expand_last(xsq)) * (1.0 / self.var) + const

    def log_density(self, x):
        return T.logsumexp(self._component_logits(T.asvar(x)), axis=-1)

    def score(self, x):
        x = T.asvar(x)
        r = T.softmax(self._component_logits(x), axis=-1)
        return (T.matmul(r, self.means) - x) * (1.0 / self.var)

    def stats(self, x, xsq=None):
        """Log-density and score sharing the component responsibilities."""
        x = T.asvar(x)
        logits = self._component_logits(x, xsq=xsq)
        logp = T.logsumexp(logits, axis=-1)
        r = T.softmax(logits, axis=-1)
        score = (T.matmul(r, self.means) - x) * (1.0 / self.var)
        return logp, score


@dataclass
class PointStats:
    """Cached densities/scores of initial and target at a set of points.

    Annealed quantities for any exponent beta are cheap linear combinations,
    so one mixture evaluation serves every beta used at that point.  The
    initial-density score is linear in x, so it is folded into ``score``
    symbolically rather than stored.
    """

    x: object
    log_q: object
    log_p: object
    score_p: object
    initial: object = None

    @property
    def score_q(self):
        return self.initial.score(self.x)

    def log_density(self, beta):
        return (1.0 - beta) * self.log_q + beta * self.log_p

    def score(self, beta):
        """(1 - beta) score_q + beta score_p, with score_q expanded in x."""
        coef = (1.0 - beta) * (-1.0 / self.initial.var)
        drift = coef * self.x + beta * self.score_p
        if self.initial.mean != 0.0:
            drift = drift + (1.0 - beta) * (self.initial.mean / self.initial.var)
        return drift

    def gather(self, indices, positions=None):
        """Row-select the cached stats (after index resampling).

        ``positions`` may pass in the already-gathered points to avoid a
        second gather of ``x``.
        """
        if positions is None:
            positions = T.gather(self.x, indices[..., None], axis=-2)
        return PointStats(
            x=positions,
            log_q=T.gather(self.log_q, indices, axis=-1),
            log_p=T.gather(self.log_p, indices, axis=-1),
            score_p=T.gather(self.score_p, indices[..., None], axis=-2),
            initial=self.initial,
        )

@dataclass
class AnnealedDensity:
    """log gamma_k(x) = (1 - beta_k) log q(x) + beta_k log p(x)."""

    initial: GaussianInitial
    target: GaussianMixtureTarget

    def stats(self, x):
        x = T.asvar(x)
        xsq = T.sum_square(x, axis=-1)
        log_p, score_p = self.target.stats(x, xsq=xsq)
        if self.initial.mean == 0.0:
            # reuse the squared norm already needed by the mixture logits
            n = self.initial.dim
            log_q = (-0.5 / self.initial.var) * xsq \
                - 0.5 * n * np.log(2.0 * np.pi * self.initial.var)
        else:
            log_q = self.initial.log_density(x)
        return PointStats(x=x, log_q=log_q, log_p=log_p, score_p=score_p,
                          initial=self.initial)

    def log_density(self, x, beta):
        return self.stats(x).log_density(beta)

    def score(self, x, beta):
        return self.stats(x).score(beta)


def build_schedule(raw):
    """Annealing exponents beta_0..beta_K from K unconstrained reals.

    beta_k is the cumulative sum of softmax(raw), which is strictly increasing
    by construction; the endpoints 0 and 1 are pinned exactly.
    """
    raw = T.asvar(raw)
    k = raw.value.shape[0]
    increments = T.softmax(raw, axis=-1)
    partial = T.cumsum(increments, axis=-1)
    return T.concat([T.asvar([0.0]), partial[: k - 1], T.asvar([1.0])], axis=0)


def target_from_config(cfg):
    """Build (initial, target, annealed) from a target-spec mapping."""
    spec = dict(cfg)
    kind = spec.pop("type", "gaussian-mixture")
    if kind != "gaussian-mixture":
        raise ValueError(f"unknown target type: {kind}")
    target = GaussianMixtureTarget.from_seed(
        dim=spec.get("dim", 50),
        components=spec.get("components", 8),
        mean_seed=spec.get("mean_seed", 0),
        var=spec.get("component_variance", 1.0),
    )
    initial = GaussianInitial(
        dim=target.dim,
        mean=spec.get("init_mean", 0.0),
        var=spec.get("init_variance", 9.0),
    )
    return initial, target, AnnealedDensity(initial, target)
