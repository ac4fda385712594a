"""Run configuration: validation, JSON round-trip, defaults."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .resampling import SCHEMES

__all__ = ["RunConfig", "DEFAULT_TARGET"]

DEFAULT_TARGET = {
    "type": "gaussian-mixture",
    "dim": 50,
    "components": 8,
    "mean_seed": 0,
    "component_variance": 1.0,
    "init_mean": 0.0,
    "init_variance": 9.0,
}


@dataclass
class RunConfig:
    """Everything that determines a training run (deterministic given seed)."""

    kernel: str = "langevin"            # "langevin" | "hamiltonian"
    resampling: str = "none"            # see resampling.SCHEMES
    tau: float = 1.0                    # GST temperature
    gap: float = 1.0                    # GST gap
    num_steps: int = 8                  # K, annealed transitions
    num_particles: int = 64             # N
    delta_hat: float = 1.0              # step-size cap
    target: dict = field(default_factory=lambda: dict(DEFAULT_TARGET))
    lr: float = 0.01
    epochs: int = 500
    iterations: int = 10                # per epoch
    batch: int = 64                     # sampler replicates per iteration
    seed: int = 0                       # run seed (init, noise, resampling)
    rho_init: float = 0.9               # momentum damping, Hamiltonian only
    mass_scale_init: float = 1.0        # mass matrix scale, Hamiltonian only
    hidden_width: int = 32              # step-size network width

    def __post_init__(self):
        if self.kernel not in ("langevin", "hamiltonian"):
            raise ValueError(f"unknown kernel: {self.kernel!r}")
        if self.resampling not in SCHEMES:
            raise ValueError(f"unknown resampling scheme: {self.resampling!r}")
        if self.num_steps < 1 or self.num_particles < 1:
            raise ValueError("num_steps and num_particles must be positive")
        if self.delta_hat <= 0:
            raise ValueError("delta_hat must be positive")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if not (0 < self.rho_init < 1):
            raise ValueError("rho_init must lie in (0, 1)")
        if self.mass_scale_init <= 0:
            raise ValueError("mass_scale_init must be positive")
        if self.epochs < 0 or self.iterations < 1:
            raise ValueError("epochs must be >= 0, iterations >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")

    @property
    def dim(self):
        return int(self.target.get("dim", 50))

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)
