"""Trainable sampler parameters and the optimization loop.

Trainables: a small step-size network (delta_k = delta_hat * sigmoid(NN(k))),
the raw annealing schedule, and (Hamiltonian only) the unconstrained mass
scale and momentum damping.  The bound is maximized with Adam; the learning
rate decays by 0.75 every 25 epochs for the first 200 epochs.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import tape as T
from .config import RunConfig
from .rng import substream
from .sampler import (NonFiniteBoundError, RandomPlan, SamplerParams,
                      run_system)
from .targets import build_schedule, target_from_config

__all__ = [
    "TrainState",
    "TrainingDiverged",
    "EpochRecord",
    "init_state",
    "build_params",
    "step_sizes",
    "adam_update",
    "lr_schedule",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
MAX_CONSECUTIVE_NONFINITE = 10


class TrainingDiverged(RuntimeError):
    """Raised after too many consecutive non-finite losses (reported as N/A)."""


@dataclass
class TrainState:
    """Parameters plus Adam moments; everything needed to resume a run."""

    params: dict                         # name -> ndarray
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    epoch: int = 0
    skipped_updates: int = 0

    def __post_init__(self):
        for name, value in self.params.items():
            self.m.setdefault(name, np.zeros_like(value))
            self.v.setdefault(name, np.zeros_like(value))


def _logit(p):
    return float(np.log(p) - np.log1p(-p))


def init_state(cfg: RunConfig) -> TrainState:
    """Zero-initialized head (delta_k = delta_hat / 2), uniform schedule."""
    rng = substream(cfg.seed, "param-init")
    w = cfg.hidden_width
    params = {
        "net.w1": rng.standard_normal((1, w)),
        "net.b1": np.zeros(w),
        "net.w2": rng.standard_normal((w, w)) / np.sqrt(w),
        "net.b2": np.zeros(w),
        "net.w3": np.zeros((w, 1)),
        "net.b3": np.zeros(1),
        "schedule.raw": np.zeros(cfg.num_steps),
    }
    if cfg.kernel == "hamiltonian":
        params["rho.raw"] = np.array(_logit(cfg.rho_init))
        params["mass.raw"] = np.array(np.log(cfg.mass_scale_init))
    return TrainState(params=params)


def step_sizes(leaves, num_steps, delta_hat):
    """delta_1..delta_K in (0, delta_hat), from the step-index network."""
    x = np.arange(1, num_steps + 1, dtype=np.float64)[:, None] / num_steps
    h = T.tanh(T.matmul(T.asvar(x), leaves["net.w1"]) + leaves["net.b1"])
    h = T.tanh(T.matmul(h, leaves["net.w2"]) + leaves["net.b2"])
    out = T.matmul(h, leaves["net.w3"]) + leaves["net.b3"]
    return delta_hat * T.sigmoid(T.reshape(out, (num_steps,)))


def build_params(cfg, state, tape, annealed=None):
    """Wrap the state on a tape and derive the constrained sampler parameters."""
    leaves = {name: tape.leaf(value, name) for name, value in state.params.items()}
    if annealed is None:
        annealed = target_from_config(cfg.target)[2]
    params = SamplerParams(
        annealed=annealed,
        betas=build_schedule(leaves["schedule.raw"]),
        deltas=step_sizes(leaves, cfg.num_steps, cfg.delta_hat),
        rho=T.sigmoid(leaves["rho.raw"]) if "rho.raw" in leaves else None,
        mass=T.exp(leaves["mass.raw"]) if "mass.raw" in leaves else None,
    )
    return params, leaves


def lr_schedule(epoch):
    """Multiplier: x0.75 every 25 epochs, frozen after epoch 200."""
    return 0.75 ** (min(epoch, 200) // 25)


def adam_update(state, grads, lr):
    """One ascent step (bias-corrected Adam) on every parameter, in name order."""
    state.step += 1
    t = state.step
    for name in sorted(state.params):
        g = grads[name]
        m = state.m[name] = ADAM_BETA1 * state.m[name] + (1 - ADAM_BETA1) * g
        v = state.v[name] = ADAM_BETA2 * state.v[name] + (1 - ADAM_BETA2) * g * g
        m_hat = m / (1 - ADAM_BETA1 ** t)
        v_hat = v / (1 - ADAM_BETA2 ** t)
        state.params[name] = state.params[name] + lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return state


@dataclass
class EpochRecord:
    epoch: int
    elbo_mean: float
    elbo_std: float
    ess: np.ndarray            # (K,) mean ESS per step
    resample_rate: np.ndarray  # (K,)
    seconds: float


def train(cfg: RunConfig, state=None, on_epoch=None):
    """Run the full protocol; returns (state, [EpochRecord]).

    Deterministic given (cfg, seed).  Raises TrainingDiverged after more than
    ``MAX_CONSECUTIVE_NONFINITE`` non-finite losses in a row.
    """
    if state is None:
        state = init_state(cfg)
    annealed = target_from_config(cfg.target)[2]
    records = []
    consecutive_bad = 0
    for epoch in range(state.epoch, cfg.epochs):
        t0 = time.perf_counter()
        lr = cfg.lr * lr_schedule(epoch)
        elbos = []
        ess_acc = np.zeros(cfg.num_steps)
        flag_acc = np.zeros(cfg.num_steps)
        for it in range(cfg.iterations):
            tape = T.Tape()
            params, leaves = build_params(cfg, state, tape, annealed)
            plan = RandomPlan.draw(cfg, cfg.batch,
                                   seed_path=("epoch", epoch, "iter", it))
            try:
                est = run_system(cfg, params, plan)
            except NonFiniteBoundError:
                consecutive_bad += 1
                state.skipped_updates += 1
                if consecutive_bad > MAX_CONSECUTIVE_NONFINITE:
                    raise TrainingDiverged(
                        f"{consecutive_bad} consecutive non-finite losses "
                        f"at epoch {epoch}")
                continue
            grads = T.backward(est.elbo, free_memory=True)
            gvals = {name: grads[var] for name, var in leaves.items()}
            tape.nodes.clear()  # break Var<->Tape cycles for prompt reclaim
            if not all(np.all(np.isfinite(g)) for g in gvals.values()):
                consecutive_bad += 1
                state.skipped_updates += 1
                if consecutive_bad > MAX_CONSECUTIVE_NONFINITE:
                    raise TrainingDiverged(
                        f"{consecutive_bad} consecutive non-finite gradients "
                        f"at epoch {epoch}")
                continue
            consecutive_bad = 0
            adam_update(state, gvals, lr)
            elbos.append(est.value)
            ess_acc += est.step_ess.mean(axis=1)
            flag_acc += est.resample_flags.mean(axis=1)
        count = max(len(elbos), 1)
        record = EpochRecord(
            epoch=epoch,
            elbo_mean=float(np.mean(elbos)) if elbos else float("nan"),
            elbo_std=float(np.std(elbos)) if elbos else float("nan"),
            ess=ess_acc / count,
            resample_rate=flag_acc / count,
            seconds=time.perf_counter() - t0,
        )
        records.append(record)
        state.epoch = epoch + 1
        if on_epoch is not None:
            on_epoch(record)
    return state, records


def save_checkpoint(state, path):
    data = {
        "params": {k: v.tolist() for k, v in state.params.items()},
        "m": {k: v.tolist() for k, v in state.m.items()},
        "v": {k: v.tolist() for k, v in state.v.items()},
        "step": state.step,
        "epoch": state.epoch,
        "skipped_updates": state.skipped_updates,
    }
    with open(path, "w") as fh:
        json.dump(data, fh)


def load_checkpoint(path):
    with open(path) as fh:
        data = json.load(fh)
    to_arr = lambda d: {k: np.asarray(v, dtype=np.float64) for k, v in d.items()}
    return TrainState(params=to_arr(data["params"]), m=to_arr(data["m"]),
                      v=to_arr(data["v"]), step=data["step"],
                      epoch=data["epoch"],
                      skipped_updates=data["skipped_updates"])
