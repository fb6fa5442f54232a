"""Training loop for the τ-prediction objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NumericalError
from ..nn import Adam
from .denoiser import DEFAULT_HIDDEN, Denoiser
from .process import (
    SmrConfig,
    SmrDraw,
    deterministic_prior_weight,
    make_eta,
    smr_forward_sample,
)
from .schedule import NoiseSchedule


def smr_training_loss(
    denoiser: Denoiser, draws: list[SmrDraw], with_grad: bool = False
):
    """Mean squared error between τ targets and denoiser outputs over a batch.

    Averages over every array element, so a zero-output denoiser scores the
    mean squared entry of τ itself.  With ``with_grad`` the flat-parameter
    gradient is returned alongside.
    """
    if not draws:
        raise ConfigError("smr_training_loss needs a non-empty batch")
    x = np.stack([d.x_t.ravel() for d in draws])
    target = np.stack([d.tau.ravel() for d in draws])
    t_vec = np.array([d.t for d in draws], dtype=np.float64)
    if with_grad:
        return denoiser.loss_and_grad(x, t_vec, target)
    out = denoiser.predict(x, t_vec)
    diff = out - target
    return float(np.mean(diff * diff))


@dataclass
class DiffusionTrainResult:
    denoiser: Denoiser
    loss_history: list[float]


def train_diffusion(
    dataset: np.ndarray,
    schedule: NoiseSchedule,
    config: SmrConfig,
    *,
    epochs: int,
    rng: np.random.Generator,
    batch_size: int = 32,
    lr: float = 1e-3,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
    denoiser: Denoiser | None = None,
) -> DiffusionTrainResult:
    """Fit a τ-prediction net on a dataset of flattenable arrays.

    Every image is paired with ``config.prior_pairs`` priors drawn from the
    dataset itself (or with itself in the degenerate ``x0`` mode).  Stochastic
    mode draws one η per pairing up front and reuses it at every timestep of
    that instance; the ramp modes derive η from the timestep instead.
    Divergence aborts with a diagnostic rather than returning garbage.
    """
    data = np.asarray(dataset, dtype=np.float64)
    if data.ndim < 2:
        raise ConfigError(f"dataset must be (N, ...), got shape {data.shape}")
    n = data.shape[0]
    flat = data.reshape(n, -1)
    dim = flat.shape[1]
    if denoiser is None:
        denoiser = Denoiser.create(dim, hidden=hidden, rng=rng)
    elif denoiser.arch["data_dim"] != dim:
        raise ConfigError(
            f"denoiser expects dim {denoiser.arch['data_dim']}, dataset has {dim}"
        )

    # (image index, prior index, per-instance eta or None for ramp modes)
    instances: list[tuple[int, int, float | None]] = []
    for i in range(n):
        for _ in range(config.prior_pairs):
            j = i if config.prior_mode == "x0" else int(rng.integers(0, n))
            eta = None
            if config.prior_mode in ("stochastic", "x0"):
                eta = float(make_eta(rng, config))
            instances.append((i, j, eta))

    num_steps = schedule.num_steps
    opt = Adam(denoiser.params.size, lr=lr)
    history: list[float] = []
    for epoch in range(epochs):
        order = rng.permutation(len(instances))
        total, seen = 0.0, 0
        for start in range(0, len(order), batch_size):
            chunk = order[start : start + batch_size]
            draws = []
            for k in chunk:
                i, j, eta = instances[k]
                t = int(rng.integers(0, num_steps))
                if eta is None:
                    w = deterministic_prior_weight(
                        t, num_steps, config.prior_mode, w_max=config.upsilon
                    )
                    eta = float(w) ** 2
                draws.append(
                    smr_forward_sample(flat[i], flat[j], t, eta, schedule, rng=rng)
                )
            loss, grad = smr_training_loss(denoiser, draws, with_grad=True)
            if not np.isfinite(loss):
                raise NumericalError(
                    f"training diverged at epoch {epoch}, batch {start // batch_size}"
                )
            opt.update(denoiser.params, grad)
            total += loss * len(chunk)
            seen += len(chunk)
        history.append(total / seen)
    return DiffusionTrainResult(denoiser=denoiser, loss_history=history)
