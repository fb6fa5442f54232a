"""Beta schedules and their cumulative alpha products."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError

SCHEDULE_MODES = ("linear", "scaled_linear")


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise levels of a finite forward process.

    ``betas[t]`` is the variance injected at step ``t`` (0-based),
    ``alphas = 1 - betas`` and ``alpha_bars[t]`` is the running product
    ``alphas[0] * ... * alphas[t]``.  ``alpha_bars`` is strictly decreasing
    because every beta is positive.
    """

    mode: str
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def num_steps(self) -> int:
        return self.betas.shape[0]

    def check_step(self, t: int, lowest: int = 0) -> None:
        if not isinstance(t, (int, np.integer)):
            raise ConfigError(f"timestep must be an integer, got {t!r}")
        if not lowest <= t < self.num_steps:
            raise ConfigError(
                f"timestep {t} outside [{lowest}, {self.num_steps - 1}]"
            )


def build_schedule(
    num_steps: int,
    beta_endpoints: tuple[float, float] = (0.00085, 0.012),
    mode: str = "scaled_linear",
) -> NoiseSchedule:
    """Build a noise schedule.

    ``linear`` interpolates the betas directly; ``scaled_linear`` interpolates
    their square roots, so squaring the interpolant reproduces the stated
    endpoints at t=0 and t=num_steps-1.
    """
    if mode not in SCHEDULE_MODES:
        raise ConfigError(f"unknown schedule mode {mode!r}, expected one of {SCHEDULE_MODES}")
    if not isinstance(num_steps, (int, np.integer)) or num_steps < 1:
        raise ConfigError(f"num_steps must be a positive integer, got {num_steps!r}")
    lo, hi = float(beta_endpoints[0]), float(beta_endpoints[1])
    if not (0.0 < lo < 1.0 and 0.0 < hi < 1.0):
        raise ConfigError(f"beta endpoints must lie in (0, 1), got ({lo}, {hi})")
    if hi < lo:
        raise ConfigError(f"beta endpoints must be non-decreasing, got ({lo}, {hi})")

    if mode == "linear":
        betas = np.linspace(lo, hi, num_steps, dtype=np.float64)
    else:
        betas = np.linspace(np.sqrt(lo), np.sqrt(hi), num_steps, dtype=np.float64) ** 2
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(mode=mode, betas=betas, alphas=alphas, alpha_bars=alpha_bars)
