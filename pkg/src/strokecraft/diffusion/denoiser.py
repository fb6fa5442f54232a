"""Step-conditioned regression net that predicts the training target τ.

A plain tanh MLP over [flattened state, sinusoidal step features, optional
condition vector].  Weights are one flat float64 vector; gradients come from
hand-written backprop so they can be cross-checked against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import nn
from ..errors import ConfigError

DEFAULT_TIME_DIM = 16
DEFAULT_HIDDEN = (128, 128)


def time_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal features of the integer step index, shape (..., dim)."""
    if dim % 2:
        raise ConfigError(f"time embedding dim must be even, got {dim}")
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = np.asarray(t, dtype=np.float64)[..., None] * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


def _layer_dims(arch: dict) -> list[tuple[int, int]]:
    in_dim = arch["data_dim"] + arch["time_dim"] + arch["cond_dim"]
    widths = [in_dim, *arch["hidden"], arch["data_dim"]]
    return list(zip(widths[:-1], widths[1:]))


def param_count(arch: dict) -> int:
    return sum(nin * nout + nout for nin, nout in _layer_dims(arch))


@dataclass
class Denoiser:
    """τ-prediction MLP with a flat parameter vector."""

    arch: dict
    params: np.ndarray

    @classmethod
    def create(
        cls,
        data_dim: int,
        hidden: tuple[int, ...] = DEFAULT_HIDDEN,
        time_dim: int = DEFAULT_TIME_DIM,
        cond_dim: int = 0,
        rng: np.random.Generator | None = None,
    ) -> "Denoiser":
        if rng is None:
            raise ConfigError("Denoiser.create needs an rng for reproducible init")
        arch = {
            "kind": "tau_mlp",
            "data_dim": int(data_dim),
            "hidden": [int(h) for h in hidden],
            "time_dim": int(time_dim),
            "cond_dim": int(cond_dim),
        }
        params = np.empty(param_count(arch))
        offset = 0
        for nin, nout in _layer_dims(arch):
            lim = nn.glorot_limit(nin, nout)
            params[offset : offset + nin * nout] = rng.uniform(-lim, lim, nin * nout)
            offset += nin * nout
            params[offset : offset + nout] = 0.0
            offset += nout
        return cls(arch=arch, params=params)

    def _views(self) -> list[tuple[np.ndarray, np.ndarray]]:
        views = []
        offset = 0
        for nin, nout in _layer_dims(self.arch):
            w = self.params[offset : offset + nin * nout].reshape(nin, nout)
            offset += nin * nout
            b = self.params[offset : offset + nout]
            offset += nout
            views.append((w, b))
        return views

    def _features(self, x: np.ndarray, t, cond: np.ndarray | None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.arch["data_dim"]:
            raise ConfigError(
                f"state dim {x.shape[1]} != architecture data_dim {self.arch['data_dim']}"
            )
        t_vec = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
        feats = [x, time_embedding(t_vec, self.arch["time_dim"])]
        if self.arch["cond_dim"]:
            if cond is None:
                raise ConfigError("this denoiser expects a condition vector")
            cond = np.atleast_2d(np.asarray(cond, dtype=np.float64))
            cond = np.broadcast_to(cond, (x.shape[0], self.arch["cond_dim"]))
            feats.append(cond)
        elif cond is not None:
            raise ConfigError("this denoiser was built without a condition input")
        return np.concatenate(feats, axis=1)

    def predict(self, x: np.ndarray, t, cond: np.ndarray | None = None) -> np.ndarray:
        """τ estimate for a batch of flattened states, shape (B, data_dim)."""
        out, _ = self._forward(self._features(x, t, cond))
        return out

    def _forward(self, feats: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        views = self._views()
        acts = [feats]
        h = feats
        for i, (w, b) in enumerate(views):
            h = nn.linear_forward(h, w, b)
            if i < len(views) - 1:
                h = nn.tanh(h)
            acts.append(h)
        return h, acts

    def loss_and_grad(
        self, x: np.ndarray, t, target: np.ndarray, cond: np.ndarray | None = None
    ) -> tuple[float, np.ndarray]:
        """Mean squared error against τ targets and its gradient in θ."""
        feats = self._features(x, t, cond)
        target = np.atleast_2d(np.asarray(target, dtype=np.float64))
        out, acts = self._forward(feats)
        if out.shape != target.shape:
            raise ConfigError(f"target shape {target.shape} != output shape {out.shape}")
        diff = out - target
        loss = float(np.mean(diff * diff))

        views = self._views()
        grad = np.zeros_like(self.params)
        offset_ends = []
        offset = 0
        for nin, nout in _layer_dims(self.arch):
            offset += nin * nout + nout
            offset_ends.append(offset)

        grad_h = 2.0 * diff / diff.size
        for i in range(len(views) - 1, -1, -1):
            w, _ = views[i]
            x_in = acts[i]
            grad_x, grad_w, grad_b = nn.linear_backward(x_in, w, grad_h)
            end = offset_ends[i]
            grad[end - grad_b.size : end] = grad_b
            grad[end - grad_b.size - grad_w.size : end - grad_b.size] = grad_w.ravel()
            if i > 0:
                grad_h = grad_x * nn.dtanh(acts[i])
        return loss, grad

    def save(self, path) -> None:
        nn.save_checkpoint(path, self.arch, self.params)

    @classmethod
    def load(cls, path) -> "Denoiser":
        header, params = nn.load_checkpoint(path)
        if header.get("kind") != "tau_mlp":
            raise ConfigError(f"checkpoint at {path} holds a {header.get('kind')!r}, not a tau_mlp")
        arch = {k: header[k] for k in ("kind", "data_dim", "hidden", "time_dim", "cond_dim")}
        if params.size != param_count(arch):
            raise ConfigError("checkpoint weight count does not match its architecture")
        return cls(arch=arch, params=params)
