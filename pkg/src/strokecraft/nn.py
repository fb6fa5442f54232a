"""Small flat-parameter neural nets with hand-written backprop.

All trainable weights live in one contiguous float64 vector so optimizers,
checkpoints, and finite-difference checks can treat a model as a plain point
in R^n.  Layers are functional: forward returns whatever the matching
backward needs.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import DataIOError

CHECKPOINT_MAGIC_KEY = "format"
CHECKPOINT_FORMAT = "flat-f64-v1"


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def dtanh(y: np.ndarray) -> np.ndarray:
    # derivative expressed through the activation output
    return 1.0 - y * y


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def dsigmoid(y: np.ndarray) -> np.ndarray:
    return y * (1.0 - y)


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w + b


def linear_backward(
    x: np.ndarray, w: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    grad_x = grad_out @ w.T
    grad_w = x.T @ grad_out
    grad_b = grad_out.sum(axis=0)
    return grad_x, grad_w, grad_b


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    b, c, h, w = x.shape
    hp = (h + 2 * pad - kh) // stride + 1
    wp = (w + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((b, c, kh, kw, hp, wp), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * hp : stride, j : j + stride * wp : stride]
    return cols.reshape(b, c * kh * kw, hp * wp)


def _col2im(
    cols: np.ndarray, x_shape: tuple, kh: int, kw: int, stride: int, pad: int
) -> np.ndarray:
    b, c, h, w = x_shape
    hp = (h + 2 * pad - kh) // stride + 1
    wp = (w + 2 * pad - kw) // stride + 1
    cols = cols.reshape(b, c, kh, kw, hp, wp)
    xp = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + stride * hp : stride, j : j + stride * wp : stride] += cols[
                :, :, i, j
            ]
    if pad:
        return xp[:, :, pad:-pad, pad:-pad]
    return xp


def conv2d_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1, pad: int = 1
) -> tuple[np.ndarray, tuple]:
    """x (B,C,H,W), w (Cout,Cin,kh,kw), b (Cout,) -> out (B,Cout,H',W') plus cache."""
    cout, cin, kh, kw = w.shape
    cols = _im2col(x, kh, kw, stride, pad)
    out = np.einsum("ok,bkp->bop", w.reshape(cout, -1), cols) + b[None, :, None]
    bsz = x.shape[0]
    hp = (x.shape[2] + 2 * pad - kh) // stride + 1
    wp = (x.shape[3] + 2 * pad - kw) // stride + 1
    return out.reshape(bsz, cout, hp, wp), (cols, x.shape, w.shape, stride, pad)


def conv2d_backward(
    cache: tuple, w: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cols, x_shape, w_shape, stride, pad = cache
    cout, cin, kh, kw = w_shape
    bsz = grad_out.shape[0]
    gmat = grad_out.reshape(bsz, cout, -1)
    grad_w = np.einsum("bop,bkp->ok", gmat, cols).reshape(w_shape)
    grad_b = gmat.sum(axis=(0, 2))
    grad_cols = np.einsum("ok,bop->bkp", w.reshape(cout, -1), gmat)
    grad_x = _col2im(grad_cols, x_shape, kh, kw, stride, pad)
    return grad_x, grad_w, grad_b


class Adam:
    """Standard Adam on a flat parameter vector."""

    def __init__(self, size: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def update(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        params -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def save_checkpoint(path, arch: dict, params: np.ndarray) -> None:
    """Length-prefixed UTF-8 JSON architecture header, then little-endian f64 weights."""
    header = dict(arch)
    header[CHECKPOINT_MAGIC_KEY] = CHECKPOINT_FORMAT
    header["param_count"] = int(params.size)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(params, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict, np.ndarray]:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataIOError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < 4:
        raise DataIOError(f"checkpoint {path} too short for a header")
    (hlen,) = struct.unpack("<I", raw[:4])
    if len(raw) < 4 + hlen:
        raise DataIOError(f"checkpoint {path} truncated inside the header")
    try:
        header = json.loads(raw[4 : 4 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataIOError(f"checkpoint {path} has a malformed header: {exc}") from exc
    if header.get(CHECKPOINT_MAGIC_KEY) != CHECKPOINT_FORMAT:
        raise DataIOError(f"checkpoint {path} has unknown format {header.get(CHECKPOINT_MAGIC_KEY)!r}")
    body = raw[4 + hlen :]
    if len(body) % 8:
        raise DataIOError(f"checkpoint {path} weight section is not a whole number of f64s")
    params = np.frombuffer(body, dtype="<f8").astype(np.float64)
    expected = header.get("param_count")
    if expected is not None and params.size != expected:
        raise DataIOError(
            f"checkpoint {path} holds {params.size} weights, header promises {expected}"
        )
    return header, params
