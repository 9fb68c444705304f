"""Stacked LSTM regressor with a dense head, trained by BPTT and Adam.

Everything runs in float64 numpy. Gate blocks inside each fused weight
matrix are ordered ``[input, forget, output, candidate]``.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .timeseries import WindowedDataset

logger = logging.getLogger(__name__)

ACTIVATIONS = ("sigmoid", "relu", "tanh", "linear")


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    """Raised when a forward/backward intermediate stops being finite."""

    def __init__(self, block: str):
        super().__init__(f"non-finite values in {block}")
        self.block = block


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    input_channels: int = 1
    layer_widths: tuple[int, ...] = (64, 64, 64)
    activations: tuple[str, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if self.activations is None:
            acts = ("sigmoid",) + ("relu",) * (len(self.layer_widths) - 1)
            object.__setattr__(self, "activations", acts)
        else:
            object.__setattr__(self, "activations", tuple(self.activations))
        if self.input_channels < 1:
            raise ValueError("input_channels must be >= 1")
        if not self.layer_widths or any(w <= 0 for w in self.layer_widths):
            raise ValueError(f"layer widths must be positive, got {self.layer_widths}")
        if len(self.activations) != len(self.layer_widths):
            raise ValueError("one activation per layer is required")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")


@dataclass
class LSTMLayer:
    W: np.ndarray  # (n_in, 4H) input kernel
    U: np.ndarray  # (H, 4H) recurrent kernel
    b: np.ndarray  # (4H,)

    @property
    def width(self) -> int:
        return self.U.shape[0]


def _block_shapes(config: NetworkConfig) -> list[tuple[int, ...]]:
    shapes = []
    n_in = config.input_channels
    for h in config.layer_widths:
        shapes.extend(((n_in, 4 * h), (h, 4 * h), (4 * h,)))
        n_in = h
    shapes.extend(((n_in,), (1,)))
    return shapes


class NetworkParams:
    """All weights of the network, stored as views into one flat float64 buffer.

    Block order (also the checkpoint order): for each layer ``W, U, b``,
    then the head weight vector and the head bias.
    """

    def __init__(self, config: NetworkConfig, flat: np.ndarray | None = None):
        self.config = config
        shapes = _block_shapes(config)
        size = sum(math.prod(s) for s in shapes)
        if flat is None:
            flat = np.zeros(size)
        elif flat.shape != (size,):
            raise ShapeError(f"flat buffer has shape {flat.shape}, expected ({size},)")
        self.flat = flat
        blocks = []
        offset = 0
        for s in shapes:
            k = math.prod(s)
            blocks.append(flat[offset:offset + k].reshape(s))
            offset += k
        self._blocks = blocks
        self.layers = [LSTMLayer(*blocks[3 * i:3 * i + 3]) for i in range(len(config.layer_widths))]
        self.head_w = blocks[-2]
        self.head_b = blocks[-1]

    def arrays(self) -> list[np.ndarray]:
        return list(self._blocks)

    def names(self) -> list[str]:
        out = []
        for i in range(len(self.layers)):
            out.extend((f"layer{i}.W", f"layer{i}.U", f"layer{i}.b"))
        out.extend(("head.w", "head.b"))
        return out

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.config, self.flat.copy())

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams(self.config)

    @property
    def n_params(self) -> int:
        return self.flat.size


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(config: NetworkConfig) -> NetworkParams:
    """Glorot-uniform kernels (fan_out counts all four gates), zero biases, forget bias 1."""
    rng = np.random.default_rng(config.seed)
    params = NetworkParams(config)
    n_in = config.input_channels
    for layer, h in zip(params.layers, config.layer_widths):
        lim_w = glorot_bound(n_in, 4 * h)
        lim_u = glorot_bound(h, 4 * h)
        layer.W[...] = rng.uniform(-lim_w, lim_w, size=(n_in, 4 * h))
        layer.U[...] = rng.uniform(-lim_u, lim_u, size=(h, 4 * h))
        layer.b[h:2 * h] = 1.0
        n_in = h
    lim = glorot_bound(n_in, 1)
    params.head_w[...] = rng.uniform(-lim, lim, size=n_in)
    return params


def _sigmoid(x, out=None):
    # tanh form never overflows
    out = np.multiply(x, 0.5, out=out)
    np.tanh(out, out=out)
    out *= 0.5
    out += 0.5
    return out


def _activate(name: str, h: np.ndarray) -> np.ndarray:
    if name == "sigmoid":
        return _sigmoid(h)
    if name == "relu":
        return np.maximum(h, 0.0)
    if name == "tanh":
        return np.tanh(h)
    return h


def _activate_grad(name: str, h: np.ndarray, y: np.ndarray) -> np.ndarray:
    if name == "sigmoid":
        return y * (1.0 - y)
    if name == "relu":
        return (h > 0).astype(h.dtype)
    if name == "tanh":
        return 1.0 - y * y
    return np.ones_like(h)


@dataclass
class _LayerCache:
    x: np.ndarray  # (T, B, n_in)
    h: np.ndarray  # (T+1, B, H), h[0] = 0
    c: np.ndarray  # (T+1, B, H)
    gates: np.ndarray  # (T, B, 4H) post-nonlinearity
    tanh_c: np.ndarray  # (T, B, H)
    y: np.ndarray  # (T, B, H) activated output sequence


@dataclass
class ForwardCache:
    layers: list[_LayerCache] = field(default_factory=list)
    top: np.ndarray | None = None  # (B, H_top) last-step output of the top layer


def _check_batch(params: NetworkParams, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 3:
        raise ShapeError(f"batch must be B x p x C, got shape {batch.shape}")
    if batch.shape[2] != params.config.input_channels:
        raise ShapeError(
            f"batch has {batch.shape[2]} channels, network expects {params.config.input_channels}"
        )
    if batch.shape[0] == 0 or batch.shape[1] == 0:
        raise ShapeError("empty batch")
    return batch


def forward(params: NetworkParams, batch: np.ndarray, return_cache: bool = False):
    """Predict one scalar per row of a ``B x p x C`` batch."""
    batch = _check_batch(params, batch)
    B, T, _ = batch.shape
    seq = np.ascontiguousarray(batch.transpose(1, 0, 2))  # (T, B, C)
    cache = ForwardCache()
    for layer, act in zip(params.layers, params.config.activations):
        H = layer.width
        h = np.zeros((T + 1, B, H))
        c = np.zeros((T + 1, B, H))
        gates = np.empty((T, B, 4 * H))
        tanh_c = np.empty((T, B, H))
        xw = seq @ layer.W + layer.b  # (T, B, 4H)
        for t in range(T):
            z = xw[t] + h[t] @ layer.U
            g = gates[t]
            _sigmoid(z[:, :3 * H], out=g[:, :3 * H])
            np.tanh(z[:, 3 * H:], out=g[:, 3 * H:])
            c[t + 1] = g[:, H:2 * H] * c[t] + g[:, :H] * g[:, 3 * H:]
            tanh_c[t] = np.tanh(c[t + 1])
            h[t + 1] = g[:, 2 * H:3 * H] * tanh_c[t]
        y = _activate(act, h[1:])
        cache.layers.append(_LayerCache(seq, h, c, gates, tanh_c, y))
        seq = y
    top = seq[-1]
    cache.top = top
    pred = top @ params.head_w + params.head_b[0]
    if return_cache:
        return pred, cache
    return pred


def mse_loss(predictions: Sequence[float], targets: Sequence[float]) -> float:
    p = np.asarray(predictions, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p.size == 0:
        raise ValueError("mse_loss of empty input")
    if p.size != t.size:
        raise ValueError(f"length mismatch: {p.size} predictions vs {t.size} targets")
    d = p - t
    return float(np.dot(d, d) / d.size)


def backward(params: NetworkParams, batch: np.ndarray, targets: np.ndarray,
             cache: ForwardCache | None = None) -> tuple[float, NetworkParams]:
    """Loss and exact gradient of ``mse_loss(forward(batch), targets)``."""
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if cache is None:
        pred, cache = forward(params, batch, return_cache=True)
    else:
        pred = cache.top @ params.head_w + params.head_b[0]
    if targets.size != pred.size:
        raise ShapeError(f"{pred.size} predictions vs {targets.size} targets")
    B = pred.size
    diff = pred - targets
    loss = float(np.dot(diff, diff) / B)
    grads = params.zeros_like()

    dpred = 2.0 * diff / B
    grads.head_w[:] = cache.top.T @ dpred
    grads.head_b[0] = dpred.sum()

    top_cache = cache.layers[-1]
    T = top_cache.y.shape[0]
    dy = np.zeros_like(top_cache.y)
    dy[-1] = np.outer(dpred, params.head_w)

    for li in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[li]
        lc = cache.layers[li]
        act = params.config.activations[li]
        H = layer.width
        dh_seq = dy * _activate_grad(act, lc.h[1:], lc.y)
        dz_all = np.empty((T, dy.shape[1], 4 * H))
        dh_next = np.zeros((dy.shape[1], H))
        dc_next = np.zeros((dy.shape[1], H))
        for t in range(T - 1, -1, -1):
            g = lc.gates[t]
            gi, gf, go, gg = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
            dh = dh_seq[t] + dh_next
            dc = dc_next + dh * go * (1.0 - lc.tanh_c[t] ** 2)
            dz = dz_all[t]
            dz[:, :H] = dc * gg * gi * (1.0 - gi)
            dz[:, H:2 * H] = dc * lc.c[t] * gf * (1.0 - gf)
            dz[:, 2 * H:3 * H] = dh * lc.tanh_c[t] * go * (1.0 - go)
            dz[:, 3 * H:] = dc * gi * (1.0 - gg * gg)
            dc_next = dc * gf
            dh_next = dz @ layer.U.T
        gl = grads.layers[li]
        n_in = lc.x.shape[2]
        gl.W[:] = lc.x.reshape(-1, n_in).T @ dz_all.reshape(-1, 4 * H)
        gl.U[:] = lc.h[:-1].reshape(-1, H).T @ dz_all.reshape(-1, 4 * H)
        gl.b[:] = dz_all.sum(axis=(0, 1))
        if li > 0:
            dy = dz_all @ layer.W.T
    if not np.isfinite(grads.flat.sum()):
        for name, arr in zip(grads.names(), grads.arrays()):
            if not np.all(np.isfinite(arr)):
                raise NonFiniteError(name)
    return loss, grads


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray | None = None  # same layout as NetworkParams.flat
    v: np.ndarray | None = None

    @classmethod
    def for_params(cls, params: NetworkParams, **kw) -> "AdamState":
        return cls(m=np.zeros_like(params.flat), v=np.zeros_like(params.flat), **kw)

    def copy(self) -> "AdamState":
        return copy.deepcopy(self)


def adam_step(params: NetworkParams, grads: NetworkParams, state: AdamState) -> None:
    """In-place Adam update with bias correction."""
    p, g = params.flat, grads.flat
    if state.m is None:
        state.m = np.zeros_like(p)
        state.v = np.zeros_like(p)
    if g.shape != p.shape:
        raise ShapeError(f"gradient buffer {g.shape} does not match parameters {p.shape}")
    if state.m.shape != p.shape or state.v.shape != p.shape:
        raise ShapeError("Adam moment shapes do not match parameter shapes")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    m, v = state.m, state.v
    m *= state.beta1
    m += (1.0 - state.beta1) * g
    v *= state.beta2
    v += (1.0 - state.beta2) * (g * g)
    denom = np.sqrt(v / bc2)
    denom += state.eps
    p -= (state.lr / bc1) * m / denom


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("inf")

    def to_dict(self) -> dict:
        return {
            "train_loss": list(self.train_loss),
            "val_loss": list(self.val_loss),
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainReport":
        return cls(list(d["train_loss"]), list(d["val_loss"]), int(d["best_epoch"]), float(d["best_val_loss"]))


def evaluate(params: NetworkParams, ds: WindowedDataset, chunk: int = 4096) -> float:
    preds = predict(params, ds.inputs, chunk)
    return mse_loss(preds, ds.targets)


def predict(params: NetworkParams, inputs: np.ndarray, chunk: int = 4096) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=np.float64)
    out = [forward(params, inputs[i:i + chunk]) for i in range(0, len(inputs), chunk)]
    return np.concatenate(out) if out else np.zeros(0)


def train(config: NetworkConfig, train_ds: WindowedDataset, val_ds: WindowedDataset,
          epochs: int = 600, batch_size: int = 32, seed: int = 0, lr: float = 1e-3,
          log_every: int = 0) -> tuple[NetworkParams, TrainReport]:
    """Mini-batch Adam over seeded per-epoch permutations; returns the best-validation snapshot.

    Epochs are numbered from 1; ``best_epoch`` is the first epoch attaining
    the minimum validation loss (0 when ``epochs == 0``).
    """
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if train_ds.inputs.shape[1:] != val_ds.inputs.shape[1:]:
        raise ShapeError(
            f"train rows {train_ds.inputs.shape[1:]} and val rows {val_ds.inputs.shape[1:]} differ"
        )
    if train_ds.inputs.shape[2] != config.input_channels:
        raise ShapeError(f"dataset has {train_ds.inputs.shape[2]} channels, config says {config.input_channels}")
    if batch_size < 1:
        raise ValueError("batch_size must be positive")

    params = init_params(config)
    state = AdamState.for_params(params, lr=lr)
    rng = np.random.default_rng(seed)
    report = TrainReport()
    best = params.copy()
    if epochs <= 0:
        report.best_epoch = 0
        return best, report

    X, y = train_ds.inputs, train_ds.targets
    n = len(y)
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            loss, grads = backward(params, X[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            total += loss * len(idx)
            adam_step(params, grads, state)
        train_loss = total / n
        val_loss = evaluate(params, val_ds)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingDiverged(epoch, val_loss)
        report.train_loss.append(train_loss)
        report.val_loss.append(val_loss)
        if val_loss < report.best_val_loss:
            report.best_val_loss = val_loss
            report.best_epoch = epoch
            best = params.copy()
        if log_every and epoch % log_every == 0:
            logger.info("epoch %d train %.6f val %.6f (best %d)", epoch, train_loss, val_loss, report.best_epoch)
    return best, report


# Checkpoint layout (little-endian):
#   8s magic | u32 version | u32 config_len | config json (utf-8)
#   then every block of NetworkParams.arrays() as raw float64, in order.
MAGIC = b"KINNCKPT"
CHECKPOINT_VERSION = 1


def _config_to_dict(config: NetworkConfig) -> dict:
    return {
        "input_channels": config.input_channels,
        "layer_widths": list(config.layer_widths),
        "activations": list(config.activations),
        "seed": config.seed,
    }


def save_checkpoint(params: NetworkParams, path: str | Path) -> None:
    cfg = json.dumps(_config_to_dict(params.config), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(cfg)))
        fh.write(cfg)
        fh.write(params.flat.astype("<f8").tobytes())


def load_checkpoint(path: str | Path) -> NetworkParams:
    data = Path(path).read_bytes()
    header = len(MAGIC) + 8
    if len(data) < header or data[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, cfg_len = struct.unpack_from("<II", data, len(MAGIC))
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, expected {CHECKPOINT_VERSION}")
    if len(data) < header + cfg_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        cfg = json.loads(data[header:header + cfg_len].decode("utf-8"))
        config = NetworkConfig(
            input_channels=cfg["input_channels"],
            layer_widths=tuple(cfg["layer_widths"]),
            activations=tuple(cfg["activations"]),
            seed=cfg["seed"],
        )
    except (ValueError, KeyError) as exc:
        raise CheckpointError(f"{path}: corrupt config block ({exc})") from exc
    offset = header + cfg_len
    size = sum(math.prod(s) for s in _block_shapes(config))
    expected = offset + 8 * size
    if len(data) != expected:
        raise CheckpointError(f"{path}: expected {expected} bytes, found {len(data)}")
    flat = np.frombuffer(data, dtype="<f8", count=size, offset=offset).astype(np.float64)
    return NetworkParams(config, flat)
