"""Minimal dense-network engine: forward/backward, losses, optimizers, fit.

All arithmetic is float64 and strictly sequential, so a fixed
(spec, data, config, seed) triple reproduces bit-identical parameters and
loss curves. Hidden layers are ReLU, the output layer is sigmoid; that is
fixed by the task (pixel regression into [0,1]) and not configurable.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import BadHeader, BadMagic, EmptyDataset, ShapeMismatch

log = logging.getLogger(__name__)

NETWORK_MAGIC = b"LILINN1"

# params: one (weights, bias) pair per layer; weights are (out, in).
Params = list[tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class NetworkSpec:
    layer_sizes: tuple[int, ...]  # input, hidden..., output

    def __post_init__(self):
        if len(self.layer_sizes) < 3:
            raise ValueError("need at least one hidden layer")
        if any(n < 1 for n in self.layer_sizes):
            raise ValueError("layer sizes must be positive")

    @property
    def input_len(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_len(self) -> int:
        return self.layer_sizes[-1]

    def parameter_count(self) -> int:
        sizes = self.layer_sizes
        return sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))


@dataclass
class TrainConfig:
    """Optimizer, batching, loss, and stopping policy for one fit() run."""

    optimizer: str = "adam"  # "adam" | "sgd"
    lr: float = 1e-3
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    loss: str = "mse"  # "mse" | "rss"
    max_epochs: int = 200
    patience: int = 10
    min_delta: float = 1e-5
    plateau_factor: float = 0.5
    plateau_patience: int = 5
    lr_floor: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in ("mse", "rss"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.lr <= 0 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("lr must be > 0, batch_size and patience >= 1")


@dataclass
class CurveLog:
    """Per-epoch training history plus the index of the best epoch."""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss,lr"]
        for i, (t, v, r) in enumerate(zip(self.train_loss, self.val_loss, self.lr)):
            lines.append(f"{i},{t!r},{v!r},{r!r}")
        return "\n".join(lines) + "\n"


def init_network(spec: NetworkSpec, seed: int) -> Params:
    """Uniform fan-based weights in +-sqrt(6/(fan_in+fan_out)), zero biases."""
    rng = np.random.default_rng(seed)
    params: Params = []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = np.zeros(fan_out)
        params.append((w, b))
    return params


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(params: Params, batch: np.ndarray, want_cache: bool = False):
    """Forward pass: ReLU hidden layers, sigmoid output in [0,1].

    Returns (outputs, cache); the cache holds the layer activations needed
    by the backward pass (None unless requested).
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params[0][0].shape[1]:
        raise ShapeMismatch(
            f"batch shape {x.shape} does not match input size {params[0][0].shape[1]}"
        )
    activations = [x]
    for li, (w, b) in enumerate(params):
        z = activations[-1] @ w.T + b
        a = _sigmoid(z) if li == len(params) - 1 else np.maximum(z, 0.0)
        activations.append(a)
    return activations[-1], (activations if want_cache else None)


def _loss_and_output_grad(pred, targets, loss_kind, batch_n):
    diff = pred - targets
    if loss_kind == "mse":
        k = pred.shape[1]
        loss = float(np.sum(diff * diff) / (batch_n * k))
        dpred = (2.0 / (batch_n * k)) * diff
    else:  # rss: mean over the batch of per-sample euclidean norms
        norms = np.sqrt(np.sum(diff * diff, axis=1))
        loss = float(np.sum(norms) / batch_n)
        inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
        dpred = diff * (inv / batch_n)[:, None]
    return loss, dpred


def loss_and_grad(
    params: Params, batch: np.ndarray, targets: np.ndarray, loss_kind: str = "mse"
) -> tuple[float, Params]:
    """Loss plus exact analytic gradients, same shapes as the parameters."""
    y = np.asarray(targets, dtype=np.float64)
    pred, acts = forward(params, batch, want_cache=True)
    if y.shape != pred.shape:
        raise ShapeMismatch(f"target shape {y.shape} != prediction shape {pred.shape}")
    n = pred.shape[0]
    loss, dpred = _loss_and_output_grad(pred, y, loss_kind, n)

    grads: Params = [None] * len(params)  # type: ignore[list-item]
    delta = dpred * pred * (1.0 - pred)  # sigmoid backward at the output
    for li in range(len(params) - 1, -1, -1):
        a_prev = acts[li]
        grads[li] = (delta.T @ a_prev, delta.sum(axis=0))
        if li > 0:
            delta = (delta @ params[li][0]) * (acts[li] > 0.0)
    return loss, grads


def evaluate_loss(
    params: Params,
    x: np.ndarray,
    y: np.ndarray,
    loss_kind: str = "mse",
    chunk: int = 1024,
) -> float:
    """Dataset loss computed in chunks (weighted like one full batch)."""
    n = x.shape[0]
    if n == 0:
        raise EmptyDataset("cannot evaluate loss on an empty dataset")
    total = 0.0
    for lo in range(0, n, chunk):
        xb = x[lo : lo + chunk].astype(np.float64)
        yb = y[lo : lo + chunk].astype(np.float64)
        pred, _ = forward(params, xb)
        loss, _ = _loss_and_output_grad(pred, yb, loss_kind, xb.shape[0])
        total += loss * xb.shape[0]
    return total / n


def finite_difference_grads(
    params: Params,
    batch: np.ndarray,
    targets: np.ndarray,
    loss_kind: str = "mse",
    step: float = 1e-5,
) -> Params:
    """Central-difference gradient oracle; independent of the backward pass."""
    x = np.asarray(batch, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)

    def loss_at() -> float:
        pred, _ = forward(params, x)
        loss, _ = _loss_and_output_grad(pred, y, loss_kind, x.shape[0])
        return loss

    grads: Params = []
    for w, b in params:
        gw = np.zeros_like(w)
        gb = np.zeros_like(b)
        for arr, g in ((w, gw), (b, gb)):
            flat = arr.ravel()
            gflat = g.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                hi = loss_at()
                flat[i] = orig - step
                lo = loss_at()
                flat[i] = orig
                gflat[i] = (hi - lo) / (2.0 * step)
        grads.append((gw, gb))
    return grads


def max_relative_error(analytic: Params, numeric: Params, floor: float = 1e-3) -> float:
    """Worst |a-n| / max(|a|, |n|, floor) over all parameters.

    The floor turns the comparison absolute for near-zero gradients, where
    a pure ratio would only amplify finite-difference noise.
    """
    worst = 0.0
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def grad_check(spec: NetworkSpec, seed: int, loss_kind: str = "mse") -> float:
    """Max relative error between analytic and central-difference gradients
    on a random batch; intended for small specs only."""
    rng = np.random.default_rng(seed)
    params = init_network(spec, seed)
    x = rng.uniform(-1.0, 1.0, size=(4, spec.input_len))
    y = rng.integers(0, 2, size=(4, spec.output_len)).astype(np.float64)
    _, analytic = loss_and_grad(params, x, y, loss_kind)
    numeric = finite_difference_grads(params, x, y, loss_kind)
    return max_relative_error(analytic, numeric)


@dataclass
class SgdState:
    lr: float
    momentum: float
    velocity: list[tuple[np.ndarray, np.ndarray]]
    scratch: list[tuple[np.ndarray, np.ndarray]]


@dataclass
class AdamState:
    lr: float
    beta1: float
    beta2: float
    eps: float
    t: int
    m: list[tuple[np.ndarray, np.ndarray]]
    v: list[tuple[np.ndarray, np.ndarray]]
    scratch: list[tuple[np.ndarray, np.ndarray]]


def make_optimizer(cfg: TrainConfig, params: Params):
    zeros = lambda: [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
    if cfg.optimizer == "sgd":
        return SgdState(lr=cfg.lr, momentum=cfg.momentum, velocity=zeros(), scratch=zeros())
    return AdamState(
        lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps, t=0,
        m=zeros(), v=zeros(), scratch=zeros(),
    )


def optimizer_step(state, params: Params, grads: Params):
    """One update step. Parameters and state are updated in place and
    returned (SGD: v <- m*v - lr*g, w <- w + v; Adam: bias-corrected).

    Elementwise work runs through preallocated scratch buffers; the update
    is deterministic either way, this just avoids temporary allocations in
    the hot loop.
    """
    if isinstance(state, SgdState):
        for (w, b), (gw, gb), (vw, vb), (sw, sb) in zip(
            params, grads, state.velocity, state.scratch
        ):
            for arr, g, v, s in ((w, gw, vw, sw), (b, gb, vb, sb)):
                np.multiply(g, state.lr, out=s)
                v *= state.momentum
                v -= s
                arr += v
        return params, state
    if isinstance(state, AdamState):
        state.t += 1
        c1 = 1.0 - state.beta1**state.t
        c2 = 1.0 - state.beta2**state.t
        k1 = 1.0 - state.beta1
        k2 = 1.0 - state.beta2
        for (w, b), (gw, gb), (mw, mb), (vw, vb), (sw, sb) in zip(
            params, grads, state.m, state.v, state.scratch
        ):
            for arr, g, m, v, s in ((w, gw, mw, vw, sw), (b, gb, mb, vb, sb)):
                m *= state.beta1
                np.multiply(g, k1, out=s)
                m += s
                v *= state.beta2
                np.multiply(g, g, out=s)
                s *= k2
                v += s
                # arr -= lr * (m/c1) / (sqrt(v/c2) + eps)
                np.divide(v, c2, out=s)
                np.sqrt(s, out=s)
                s += state.eps
                np.divide(m, s, out=s)
                s *= state.lr / c1
                arr -= s
        return params, state
    raise TypeError(f"unknown optimizer state {type(state).__name__}")


def fit(
    spec: NetworkSpec,
    train_data: tuple[np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray],
    cfg: TrainConfig,
    label: str = "net",
) -> tuple[Params, CurveLog]:
    """Train until validation loss stops improving; return the parameters
    of the best validation epoch and the full curve log.

    SGD runs learning-rate plateau decay (factor/patience/floor from the
    config); Adam keeps its rate fixed.
    """
    x_train, y_train = train_data
    x_val, y_val = val_data
    n = x_train.shape[0]
    if n == 0 or x_val.shape[0] == 0:
        raise EmptyDataset("training and validation sets must be non-empty")

    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    params = init_network(spec, int(seeds[0].generate_state(1)[0]))
    shuffle_rng = np.random.default_rng(seeds[1])
    state = make_optimizer(cfg, params)

    curve = CurveLog()
    best_val = np.inf
    best_params: Params = [(w.copy(), b.copy()) for w, b in params]
    stop_ref = np.inf
    stall = 0
    plateau_ref = np.inf
    plateau_stall = 0

    for epoch in range(cfg.max_epochs):
        perm = shuffle_rng.permutation(n)
        loss_sum = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            xb = x_train[idx].astype(np.float64)
            yb = y_train[idx].astype(np.float64)
            loss, grads = loss_and_grad(params, xb, yb, cfg.loss)
            optimizer_step(state, params, grads)
            loss_sum += loss * idx.size
        train_loss = loss_sum / n
        val_loss = evaluate_loss(params, x_val, y_val, cfg.loss)

        curve.train_loss.append(train_loss)
        curve.val_loss.append(val_loss)
        curve.lr.append(state.lr)
        if val_loss < best_val:
            best_val = val_loss
            best_params = [(w.copy(), b.copy()) for w, b in params]
            curve.best_epoch = epoch
        log.info(
            "%s epoch %d train %.6g val %.6g lr %.4g", label, epoch, train_loss, val_loss, state.lr
        )

        if val_loss < stop_ref - cfg.min_delta:
            stop_ref = val_loss
            stall = 0
        else:
            stall += 1
        if cfg.optimizer == "sgd":
            if val_loss < plateau_ref - cfg.min_delta:
                plateau_ref = val_loss
                plateau_stall = 0
            else:
                plateau_stall += 1
                if plateau_stall >= cfg.plateau_patience and state.lr > cfg.lr_floor:
                    state.lr = max(state.lr * cfg.plateau_factor, cfg.lr_floor)
                    plateau_stall = 0
                    log.info("%s plateau: lr reduced to %.4g", label, state.lr)
        if stall >= cfg.patience:
            break
    return best_params, curve


def spec_of(params: Params) -> NetworkSpec:
    sizes = [params[0][0].shape[1]] + [w.shape[0] for w, _ in params]
    return NetworkSpec(tuple(sizes))


def write_network(fh, spec: NetworkSpec, params: Params) -> None:
    """Stream format: magic line, JSON header line, then raw little-endian
    float64 (per layer: weights row-major, then bias)."""
    head = {
        "layer_sizes": list(spec.layer_sizes),
        "hidden_activation": "relu",
        "output_activation": "sigmoid",
    }
    fh.write(NETWORK_MAGIC + b"\n")
    fh.write(json.dumps(head, separators=(",", ":")).encode("ascii") + b"\n")
    for w, b in params:
        fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def read_network(fh) -> tuple[NetworkSpec, Params]:
    magic = fh.readline().rstrip(b"\n")
    if magic != NETWORK_MAGIC:
        raise BadMagic(f"expected network magic {NETWORK_MAGIC!r}, got {magic!r}")
    try:
        head = json.loads(fh.readline().decode("ascii"))
        spec = NetworkSpec(tuple(int(s) for s in head["layer_sizes"]))
        if head["hidden_activation"] != "relu" or head["output_activation"] != "sigmoid":
            raise ValueError("unsupported activations")
    except (ValueError, KeyError, TypeError) as exc:
        raise BadHeader(f"bad network header: {exc}") from exc
    params: Params = []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        nbytes = (fan_out * fan_in + fan_out) * 8
        raw = fh.read(nbytes)
        if len(raw) != nbytes:
            raise BadHeader("truncated network payload")
        flat = np.frombuffer(raw, dtype="<f8")
        w = flat[: fan_out * fan_in].reshape(fan_out, fan_in).copy()
        b = flat[fan_out * fan_in :].copy()
        params.append((w, b))
    if not np.all([np.isfinite(w).all() and np.isfinite(b).all() for w, b in params]):
        raise BadHeader("non-finite values in network payload")
    return spec, params
