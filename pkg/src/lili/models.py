"""Task-level learners: the dense baseline and the three-subtask
divide-and-conquer model for multiplication (carry, non-carry, synthesis).
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import codec, nn
from .datagen import Dataset, TaskShape, materialize_split
from .errors import BadHeader, BadMagic, MissingCarrySplit, ShapeMismatch
from .nn import CurveLog, NetworkSpec, Params, TrainConfig

log = logging.getLogger(__name__)

MLP_MAGIC = b"LILIMLP1"
DCM_MAGIC = b"LILIDCM1"

HIDDEN_WIDTH = 256
BASELINE_HIDDEN_LAYERS = 3
DCM_SPLIT_HIDDEN_LAYERS = 5
DCM_SYNTH_HIDDEN_LAYERS = 3

BRIDGE_MODES = ("binarize", "raw")


@dataclass
class TrainedNet:
    spec: NetworkSpec
    params: Params

    def outputs(self, x: np.ndarray) -> np.ndarray:
        out, _ = nn.forward(self.params, x)
        return out


@dataclass
class BaselineModel:
    net: TrainedNet
    shape: TaskShape

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        """Flattened {0,1} output images for a batch of input vectors."""
        return codec.binarize(self.net.outputs(_as_f64(x)), 0.5)


@dataclass
class DcmModel:
    """Carry and non-carry nets read (a, b); their predictions are bridged
    into the synthesis net, which alone produces the final image. Only the
    operand images are reachable from the inference path.
    """

    carry: TrainedNet
    noncarry: TrainedNet
    synthetic: TrainedNet
    shape: TaskShape
    bridge_mode: str = "binarize"

    def __post_init__(self):
        if self.bridge_mode not in BRIDGE_MODES:
            raise ValueError(f"unknown bridge mode {self.bridge_mode!r}")

    def subtask_outputs(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = _as_f64(x)
        return self.carry.outputs(x), self.noncarry.outputs(x)

    def bridge(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Map the two prediction layers into the synthesis net's input
        distribution (+-1). Default cleans them up by thresholding first;
        "raw" keeps the sigmoid activations, affinely rescaled."""
        if self.bridge_mode == "binarize":
            u = codec.binarize(u, 0.5).astype(np.float64)
            v = codec.binarize(v, 0.5).astype(np.float64)
        return np.concatenate([u * 2.0 - 1.0, v * 2.0 - 1.0], axis=1)

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        u, v = self.subtask_outputs(x)
        return codec.binarize(self.synthetic.outputs(self.bridge(u, v)), 0.5)


def _as_f64(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def mlp_baseline_spec(shape: TaskShape) -> NetworkSpec:
    k = shape.pixels
    return NetworkSpec((2 * k, *([HIDDEN_WIDTH] * BASELINE_HIDDEN_LAYERS), k))


def dcm_specs(shape: TaskShape) -> tuple[NetworkSpec, NetworkSpec, NetworkSpec]:
    k = shape.pixels
    split = NetworkSpec((2 * k, *([HIDDEN_WIDTH] * DCM_SPLIT_HIDDEN_LAYERS), k))
    synth = NetworkSpec((2 * k, *([HIDDEN_WIDTH] * DCM_SYNTH_HIDDEN_LAYERS), k))
    return split, split, synth


def default_baseline_config(seed: int = 0, **overrides) -> TrainConfig:
    cfg = TrainConfig(optimizer="adam", lr=1e-3, batch_size=32, seed=seed)
    return replace(cfg, **overrides)


def default_dcm_config(seed: int = 0, **overrides) -> TrainConfig:
    cfg = TrainConfig(
        optimizer="sgd",
        lr=0.8,
        momentum=0.9,
        batch_size=256,
        seed=seed,
    )
    return replace(cfg, **overrides)


def train_baseline(
    dataset: Dataset,
    cfg: TrainConfig | None = None,
    seed: int = 0,
    overrides: dict | None = None,
) -> tuple[BaselineModel, CurveLog]:
    """Fit the baseline on a dataset's train split, early-stopped on val.

    Without an explicit config this follows the selection protocol: train
    once with Adam (lr 1e-3) and once with SGD (lr 0.1), both at batch 32,
    and keep whichever reaches the lower validation loss. `overrides`
    (batch size, epoch budget, ...) apply to both candidates.
    """
    shape = dataset.config.task_shape()
    spec = mlp_baseline_spec(shape)
    x_train, y_train, _ = materialize_split(dataset.train, shape)
    x_val, y_val, _ = materialize_split(dataset.val, shape)

    o = dict(overrides or {})
    candidates = (
        [cfg]
        if cfg is not None
        else [
            default_baseline_config(seed, **o),
            default_baseline_config(seed, **{"optimizer": "sgd", "lr": 0.1, **o}),
        ]
    )
    best = None
    for cand in candidates:
        params, curve = nn.fit(
            spec, (x_train, y_train), (x_val, y_val), cand, label=f"mlp/{cand.optimizer}"
        )
        score = curve.val_loss[curve.best_epoch]
        if best is None or score < best[0]:
            best = (score, params, curve, cand)
    _, params, curve, chosen = best
    if len(candidates) > 1:
        log.info("baseline optimizer selected by validation: %s", chosen.optimizer)
    return BaselineModel(TrainedNet(spec, params), shape), curve


def train_dcm(
    dataset: Dataset, cfg: TrainConfig | None = None, bridge_mode: str = "binarize"
) -> tuple[DcmModel, dict[str, CurveLog]]:
    """Fit the three subtasks separately and assemble the full model.

    Carry and non-carry nets map operand images to the carry/non-carry
    target images; the synthesis net maps ground-truth carry/non-carry
    images (normalized to +-1) to the product image.
    """
    if any(r.c is None or r.d is None for r in dataset.train[:1]):
        raise MissingCarrySplit("dataset was generated without carry split values")
    cfg = cfg or default_dcm_config()
    shape = dataset.config.task_shape()
    carry_spec, noncarry_spec, synth_spec = dcm_specs(shape)

    x_train, y_train, aux_train = materialize_split(dataset.train, shape, with_aux=True)
    x_val, y_val, aux_val = materialize_split(dataset.val, shape, with_aux=True)
    yc_train, yd_train = aux_train
    yc_val, yd_val = aux_val
    # synthesis inputs are the ground-truth carry/non-carry images
    xs_train = synthesis_inputs(yc_train, yd_train)
    xs_val = synthesis_inputs(yc_val, yd_val)

    sub_seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    seeds = [int(s.generate_state(1)[0]) for s in sub_seeds]
    nets = {}
    curves: dict[str, CurveLog] = {}
    jobs = [
        ("carry", carry_spec, (x_train, yc_train), (x_val, yc_val)),
        ("noncarry", noncarry_spec, (x_train, yd_train), (x_val, yd_val)),
        ("synthetic", synth_spec, (xs_train, y_train), (xs_val, y_val)),
    ]
    for (name, spec, train, val), sub_seed in zip(jobs, seeds):
        params, curve = nn.fit(spec, train, val, replace(cfg, seed=sub_seed), label=name)
        nets[name] = TrainedNet(spec, params)
        curves[name] = curve
    model = DcmModel(
        carry=nets["carry"],
        noncarry=nets["noncarry"],
        synthetic=nets["synthetic"],
        shape=shape,
        bridge_mode=bridge_mode,
    )
    return model, curves


def synthesis_inputs(yc: np.ndarray, yd: np.ndarray) -> np.ndarray:
    """Concatenate carry/non-carry target bits as a +-1 synthesis input."""
    return np.concatenate(
        [yc.astype(np.int8) * 2 - 1, yd.astype(np.int8) * 2 - 1], axis=1
    )


def baseline_predict(model: BaselineModel, a_img: np.ndarray, b_img: np.ndarray) -> np.ndarray:
    """Predicted output image for one pair of normalized input images."""
    x = _stack_pair(model.shape, a_img, b_img)
    bits = model.predict_batch(x)
    return bits.reshape(model.shape.output_field.rows, model.shape.output_field.width)


def dcm_predict(model: DcmModel, a_img: np.ndarray, b_img: np.ndarray) -> np.ndarray:
    """End-to-end prediction from the two operand images alone."""
    x = _stack_pair(model.shape, a_img, b_img)
    bits = model.predict_batch(x)
    return bits.reshape(model.shape.output_field.rows, model.shape.output_field.width)


def _stack_pair(shape: TaskShape, a_img: np.ndarray, b_img: np.ndarray) -> np.ndarray:
    f = shape.input_field
    want = (f.rows, f.width)
    if a_img.shape != want or b_img.shape != want:
        raise ShapeMismatch(f"input images must have shape {want}")
    return np.concatenate([a_img.ravel(), b_img.ravel()])[None, :]


def model_bytes(model: BaselineModel | DcmModel) -> bytes:
    buf = io.BytesIO()
    if isinstance(model, BaselineModel):
        head = {"shape": model.shape.to_json_dict()}
        buf.write(MLP_MAGIC + b"\n")
        buf.write(json.dumps(head, separators=(",", ":")).encode("ascii") + b"\n")
        nn.write_network(buf, model.net.spec, model.net.params)
    else:
        head = {"shape": model.shape.to_json_dict(), "bridge_mode": model.bridge_mode}
        buf.write(DCM_MAGIC + b"\n")
        buf.write(json.dumps(head, separators=(",", ":")).encode("ascii") + b"\n")
        for net in (model.carry, model.noncarry, model.synthetic):
            nn.write_network(buf, net.spec, net.params)
    return buf.getvalue()


def save_model(path, model: BaselineModel | DcmModel) -> None:
    Path(path).write_bytes(model_bytes(model))


def load_model(path) -> BaselineModel | DcmModel:
    with open(path, "rb") as fh:
        magic = fh.readline().rstrip(b"\n")
        if magic not in (MLP_MAGIC, DCM_MAGIC):
            raise BadMagic(f"unknown model magic {magic!r}")
        try:
            head = json.loads(fh.readline().decode("ascii"))
            shape = TaskShape.from_json_dict(head["shape"])
        except (ValueError, KeyError, TypeError) as exc:
            raise BadHeader(f"bad model header: {exc}") from exc
        if magic == MLP_MAGIC:
            spec, params = nn.read_network(fh)
            _check_io(spec, shape)
            return BaselineModel(TrainedNet(spec, params), shape)
        bridge_mode = head.get("bridge_mode", "binarize")
        nets = []
        for _ in range(3):
            spec, params = nn.read_network(fh)
            _check_io(spec, shape)
            nets.append(TrainedNet(spec, params))
        return DcmModel(nets[0], nets[1], nets[2], shape, bridge_mode)


def _check_io(spec: NetworkSpec, shape: TaskShape) -> None:
    if spec.input_len != shape.input_len or spec.output_len != shape.output_len:
        raise ShapeMismatch(
            f"network {spec.layer_sizes} does not fit task with K={shape.pixels}"
        )
