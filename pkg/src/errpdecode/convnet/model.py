"""The deep ConvNet: construction, forward evaluation, prediction, persistence.

Layer stack for an input of shape (channels, samples)::

    temporal conv (25 filters, length 10) -> spatial conv (25 filters over all
    channels) -> batch-norm -> ELU -> max-pool(3, stride 2)
    3 x [dropout -> conv (50 / 100 / 200 filters, length 10) -> batch-norm
         -> ELU -> max-pool(3, stride 2)]
    dense -> 2 class scores (index 0 = Correct, 1 = Error)

The temporal and spatial convolutions are linear and are evaluated as one
composed convolution; gradients still flow to both factors.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag

CONVNET_FORMAT = "errpdecode.convnet/1"
N_CLASSES = 2
ERROR_UNIT = 1


@dataclass(frozen=True)
class Architecture:
    n_filters: tuple[int, ...] = (25, 25, 50, 100, 200)
    kernel_length: int = 10
    pool_length: int = 3
    stride: int = 2
    # "pool": the stride applies to max-pooling (convolutions unstrided);
    # "conv": temporal convolutions use the stride and pooling keeps stride 3
    stride_on: str = "pool"
    drop_prob: float = 0.5
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "n_filters", tuple(int(f) for f in self.n_filters))
        if len(self.n_filters) < 2:
            raise ValueError("need at least the temporal and spatial filter counts")
        if self.stride_on not in ("pool", "conv"):
            raise ValueError("stride_on must be 'pool' or 'conv'")

    @property
    def n_blocks(self) -> int:
        return len(self.n_filters) - 1

    @property
    def conv_stride(self) -> int:
        return self.stride if self.stride_on == "conv" else 1

    @property
    def pool_stride(self) -> int:
        return self.stride if self.stride_on == "pool" else self.pool_length

    @classmethod
    def reduced(cls, n_blocks: int = 1, **kw) -> "Architecture":
        return cls(n_filters=(25, 25, 50, 100, 200)[: n_blocks + 1], **kw)


class InputTooShortError(ValueError):
    """The temporal length collapses below 1 somewhere in the layer stack."""


def layer_shapes(n_channels: int, n_samples: int, arch: Architecture) -> list[tuple[str, tuple[int, int]]]:
    """(layer name, (features, time)) after every shape-changing layer."""
    k, p = arch.kernel_length, arch.pool_length
    shapes = []
    length = n_samples
    for i, nf in enumerate(arch.n_filters[1:]):
        length = (length - k) // arch.conv_stride + 1
        if length < 1:
            raise InputTooShortError(f"block {i + 1} convolution: input of {n_samples} samples too short")
        shapes.append((f"conv{i + 1}", (nf, length)))
        length = (length - p) // arch.pool_stride + 1
        if length < 1:
            raise InputTooShortError(f"block {i + 1} pooling: input of {n_samples} samples too short")
        shapes.append((f"pool{i + 1}", (nf, length)))
    shapes.append(("dense", (N_CLASSES, 1)))
    return shapes


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass(eq=False)
class ConvNetModel:
    """Parameter container.  ``params`` are trainable, ``buffers`` hold the
    batch-norm running statistics."""

    arch: Architecture
    input_shape: tuple[int, int]
    rng_seed: int
    params: dict[str, np.ndarray] = field(default_factory=dict)
    buffers: dict[str, np.ndarray] = field(default_factory=dict)
    channel_names: tuple[str, ...] | None = None

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    @property
    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    @property
    def layers(self) -> list[tuple[str, tuple[int, int]]]:
        return layer_shapes(*self.input_shape, self.arch)

    def copy(self, dtype=None) -> "ConvNetModel":
        dtype = dtype or self.dtype
        return ConvNetModel(
            arch=self.arch, input_shape=self.input_shape, rng_seed=self.rng_seed,
            params={k: np.array(v, dtype=dtype) for k, v in self.params.items()},
            buffers={k: np.array(v, dtype=dtype) for k, v in self.buffers.items()},
            channel_names=self.channel_names,
        )


def build_deep_convnet(n_channels: int, n_samples: int, seed: int = 0,
                       arch: Architecture | None = None, dtype=np.float32,
                       channel_names=None) -> ConvNetModel:
    arch = arch or Architecture()
    shapes = layer_shapes(n_channels, n_samples, arch)
    rng = np.random.default_rng(seed)
    k = arch.kernel_length
    f = arch.n_filters
    params: dict[str, np.ndarray] = {}
    buffers: dict[str, np.ndarray] = {}
    # kernels are stored (time, in, out) for the channels-last engine
    params["time.w"] = _glorot(rng, (k, f[0]), k, f[0] * k)
    params["time.b"] = np.zeros(f[0])
    params["spat.w"] = _glorot(rng, (n_channels, f[0], f[1]), f[0] * n_channels, f[1] * n_channels)
    for i in range(1, arch.n_blocks + 1):
        if i > 1:
            params[f"conv{i}.w"] = _glorot(rng, (k, f[i - 1], f[i]), f[i - 1] * k, f[i] * k)
        params[f"bn{i}.gamma"] = np.ones(f[i])
        params[f"bn{i}.beta"] = np.zeros(f[i])
        buffers[f"bn{i}.mean"] = np.zeros(f[i])
        buffers[f"bn{i}.var"] = np.ones(f[i])
    final_len = shapes[-2][1][1]
    params["dense.w"] = _glorot(rng, (f[-1] * final_len, N_CLASSES), f[-1] * final_len, N_CLASSES * final_len)
    params["dense.b"] = np.zeros(N_CLASSES)
    return ConvNetModel(
        arch=arch, input_shape=(n_channels, n_samples), rng_seed=seed,
        params={name: v.astype(dtype) for name, v in params.items()},
        buffers={name: v.astype(dtype) for name, v in buffers.items()},
        channel_names=None if channel_names is None else tuple(channel_names),
    )


def _check_batch(model: ConvNetModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 3 or tuple(x.shape[1:]) != tuple(model.input_shape):
        raise ValueError(
            f"batch shape {x.shape} does not match model input (batch, {model.input_shape[0]}, "
            f"{model.input_shape[1]})"
        )
    return x.astype(model.dtype, copy=False)


def build_graph(model: ConvNetModel, x: np.ndarray, training: bool,
                rng: np.random.Generator | None = None, stats: dict | None = None,
                trace: list | None = None):
    """Construct the computation graph; returns (parameter tensors, scores).

    ``trace``, if given, collects the branch decisions of the piecewise
    layers (ELU sign masks, max-pool argmax indices).
    """
    arch = model.arch
    x = _check_batch(model, x)
    P = {name: ag.parameter(v) for name, v in model.params.items()}
    if training and rng is None:
        rng = np.random.default_rng(model.rng_seed)

    # composed temporal+spatial filter: (kernel, channels, out)
    w_first = ag.einsum("kf,cfo->kco", P["time.w"], P["spat.w"])
    b_first = ag.einsum("f,cfo->o", P["time.b"], P["spat.w"])
    # the engine runs channels-last: (batch, time, channels)
    h = ag.conv1d(ag.Tensor(np.ascontiguousarray(x.transpose(0, 2, 1))), w_first,
                  stride=arch.conv_stride)
    h = ag.add_channel_bias(h, b_first)
    for i in range(1, arch.n_blocks + 1):
        if i > 1:
            if training and arch.drop_prob > 0:
                h = ag.dropout(h, arch.drop_prob, rng)
            h = ag.conv1d(h, P[f"conv{i}.w"], stride=arch.conv_stride)
        h = ag.batch_norm(
            h, P[f"bn{i}.gamma"], P[f"bn{i}.beta"],
            model.buffers[f"bn{i}.mean"], model.buffers[f"bn{i}.var"],
            training=training, momentum=arch.bn_momentum, eps=arch.bn_eps,
            stats=stats, key=f"bn{i}",
        )
        h = ag.elu(h, trace)
        h = ag.max_pool1d(h, arch.pool_length, arch.pool_stride, trace)
    scores = ag.dense(h, P["dense.w"], P["dense.b"])
    return P, scores


def forward(model: ConvNetModel, batch: np.ndarray, mode: str = "eval",
            rng: np.random.Generator | None = None, chunk: int = 256) -> np.ndarray:
    """Pre-softmax class scores (batch, 2).

    Eval mode disables dropout and uses the running batch-norm statistics, so
    it is a pure function of (parameters, input).  Train mode uses batch
    statistics without updating the running estimates.
    """
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    batch = _check_batch(model, batch)
    if mode == "train":
        return build_graph(model, batch, True, rng)[1].data
    out = [build_graph(model, batch[i:i + chunk], False)[1].data
           for i in range(0, batch.shape[0], chunk)]
    if not out:
        return np.zeros((0, N_CLASSES), dtype=model.dtype)
    return np.concatenate(out)


def penultimate_output(model: ConvNetModel, batch: np.ndarray) -> np.ndarray:
    """The two unit values feeding the softmax, per trial (eval mode)."""
    return forward(model, batch, mode="eval")


def softmax(scores: np.ndarray) -> np.ndarray:
    return np.exp(ag.log_softmax(np.asarray(scores, dtype=np.float64)))


def convnet_predict(model: ConvNetModel, es) -> tuple[np.ndarray, np.ndarray]:
    """Labels (1 = Error when its score is strictly larger) and scores."""
    if model.channel_names is not None and tuple(es.channel_names) != model.channel_names:
        raise ValueError("epoch channels do not match the model's channels")
    scores = forward(model, es.trials, mode="eval")
    labels = (scores[:, ERROR_UNIT] > scores[:, 1 - ERROR_UNIT]).astype(np.int8)
    return labels, scores


def save_convnet(model: ConvNetModel, path) -> None:
    stem = Path(path)
    stem = stem.with_suffix("") if stem.suffix == ".json" else stem
    stem.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": CONVNET_FORMAT,
        "architecture": asdict(model.arch),
        "input_shape": list(model.input_shape),
        "rng_seed": model.rng_seed,
        "dtype": str(np.dtype(model.dtype)),
        "channel_names": None if model.channel_names is None else list(model.channel_names),
        "params": {k: list(v.shape) for k, v in model.params.items()},
        "buffers": {k: list(v.shape) for k, v in model.buffers.items()},
    }
    (stem.parent / (stem.name + ".json")).write_text(json.dumps(manifest, indent=2))
    blobs = {f"param/{k}": v for k, v in model.params.items()}
    blobs.update({f"buffer/{k}": v for k, v in model.buffers.items()})
    with open(stem.parent / (stem.name + ".npz"), "wb") as fh:
        np.savez(fh, **blobs)


def load_convnet(path) -> ConvNetModel:
    stem = Path(path)
    stem = stem.with_suffix("") if stem.suffix == ".json" else stem
    manifest = json.loads((stem.parent / (stem.name + ".json")).read_text())
    if manifest.get("format") != CONVNET_FORMAT:
        raise ValueError(f"{stem}: not a ConvNet model manifest")
    arch_kw = manifest["architecture"]
    arch = Architecture(**{**arch_kw, "n_filters": tuple(arch_kw["n_filters"])})
    with np.load(stem.parent / (stem.name + ".npz")) as blobs:
        params = {k: blobs[f"param/{k}"] for k in manifest["params"]}
        buffers = {k: blobs[f"buffer/{k}"] for k in manifest["buffers"]}
    for k, shape in manifest["params"].items():
        if list(params[k].shape) != shape:
            raise ValueError(f"{stem}: parameter {k} has shape {params[k].shape}, manifest {shape}")
    names = manifest.get("channel_names")
    return ConvNetModel(
        arch=arch, input_shape=tuple(manifest["input_shape"]), rng_seed=manifest["rng_seed"],
        params=params, buffers=buffers, channel_names=None if names is None else tuple(names),
    )
