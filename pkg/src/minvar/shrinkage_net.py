"""Transformer that maps covariance eigenvalues to shrinkage coefficients.

Each eigenvalue is one token. Token features are scale-normalized by the
mean eigenvalue and carry the aspect ratio c = N/n, so the same weights
serve any matrix size. There is no positional encoding: the map must be
equivariant under permutations of the eigenvalues. The output head ends in
a ReLU, so every coefficient is nonnegative, and the result is divided by
the mean eigenvalue to land in inverse-variance units.

Training differentiates the realized portfolio risk of the induced minimum
variance weights with respect to every network parameter. The eigenvectors
are held fixed: gradients flow through the coefficients only.
"""
from __future__ import annotations

import base64
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff
from .autodiff import Tensor
from .eigen import EigenSystem
from .errors import (
    CollapsedWeightsError,
    DataError,
    ModelIOError,
    NumericError,
    SchemaVersionError,
)

SCHEMA_VERSION = 1

N_FEATURES = 3
FEATURE_EPS = 1e-8
LN_EPS = 1e-5
WEIGHT_SUM_FLOOR = 1e-12

DEFAULT_LR = 1e-4
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters."""

    n_layers: int = 6
    width: int = 32
    n_heads: int = 4
    ff_width: int = 64

    def __post_init__(self):
        if self.n_layers < 1 or self.width < 1 or self.n_heads < 1 or self.ff_width < 1:
            raise DataError("model dimensions must be positive")
        if self.width % self.n_heads != 0:
            raise DataError(
                f"width {self.width} not divisible by head count {self.n_heads}"
            )


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical parameter order and shapes. Serialization relies on this order."""
    d, f = config.width, config.ff_width
    shapes: dict[str, tuple[int, ...]] = {
        "embed.w": (N_FEATURES, d),
        "embed.b": (d,),
    }
    for i in range(config.n_layers):
        p = f"block{i}."
        shapes[p + "ln1.gain"] = (d,)
        shapes[p + "ln1.bias"] = (d,)
        for proj in ("query", "key", "value", "out"):
            shapes[p + f"attn.{proj}.w"] = (d, d)
            shapes[p + f"attn.{proj}.b"] = (d,)
        shapes[p + "ln2.gain"] = (d,)
        shapes[p + "ln2.bias"] = (d,)
        shapes[p + "ff.w1"] = (d, f)
        shapes[p + "ff.b1"] = (f,)
        shapes[p + "ff.w2"] = (f, d)
        shapes[p + "ff.b2"] = (d,)
    shapes["final_ln.gain"] = (d,)
    shapes["final_ln.bias"] = (d,)
    shapes["head.w"] = (d, 1)
    shapes["head.b"] = (1,)
    return shapes


@dataclass
class ShrinkageModel:
    config: ModelConfig
    params: dict[str, np.ndarray]
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        expected = parameter_shapes(self.config)
        if list(self.params.keys()) != list(expected.keys()):
            raise DataError("parameter names do not match the declared order")
        for name, shape in expected.items():
            arr = np.asarray(self.params[name], dtype=np.float64)
            if arr.shape != shape:
                raise DataError(f"parameter {name} has shape {arr.shape}, want {shape}")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"parameter {name} contains non-finite entries")
            self.params[name] = arr

    def copy(self) -> "ShrinkageModel":
        return ShrinkageModel(
            self.config, {k: v.copy() for k, v in self.params.items()}
        )


@dataclass
class ShrinkageInput:
    """Eigenvalues in descending order plus the aspect ratio c = N/n."""

    lambdas: np.ndarray
    c: float

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=np.float64)
        if self.lambdas.ndim != 1 or self.lambdas.shape[0] < 1:
            raise DataError("lambdas must be a nonempty vector")
        if not np.all(np.isfinite(self.lambdas)):
            raise DataError("lambdas must be finite")
        if np.any(self.lambdas < 0):
            raise DataError("lambdas must be nonnegative")
        if np.any(np.diff(self.lambdas) > 0):
            raise DataError("lambdas must be sorted descending")
        self.c = float(self.c)
        if not (self.c > 0 and math.isfinite(self.c)):
            raise DataError(f"aspect ratio must be positive, got {self.c}")

    @property
    def size(self) -> int:
        return self.lambdas.shape[0]


@dataclass
class GradientBundle:
    """Loss value plus one gradient array per model parameter."""

    loss: float
    grads: dict[str, np.ndarray]


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_model(config: ModelConfig | None = None, seed: int = 0) -> ShrinkageModel:
    """Xavier-uniform weights, zero biases, unit normalization gains."""
    config = config or ModelConfig()
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".gain"):
            params[name] = np.ones(shape)
        elif len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
    return ShrinkageModel(config, params)


def _token_features(inp: ShrinkageInput) -> tuple[np.ndarray, float]:
    mean_lambda = float(inp.lambdas.mean())
    if mean_lambda <= 0:
        raise DataError("eigenvalues are all zero; no scale to normalize by")
    scaled = inp.lambdas / mean_lambda
    feats = np.column_stack(
        [scaled, np.log(scaled + FEATURE_EPS), np.full(inp.size, inp.c)]
    )
    return feats, mean_lambda


def _attention(x: Tensor, p: dict[str, Tensor], prefix: str, config: ModelConfig) -> Tensor:
    n = x.shape[0]
    d, n_heads = config.width, config.n_heads
    head_dim = d // n_heads
    q = x @ p[prefix + "attn.query.w"] + p[prefix + "attn.query.b"]
    k = x @ p[prefix + "attn.key.w"] + p[prefix + "attn.key.b"]
    v = x @ p[prefix + "attn.value.w"] + p[prefix + "attn.value.b"]
    # (n, d) -> (heads, n, head_dim)
    q = q.reshape(n, n_heads, head_dim).transpose(1, 0, 2)
    k = k.reshape(n, n_heads, head_dim).transpose(1, 0, 2)
    v = v.reshape(n, n_heads, head_dim).transpose(1, 0, 2)
    scores = (q @ k.transpose(0, 2, 1)) * (1.0 / math.sqrt(head_dim))
    context = autodiff.softmax(scores, axis=-1) @ v
    context = context.transpose(1, 0, 2).reshape(n, d)
    return context @ p[prefix + "attn.out.w"] + p[prefix + "attn.out.b"]


def _forward_graph(p: dict[str, Tensor], feats: np.ndarray, config: ModelConfig) -> Tensor:
    """Features (N, 3) to raw nonnegative coefficients (N, 1), pre-norm blocks."""
    x = Tensor(feats) @ p["embed.w"] + p["embed.b"]
    for i in range(config.n_layers):
        prefix = f"block{i}."
        h = autodiff.layer_norm(x, p[prefix + "ln1.gain"], p[prefix + "ln1.bias"], LN_EPS)
        x = x + _attention(h, p, prefix, config)
        h = autodiff.layer_norm(x, p[prefix + "ln2.gain"], p[prefix + "ln2.bias"], LN_EPS)
        h = autodiff.relu(h @ p[prefix + "ff.w1"] + p[prefix + "ff.b1"])
        x = x + h @ p[prefix + "ff.w2"] + p[prefix + "ff.b2"]
    x = autodiff.layer_norm(x, p["final_ln.gain"], p["final_ln.bias"], LN_EPS)
    return autodiff.relu(x @ p["head.w"] + p["head.b"])


def _eta_graph(
    model: ShrinkageModel, inp: ShrinkageInput, requires_grad: bool
) -> tuple[Tensor, dict[str, Tensor]]:
    feats, mean_lambda = _token_features(inp)
    p = {k: Tensor(v, requires_grad=requires_grad) for k, v in model.params.items()}
    eta = _forward_graph(p, feats, model.config) * (1.0 / mean_lambda)
    return eta, p


def forward(model: ShrinkageModel, inp: ShrinkageInput) -> np.ndarray:
    """Shrinkage coefficients for one eigenvalue spectrum, length N, all >= 0."""
    eta, _ = _eta_graph(model, inp, requires_grad=False)
    out = eta.data.reshape(-1)
    if not np.all(np.isfinite(out)):
        raise NumericError("forward pass produced non-finite coefficients")
    return out


def portfolio_risk_graph(
    eta: Tensor, eigenvectors: np.ndarray, second_moment: np.ndarray
) -> Tensor:
    """Realized risk h'Mh of the weights induced by coefficients eta.

    eta is (N, 1); eigenvectors and second_moment are constants. Raises
    CollapsedWeightsError when the weight normalizer is numerically zero.
    """
    u = np.asarray(eigenvectors, dtype=np.float64)
    # U diag(eta) U' applied to the ones vector
    precision_rows = eta * u.T
    row_sums = Tensor(u) @ (precision_rows @ np.ones((u.shape[0], 1)))
    normalizer = row_sums.sum()
    if abs(float(normalizer.data)) <= WEIGHT_SUM_FLOOR:
        raise CollapsedWeightsError(
            "weight normalizer 1'P1 is numerically zero", eta=eta.data.reshape(-1)
        )
    weights = row_sums / normalizer
    return (weights * (Tensor(second_moment) @ weights)).sum()


def loss_and_gradients(
    model: ShrinkageModel,
    inp: ShrinkageInput,
    es: EigenSystem,
    validation: np.ndarray,
) -> GradientBundle:
    """Out-of-sample risk of the induced weights and its exact gradients.

    The loss is h'Mh with M the centered second-moment matrix of the
    validation columns and h the minimum variance weights built from the
    network output on (lambda, c). Eigenvalues and eigenvectors enter as
    constants; gradients cover every network parameter.
    """
    validation = np.asarray(validation, dtype=np.float64)
    if validation.ndim != 2 or validation.shape[0] != inp.size:
        raise DataError("validation matrix must be N x m with N matching lambdas")
    if validation.shape[1] < 1:
        raise DataError("validation matrix needs at least one column")
    if not np.all(np.isfinite(validation)):
        raise DataError("validation matrix must be finite")
    scale = max(float(np.max(np.abs(inp.lambdas))), 1.0)
    if not np.allclose(es.eigenvalues, inp.lambdas, rtol=1e-10, atol=1e-12 * scale):
        raise DataError("eigensystem eigenvalues do not match the input spectrum")

    centered = validation - validation.mean(axis=1, keepdims=True)
    second_moment = (centered @ centered.T) / validation.shape[1]

    eta, p = _eta_graph(model, inp, requires_grad=True)
    loss = portfolio_risk_graph(eta, es.eigenvectors, second_moment)
    loss.backward()

    grads: dict[str, np.ndarray] = {}
    for name, tensor in p.items():
        g = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name}")
        grads[name] = g
    loss_value = float(loss.data)
    if not math.isfinite(loss_value):
        raise NumericError("non-finite loss")
    return GradientBundle(loss_value, grads)


def adam_step(
    model: ShrinkageModel,
    grads: GradientBundle | dict[str, np.ndarray],
    state: AdamState,
    lr: float = DEFAULT_LR,
) -> tuple[ShrinkageModel, AdamState]:
    """One Adam update. Returns a new model and state; inputs are not mutated."""
    grad_map = grads.grads if isinstance(grads, GradientBundle) else grads
    if set(grad_map.keys()) != set(model.params.keys()):
        raise DataError("gradient names do not match model parameters")
    step = state.step + 1
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    new_params: dict[str, np.ndarray] = {}
    bias1 = 1.0 - ADAM_BETA1**step
    bias2 = 1.0 - ADAM_BETA2**step
    for name, value in model.params.items():
        g = grad_map[name]
        if g.shape != value.shape:
            raise DataError(f"gradient for {name} has shape {g.shape}, want {value.shape}")
        m_prev = state.m.get(name, np.zeros_like(value))
        v_prev = state.v.get(name, np.zeros_like(value))
        m = ADAM_BETA1 * m_prev + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * v_prev + (1.0 - ADAM_BETA2) * g * g
        update = lr * (m / bias1) / (np.sqrt(v / bias2) + ADAM_EPS)
        new_m[name] = m
        new_v[name] = v
        new_params[name] = value - update
    return ShrinkageModel(model.config, new_params), AdamState(step, new_m, new_v)


def save_model(model: ShrinkageModel, path) -> None:
    """JSON container: hyperparameters, base64 float64 arrays, sha256 checksum."""
    digest = hashlib.sha256()
    encoded: dict[str, dict] = {}
    for name in parameter_shapes(model.config):
        raw = model.params[name].astype("<f8").tobytes()
        digest.update(raw)
        encoded[name] = {
            "shape": list(model.params[name].shape),
            "data": base64.b64encode(raw).decode("ascii"),
        }
    payload = {
        "schema_version": model.schema_version,
        "config": {
            "n_layers": model.config.n_layers,
            "width": model.config.width,
            "n_heads": model.config.n_heads,
            "ff_width": model.config.ff_width,
        },
        "param_order": list(parameter_shapes(model.config).keys()),
        "params": encoded,
        "checksum": digest.hexdigest(),
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=1)
        handle.write("\n")


def load_model(path) -> ShrinkageModel:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            payload = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelIOError(f"cannot read model file {path}: {exc}") from exc
    try:
        version = payload["schema_version"]
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(
                f"model schema version {version} is not supported (want {SCHEMA_VERSION})"
            )
        config = ModelConfig(**payload["config"])
        expected = parameter_shapes(config)
        if payload["param_order"] != list(expected.keys()):
            raise ModelIOError("parameter order does not match the declared layout")
        digest = hashlib.sha256()
        params: dict[str, np.ndarray] = {}
        for name, shape in expected.items():
            entry = payload["params"][name]
            raw = base64.b64decode(entry["data"].encode("ascii"))
            digest.update(raw)
            arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
            if tuple(entry["shape"]) != shape or arr.size != int(np.prod(shape)):
                raise ModelIOError(f"parameter {name} has the wrong shape")
            params[name] = arr.reshape(shape)
        if digest.hexdigest() != payload["checksum"]:
            raise ModelIOError("model file checksum mismatch")
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelIOError(f"model file {path} is malformed: {exc}") from exc
    return ShrinkageModel(config, params, schema_version=version)
