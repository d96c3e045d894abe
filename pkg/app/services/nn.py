"""
Feed-forward networks with hand-written backpropagation and Adam.

Weights are stored as (out x in) matrices. Inputs may be a single vector or a
2-D batch whose rows are samples; parameter gradients of a batch are summed
over its rows.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import NumericalError, PreconditionError, StructuralError

logger = logging.getLogger("nn")

ACTIVATIONS = ("relu", "identity", "tanh")
CHECKPOINT_MAGIC = "MLP1"


@dataclass
class MlpParams:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activations: List[str]
    # Applied after the last activation: y = offset + scale * act(z)
    output_scale: Optional[np.ndarray] = None
    output_offset: Optional[np.ndarray] = None

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)) or not self.weights:
            raise StructuralError("weights, biases and activations must have the same non-zero length")
        for i, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise StructuralError(f"layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if act not in ACTIVATIONS:
                raise StructuralError(f"layer {i}: unknown activation '{act}'")
            if i > 0 and self.weights[i - 1].shape[0] != w.shape[1]:
                raise StructuralError(
                    f"layer {i} expects {w.shape[1]} inputs but layer {i - 1} emits {self.weights[i - 1].shape[0]}"
                )
        out = self.weights[-1].shape[0]
        if self.output_scale is None:
            self.output_scale = np.ones(out)
        if self.output_offset is None:
            self.output_offset = np.zeros(out)
        if self.output_scale.shape != (out,) or self.output_offset.shape != (out,):
            raise StructuralError("output scale/offset must match the output dimension")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def dims(self) -> List[int]:
        return [self.in_dim] + [w.shape[0] for w in self.weights]

    @property
    def size(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpParams":
        return MlpParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activations=list(self.activations),
            output_scale=self.output_scale.copy(),
            output_offset=self.output_offset.copy(),
        )


@dataclass
class Grads:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def scaled(self, c: float) -> "Grads":
        return Grads([c * w for w in self.weights], [c * b for b in self.biases])

    def __add__(self, other: "Grads") -> "Grads":
        return Grads(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    lr: float
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params: MlpParams, lr: float, **kwargs) -> "AdamState":
        if lr <= 0:
            raise PreconditionError(f"learning rate must be positive, got {lr}")
        return cls(m=np.zeros(params.size), v=np.zeros(params.size), lr=lr, **kwargs)

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.lr, self.step, self.beta1, self.beta2, self.eps)


@dataclass
class Trace:
    """Forward-pass intermediates needed by backward."""
    inputs: List[np.ndarray] = field(default_factory=list)
    pre: List[np.ndarray] = field(default_factory=list)
    post: List[np.ndarray] = field(default_factory=list)
    batched: bool = True


def init_mlp(
    sizes: Sequence[int],
    activations: Sequence[str],
    rng: np.random.Generator,
    final_bound: Optional[float] = None,
    output_scale: Optional[np.ndarray] = None,
    output_offset: Optional[np.ndarray] = None,
) -> MlpParams:
    """Uniform fan-in initialisation, bound 1/sqrt(fan_in); final layer optionally +-final_bound."""
    if len(sizes) != len(activations) + 1:
        raise StructuralError(f"{len(sizes)} sizes cannot carry {len(activations)} layers")
    weights, biases = [], []
    n_layers = len(activations)
    for i in range(n_layers):
        fan_in, fan_out = int(sizes[i]), int(sizes[i + 1])
        bound = 1.0 / np.sqrt(fan_in)
        if i == n_layers - 1 and final_bound is not None:
            bound = final_bound
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpParams(
        weights=weights,
        biases=biases,
        activations=list(activations),
        output_scale=None if output_scale is None else np.asarray(output_scale, dtype=np.float64).copy(),
        output_offset=None if output_offset is None else np.asarray(output_offset, dtype=np.float64).copy(),
    )


def _activate(act: str, z: np.ndarray) -> np.ndarray:
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(act: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if act == "relu":
        return (z > 0.0).astype(np.float64)
    if act == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


def forward_trace(params: MlpParams, x: np.ndarray) -> Tuple[np.ndarray, Trace]:
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    h = x if batched else x[None, :]
    if h.ndim != 2 or h.shape[1] != params.in_dim:
        raise StructuralError(f"input of shape {x.shape} does not match input dimension {params.in_dim}")
    trace = Trace(batched=batched)
    for w, b, act in zip(params.weights, params.biases, params.activations):
        trace.inputs.append(h)
        z = h @ w.T + b
        h = _activate(act, z)
        trace.pre.append(z)
        trace.post.append(h)
    y = params.output_offset + params.output_scale * h
    return (y if batched else y[0]), trace


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    return forward_trace(params, x)[0]


def backward(
    params: MlpParams,
    x: np.ndarray,
    upstream: np.ndarray,
    trace: Optional[Trace] = None,
) -> Tuple[Grads, np.ndarray]:
    """
    Gradients of sum(upstream * forward(params, x)) w.r.t. every parameter and the input.

    Pass the trace returned by forward_trace to skip recomputing the forward pass.
    """
    if trace is None:
        _, trace = forward_trace(params, x)
    g = np.asarray(upstream, dtype=np.float64)
    if not trace.batched:
        g = g[None, :]
    n = trace.inputs[0].shape[0]
    if g.shape != (n, params.out_dim):
        raise StructuralError(f"upstream of shape {np.shape(upstream)} does not match output dimension {params.out_dim}")

    g = g * params.output_scale
    dws: List[np.ndarray] = [None] * len(params.weights)
    dbs: List[np.ndarray] = [None] * len(params.weights)
    for i in reversed(range(len(params.weights))):
        delta = g * _activation_grad(params.activations[i], trace.pre[i], trace.post[i])
        dws[i] = delta.T @ trace.inputs[i]
        dbs[i] = delta.sum(axis=0)
        g = delta @ params.weights[i]
    return Grads(dws, dbs), (g if trace.batched else g[0])


def flatten(params) -> np.ndarray:
    """Flatten MlpParams or Grads weights and biases, layer by layer."""
    parts = []
    for w, b in zip(params.weights, params.biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts)


def unflatten(template: MlpParams, vec: np.ndarray) -> MlpParams:
    if vec.shape != (template.size,):
        raise StructuralError(f"flat vector of length {vec.size} does not match {template.size} parameters")
    weights, biases, k = [], [], 0
    for w, b in zip(template.weights, template.biases):
        weights.append(vec[k:k + w.size].reshape(w.shape).copy())
        k += w.size
        biases.append(vec[k:k + b.size].copy())
        k += b.size
    return MlpParams(
        weights=weights,
        biases=biases,
        activations=list(template.activations),
        output_scale=template.output_scale.copy(),
        output_offset=template.output_offset.copy(),
    )


def _check_congruent(a, b, what: str):
    if len(a.weights) != len(b.weights) or any(
        x.shape != y.shape for x, y in zip(a.weights + a.biases, b.weights + b.biases)
    ):
        raise StructuralError(f"{what}: shapes are not congruent")


def adam_step(params: MlpParams, grads: Grads, state: AdamState) -> Tuple[MlpParams, AdamState]:
    """One bias-corrected Adam step; returns new params and state, inputs untouched."""
    _check_congruent(params, grads, "adam_step")
    g = flatten(grads)
    if state.m.shape != g.shape or state.v.shape != g.shape:
        raise StructuralError("Adam moments do not match the parameter count")
    if not np.all(np.isfinite(g)):
        raise NumericalError("non-finite gradient entries, Adam step refused")

    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1 ** step)
    v_hat = v / (1.0 - state.beta2 ** step)
    theta = flatten(params) - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m=m, v=v, lr=state.lr, step=step, beta1=state.beta1, beta2=state.beta2, eps=state.eps)
    return unflatten(params, theta), new_state


def soft_update(target: MlpParams, online: MlpParams, tau: float) -> MlpParams:
    """Exponential averaging: target <- (1 - tau) * target + tau * online."""
    if not 0.0 < tau <= 1.0:
        raise PreconditionError(f"tau must lie in (0, 1], got {tau}")
    _check_congruent(target, online, "soft_update")
    keep = 1.0 - tau
    return MlpParams(
        weights=[keep * t + tau * o for t, o in zip(target.weights, online.weights)],
        biases=[keep * t + tau * o for t, o in zip(target.biases, online.biases)],
        activations=list(target.activations),
        output_scale=target.output_scale.copy(),
        output_offset=target.output_offset.copy(),
    )


def is_finite(params: MlpParams) -> bool:
    return bool(np.all(np.isfinite(flatten(params))))


def save_params(path, params: MlpParams) -> None:
    """
    Header line with dimensions and activation tags, then float64 little-endian
    payload: per layer W (row-major) and b, then output scale and offset.
    """
    header = f"{CHECKPOINT_MAGIC} dims={','.join(str(d) for d in params.dims)} acts={','.join(params.activations)}\n"
    payload = np.concatenate([flatten(params), params.output_scale, params.output_offset])
    with open(path, "wb") as f:
        f.write(header.encode("utf-8"))
        f.write(payload.astype("<f8").tobytes())


def load_params(path) -> MlpParams:
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise StructuralError(f"{path}: missing checkpoint header")
    fields = raw[:newline].decode("utf-8").split()
    if len(fields) != 3 or fields[0] != CHECKPOINT_MAGIC:
        raise StructuralError(f"{path}: not an MLP checkpoint")
    dims = [int(d) for d in fields[1].removeprefix("dims=").split(",")]
    acts = fields[2].removeprefix("acts=").split(",")
    values = np.frombuffer(raw[newline + 1:], dtype="<f8").astype(np.float64)

    expected = sum(dims[i + 1] * dims[i] + dims[i + 1] for i in range(len(dims) - 1)) + 2 * dims[-1]
    if values.size != expected or len(acts) != len(dims) - 1:
        raise StructuralError(f"{path}: payload holds {values.size} values, header implies {expected}")
    weights, biases, k = [], [], 0
    for i in range(len(dims) - 1):
        n_in, n_out = dims[i], dims[i + 1]
        weights.append(values[k:k + n_out * n_in].reshape(n_out, n_in).copy())
        k += n_out * n_in
        biases.append(values[k:k + n_out].copy())
        k += n_out
    out = dims[-1]
    return MlpParams(
        weights=weights,
        biases=biases,
        activations=acts,
        output_scale=values[k:k + out].copy(),
        output_offset=values[k + out:k + 2 * out].copy(),
    )
