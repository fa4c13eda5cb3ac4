"""Dense networks with hand-written exact gradients.

The adversarial loops need only small multilayer perceptrons, so this
module implements them directly on NumPy arrays instead of pulling in an
autograd framework: seeded He-style initialization, a cached forward
pass, exact reverse-mode ``backward``, bias-corrected Adam, spectral
normalization by power iteration, and the Gumbel-softmax relaxation for
categorical outputs.  Everything runs in double precision and is
deterministic given the seeds.

Checkpoints are JSON documents with a ``"spec"`` block mirroring
:class:`MlpSpec` and a ``"tensors"`` array of named parameter tensors,
each entry carrying ``name``, ``shape``, and the row-major ``data``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotApplicable, ShapeMismatch
from .objectives import js_domain_activation, js_domain_activation_backward
from .rng import STREAM_GUMBEL, STREAM_INIT, philox

__all__ = [
    "HIDDEN_ACTIVATIONS",
    "OUTPUT_ACTIVATIONS",
    "MlpSpec",
    "Mlp",
    "ForwardCache",
    "AdamState",
    "init_mlp",
    "forward",
    "backward",
    "parameters",
    "set_parameters",
    "init_adam",
    "adam_step",
    "spectral_normalize",
    "gumbel_softmax",
    "gumbel_softmax_backward",
    "lipschitz_upper_bound",
    "save_mlp",
    "load_mlp",
]

HIDDEN_ACTIVATIONS = ("leaky_relu", "swish", "identity")
OUTPUT_ACTIVATIONS = ("identity", "js_domain")

# Upper bounds on the derivative magnitude of each activation.  The
# swish constant rounds up sup|swish'| = 1.09984... attained near 2.4;
# js_domain has derivative sigmoid(-v)/2, which approaches 1/2.
_SWISH_LIPSCHITZ = 1.1
_JS_DOMAIN_LIPSCHITZ = 0.5


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a fully connected network.

    ``hidden_activation`` is applied after every hidden layer and
    ``output_activation`` after the last one; ``scale`` multiplies the
    final outputs, so a spectrally normalized critic realizes functions
    with Lipschitz constant about ``scale``.
    """

    input_dim: int
    hidden_widths: tuple
    output_dim: int
    hidden_activation: str = "leaky_relu"
    leaky_slope: float = 0.2
    output_activation: str = "identity"
    spectral_norm: bool = False
    scale: float = 1.0
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        dims = (self.input_dim, self.output_dim, *self.hidden_widths)
        if any(d < 1 for d in dims):
            raise ValueError("all layer dimensions must be positive")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ValueError("leaky slope must lie strictly between 0 and 1")
        if not (math.isfinite(self.scale) and self.scale > 0.0):
            raise ValueError("scale must be positive and finite")

    @property
    def layer_dims(self):
        """Pairs of (fan-in, fan-out) for each affine layer."""
        widths = (self.input_dim, *self.hidden_widths, self.output_dim)
        return tuple(zip(widths[:-1], widths[1:]))


@dataclass
class Mlp:
    """Parameters of a network: one weight/bias pair per affine layer.

    Weights have shape (fan-in, fan-out) and act on row batches as
    ``batch @ weight + bias``.  When the spec asks for spectral
    normalization, ``u`` and ``v`` hold the per-layer power-iteration
    state (left/right singular direction estimates); otherwise both are
    ``None``.
    """

    spec: MlpSpec
    weights: list
    biases: list
    u: list | None = None
    v: list | None = None


@dataclass(frozen=True)
class ForwardCache:
    """Intermediate values of one forward pass, consumed by ``backward``.

    ``inputs[i]`` is the batch entering affine layer ``i``, ``preacts[i]``
    the affine output before its activation, and ``sigmas[i]`` the
    spectral-norm estimate the layer's weight was divided by (1 when
    normalization is off).
    """

    inputs: tuple
    preacts: tuple
    sigmas: tuple


def init_mlp(spec: MlpSpec) -> Mlp:
    """Seeded network with He-style uniform weights and zero biases.

    Each weight entry is uniform on ±sqrt(6 / fan_in); power-iteration
    vectors start as normalized Gaussian draws from the same stream.
    """
    rng = philox(spec.init_seed, STREAM_INIT)
    weights, biases, us, vs = [], [], [], []
    for fan_in, fan_out in spec.layer_dims:
        limit = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
        if spec.spectral_norm:
            us.append(_normalized(rng.standard_normal(fan_in)))
            vs.append(_normalized(rng.standard_normal(fan_out)))
    if spec.spectral_norm:
        return Mlp(spec, weights, biases, us, vs)
    return Mlp(spec, weights, biases)


def _normalized(vec):
    return vec / (np.linalg.norm(vec) + 1e-12)


def spectral_normalize(weight, u, v, iterations):
    """Divide a weight matrix by its estimated top singular value.

    Runs ``iterations`` rounds of power iteration from the given
    direction estimates (``u`` along fan-in, ``v`` along fan-out) and
    returns ``(weight / sigma, u, v)`` with the refined directions,
    where ``sigma = u @ weight @ v``.  With zero iterations the given
    directions are used as they stand.
    """
    w = np.asarray(weight, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    for _ in range(iterations):
        v = _normalized(w.T @ u)
        u = _normalized(w @ v)
    sigma = float(u @ w @ v)
    return w / sigma, u, v


def forward(mlp: Mlp, batch, *, power_iterations=1, update_state=True, frozen_sigmas=None):
    """Outputs and cache for a row batch of shape (n, input_dim).

    For spectrally normalized networks each weight is divided by the
    power-iteration estimate of its top singular value, refreshed with
    ``power_iterations`` rounds (training uses 1; evaluation should use
    around 50 with ``update_state=False`` to leave the training state
    untouched).  ``frozen_sigmas`` bypasses the estimation and divides
    by the given constants instead — finite-difference checks must use
    it, since ``backward`` treats the normalizers as constants.
    """
    spec = mlp.spec
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != spec.input_dim:
        raise ShapeMismatch(f"batch must be (n, {spec.input_dim}), got {batch.shape}")
    n_layers = len(mlp.weights)
    inputs, preacts, sigmas = [], [], []
    x = batch
    for i in range(n_layers):
        weight = mlp.weights[i]
        sigma = 1.0
        if frozen_sigmas is not None:
            sigma = float(frozen_sigmas[i])
        elif spec.spectral_norm:
            _, u, v = spectral_normalize(mlp.weights[i], mlp.u[i], mlp.v[i], power_iterations)
            sigma = float(u @ weight @ v)
            if update_state:
                mlp.u[i], mlp.v[i] = u, v
        z = x @ (weight / sigma) + mlp.biases[i]
        inputs.append(x)
        preacts.append(z)
        sigmas.append(sigma)
        x = _hidden_value(spec, z) if i < n_layers - 1 else _output_value(spec, z)
    cache = ForwardCache(tuple(inputs), tuple(preacts), tuple(sigmas))
    return spec.scale * x, cache


def backward(mlp: Mlp, cache: ForwardCache, output_grad):
    """Exact reverse-mode gradients of ``sum(outputs * output_grad)``.

    Returns ``(param_grads, input_grad)`` where ``param_grads`` lines up
    with :func:`parameters` (weight then bias, layer by layer).  The
    spectral normalizers recorded in the cache are treated as constants,
    so for normalized networks this is the partial derivative with the
    per-layer divisors held fixed.
    """
    spec = mlp.spec
    n_layers = len(mlp.weights)
    g = np.asarray(output_grad, dtype=np.float64) * spec.scale
    g = g * _output_slope(spec, cache.preacts[-1])
    weight_grads = [None] * n_layers
    bias_grads = [None] * n_layers
    for i in reversed(range(n_layers)):
        weight_grads[i] = cache.inputs[i].T @ g / cache.sigmas[i]
        bias_grads[i] = g.sum(axis=0)
        g = g @ (mlp.weights[i] / cache.sigmas[i]).T
        if i > 0:
            g = g * _hidden_slope(spec, cache.preacts[i - 1])
    param_grads = []
    for dw, db in zip(weight_grads, bias_grads):
        param_grads.extend([dw, db])
    return param_grads, g


def _hidden_value(spec, z):
    if spec.hidden_activation == "leaky_relu":
        return np.where(z > 0.0, z, spec.leaky_slope * z)
    if spec.hidden_activation == "swish":
        return z / (1.0 + np.exp(-z))
    return z


def _hidden_slope(spec, z):
    if spec.hidden_activation == "leaky_relu":
        return np.where(z > 0.0, 1.0, spec.leaky_slope)
    if spec.hidden_activation == "swish":
        sig = 1.0 / (1.0 + np.exp(-z))
        return sig * (1.0 + z * (1.0 - sig))
    return np.ones_like(z)


def _output_value(spec, z):
    if spec.output_activation == "js_domain":
        return js_domain_activation(z)
    return z


def _output_slope(spec, z):
    if spec.output_activation == "js_domain":
        return js_domain_activation_backward(z)
    return np.ones_like(z)


def parameters(mlp: Mlp) -> list:
    """Flat parameter list: weight then bias for each layer in order."""
    params = []
    for w, b in zip(mlp.weights, mlp.biases):
        params.extend([w, b])
    return params


def set_parameters(mlp: Mlp, params) -> None:
    """Install a flat parameter list produced by :func:`parameters`."""
    if len(params) != 2 * len(mlp.weights):
        raise ShapeMismatch("parameter list does not match the layer count")
    for i in range(len(mlp.weights)):
        mlp.weights[i] = np.asarray(params[2 * i], dtype=np.float64)
        mlp.biases[i] = np.asarray(params[2 * i + 1], dtype=np.float64)


@dataclass
class AdamState:
    """First/second moment accumulators and step count for Adam."""

    first: list
    second: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 0.001


def init_adam(params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    """Fresh optimizer state with zero moments shaped like ``params``."""
    first = [np.zeros_like(np.asarray(p, dtype=np.float64)) for p in params]
    second = [np.zeros_like(m) for m in first]
    return AdamState(first, second, 0, beta1, beta2, eps, lr)


def adam_step(adam: AdamState, params, grads) -> list:
    """One bias-corrected Adam update; returns the new parameter list.

    The moment buffers and step counter are updated in place, so
    repeated calls continue the same trajectory deterministically.
    """
    if len(params) != len(adam.first) or len(grads) != len(adam.first):
        raise ShapeMismatch("params/grads do not match the optimizer state")
    adam.step += 1
    correct1 = 1.0 - adam.beta1**adam.step
    correct2 = 1.0 - adam.beta2**adam.step
    updated = []
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.asarray(g, dtype=np.float64)
        adam.first[i] = adam.beta1 * adam.first[i] + (1.0 - adam.beta1) * g
        adam.second[i] = adam.beta2 * adam.second[i] + (1.0 - adam.beta2) * g * g
        m_hat = adam.first[i] / correct1
        v_hat = adam.second[i] / correct2
        updated.append(p - adam.lr * m_hat / (np.sqrt(v_hat) + adam.eps))
    return updated


def gumbel_softmax(logits, temperature, seed, *, noise=None):
    """Relaxed one-hot rows: softmax((logits + Gumbel noise) / temperature).

    Each row of ``logits`` is one categorical block; rows of the result
    are positive and sum to one.  The noise is a seeded draw, so the
    same seed reproduces the same relaxation exactly, and as the
    temperature shrinks the rows approach one-hot argmax samples whose
    categories follow softmax(logits).  Callers relaxing several blocks
    of one batch may pass a pre-drawn ``noise`` array (the seed is then
    ignored) so all blocks share a single stream draw.
    """
    if not temperature > 0.0:
        raise ValueError("temperature must be positive")
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise ShapeMismatch("logits must be a 2-D array of row blocks")
    if noise is None:
        noise = philox(seed, STREAM_GUMBEL).gumbel(size=logits.shape)
    elif noise.shape != logits.shape:
        raise ShapeMismatch("noise must match the logits shape")
    z = (logits + noise) / temperature
    z = z - z.max(axis=1, keepdims=True)
    expz = np.exp(z)
    return expz / expz.sum(axis=1, keepdims=True)


def gumbel_softmax_backward(samples, temperature, output_grad):
    """Exact gradient of :func:`gumbel_softmax` with respect to the logits.

    ``samples`` must be the rows the forward call returned (they encode
    the softmax Jacobian), and the noise is a constant of the path.
    """
    samples = np.asarray(samples, dtype=np.float64)
    output_grad = np.asarray(output_grad, dtype=np.float64)
    inner = (output_grad * samples).sum(axis=1, keepdims=True)
    return samples * (output_grad - inner) / temperature


def lipschitz_upper_bound(mlp: Mlp, power_iterations=50) -> float:
    """Certified Lipschitz bound of a spectrally normalized network.

    Multiplies, over layers, the power-iteration estimate of the top
    singular value of each weight *after* normalization (close to 1 once
    the iteration has converged) with the activation derivative bounds
    and the output scale.  Raises ``NotApplicable`` when the spec does
    not use spectral normalization, since then no norm control holds.
    """
    spec = mlp.spec
    if not spec.spectral_norm:
        raise NotApplicable("Lipschitz bound requires spectral normalization")
    bound = spec.scale
    n_layers = len(mlp.weights)
    for i in range(n_layers):
        normalized, u, v = spectral_normalize(mlp.weights[i], mlp.u[i], mlp.v[i], power_iterations)
        _, u, v = spectral_normalize(normalized, u, v, power_iterations)
        bound *= float(u @ normalized @ v)
        if i < n_layers - 1:
            if spec.hidden_activation == "swish":
                bound *= _SWISH_LIPSCHITZ
            elif spec.hidden_activation == "leaky_relu":
                bound *= max(1.0, spec.leaky_slope)
    if spec.output_activation == "js_domain":
        bound *= _JS_DOMAIN_LIPSCHITZ
    return bound


def save_mlp(mlp: Mlp, path) -> None:
    """Write a network checkpoint in the JSON tensor format."""
    tensors = []
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        tensors.append(_tensor_entry(f"weight_{i}", w))
        tensors.append(_tensor_entry(f"bias_{i}", b))
    if mlp.spec.spectral_norm:
        for i, (u, v) in enumerate(zip(mlp.u, mlp.v)):
            tensors.append(_tensor_entry(f"u_{i}", u))
            tensors.append(_tensor_entry(f"v_{i}", v))
    spec = mlp.spec
    doc = {
        "spec": {
            "input_dim": spec.input_dim,
            "hidden_widths": list(spec.hidden_widths),
            "output_dim": spec.output_dim,
            "hidden_activation": spec.hidden_activation,
            "leaky_slope": spec.leaky_slope,
            "output_activation": spec.output_activation,
            "spectral_norm": spec.spectral_norm,
            "scale": spec.scale,
            "init_seed": spec.init_seed,
        },
        "tensors": tensors,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _tensor_entry(name, array):
    array = np.asarray(array, dtype=np.float64)
    return {
        "name": name,
        "shape": list(array.shape),
        "data": [float(x) for x in array.ravel()],
    }


def load_mlp(path) -> Mlp:
    """Read a network checkpoint written by :func:`save_mlp`."""
    with open(path) as fh:
        doc = json.load(fh)
    raw = dict(doc["spec"])
    raw["hidden_widths"] = tuple(raw["hidden_widths"])
    spec = MlpSpec(**raw)
    tensors = {}
    for entry in doc["tensors"]:
        array = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        tensors[entry["name"]] = array
    n_layers = len(spec.layer_dims)
    weights = [tensors[f"weight_{i}"] for i in range(n_layers)]
    biases = [tensors[f"bias_{i}"] for i in range(n_layers)]
    if spec.spectral_norm:
        us = [tensors[f"u_{i}"] for i in range(n_layers)]
        vs = [tensors[f"v_{i}"] for i in range(n_layers)]
        return Mlp(spec, weights, biases, us, vs)
    return Mlp(spec, weights, biases)
