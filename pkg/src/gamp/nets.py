"""Minimal fully-connected networks with exact reverse-mode gradients.

Everything here is plain numpy in 64-bit. Three entry points matter to the
rest of the package:

* ``mlp_forward``       -- evaluate the net on one vector or a batch.
* ``mlp_backward``      -- exact gradients of ``upstream . output`` w.r.t.
                           every parameter and w.r.t. the input (the input
                           gradient feeds the discriminator gradient penalty).
* ``adam_step``         -- standard Adam with bias correction.

``input_grad_penalty_backward`` additionally differentiates ``||d out/d x||^2``
w.r.t. the parameters (forward-over-reverse), which is what discriminator
regularization needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HIDDEN_ACTIVATIONS = ("tanh", "relu", "elu")
OUTPUT_ACTIVATIONS = ("identity", "sigmoid")


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "elu":
        # evaluate expm1 only on the clamped branch to avoid overflow
        return np.where(z > 0.0, z, np.expm1(np.minimum(z, 0.0)))
    if name == "identity":
        return z
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))
    raise ValueError(f"unknown activation {name!r}")


def _act_d(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """First derivative, expressed from pre-activation z and activation a."""
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0.0).astype(float)
    if name == "elu":
        return np.where(z > 0.0, 1.0, a + 1.0)
    if name == "identity":
        return np.ones_like(z)
    if name == "sigmoid":
        return a * (1.0 - a)
    raise ValueError(f"unknown activation {name!r}")


def _act_d2(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Second derivative (needed only by the gradient-penalty backward)."""
    if name == "tanh":
        return -2.0 * a * (1.0 - a * a)
    if name == "relu":
        return np.zeros_like(z)
    if name == "elu":
        return np.where(z > 0.0, 0.0, a + 1.0)
    if name == "identity":
        return np.zeros_like(z)
    if name == "sigmoid":
        d = a * (1.0 - a)
        return d * (1.0 - 2.0 * a)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class MlpParams:
    """Weights/biases of a plain fully-connected net.

    ``weights[l]`` has shape (layer_dims[l+1], layer_dims[l]); ``biases[l]``
    has length layer_dims[l+1]. The hidden activation applies to every layer
    but the last; the output activation to the last only.
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "tanh"
    output_activation: str = "identity"

    def __post_init__(self):
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"bad hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"bad output activation {self.output_activation!r}")
        dims = self.layer_dims
        if len(dims) < 2 or any(d <= 0 for d in dims):
            raise ValueError(f"bad layer_dims {dims}")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("weights/biases count does not match layer_dims")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[l + 1], dims[l]):
                raise ValueError(
                    f"layer {l}: weight shape {w.shape}, expected {(dims[l + 1], dims[l])}"
                )
            if b.shape != (dims[l + 1],):
                raise ValueError(
                    f"layer {l}: bias shape {b.shape}, expected {(dims[l + 1],)}"
                )

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "MlpParams":
        return MlpParams(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.hidden_activation,
            self.output_activation,
        )


def init_mlp(
    layer_dims: list[int],
    rng: np.random.Generator,
    hidden_activation: str = "tanh",
    output_activation: str = "identity",
    output_scale: float = 1.0,
) -> MlpParams:
    """Scaled-uniform (Xavier-like) init; the last layer can be shrunk
    (output_scale=0.01 keeps early policy actions near zero)."""
    weights, biases = [], []
    n = len(layer_dims) - 1
    for l in range(n):
        fan_in, fan_out = layer_dims[l], layer_dims[l + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        if l == n - 1:
            w *= output_scale
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return MlpParams(list(layer_dims), weights, biases, hidden_activation, output_activation)


def _layer_activation(params: MlpParams, l: int) -> str:
    return params.output_activation if l == params.n_layers - 1 else params.hidden_activation


def _forward_cached(params: MlpParams, x: np.ndarray):
    """Returns (output, pre-activations per layer, activations per layer).

    Accepts (d,) or (N, d); all cached arrays follow the input's batch shape.
    """
    a = x
    zs, acts = [], []
    for l in range(params.n_layers):
        z = a @ params.weights[l].T + params.biases[l]
        a = _act(_layer_activation(params, l), z)
        zs.append(z)
        acts.append(a)
    return a, zs, acts


def mlp_forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Evaluate the net. ``x`` is (layer_dims[0],) or (N, layer_dims[0])."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.layer_dims[0]:
        raise ValueError(
            f"input length {x.shape[-1]}, expected {params.layer_dims[0]}"
        )
    out, _, _ = _forward_cached(params, x)
    return out


@dataclass
class MlpGrads:
    """Parameter gradients shaped exactly like the MlpParams they come from."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @staticmethod
    def zeros_like(params: MlpParams) -> "MlpGrads":
        return MlpGrads(
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
        )

    def add_(self, other: "MlpGrads", scale: float = 1.0) -> "MlpGrads":
        for a, b in zip(self.weights, other.weights):
            a += scale * b
        for a, b in zip(self.biases, other.biases):
            a += scale * b
        return self

    def global_norm(self) -> float:
        sq = 0.0
        for g in self.weights + self.biases:
            sq += float(np.sum(g * g))
        return float(np.sqrt(sq))

    def scale_(self, s: float) -> "MlpGrads":
        for g in self.weights + self.biases:
            g *= s
        return self


def mlp_backward(
    params: MlpParams, x: np.ndarray, upstream: np.ndarray
) -> tuple[MlpGrads, np.ndarray]:
    """Gradients of ``sum(upstream * output)`` w.r.t. parameters and input.

    Batched inputs (N, d_in) with upstream (N, d_out) accumulate parameter
    gradients over the batch; the input gradient keeps the batch axis.
    """
    x = np.asarray(x, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
        upstream = upstream[None, :]
    if x.shape[-1] != params.layer_dims[0]:
        raise ValueError(f"input length {x.shape[-1]}, expected {params.layer_dims[0]}")
    if upstream.shape != (x.shape[0], params.layer_dims[-1]):
        raise ValueError(
            f"upstream shape {upstream.shape}, expected {(x.shape[0], params.layer_dims[-1])}"
        )

    _, zs, acts = _forward_cached(params, x)
    grads = MlpGrads.zeros_like(params)
    delta = upstream
    for l in range(params.n_layers - 1, -1, -1):
        delta = delta * _act_d(_layer_activation(params, l), zs[l], acts[l])
        below = acts[l - 1] if l > 0 else x
        grads.weights[l][...] = delta.T @ below
        grads.biases[l][...] = delta.sum(axis=0)
        delta = delta @ params.weights[l]
    input_grad = delta
    if single:
        input_grad = input_grad[0]
    return grads, input_grad


def input_grad_penalty_backward(
    params: MlpParams, x: np.ndarray
) -> tuple[float, MlpGrads]:
    """Mean squared input-gradient norm of a scalar-output net, and its
    exact parameter gradient.

    Computes p = mean_i ||d out(x_i)/d x_i||^2 together with dp/dtheta by a
    forward tangent pass in the direction of each sample's own input gradient
    followed by reverse accumulation (second derivatives of the activations
    enter here).
    """
    if params.layer_dims[-1] != 1:
        raise ValueError("gradient penalty requires a scalar-output net")
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    n = x.shape[0]

    _, zs, acts = _forward_cached(params, x)
    L = params.n_layers

    # Reverse pass for g_i = d out / d x_i (upstream 1 on the scalar output).
    dact = [_act_d(_layer_activation(params, l), zs[l], acts[l]) for l in range(L)]
    d2act = [_act_d2(_layer_activation(params, l), zs[l], acts[l]) for l in range(L)]
    delta = np.ones((n, 1))
    for l in range(L - 1, -1, -1):
        delta = (delta * dact[l]) @ params.weights[l]
    g = delta  # (n, d_in)
    penalty = float(np.mean(np.sum(g * g, axis=1)))

    # Forward tangent in direction v = g (per sample): p_i = g_i . g_i, and
    # grad_theta p = 2 * grad_theta (g . stopgrad(g)) = 2 * grad_theta ydot.
    adot = g
    zdots = []
    adots = [g]
    for l in range(L):
        zdot = adot @ params.weights[l].T
        adot = dact[l] * zdot
        zdots.append(zdot)
        adots.append(adot)

    # Reverse over the tangent graph: accumulate d ydot / d theta.
    grads = MlpGrads.zeros_like(params)
    # Adjoints w.r.t. zdot_l and z_l of the scalar ydot (summed over batch).
    zdot_bar = dact[L - 1] * np.ones((n, 1))
    z_bar = d2act[L - 1] * zdots[L - 1]
    for l in range(L - 1, -1, -1):
        below = acts[l - 1] if l > 0 else x
        below_dot = adots[l]  # tangent of the layer input (adots[0] = v = g)
        grads.weights[l][...] = zdot_bar.T @ below_dot + z_bar.T @ below
        grads.biases[l][...] = z_bar.sum(axis=0)
        if l == 0:
            break
        adot_bar = zdot_bar @ params.weights[l]  # adjoint w.r.t. adot_{l-1}
        a_bar = z_bar @ params.weights[l]  # adjoint w.r.t. a_{l-1}
        zdot_bar = dact[l - 1] * adot_bar
        z_bar = d2act[l - 1] * zdots[l - 1] * adot_bar + dact[l - 1] * a_bar

    scale = 2.0 / n
    for arr in grads.weights + grads.biases:
        arr *= scale
    return penalty, grads


@dataclass
class AdamState:
    """First/second-moment accumulators shaped like the parameters."""

    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def for_params(params: MlpParams, lr: float = 1e-3, **kw) -> "AdamState":
        return AdamState(
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
            [np.zeros_like(b) for b in params.biases],
            lr=lr,
            **kw,
        )


def _adam_update(p, g, m, v, state, t):
    m[...] = state.beta1 * m + (1.0 - state.beta1) * g
    v[...] = state.beta2 * v + (1.0 - state.beta2) * g * g
    mhat = m / (1.0 - state.beta1**t)
    vhat = v / (1.0 - state.beta2**t)
    p -= state.lr * mhat / (np.sqrt(vhat) + state.eps)


def adam_step(params: MlpParams, grads: MlpGrads, state: AdamState) -> None:
    """One bias-corrected Adam update, in place."""
    for l, g in enumerate(grads.weights):
        if not np.all(np.isfinite(g)) or not np.all(np.isfinite(grads.biases[l])):
            raise ValueError(f"non-finite gradient at layer {l}")
    state.step += 1
    t = state.step
    for l in range(params.n_layers):
        _adam_update(params.weights[l], grads.weights[l], state.m_w[l], state.v_w[l], state, t)
        _adam_update(params.biases[l], grads.biases[l], state.m_b[l], state.v_b[l], state, t)


@dataclass
class ScalarAdam:
    """Adam for a flat parameter vector (used by the policy log-std)."""

    m: np.ndarray = field(default_factory=lambda: np.zeros(0))
    v: np.ndarray = field(default_factory=lambda: np.zeros(0))
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def for_shape(n: int, lr: float = 1e-3) -> "ScalarAdam":
        return ScalarAdam(np.zeros(n), np.zeros(n), lr=lr)

    def update(self, p: np.ndarray, g: np.ndarray) -> None:
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient for scalar parameters")
        self.step += 1
        self.m[...] = self.beta1 * self.m + (1.0 - self.beta1) * g
        self.v[...] = self.beta2 * self.v + (1.0 - self.beta2) * g * g
        mhat = self.m / (1.0 - self.beta1**self.step)
        vhat = self.v / (1.0 - self.beta2**self.step)
        p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
