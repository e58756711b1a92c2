"""Minimal dense network with hand-rolled backprop.

Hidden layers use tanh, the output is linear, and every parameter is a
64-bit float so that central-difference gradient checks are sharp. The
network is the function approximator behind the deep agents (Q-values,
policy logits, state values); it is intentionally tiny and CPU-only.
"""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteError


class TinyNet:
    """Fully connected net: sizes = (in, hidden..., out)."""

    def __init__(self, sizes: tuple[int, ...], rng: np.random.Generator):
        if len(sizes) < 2:
            raise ValueError("need at least an input and an output size")
        self.sizes = tuple(int(s) for s in sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes, self.sizes[1:]):
            scale = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.standard_normal((fan_in, fan_out)) * scale)
            self.biases.append(np.zeros(fan_out))
        self.g_weights = [np.zeros_like(w) for w in self.weights]
        self.g_biases = [np.zeros_like(b) for b in self.biases]
        self._acts: list[np.ndarray] | None = None

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Forward pass on a (batch, in) array; caches activations."""
        a = np.atleast_2d(np.asarray(x, dtype=np.float64))
        acts = [a]
        for i in range(self.n_layers):
            z = a @ self.weights[i] + self.biases[i]
            a = np.tanh(z) if i < self.n_layers - 1 else z
            acts.append(a)
        self._acts = acts
        return a

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; returns the input gradient.

        Must follow a forward pass; grad_out is dLoss/dOutput for that
        batch.
        """
        if self._acts is None:
            raise RuntimeError("backward called before forward")
        acts = self._acts
        delta = np.atleast_2d(np.asarray(grad_out, dtype=np.float64))
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1:
                delta = delta * (1.0 - acts[i + 1] ** 2)  # tanh'
            self.g_weights[i] += acts[i].T @ delta
            self.g_biases[i] += delta.sum(axis=0)
            delta = delta @ self.weights[i].T
        return delta

    def zero_grads(self) -> None:
        for g in self.g_weights:
            g[:] = 0.0
        for g in self.g_biases:
            g[:] = 0.0

    def sgd_step(self, lr: float) -> None:
        for w, g in zip(self.weights, self.g_weights):
            w -= lr * g
        for b, g in zip(self.biases, self.g_biases):
            b -= lr * g

    def copy(self) -> "TinyNet":
        clone = object.__new__(TinyNet)
        clone.sizes = self.sizes
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        clone.g_weights = [np.zeros_like(w) for w in self.weights]
        clone.g_biases = [np.zeros_like(b) for b in self.biases]
        clone._acts = None
        return clone

    def copy_params_from(self, other: "TinyNet") -> None:
        for dst, src in zip(self.weights, other.weights):
            dst[:] = src
        for dst, src in zip(self.biases, other.biases):
            dst[:] = src

    # flat views used by the gradient checker

    def get_flat(self) -> np.ndarray:
        return np.concatenate(
            [w.ravel() for w in self.weights] + [b.ravel() for b in self.biases]
        )

    def set_flat(self, flat: np.ndarray) -> None:
        offset = 0
        for w in self.weights:
            w[:] = flat[offset : offset + w.size].reshape(w.shape)
            offset += w.size
        for b in self.biases:
            b[:] = flat[offset : offset + b.size].reshape(b.shape)
            offset += b.size

    def flat_grads(self) -> np.ndarray:
        return np.concatenate(
            [g.ravel() for g in self.g_weights] + [g.ravel() for g in self.g_biases]
        )


def mse_loss_and_grad(out: np.ndarray, target: np.ndarray):
    """Mean squared error over all batch entries and outputs."""
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    diff = out - target
    loss = float(np.mean(diff**2))
    return loss, 2.0 * diff / diff.size


def grad_check(
    net: TinyNet,
    inputs: np.ndarray,
    targets: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Max relative error between backprop and central finite differences.

    The squared loss is evaluated at theta +/- h for every parameter. The
    per-parameter error is |analytic - numeric| / max(1, |analytic|,
    |numeric|), so near-zero gradients are compared absolutely and large
    ones relatively.
    """
    out = net.forward(inputs)
    loss, grad_out = mse_loss_and_grad(out, targets)
    if not np.isfinite(loss):
        raise NonFiniteError("loss is not finite")
    net.zero_grads()
    net.backward(grad_out)
    analytic = net.flat_grads().copy()
    if not np.all(np.isfinite(analytic)):
        raise NonFiniteError("gradient is not finite")

    theta = net.get_flat()
    numeric = np.empty_like(analytic)
    for i in range(theta.size):
        saved = theta[i]
        theta[i] = saved + h
        net.set_flat(theta)
        loss_plus, _ = mse_loss_and_grad(net.forward(inputs), targets)
        theta[i] = saved - h
        net.set_flat(theta)
        loss_minus, _ = mse_loss_and_grad(net.forward(inputs), targets)
        theta[i] = saved
        numeric[i] = (loss_plus - loss_minus) / (2.0 * h)
    net.set_flat(theta)
    if not np.all(np.isfinite(numeric)):
        raise NonFiniteError("finite-difference gradient is not finite")

    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log softmax, safe for strongly peaked logits."""
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
