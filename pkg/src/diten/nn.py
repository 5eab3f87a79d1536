"""Minimal feedforward-network substrate with exact reverse-mode gradients.

Dense tanh MLPs over float64 numpy arrays, a hand-rolled backward pass that
returns parameter (and input) gradients, plain-SGD and adaptive-moment
update rules, block-softmax sampling for factorized categorical policies,
and a flat binary checkpoint format.  Everything is deterministic given the
caller's Generator.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Mlp",
    "GradientTape",
    "AdamState",
    "init_mlp",
    "forward",
    "backward",
    "sgd_step",
    "adam_step",
    "softmax_block_sample",
    "block_log_probs",
    "save_checkpoint",
    "load_checkpoint",
    "gradcheck",
]

CHECKPOINT_MAGIC = b"DTMLP001"


@dataclass
class Mlp:
    """Dense tanh network; weights[i] has shape (fan_in, fan_out)."""

    weights: list
    biases: list

    @property
    def sizes(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class GradientTape:
    """Parameter gradients from one backward pass, aligned with the net."""

    weight_grads: list
    bias_grads: list
    input_grad: np.ndarray | None = None


def init_mlp(sizes, rng, output_gain: float = 0.01) -> Mlp:
    """Scaled-uniform initialization; the output head is shrunk by
    ``output_gain`` so an untrained policy starts near uniform."""
    if len(sizes) < 2:
        raise ValueError("need at least an input and an output size")
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = output_gain if i == len(sizes) - 2 else 1.0
        bound = gain * np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases)


def forward(net: Mlp, x):
    """Batch forward pass; returns (output, activations).

    ``x`` may be (N, in) or a single (in,) vector (promoted to a 1-row
    batch).  ``activations`` holds the input and every post-tanh hidden
    layer, which is exactly what ``backward`` needs.
    """
    h = np.atleast_2d(np.asarray(x, dtype=float))
    activations = [h]
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i != last:
            h = np.tanh(h)
            activations.append(h)
    return h, activations


def backward(net: Mlp, activations, dloss_dout) -> GradientTape:
    """Exact gradients of a scalar loss given d loss / d output.

    ``activations`` must come from ``forward`` on the same net and batch.
    Also propagates to the input so critics can differentiate through an
    action fed in as part of ``x``.
    """
    delta = np.atleast_2d(np.asarray(dloss_dout, dtype=float))
    weight_grads = [None] * len(net.weights)
    bias_grads = [None] * len(net.biases)
    for i in range(len(net.weights) - 1, -1, -1):
        weight_grads[i] = activations[i].T @ delta
        bias_grads[i] = delta.sum(axis=0)
        delta = delta @ net.weights[i].T
        if i > 0:  # undo the tanh of the layer below
            delta = delta * (1.0 - activations[i] ** 2)
    return GradientTape(weight_grads, bias_grads, input_grad=delta)


def sgd_step(net: Mlp, tape: GradientTape, lr: float, direction: float = -1.0):
    """Plain gradient step; direction -1 descends, +1 ascends."""
    for w, b, wg, bg in zip(
        net.weights, net.biases, tape.weight_grads, tape.bias_grads
    ):
        w += direction * lr * wg
        b += direction * lr * bg


@dataclass
class AdamState:
    """First/second moment accumulators for the adaptive-moment update."""

    m_w: list = field(default_factory=list)
    v_w: list = field(default_factory=list)
    m_b: list = field(default_factory=list)
    v_b: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_net(cls, net: Mlp) -> "AdamState":
        return cls(
            m_w=[np.zeros_like(w) for w in net.weights],
            v_w=[np.zeros_like(w) for w in net.weights],
            m_b=[np.zeros_like(b) for b in net.biases],
            v_b=[np.zeros_like(b) for b in net.biases],
        )


def adam_step(
    net: Mlp,
    tape: GradientTape,
    state: AdamState,
    lr: float,
    direction: float = -1.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """Adaptive-moment update, available behind config where plain SGD is
    too slow; same direction convention as ``sgd_step``."""
    state.t += 1
    correct1 = 1.0 - beta1**state.t
    correct2 = 1.0 - beta2**state.t
    for params, grads, ms, vs in (
        (net.weights, tape.weight_grads, state.m_w, state.v_w),
        (net.biases, tape.bias_grads, state.m_b, state.v_b),
    ):
        for p, g, m, v in zip(params, grads, ms, vs):
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p += direction * lr * (m / correct1) / (np.sqrt(v / correct2) + eps)


def _block_log_softmax(logits, block_size: int):
    blocks = logits.reshape(-1, block_size)
    shifted = blocks - blocks.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return shifted - log_z  # (n_blocks, block_size)


def softmax_block_sample(logits, block_size: int, rng):
    """Sample one index per softmax block of a flat logit vector.

    Logits of shape (B * block_size,) define B independent categoricals.
    Sampling happens in probability space from log-space-normalized blocks,
    so huge logits stay finite.  Returns (indices (B,), total log prob).
    """
    logits = np.asarray(logits, dtype=float).ravel()
    if logits.size % block_size:
        raise ValueError("logit length must be a multiple of block_size")
    logp = _block_log_softmax(logits, block_size)
    cdf = np.exp(logp).cumsum(axis=1)
    draws = rng.random((logp.shape[0], 1))
    indices = np.minimum(
        (cdf < draws).sum(axis=1), block_size - 1
    )
    total = float(logp[np.arange(logp.shape[0]), indices].sum())
    return indices, total


def block_log_probs(logits, block_size: int, indices):
    """Log probability of chosen indices under blockwise softmax, batched.

    ``logits`` is (N, B * block_size), ``indices`` (N, B).  Returns the
    per-row total log prob (N,) and the full probabilities (N, B, k).
    """
    logits = np.asarray(logits, dtype=float)
    n = logits.shape[0]
    blocks = logits.reshape(n, -1, block_size)
    shifted = blocks - blocks.max(axis=2, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=2, keepdims=True))
    logp = shifted - log_z
    idx = np.asarray(indices, dtype=int)
    rows = np.arange(n)[:, None]
    cols = np.arange(blocks.shape[1])[None, :]
    total = logp[rows, cols, idx].sum(axis=1)
    return total, np.exp(logp)


def save_checkpoint(net: Mlp, path):
    """Write a net as magic + layer-size header + little-endian float64.

    Layout: 8 magic bytes, uint32 size count, that many uint32 layer sizes,
    then for each layer the weight matrix (row-major) and the bias vector.
    """
    sizes = net.sizes
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        for w, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path) -> Mlp:
    """Read a checkpoint written by ``save_checkpoint``; validates layout."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError("not a network checkpoint (bad magic bytes)")
    offset = len(CHECKPOINT_MAGIC)
    (n_sizes,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    sizes = list(struct.unpack_from(f"<{n_sizes}I", blob, offset))
    offset += 4 * n_sizes
    expected = sum(
        fi * fo + fo for fi, fo in zip(sizes[:-1], sizes[1:])
    )
    payload = np.frombuffer(blob, dtype="<f8", offset=offset)
    if payload.size != expected:
        raise ValueError(
            f"checkpoint payload holds {payload.size} floats, "
            f"expected {expected} for sizes {sizes}"
        )
    weights, biases, pos = [], [], 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(
            payload[pos : pos + fan_in * fan_out]
            .reshape(fan_in, fan_out)
            .astype(float)
        )
        pos += fan_in * fan_out
        biases.append(payload[pos : pos + fan_out].astype(float))
        pos += fan_out
    return Mlp(weights, biases)


def gradcheck(net: Mlp, x, rng, eps: float = 1e-5) -> float:
    """Max relative error of analytic vs central-difference gradients.

    Uses a fixed random linear readout of the outputs as the scalar loss
    and perturbs every parameter.  Small nets only; cost is two forward
    passes per parameter.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out, acts = forward(net, x)
    readout = rng.normal(size=out.shape)
    tape = backward(net, acts, readout)

    def loss():
        return float((forward(net, x)[0] * readout).sum())

    worst = 0.0
    for params, grads in (
        (net.weights, tape.weight_grads),
        (net.biases, tape.bias_grads),
    ):
        for p, g in zip(params, grads):
            flat_p = p.ravel()
            flat_g = g.ravel()
            for i in range(flat_p.size):
                keep = flat_p[i]
                flat_p[i] = keep + eps
                up = loss()
                flat_p[i] = keep - eps
                down = loss()
                flat_p[i] = keep
                numeric = (up - down) / (2.0 * eps)
                scale = max(1e-8, abs(numeric) + abs(flat_g[i]))
                worst = max(worst, abs(numeric - flat_g[i]) / scale)
    return worst
