"""Minimal reverse-mode automatic differentiation for the training losses.

A computation is a DAG of Node objects; each primitive records its parent
nodes and one vector-Jacobian callback per parent.  backward() seeds the
scalar root with 1 and accumulates gradients in reverse topological order.

The primitive set is exactly what the reconstruction losses compose: 2D
convolution (replicate padding), leaky rectifier, 2x average pooling,
nearest-neighbour upsampling, channel concatenation, elementwise add and
subtract, reshape, squared norm, the batched Radon transform (whose VJP is
the stored transpose) and the batched sinogram forward-difference operator.

Arrays keep whatever dtype they come in with; training uses float32,
gradient-correctness tests float64.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np


class Node:
    """One value in the computation DAG."""

    __slots__ = ("value", "parents", "vjps", "grad")

    def __init__(self, value, parents=(), vjps=()):
        self.value = value
        self.parents = parents
        self.vjps = vjps
        self.grad = None


def constant(value) -> Node:
    return Node(np.asarray(value))


def _wrap(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def backward(root: Node) -> None:
    """Fill .grad on every node reachable from the scalar root."""
    if np.ndim(root.value) != 0:
        raise ValueError("backward() needs a scalar root")
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in visited:
                stack.append((p, False))

    for node in order:
        node.grad = None
    root.grad = np.asarray(1.0)
    for node in reversed(order):
        if node.grad is None:
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            contrib = vjp(node.grad)
            if parent.grad is None:
                parent.grad = contrib
            else:
                parent.grad = parent.grad + contrib


# ---------------------------------------------------------------------------
# elementwise / structural primitives

def add(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    return Node(a.value + b.value, (a, b), (lambda g: g, lambda g: g))


def sub(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    return Node(a.value - b.value, (a, b), (lambda g: g, lambda g: -g))


def scale(a, c: float) -> Node:
    a = _wrap(a)
    return Node(a.value * c, (a,), (lambda g: g * c,))


def reshape(a, shape: Tuple[int, ...]) -> Node:
    a = _wrap(a)
    old = a.value.shape
    return Node(a.value.reshape(shape), (a,), (lambda g: g.reshape(old),))


def leaky_relu(x, slope: float = 0.1) -> Node:
    x = _wrap(x)
    mask = x.value >= 0
    out = np.where(mask, x.value, x.value * slope)

    def vjp(g):
        return np.where(mask, g, g * slope)

    return Node(out.astype(x.value.dtype, copy=False), (x,), (vjp,))


def sum_squares(x) -> Node:
    x = _wrap(x)
    val = float(np.sum(np.square(x.value, dtype=np.float64)))

    def vjp(g):
        return (2.0 * float(g)) * x.value

    return Node(val, (x,), (vjp,))


def concat_channels(a, b) -> Node:
    """Concatenate (B, H, W, C) activations along the channel axis."""
    a, b = _wrap(a), _wrap(b)
    ca = a.value.shape[-1]
    out = np.concatenate([a.value, b.value], axis=-1)
    return Node(out, (a, b),
                (lambda g: g[..., :ca], lambda g: g[..., ca:]))


# ---------------------------------------------------------------------------
# convolution and resampling on (B, H, W, C) activations
#
# Channels-last keeps the channel axis contiguous, so the patch extraction
# below copies 4*C-byte runs instead of single elements and the convolution
# output needs no transposition.

def _pad_replicate(x: np.ndarray, p: int) -> np.ndarray:
    return np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)), mode="edge")


def _fold_replicate(dpad: np.ndarray, p: int) -> np.ndarray:
    """Adjoint of replicate padding on the two spatial axes of (B, H, W, C)."""
    if p == 0:
        return dpad
    dx = dpad[:, p:-p, p:-p, :].copy()
    dx[:, 0, :, :] += dpad[:, :p, p:-p, :].sum(axis=1)
    dx[:, -1, :, :] += dpad[:, -p:, p:-p, :].sum(axis=1)
    dx[:, :, 0, :] += dpad[:, p:-p, :p, :].sum(axis=2)
    dx[:, :, -1, :] += dpad[:, p:-p, -p:, :].sum(axis=2)
    dx[:, 0, 0, :] += dpad[:, :p, :p, :].sum(axis=(1, 2))
    dx[:, 0, -1, :] += dpad[:, :p, -p:, :].sum(axis=(1, 2))
    dx[:, -1, 0, :] += dpad[:, -p:, :p, :].sum(axis=(1, 2))
    dx[:, -1, -1, :] += dpad[:, -p:, -p:, :].sum(axis=(1, 2))
    return dx


def _im2col(padded: np.ndarray, k: int) -> np.ndarray:
    """(B, Hp, Wp, C) -> patch matrix (B*H*W, k*k*C), H = Hp - k + 1."""
    b, hp, wp, c = padded.shape
    sw = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(1, 2))
    cols = np.ascontiguousarray(sw.transpose(0, 1, 2, 4, 5, 3))
    return cols.reshape(b * (hp - k + 1) * (wp - k + 1), k * k * c)


def conv2d(x, w, bias) -> Node:
    """Stride-1 2D convolution with replicate padding, odd square kernel.

    x: (B, H, W, Cin); w: (Cout, Cin, k, k); bias: (Cout,).
    The patch matrix is kept for the weight VJP (memory for speed).  The
    input VJP is itself a correlation with the flipped kernel, evaluated as
    a second patch-matrix product rather than a scatter.
    """
    x, w, bias = _wrap(x), _wrap(w), _wrap(bias)
    b, h, wd, cin = x.value.shape
    cout, cin_w, k, k2 = w.value.shape
    if cin != cin_w or k != k2 or k % 2 != 1:
        raise ValueError(f"kernel {w.value.shape} incompatible with input "
                         f"{x.value.shape}")
    p = k // 2
    cols = _im2col(_pad_replicate(x.value, p), k)    # (B*H*W, k*k*Cin)
    wmat = np.ascontiguousarray(w.value.transpose(2, 3, 1, 0)).reshape(
        k * k * cin, cout)
    out = cols @ wmat                                # (B*H*W, Cout)
    out += bias.value
    out = out.reshape(b, h, wd, cout)

    def vjp_x(g):
        # d/dpadded is the full correlation of g with the flipped kernel:
        # zero-pad g by k-1, extract patches, contract over (k, k, Cout).
        gz = np.pad(g, ((0, 0), (k - 1, k - 1), (k - 1, k - 1), (0, 0)))
        gcols = _im2col(gz, k)                       # (B*Hp*Wp, k*k*Cout)
        wflip = np.ascontiguousarray(
            w.value[:, :, ::-1, ::-1].transpose(2, 3, 0, 1)).reshape(
            k * k * cout, cin)
        dpad = (gcols @ wflip).reshape(b, h + 2 * p, wd + 2 * p, cin)
        return _fold_replicate(dpad, p)

    def vjp_w(g):
        gmat = g.reshape(b * h * wd, cout)
        dwmat = cols.T @ gmat                        # (k*k*Cin, Cout)
        return np.ascontiguousarray(
            dwmat.reshape(k, k, cin, cout).transpose(3, 2, 0, 1))

    def vjp_b(g):
        return g.sum(axis=(0, 1, 2))

    return Node(out, (x, w, bias), (vjp_x, vjp_w, vjp_b))


def avg_pool2(x) -> Node:
    """2x2 mean pooling; spatial dims must be even."""
    x = _wrap(x)
    b, h, w, c = x.value.shape
    if h % 2 or w % 2:
        raise ValueError("avg_pool2 needs even spatial dims")
    out = x.value.reshape(b, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))

    def vjp(g):
        up = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2)
        return (up * 0.25).astype(g.dtype, copy=False)

    return Node(out.astype(x.value.dtype, copy=False), (x,), (vjp,))


def upsample2(x) -> Node:
    """Nearest-neighbour 2x upsampling."""
    x = _wrap(x)
    out = np.repeat(np.repeat(x.value, 2, axis=1), 2, axis=2)

    def vjp(g):
        b, h2, w2, c = g.shape
        return g.reshape(b, h2 // 2, 2, w2 // 2, 2, c).sum(axis=(2, 4))

    return Node(out, (x,), (vjp,))


# ---------------------------------------------------------------------------
# measurement-domain primitives

def radon_batch(x, projector, subset: Optional[Tuple[int, ...]]) -> Node:
    """Batched Radon transform (B, W, W) -> (B, rows, dets); VJP = transpose."""
    x = _wrap(x)
    out = projector.apply(x.value, subset)

    def vjp(g):
        return projector.apply_adjoint(g, subset)

    return Node(out, (x,), (vjp,))


def grad2d_batch(x) -> Node:
    """Forward differences of (B, R, D) sinograms, stacked as (B, 2, R, D)."""
    from .tomo import grad_values_adjoint, grad_values_forward
    x = _wrap(x)
    da, dd = grad_values_forward(x.value)
    out = np.stack([da, dd], axis=-3)

    def vjp(g):
        return grad_values_adjoint(g[..., 0, :, :], g[..., 1, :, :])

    return Node(out, (x,), (vjp,))
