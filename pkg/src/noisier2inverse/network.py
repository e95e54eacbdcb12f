"""Encoder-decoder image-to-image network with flat parameter storage.

The architecture is a U-Net: ``depth`` levels of (conv, conv, 2x pool), a
two-conv bottleneck, then ``depth`` levels of (2x nearest upsample, skip
concatenation, conv, conv), closed by a 1x1 projection to one channel.  All
convolutions use replicate padding so spatial shape is preserved per level;
there is no global residual path.

Parameters live in a single flat array (ParamVector) with a deterministic
named layout, which keeps the optimizer, checkpointing and gradient plumbing
trivial: gradients are just another flat array of the same layout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np

from . import autodiff as ad
from .geometry import ImageGrid


@dataclass(frozen=True)
class NetConfig:
    depth: int = 3
    base_channels: int = 16
    kernel_size: int = 3
    skip_connections: bool = True
    activation_slope: float = 0.1

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.kernel_size % 2 != 1 or self.kernel_size < 1:
            raise ValueError("kernel_size must be odd and positive")


def paper_net_config() -> NetConfig:
    """Full-scale configuration (depth 4, 64 base channels)."""
    return NetConfig(depth=4, base_channels=64)


def _conv_shapes(name: str, cin: int, cout: int, k: int):
    return [(f"{name}_w", (cout, cin, k, k)), (f"{name}_b", (cout,))]


def layer_layout(cfg: NetConfig) -> Tuple[Tuple[str, Tuple[int, ...]], ...]:
    """Deterministic enumeration of every trainable array."""
    k = cfg.kernel_size
    entries: List[Tuple[str, Tuple[int, ...]]] = []
    ch = [cfg.base_channels * 2 ** l for l in range(cfg.depth + 1)]
    cin = 1
    for l in range(cfg.depth):
        entries += _conv_shapes(f"enc{l}a", cin, ch[l], k)
        entries += _conv_shapes(f"enc{l}b", ch[l], ch[l], k)
        cin = ch[l]
    entries += _conv_shapes("bota", ch[cfg.depth - 1], ch[cfg.depth], k)
    entries += _conv_shapes("botb", ch[cfg.depth], ch[cfg.depth], k)
    below = ch[cfg.depth]
    for l in range(cfg.depth - 1, -1, -1):
        cin_dec = below + (ch[l] if cfg.skip_connections else 0)
        entries += _conv_shapes(f"dec{l}a", cin_dec, ch[l], k)
        entries += _conv_shapes(f"dec{l}b", ch[l], ch[l], k)
        below = ch[l]
    entries += _conv_shapes("out", ch[0], 1, 1)
    return tuple(entries)


def param_count(cfg: NetConfig) -> int:
    """Total trainable scalars: sum over convs of cout*cin*k^2 + cout."""
    return sum(int(np.prod(shape)) for _, shape in layer_layout(cfg))


@dataclass(frozen=True)
class ParamVector:
    """All trainable weights as one flat array plus its named layout.

    Also used for gradients, so values are not finiteness-checked here; the
    optimizer step and checkpoint loading enforce that.
    """

    values: np.ndarray
    layout: Tuple[Tuple[str, Tuple[int, ...]], ...]

    def __post_init__(self):
        v = np.asarray(self.values)
        expected = sum(int(np.prod(s)) for _, s in self.layout)
        if v.ndim != 1 or v.size != expected:
            raise ValueError(f"flat length {v.size} does not match layout "
                             f"total {expected}")
        object.__setattr__(self, "values", v)

    def arrays(self) -> Dict[str, np.ndarray]:
        """Named views into the flat array (no copies)."""
        out = {}
        offset = 0
        for name, shape in self.layout:
            size = int(np.prod(shape))
            out[name] = self.values[offset:offset + size].reshape(shape)
            offset += size
        return out

    def with_values(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(values=values, layout=self.layout)

    def astype(self, dtype) -> "ParamVector":
        return self.with_values(self.values.astype(dtype))


def init_params(cfg: NetConfig, seed: int, dtype=np.float32) -> ParamVector:
    """Fan-in-scaled uniform weights (leaky-rectifier gain), zero biases."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC0)))
    layout = layer_layout(cfg)
    gain2 = 1.0 + cfg.activation_slope ** 2
    chunks = []
    for name, shape in layout:
        if name.endswith("_w"):
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / (gain2 * fan_in))
            chunks.append(rng.uniform(-bound, bound, int(np.prod(shape))))
        else:
            chunks.append(np.zeros(int(np.prod(shape))))
    flat = np.concatenate(chunks).astype(dtype)
    return ParamVector(values=flat, layout=layout)


def _apply(leaves: Dict[str, ad.Node], x: ad.Node, cfg: NetConfig) -> ad.Node:
    """The network as a DAG on (B, H, W, C) activations."""
    slope = cfg.activation_slope

    def block(h, name):
        h = ad.leaky_relu(ad.conv2d(h, leaves[f"{name}a_w"], leaves[f"{name}a_b"]), slope)
        h = ad.leaky_relu(ad.conv2d(h, leaves[f"{name}b_w"], leaves[f"{name}b_b"]), slope)
        return h

    skips = []
    h = x
    for l in range(cfg.depth):
        h = block(h, f"enc{l}")
        skips.append(h)
        h = ad.avg_pool2(h)
    h = block(h, "bot")
    for l in range(cfg.depth - 1, -1, -1):
        h = ad.upsample2(h)
        if cfg.skip_connections:
            h = ad.concat_channels(h, skips[l])
        h = block(h, f"dec{l}")
    return ad.conv2d(h, leaves["out_w"], leaves["out_b"])


def _leaves(params: ParamVector) -> Dict[str, ad.Node]:
    return {name: ad.Node(arr) for name, arr in params.arrays().items()}


def _check_width(width: int, cfg: NetConfig) -> None:
    if width % (2 ** cfg.depth) != 0:
        raise ValueError(f"input width {width} not divisible by 2^{cfg.depth}")


def net_apply_batch(params: ParamVector, images: np.ndarray,
                    cfg: NetConfig) -> np.ndarray:
    """Plain forward pass on a (B, H, W) batch, no gradient tape kept."""
    _check_width(images.shape[-1], cfg)
    b, h, w = images.shape
    x = ad.constant(images.reshape(b, h, w, 1))
    out = _apply(_leaves(params), x, cfg)
    return out.value.reshape(b, h, w)


def net_forward(params: ParamVector, image: ImageGrid, cfg: NetConfig) -> ImageGrid:
    """Single-image forward pass."""
    out = net_apply_batch(params, image.values.astype(params.values.dtype)[None], cfg)
    return ImageGrid(values=out[0], pixel_size=image.pixel_size)


def loss_grad(params: ParamVector,
              closure: Callable[[Dict[str, ad.Node]], ad.Node]
              ) -> Tuple[float, ParamVector]:
    """Evaluate a scalar loss and its gradient with respect to params.

    The closure receives the named parameter leaves as Nodes and must return
    a scalar Node composed of registered primitives.
    """
    leaves = _leaves(params)
    root = closure(leaves)
    ad.backward(root)
    chunks = []
    for name, shape in params.layout:
        leaf = leaves[name]
        if leaf.grad is None:
            chunks.append(np.zeros(int(np.prod(shape)), dtype=params.values.dtype))
        else:
            chunks.append(np.asarray(leaf.grad).ravel())
    flat = np.concatenate(chunks).astype(params.values.dtype, copy=False)
    return float(root.value), params.with_values(flat)


def network_closure(params_cfg: NetConfig, images: np.ndarray):
    """Convenience: a closure fragment mapping leaves to batched output Node."""
    b, h, w = images.shape
    x = ad.constant(images.reshape(b, h, w, 1))

    def run(leaves: Dict[str, ad.Node]) -> ad.Node:
        out = _apply(leaves, x, params_cfg)
        return ad.reshape(out, (b, h, w))

    return run


# ---------------------------------------------------------------------------
# optimizer

@dataclass(frozen=True)
class OptimState:
    """Adaptive-moment optimizer state over the flat parameter array."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def fresh(n_params: int, lr: float, dtype=np.float32) -> "OptimState":
        return OptimState(first_moment=np.zeros(n_params, dtype=dtype),
                          second_moment=np.zeros(n_params, dtype=dtype),
                          step_count=0, lr=lr)


def adam_step(state: OptimState, params: ParamVector,
              grad: ParamVector) -> Tuple[OptimState, ParamVector]:
    """One bias-corrected adaptive-moment update; pure in all arguments."""
    g = grad.values
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite gradient in optimizer step")
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * g
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    step = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_values = (params.values - step).astype(params.values.dtype, copy=False)
    if not np.all(np.isfinite(new_values)):
        raise FloatingPointError("non-finite parameters after optimizer step")
    new_params = params.with_values(new_values)
    new_state = OptimState(first_moment=m.astype(state.first_moment.dtype, copy=False),
                           second_moment=v.astype(state.second_moment.dtype, copy=False),
                           step_count=t, lr=state.lr,
                           beta1=state.beta1, beta2=state.beta2, eps=state.eps)
    return new_state, new_params


# ---------------------------------------------------------------------------
# checkpoint file format
#
# Layout (little endian), documented for external consumers:
#   bytes 0-7   magic b"N2IPARAM"
#   u32         format version (1)
#   u32         depth
#   u32         base_channels
#   u32         kernel_size
#   u8          skip_connections (0/1)
#   3 bytes     zero padding
#   f64         activation_slope
#   u64         parameter count
#   f32 * n     flat parameter payload

_MAGIC = b"N2IPARAM"
_HEADER = struct.Struct("<8sIIIIB3xdQ")


def save_params(path, params: ParamVector, cfg: NetConfig) -> None:
    payload = params.values.astype("<f4")
    header = _HEADER.pack(_MAGIC, 1, cfg.depth, cfg.base_channels,
                          cfg.kernel_size, int(cfg.skip_connections),
                          cfg.activation_slope, payload.size)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def load_params(path) -> Tuple[ParamVector, NetConfig]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size or raw[:8] != _MAGIC:
        raise ValueError(f"not a parameter checkpoint: {path}")
    magic, version, depth, base, ksize, skip, slope, n = _HEADER.unpack_from(raw)
    if version != 1:
        raise ValueError(f"unsupported checkpoint version {version}")
    cfg = NetConfig(depth=depth, base_channels=base, kernel_size=ksize,
                    skip_connections=bool(skip), activation_slope=float(slope))
    payload = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size, count=n)
    expected = param_count(cfg)
    if n != expected:
        raise ValueError(f"checkpoint has {n} parameters, config needs {expected}")
    if not np.all(np.isfinite(payload)):
        raise ValueError(f"checkpoint contains non-finite parameters: {path}")
    return ParamVector(values=payload.astype(np.float32),
                       layout=layer_layout(cfg)), cfg
