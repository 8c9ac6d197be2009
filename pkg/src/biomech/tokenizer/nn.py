"""Minimal 1D-convolutional layers with hand-written backprop, plus Adam.

Everything runs in float64 on (batch, channels, length) arrays. Convolutions
go through an im2col + matmul path so BLAS does the heavy lifting; gradients
are exact, which the finite-difference checks in the test suite rely on.
"""

from __future__ import annotations

import numpy as np


class Layer:
    def parameters(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        """(name, param, grad) triples; params and grads are mutated in place."""
        return []

    def zero_grad(self) -> None:
        for _, _, g in self.parameters():
            g[...] = 0.0


class Conv1d(Layer):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int = 1,
                 pad: int = 0, *, rng: np.random.Generator, init_scale: float = 1.0):
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.pad = kernel, stride, pad
        # Variance-preserving init; anything hotter compounds badly through
        # the stacked blocks on both sides of the bottleneck.
        scale = init_scale * np.sqrt(1.0 / (in_ch * kernel))
        self.w = rng.normal(0.0, scale, (out_ch, in_ch, kernel))
        self.b = np.zeros(out_ch)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)

    def parameters(self):
        return [("w", self.w, self.dw), ("b", self.b, self.db)]

    def out_len(self, length: int) -> int:
        return (length + 2 * self.pad - self.kernel) // self.stride + 1

    def forward(self, x: np.ndarray):
        n, c, length = x.shape
        l_out = self.out_len(length)
        xp = np.pad(x, ((0, 0), (0, 0), (self.pad, self.pad))) if self.pad else x
        cols = np.empty((n, c, self.kernel, l_out))
        for j in range(self.kernel):
            cols[:, :, j, :] = xp[:, :, j:j + self.stride * (l_out - 1) + 1:self.stride]
        patches = cols.transpose(0, 3, 1, 2).reshape(n * l_out, c * self.kernel)
        y = patches @ self.w.reshape(self.out_ch, -1).T + self.b
        y = y.reshape(n, l_out, self.out_ch).transpose(0, 2, 1)
        return y, (patches, x.shape)

    def backward(self, dy: np.ndarray, cache):
        patches, x_shape = cache
        n, c, length = x_shape
        l_out = dy.shape[2]
        dyf = dy.transpose(0, 2, 1).reshape(-1, self.out_ch)
        self.dw += (dyf.T @ patches).reshape(self.w.shape)
        self.db += dyf.sum(axis=0)
        dpatches = dyf @ self.w.reshape(self.out_ch, -1)
        dcols = dpatches.reshape(n, l_out, c, self.kernel).transpose(0, 2, 3, 1)
        dxp = np.zeros((n, c, length + 2 * self.pad))
        for j in range(self.kernel):
            dxp[:, :, j:j + self.stride * (l_out - 1) + 1:self.stride] += dcols[:, :, j, :]
        return dxp[:, :, self.pad:self.pad + length] if self.pad else dxp


class ReLU(Layer):
    def forward(self, x):
        mask = x > 0.0
        return x * mask, mask

    def backward(self, dy, mask):
        return dy * mask


class UpsampleNearest2(Layer):
    """Nearest-neighbor temporal upsampling by 2."""

    def forward(self, x):
        return np.repeat(x, 2, axis=2), None

    def backward(self, dy, _):
        return dy[:, :, 0::2] + dy[:, :, 1::2]


class ResidualBlock(Layer):
    """x + conv1x1(relu(conv3(x))), channel-preserving."""

    def __init__(self, ch: int, *, rng: np.random.Generator):
        self.conv3 = Conv1d(ch, ch, 3, stride=1, pad=1, rng=rng)
        self.relu = ReLU()
        self.conv1 = Conv1d(ch, ch, 1, rng=rng, init_scale=0.25)

    def parameters(self):
        return ([("conv3." + n, p, g) for n, p, g in self.conv3.parameters()]
                + [("conv1." + n, p, g) for n, p, g in self.conv1.parameters()])

    def forward(self, x):
        h, c3 = self.conv3.forward(x)
        h, cr = self.relu.forward(h)
        h, c1 = self.conv1.forward(h)
        return x + h, (c3, cr, c1)

    def backward(self, dy, cache):
        c3, cr, c1 = cache
        dh = self.conv1.backward(dy, c1)
        dh = self.relu.backward(dh, cr)
        dh = self.conv3.backward(dh, c3)
        return dy + dh


class Sequential(Layer):
    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def parameters(self):
        out = []
        for i, layer in enumerate(self.layers):
            out.extend((f"{i}.{n}", p, g) for n, p, g in layer.parameters())
        return out

    def forward(self, x):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, dy, caches):
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dy = layer.backward(dy, cache)
        return dy


def build_encoder(in_ch: int, dim: int, depth: int, rng: np.random.Generator) -> Sequential:
    """Stride-2 conv blocks (kernel 4), each followed by a residual block.

    Total temporal stride is 2**depth.
    """
    layers: list[Layer] = []
    ch = in_ch
    for _ in range(depth):
        layers.append(Conv1d(ch, dim, 4, stride=2, pad=1, rng=rng))
        layers.append(ResidualBlock(dim, rng=rng))
        ch = dim
    return Sequential(layers)


def build_decoder(dim: int, out_ch: int, depth: int, rng: np.random.Generator) -> Sequential:
    """Mirror of the encoder: residual block, nearest upsample x2, conv."""
    layers: list[Layer] = []
    for i in range(depth):
        last = i == depth - 1
        layers.append(ResidualBlock(dim, rng=rng))
        layers.append(UpsampleNearest2())
        layers.append(Conv1d(dim, out_ch if last else dim, 3, stride=1, pad=1, rng=rng))
    return Sequential(layers)


class Adam:
    def __init__(self, params: list[tuple[str, np.ndarray, np.ndarray]],
                 lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for _, p, _ in params]
        self.v = [np.zeros_like(p) for _, p, _ in params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for (_, p, g), m, v in zip(self.params, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def flatten_params(params: list[tuple[str, np.ndarray, np.ndarray]]) -> np.ndarray:
    return np.concatenate([p.ravel() for _, p, _ in params])


def set_params_from_flat(params: list[tuple[str, np.ndarray, np.ndarray]], flat: np.ndarray) -> None:
    offset = 0
    for _, p, _ in params:
        p[...] = flat[offset:offset + p.size].reshape(p.shape)
        offset += p.size


def flatten_grads(params: list[tuple[str, np.ndarray, np.ndarray]]) -> np.ndarray:
    return np.concatenate([g.ravel() for _, _, g in params])
