"""Reverse-mode automatic differentiation on numpy arrays.

Small on purpose: only the operations the models in this package need.
Gradients are plain ``np.ndarray``s accumulated on leaf tensors; graphs are
built eagerly and freed with the loss tensor. Convolution is im2col + BLAS
matmul, so float32 training runs at memory bandwidth, and every op preserves
the input dtype so the same code paths run in float64 for gradient checks.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "SGD",
    "constant",
    "concat_params",
]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward: Callable[[np.ndarray], None] | None = None,
    ):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    # -- bookkeeping ------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, grad={self.requires_grad})"

    def backward(self) -> None:
        """Backpropagate from a scalar tensor."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            # Own the buffer: later consumers of this tensor may += into it.
            self.grad = grad if grad.base is None else grad.copy()
        else:
            self.grad += grad

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = _as_tensor(other, self.dtype)
        out_data = self.data + other.data
        return _binary(self, other, out_data,
                       lambda g: _unbroadcast(g, self.shape),
                       lambda g: _unbroadcast(g, other.shape))

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        other = _as_tensor(other, self.dtype)
        out_data = self.data - other.data
        return _binary(self, other, out_data,
                       lambda g: _unbroadcast(g, self.shape),
                       lambda g: _unbroadcast(-g, other.shape))

    def __rsub__(self, other) -> "Tensor":
        return _as_tensor(other, self.dtype) - self

    def __mul__(self, other) -> "Tensor":
        other = _as_tensor(other, self.dtype)
        out_data = self.data * other.data
        return _binary(self, other, out_data,
                       lambda g: _unbroadcast(g * other.data, self.shape),
                       lambda g: _unbroadcast(g * self.data, other.shape))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = _as_tensor(other, self.dtype)
        out_data = self.data / other.data
        return _binary(self, other, out_data,
                       lambda g: _unbroadcast(g / other.data, self.shape),
                       lambda g: _unbroadcast(-g * self.data / (other.data ** 2), other.shape))

    def __rtruediv__(self, other) -> "Tensor":
        return _as_tensor(other, self.dtype) / self

    def __neg__(self) -> "Tensor":
        return _unary(self, -self.data, lambda g: -g)

    def __pow__(self, p: float) -> "Tensor":
        out_data = self.data ** p
        return _unary(self, out_data, lambda g: g * p * self.data ** (p - 1))

    def __matmul__(self, other: "Tensor") -> "Tensor":
        other = _as_tensor(other, self.dtype)
        if self.ndim < 2 or other.ndim < 2:
            raise ValueError("matmul expects tensors with ndim >= 2")
        out_data = self.data @ other.data
        a, b = self.data, other.data

        def grad_a(g: np.ndarray) -> np.ndarray:
            return _unbroadcast(g @ b.swapaxes(-1, -2), self.shape)

        def grad_b(g: np.ndarray) -> np.ndarray:
            return _unbroadcast(a.swapaxes(-1, -2) @ g, other.shape)

        return _binary(self, other, out_data, grad_a, grad_b)

    # -- shape ops --------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return _unary(self, self.data.reshape(shape), lambda g: g.reshape(old))

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = np.argsort(axes)
        return _unary(self, np.ascontiguousarray(self.data.transpose(axes)),
                      lambda g: g.transpose(inverse))

    def __getitem__(self, key) -> "Tensor":
        out_data = self.data[key]
        shape, dtype = self.shape, self.dtype

        def backward(g: np.ndarray) -> np.ndarray:
            full = np.zeros(shape, dtype=dtype)
            full[key] = g
            return full

        return _unary(self, out_data, backward)

    # -- reductions -------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out_data = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.shape

        def backward(g: np.ndarray) -> np.ndarray:
            if axis is None:
                return np.full(shape, g, dtype=g.dtype)
            gg = g
            if not keepdims:
                axes = axis if isinstance(axis, tuple) else (axis,)
                for ax in sorted(a % len(shape) for a in axes):
                    gg = np.expand_dims(gg, ax)
            return np.broadcast_to(gg, shape).copy()

        return _unary(self, out_data, backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- elementwise nonlinearities ----------------------------------------

    def exp(self) -> "Tensor":
        out_data = np.exp(self.data)
        return _unary(self, out_data, lambda g: g * out_data)

    def log(self) -> "Tensor":
        return _unary(self, np.log(self.data), lambda g: g / self.data)

    def relu(self) -> "Tensor":
        mask = self.data > 0
        return _unary(self, np.where(mask, self.data, 0), lambda g: g * mask)

    def sigmoid(self) -> "Tensor":
        x = self.data
        out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                            np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x)))).astype(x.dtype)
        return _unary(self, out_data, lambda g: g * out_data * (1.0 - out_data))

    def softplus(self) -> "Tensor":
        x = self.data
        out_data = np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))
        sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                       np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x)))).astype(x.dtype)
        return _unary(self, out_data, lambda g: g * sig)

    def softmax(self, axis: int = -1) -> "Tensor":
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out_data = e / e.sum(axis=axis, keepdims=True)

        def backward(g: np.ndarray) -> np.ndarray:
            dot = (g * out_data).sum(axis=axis, keepdims=True)
            return out_data * (g - dot)

        return _unary(self, out_data, backward)

    def log_softmax(self, axis: int = -1) -> "Tensor":
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        out_data = shifted - lse
        soft = np.exp(out_data)

        def backward(g: np.ndarray) -> np.ndarray:
            return g - soft * g.sum(axis=axis, keepdims=True)

        return _unary(self, out_data, backward)

    def dropout(self, p: float, rng: np.random.Generator) -> "Tensor":
        """Inverted dropout; draws one mask from `rng` per call."""
        keep = (rng.random(self.shape) >= p)
        scale = 1.0 / (1.0 - p)
        out_data = np.where(keep, self.data * scale, 0).astype(self.dtype)
        return _unary(self, out_data, lambda g: np.where(keep, g * scale, 0).astype(g.dtype))

    # -- spatial ops --------------------------------------------------------

    def conv3d(self, weight: "Tensor", bias: "Tensor" | None,
               stride: tuple[int, int, int] = (1, 1, 1),
               padding: tuple[int, int, int] = (1, 1, 1)) -> "Tensor":
        """3D convolution; x (B,Ci,T,H,W), weight (Co,Ci,kt,kh,kw)."""
        out = _conv3d_forward(self, weight, stride, padding)
        if bias is not None:
            out = out + bias.reshape(1, -1, 1, 1, 1)
        return out

    def maxpool3d(self, k: tuple[int, int, int]) -> "Tensor":
        B, C, T, H, W = self.shape
        kt, kh, kw = k
        if T % kt or H % kh or W % kw:
            raise ValueError(f"pool window {k} must divide dims {(T, H, W)}")
        To, Ho, Wo = T // kt, H // kh, W // kw
        windows = self.data.reshape(B, C, To, kt, Ho, kh, Wo, kw)
        windows = np.ascontiguousarray(windows.transpose(0, 1, 2, 4, 6, 3, 5, 7))
        flat = windows.reshape(B, C, To, Ho, Wo, kt * kh * kw)
        idx = flat.argmax(axis=-1)
        out_data = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

        def backward(g: np.ndarray) -> np.ndarray:
            gflat = np.zeros_like(flat)
            np.put_along_axis(gflat, idx[..., None], g[..., None], axis=-1)
            gwin = gflat.reshape(B, C, To, Ho, Wo, kt, kh, kw)
            gwin = gwin.transpose(0, 1, 2, 5, 3, 6, 4, 7)
            return gwin.reshape(B, C, T, H, W)

        return _unary(self, out_data, backward)


def _as_tensor(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _unary(x: Tensor, out_data: np.ndarray, grad_fn: Callable[[np.ndarray], np.ndarray]) -> Tensor:
    if not x.requires_grad:
        return Tensor(out_data)

    out = Tensor(out_data, requires_grad=True, parents=(x,))

    def backward(g: np.ndarray) -> None:
        x._accumulate(grad_fn(g))

    out._backward = backward
    return out


def _binary(a: Tensor, b: Tensor, out_data: np.ndarray,
            grad_a: Callable[[np.ndarray], np.ndarray],
            grad_b: Callable[[np.ndarray], np.ndarray]) -> Tensor:
    if not a.requires_grad and not b.requires_grad:
        return Tensor(out_data)

    out = Tensor(out_data, requires_grad=True, parents=(a, b))

    def backward(g: np.ndarray) -> None:
        # A grad_fn may return `g` itself (identity adds); copy so the two
        # parents never share a buffer that one of them later += into.
        if a.requires_grad:
            ga = grad_a(g)
            a._accumulate(ga.copy() if ga is g else ga)
        if b.requires_grad:
            gb = grad_b(g)
            b._accumulate(gb.copy() if gb is g else gb)

    out._backward = backward
    return out


def _im2col(x: np.ndarray, kernel: tuple[int, int, int],
            stride: tuple[int, int, int], padding: tuple[int, int, int]):
    """Return (col, out_dims): col has shape (B*To*Ho*Wo, Ci*kt*kh*kw)."""
    kt, kh, kw = kernel
    st, sh, sw = stride
    pt, ph, pw = padding
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))
    B, C, Tp, Hp, Wp = xp.shape
    To = (Tp - kt) // st + 1
    Ho = (Hp - kh) // sh + 1
    Wo = (Wp - kw) // sw + 1
    win = np.lib.stride_tricks.sliding_window_view(xp, (kt, kh, kw), axis=(2, 3, 4))
    win = win[:, :, ::st, ::sh, ::sw]
    col = np.ascontiguousarray(win.transpose(0, 2, 3, 4, 1, 5, 6, 7))
    return col.reshape(B * To * Ho * Wo, C * kt * kh * kw), (To, Ho, Wo)


def _conv3d_forward(x: Tensor, weight: Tensor,
                    stride: tuple[int, int, int], padding: tuple[int, int, int]) -> Tensor:
    B, Ci, T, H, W = x.shape
    Co, Ci_w, kt, kh, kw = weight.shape
    if Ci != Ci_w:
        raise ValueError(f"conv3d channel mismatch: input {Ci}, weight {Ci_w}")
    col, (To, Ho, Wo) = _im2col(x.data, (kt, kh, kw), stride, padding)
    wmat = weight.data.reshape(Co, -1).T
    out_flat = col @ wmat
    out_data = np.ascontiguousarray(
        out_flat.reshape(B, To, Ho, Wo, Co).transpose(0, 4, 1, 2, 3))

    if not (x.requires_grad or weight.requires_grad):
        return Tensor(out_data)

    out = Tensor(out_data, requires_grad=True, parents=(x, weight))

    def backward(g: np.ndarray) -> None:
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 4, 1)).reshape(-1, Co)
        if weight.requires_grad:
            dw = (col.T @ gmat).T.reshape(Co, Ci, kt, kh, kw)
            weight._accumulate(dw)
        if x.requires_grad:
            dcol = (gmat @ wmat.T).reshape(B, To, Ho, Wo, Ci, kt, kh, kw)
            st, sh, sw = stride
            pt, ph, pw = padding
            dxp = np.zeros((B, Ci, T + 2 * pt, H + 2 * ph, W + 2 * pw), dtype=g.dtype)
            for dt in range(kt):
                for dh in range(kh):
                    for dw_ in range(kw):
                        dxp[:, :,
                            dt:dt + st * To:st,
                            dh:dh + sh * Ho:sh,
                            dw_:dw_ + sw * Wo:sw] += dcol[:, :, :, :, :, dt, dh, dw_].transpose(0, 4, 1, 2, 3)
            x._accumulate(dxp[:, :, pt:pt + T, ph:ph + H, pw:pw + W])

    out._backward = backward
    return out


def constant(data, dtype=None) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype))


class Parameter(Tensor):
    """Trainable leaf tensor."""

    def __init__(self, data):
        super().__init__(np.asarray(data), requires_grad=True)

    def freeze(self) -> None:
        self.requires_grad = False

    def unfreeze(self) -> None:
        self.requires_grad = True


def concat_params(*groups: dict[str, Parameter] | Iterable[tuple[str, Parameter]]) -> dict[str, Parameter]:
    merged: dict[str, Parameter] = {}
    for group in groups:
        items = group.items() if isinstance(group, dict) else group
        for name, param in items:
            if name in merged:
                raise ValueError(f"duplicate parameter name {name!r}")
            merged[name] = param
    return merged


class SGD:
    """SGD with classical momentum, optional weight decay, mutable lr."""

    def __init__(self, params: dict[str, Parameter], lr: float,
                 momentum: float = 0.9, weight_decay: float = 0.0):
        self.params = {name: p for name, p in params.items() if p.requires_grad}
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity: dict[str, np.ndarray] = {
            name: np.zeros_like(p.data) for name, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            v = self.velocity[name]
            v *= self.momentum
            v += g
            p.data -= (self.lr * v).astype(p.data.dtype, copy=False)

    def state(self) -> dict[str, np.ndarray]:
        return {name: v.copy() for name, v in self.velocity.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, v in state.items():
            if name in self.velocity:
                self.velocity[name] = v.astype(self.velocity[name].dtype).copy()
