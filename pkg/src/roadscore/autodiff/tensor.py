"""Dense float64 tensors with reverse-mode automatic differentiation.

Deliberately small: exactly the operations the panorama network and its
losses need, nothing more. Arrays are row-major float64 throughout and
gradients accumulate additively until `zero_grad`.
"""

from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Function:
    """One differentiable operation: forward computes data, backward maps
    the output gradient to per-input gradients (None where not required)."""

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs
        self.needs = tuple(t.requires_grad for t in inputs)

    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray):
        raise NotImplementedError

    @classmethod
    def apply(cls, *args, **kwargs) -> "Tensor":
        tensors = [as_tensor(a) for a in args]
        fn = cls(*tensors)
        out_data = fn.forward(*(t.data for t in tensors), **kwargs)
        out = Tensor(out_data, requires_grad=any(fn.needs))
        if out.requires_grad:
            out._ctx = fn
        return out


class Tensor:
    """n-dimensional float64 array with optional gradient tracking.

    Data is immutable by convention once the tensor participates in a
    graph; only `grad` and (for parameters, between episodes) `data` are
    updated in place by the optimizer.
    """

    __slots__ = ("data", "requires_grad", "grad", "_ctx")

    def __init__(self, data: ArrayLike, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._ctx: Optional[Function] = None

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # -- gradient bookkeeping ------------------------------------------

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every reachable
        tensor that has requires_grad set."""
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar loss, got shape {self.data.shape}"
            )
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            if node._ctx is not None:
                for parent in node._ctx.inputs:
                    if parent.requires_grad and id(parent) not in seen:
                        stack.append((parent, False))

        pending: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if node._ctx is None:
                # Only leaves retain .grad; two leaves fed by the same op may
                # share one gradient array, so treat .grad as read-only.
                node.grad = grad if node.grad is None else node.grad + grad
                continue
            input_grads = node._ctx.backward(grad)
            for parent, g in zip(node._ctx.inputs, input_grads):
                if g is None or not parent.requires_grad:
                    continue
                if id(parent) in pending:
                    pending[id(parent)] = pending[id(parent)] + g
                else:
                    pending[id(parent)] = g

    # -- arithmetic -----------------------------------------------------

    def __add__(self, other: ArrayLike) -> "Tensor":
        return Add.apply(self, other)

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return Sub.apply(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return Sub.apply(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return Mul.apply(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return Neg.apply(self)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return MatMul.apply(self, other)

    def position_pool(self, weights: ArrayLike) -> "Tensor":
        """Contract the position axis against pooling weights.

        (N, P, C) x (P,) -> (N, C); a (T, P) weight matrix pools for T
        heads at once and yields (N, T, C)."""
        return PositionPool.apply(self, weights)

    def __getitem__(self, key) -> "Tensor":
        return GetItem.apply(self, key=key)

    # -- shape and reductions -------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return Mean.apply(self, axis=axis, keepdims=keepdims)

    def cumsum(self, axis: int = -1) -> "Tensor":
        return CumSum.apply(self, axis=axis)

    # -- elementwise ------------------------------------------------------

    def square(self) -> "Tensor":
        return Square.apply(self)

    def log(self) -> "Tensor":
        return Log.apply(self)

    def relu(self) -> "Tensor":
        return Relu.apply(self)

    def clip_min(self, floor: float) -> "Tensor":
        return ClipMin.apply(self, floor=floor)

    def softmax(self, axis: int = -1) -> "Tensor":
        return Softmax.apply(self, axis=axis)

    # -- spatial -----------------------------------------------------------

    def conv2d(self, kernel: ArrayLike, bias: Optional[ArrayLike] = None,
               stride: int = 1, padding: str = "same") -> "Tensor":
        if bias is None:
            return Conv2d.apply(self, kernel, stride=stride, padding=padding)
        return Conv2d.apply(self, kernel, bias, stride=stride, padding=padding)

    def max_pool2d(self, size: int = 2) -> "Tensor":
        return MaxPool2d.apply(self, size=size)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


# ---------------------------------------------------------------------------
# elementwise / arithmetic ops


class Add(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        sa, sb = self.shapes
        ga = _unbroadcast(grad, sa) if self.needs[0] else None
        gb = _unbroadcast(grad, sb) if self.needs[1] else None
        return ga, gb


class Sub(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        sa, sb = self.shapes
        ga = _unbroadcast(grad, sa) if self.needs[0] else None
        gb = _unbroadcast(-grad, sb) if self.needs[1] else None
        return ga, gb


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        ga = _unbroadcast(grad * self.b, self.a.shape) if self.needs[0] else None
        gb = _unbroadcast(grad * self.a, self.b.shape) if self.needs[1] else None
        return ga, gb


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Square(Function):
    def forward(self, a):
        self.a = a
        return a * a

    def backward(self, grad):
        return (2.0 * self.a * grad,)


class Log(Function):
    def forward(self, a):
        self.a = a
        return np.log(a)

    def backward(self, grad):
        return (grad / self.a,)


class Relu(Function):
    def forward(self, a):
        self.mask = a > 0
        # np.maximum keeps NaN visible instead of silently zeroing it
        return np.maximum(a, 0.0)

    def backward(self, grad):
        # subgradient at exactly 0 is 0
        return (grad * self.mask,)


class ClipMin(Function):
    def forward(self, a, floor):
        self.mask = a >= floor
        return np.maximum(a, floor)

    def backward(self, grad):
        return (grad * self.mask,)


class Softmax(Function):
    def forward(self, a, axis):
        self.axis = axis
        shifted = a - a.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.out = e / e.sum(axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        y = self.out
        inner = (grad * y).sum(axis=self.axis, keepdims=True)
        return (y * (grad - inner),)


# ---------------------------------------------------------------------------
# shape and reduction ops


class Reshape(Function):
    def forward(self, a, shape):
        self.orig = a.shape
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.orig),)


class Sum(Function):
    def forward(self, a, axis, keepdims):
        self.orig = a.shape
        self.axis = axis
        self.keepdims = keepdims
        return np.asarray(a.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.orig).copy(),)


class Mean(Function):
    def forward(self, a, axis, keepdims):
        self.orig = a.shape
        self.axis = axis
        self.keepdims = keepdims
        if axis is None:
            self.count = a.size
        else:
            self.count = a.shape[axis]
        return np.asarray(a.mean(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.orig) / self.count,)


class CumSum(Function):
    def forward(self, a, axis):
        self.axis = axis
        return np.cumsum(a, axis=axis)

    def backward(self, grad):
        # gradient of cumsum is the reversed cumulative sum
        flipped = np.flip(grad, axis=self.axis)
        return (np.flip(np.cumsum(flipped, axis=self.axis), axis=self.axis),)


class GetItem(Function):
    def forward(self, a, key):
        self.key = key
        self.orig = a.shape
        return np.asarray(a[key])

    def backward(self, grad):
        out = np.zeros(self.orig)
        np.add.at(out, self.key, grad)
        return (out,)


class Stack(Function):
    """Join equal-shaped tensors along a new leading axis."""

    def forward(self, *arrays):
        shapes = {a.shape for a in arrays}
        if len(shapes) != 1:
            raise ValueError(f"stack needs equal shapes, got {sorted(shapes)}")
        return np.stack(arrays)

    def backward(self, grad):
        return tuple(grad[i] if need else None for i, need in enumerate(self.needs))


def stack(tensors: Sequence["Tensor"]) -> "Tensor":
    """Stack tensors along a new axis 0, tracking gradients per input."""
    if not tensors:
        raise ValueError("stack needs at least one tensor")
    return Stack.apply(*tensors)


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2:
            raise ValueError(
                f"matmul expects 2-d operands, got {a.shape} @ {b.shape}"
            )
        if a.shape[1] != b.shape[0]:
            raise ValueError(
                f"matmul inner dimensions differ: {a.shape} @ {b.shape}"
            )
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        ga = grad @ self.b.T if self.needs[0] else None
        gb = self.a.T @ grad if self.needs[1] else None
        return ga, gb


class PositionPool(Function):
    """Contract the position axis of a feature stack against pooling
    weights: out[n, c] = sum_p a[n, p, c] * w[p], or with a (T, P) weight
    matrix out[n, t, c] = sum_p a[n, p, c] * w[t, p]. One fused op keeps
    the attention hot path from materializing (N, P, C) temporaries, and
    the matrix form pools every head in a single pass over the features."""

    def forward(self, a, w):
        if a.ndim != 3 or w.ndim not in (1, 2) or a.shape[1] != w.shape[-1]:
            raise ValueError(
                f"position_pool expects (N, P, C) and (P,) or (T, P), "
                f"got {a.shape} and {w.shape}"
            )
        self.a, self.w = a, w
        if w.ndim == 1:
            return np.einsum("npc,p->nc", a, w, optimize=True)
        return np.einsum("npc,tp->ntc", a, w, optimize=True)

    def backward(self, grad):
        a, w = self.a, self.w
        if w.ndim == 1:
            ga = np.einsum("nc,p->npc", grad, w) if self.needs[0] else None
            gw = np.einsum("npc,nc->p", a, grad, optimize=True) if self.needs[1] else None
        else:
            ga = np.einsum("ntc,tp->npc", grad, w, optimize=True) if self.needs[0] else None
            gw = np.einsum("npc,ntc->tp", a, grad, optimize=True) if self.needs[1] else None
        return ga, gw


# ---------------------------------------------------------------------------
# spatial ops (NHWC layout)


def _conv_geometry(h, w, kh, kw, stride, padding):
    if padding == "same":
        ho = -(-h // stride)
        wo = -(-w // stride)
        pad_h = max((ho - 1) * stride + kh - h, 0)
        pad_w = max((wo - 1) * stride + kw - w, 0)
        pads = (pad_h // 2, pad_h - pad_h // 2, pad_w // 2, pad_w - pad_w // 2)
    elif padding == "valid":
        if h < kh or w < kw:
            raise ValueError(
                f"input {h}x{w} smaller than kernel {kh}x{kw} with valid padding"
            )
        ho = (h - kh) // stride + 1
        wo = (w - kw) // stride + 1
        pads = (0, 0, 0, 0)
    else:
        raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")
    return ho, wo, pads


class Conv2d(Function):
    """Cross-correlation over NHWC input with a (kh, kw, Cin, Cout) kernel,
    optionally adding a per-channel bias in the same pass."""

    def forward(self, x, k, *rest, stride, padding):
        bias = rest[0] if rest else None
        if x.ndim != 4 or k.ndim != 4:
            raise ValueError(
                f"conv2d expects NHWC input and khkwCiCo kernel, got {x.shape} / {k.shape}"
            )
        if x.shape[3] != k.shape[2]:
            raise ValueError(
                f"conv2d channel mismatch: input has {x.shape[3]}, kernel expects {k.shape[2]}"
            )
        if bias is not None and bias.shape != (k.shape[3],):
            raise ValueError(
                f"conv2d bias must have shape ({k.shape[3]},), got {bias.shape}"
            )
        if stride < 1:
            raise ValueError(f"stride must be >= 1, got {stride}")
        n, h, w, ci = x.shape
        kh, kw, _, co = k.shape
        ho, wo, (pt, pb, pl, pr) = _conv_geometry(h, w, kh, kw, stride, padding)
        if pt or pb or pl or pr:
            xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        else:
            xp = x
        if kh == 1 and kw == 1 and stride == 1:
            # pointwise conv is a plain matrix product; skip patch extraction
            patches = xp.reshape(n * ho * wo, ci)
        else:
            windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
            windows = windows[:, ::stride, ::stride]  # (n, ho, wo, ci, kh, kw)
            patches = np.ascontiguousarray(
                windows.transpose(0, 1, 2, 4, 5, 3)
            ).reshape(n * ho * wo, kh * kw * ci)
        out = patches @ k.reshape(kh * kw * ci, co)
        if bias is not None:
            out += bias

        self.geom = (n, ho, wo, kh, kw, ci, co, stride, xp.shape, (pt, pb, pl, pr), x.shape)
        self.patches = patches if self.needs[1] else None
        self.kernel = k if self.needs[0] else None
        return out.reshape(n, ho, wo, co)

    def backward(self, grad):
        n, ho, wo, kh, kw, ci, co, stride, xp_shape, pads, x_shape = self.geom
        gflat = grad.reshape(n * ho * wo, co)
        gx = gk = None
        if self.needs[1]:
            gk = (self.patches.T @ gflat).reshape(kh, kw, ci, co)
        if self.needs[0]:
            gcols = (gflat @ self.kernel.reshape(kh * kw * ci, co).T).reshape(
                n, ho, wo, kh, kw, ci
            )
            gxp = np.zeros(xp_shape)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i : i + ho * stride : stride,
                        j : j + wo * stride : stride, :] += gcols[:, :, :, i, j, :]
            pt, pb, pl, pr = pads
            h, w = x_shape[1], x_shape[2]
            gx = gxp[:, pt : pt + h, pl : pl + w, :]
        if len(self.needs) < 3:
            return gx, gk
        gb = gflat.sum(axis=0) if self.needs[2] else None
        return gx, gk, gb


class MaxPool2d(Function):
    """Non-overlapping max pooling; spatial dims must divide the window."""

    def forward(self, x, size):
        n, h, w, c = x.shape
        if h % size or w % size:
            raise ValueError(
                f"max_pool2d window {size} does not divide input {h}x{w}"
            )
        ho, wo = h // size, w // size
        if size == 1:
            self.idx = np.zeros((n, h, w, c), dtype=np.int64) if self.needs[0] else None
            self.geom = (n, h, w, c, size)
            return x.copy()
        # running max over the size*size window cells; strict > keeps the
        # first-cell-wins tie rule, and np.maximum keeps NaN propagation
        out = x[:, ::size, ::size, :]
        idx = np.zeros((n, ho, wo, c), dtype=np.int64) if self.needs[0] else None
        for cell in range(1, size * size):
            v = x[:, cell // size::size, cell % size::size, :]
            if idx is not None:
                idx[v > out] = cell
            out = np.maximum(out, v)
        self.idx = idx
        self.geom = (n, h, w, c, size)
        return out

    def backward(self, grad):
        n, h, w, c, size = self.geom
        ho, wo = h // size, w // size
        gflat = np.zeros((n, ho, wo, c, size * size))
        np.put_along_axis(gflat, self.idx[..., None], grad[..., None], axis=-1)
        gx = gflat.reshape(n, ho, wo, c, size, size).transpose(0, 1, 4, 2, 5, 3)
        return (gx.reshape(n, h, w, c),)
