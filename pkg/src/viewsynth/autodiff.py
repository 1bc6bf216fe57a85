"""Minimal reverse-mode autodiff on numpy arrays.

A Tape records executed ops in order; backward walks the record in exact
reverse execution order and accumulates analytic gradients into the inputs.
Tensors are float32 by default (float64 is preserved when passed in, which
is what gradcheck uses internally). A tape and the tensors recorded on it
belong to one thread; parameter value snapshots are plain arrays and can be
shared read-only.
"""

from __future__ import annotations

import struct

import numpy as np


class AutodiffError(RuntimeError):
    pass


class ShapeError(AutodiffError):
    pass


_ACTIVE_TAPE: "Tape | None" = None


def _as_array(data, like_dtype=None):
    arr = np.asarray(data)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(like_dtype or np.float32)
    return arr


class Tensor:
    __slots__ = ("data", "grad", "node", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad = None
        self.node = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def tracked(self) -> bool:
        return self.requires_grad or self.node is not None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_wrap(other, self), -1.0))


class _Node:
    __slots__ = ("inputs", "out", "backward_fn", "name")

    def __init__(self, name, inputs, out, backward_fn):
        self.name = name
        self.inputs = inputs
        self.out = out
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of executed ops. Use as a context manager; backward may
    be called once."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._done = False

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise AutodiffError("a tape is already active")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def backward(self, loss: Tensor, store: "ParameterStore | None" = None):
        """Accumulate gradients of a scalar loss into every tensor that
        influences it. Parameters in `store` that the loss does not reach get
        zero gradients."""
        if self._done:
            raise AutodiffError("backward was already called on this tape")
        if loss.data.size != 1:
            raise AutodiffError(f"loss must be scalar, got shape {loss.data.shape}")
        if loss.node is None and not loss.requires_grad:
            raise AutodiffError("loss is not on this tape")
        self._done = True
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            gout = node.out.grad
            if gout is None:
                continue
            grads = node.backward_fn(gout)
            for tensor, g in zip(node.inputs, grads):
                if g is None or not tensor.tracked():
                    continue
                if tensor.grad is None:
                    tensor.grad = g.astype(tensor.data.dtype, copy=False).copy()
                else:
                    tensor.grad = tensor.grad + g
        if store is not None:
            for tensor in store.params.values():
                if tensor.grad is None:
                    tensor.grad = np.zeros_like(tensor.data)


def record(name: str, inputs: list[Tensor], out_data: np.ndarray, backward_fn) -> Tensor:
    """Create the output tensor of an op, recording it on the active tape when
    any input is tracked. backward_fn(grad_out) returns per-input gradients.

    This is the extension point custom differentiable ops (warping,
    projection) use; the built-in ops below go through it too.
    """
    out = Tensor(out_data)
    tape = _ACTIVE_TAPE
    if tape is not None and any(t.tracked() for t in inputs):
        out.node = _Node(name, inputs, out, backward_fn)
        tape.nodes.append(out.node)
    return out


def _wrap(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.data.dtype))


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise / structural ops

def add(a: Tensor, b) -> Tensor:
    b = _wrap(b, a)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.data.shape} and {b.data.shape}")
    return record(
        "add", [a, b], out,
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def mul(a: Tensor, b) -> Tensor:
    b = _wrap(b, a)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.data.shape} and {b.data.shape}")
    return record(
        "mul", [a, b], out,
        lambda g: (_unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[0 if b.data.ndim == 2 else -2]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}")
    out = a.data @ b.data

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return ga, gb

    return record("matmul", [a, b], out, backward)


def leaky_relu(x: Tensor, negative_slope: float = 0.2) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, negative_slope * x.data)
    return record(
        "leaky_relu", [x], out,
        lambda g: (np.where(mask, g, negative_slope * g),),
    )


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                   np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = out.astype(d.dtype, copy=False)
    return record("sigmoid", [x], out, lambda g: (g * out * (1.0 - out),))


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.data.shape} as {shape}")
    return record("reshape", [x], out, lambda g: (g.reshape(x.data.shape),))


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = x.data.transpose(axes)
    return record("transpose", [x], out, lambda g: (g.transpose(inverse),))


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.data.shape for t in tensors]}")
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, range(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return record("concat", tensors, out, backward)


def mean(x: Tensor) -> Tensor:
    out = np.asarray(x.data.mean(), dtype=x.data.dtype)
    n = x.data.size
    return record("mean", [x], out, lambda g: (np.broadcast_to(g / n, x.data.shape),))


def l1_loss(pred: Tensor, target) -> Tensor:
    target = _wrap(target, pred)
    if pred.data.shape != target.data.shape:
        raise ShapeError(
            f"l1_loss: shape mismatch {pred.data.shape} vs {target.data.shape}"
        )
    diff = pred.data - target.data
    out = np.asarray(np.abs(diff).mean(), dtype=pred.data.dtype)
    n = pred.data.size
    sign = np.sign(diff)
    return record(
        "l1_loss", [pred, target], out,
        lambda g: (g * sign / n, -g * sign / n),
    )


# ---------------------------------------------------------------------------
# convolutions (im2col based, NCHW layout)

def _conv_out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def _im2col(x: np.ndarray, kh, kw, stride, pad):
    """(N, C, H, W) -> (N, Ho, Wo, C*kh*kw) patch matrix."""
    n, c, h, w = x.shape
    ho, wo = _conv_out_size(h, kh, stride, pad), _conv_out_size(w, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    sn, sc, sh, sw = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, kh, kw, ho, wo),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )
    return np.ascontiguousarray(windows.transpose(0, 4, 5, 1, 2, 3)).reshape(n, ho, wo, c * kh * kw)


def _col2im(cols: np.ndarray, x_shape, kh, kw, stride, pad):
    """Adjoint of _im2col: scatter-add patches back onto (N, C, H, W)."""
    n, c, h, w = x_shape
    ho, wo = cols.shape[1], cols.shape[2]
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    patches = cols.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += patches[
                :, :, i, j
            ]
    if pad:
        return xp[:, :, pad : pad + h, pad : pad + w]
    return xp


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2D convolution, x (N, Cin, H, W), weight (Cout, Cin, kh, kw)."""
    if x.data.ndim != 4 or weight.data.ndim != 4 or x.data.shape[1] != weight.data.shape[1]:
        raise ShapeError(
            f"conv2d: input {x.data.shape} incompatible with weight {weight.data.shape}"
        )
    n, _, h, w = x.data.shape
    cout, cin, kh, kw = weight.data.shape
    cols = _im2col(x.data, kh, kw, stride, padding)
    ho, wo = cols.shape[1], cols.shape[2]
    wmat = weight.data.reshape(cout, -1)
    out = (cols @ wmat.T).transpose(0, 3, 1, 2)
    inputs = [x, weight]
    if bias is not None:
        if bias.data.shape != (cout,):
            raise ShapeError(f"conv2d: bias shape {bias.data.shape}, expected ({cout},)")
        out = out + bias.data[None, :, None, None]
        inputs.append(bias)

    def backward(g):
        gmat = g.transpose(0, 2, 3, 1)  # (N, Ho, Wo, Cout)
        gw = np.tensordot(gmat, cols, axes=([0, 1, 2], [0, 1, 2])).reshape(weight.data.shape)
        gcols = gmat @ wmat
        gx = _col2im(gcols, x.data.shape, kh, kw, stride, padding)
        if bias is not None:
            return gx, gw, g.sum(axis=(0, 2, 3))
        return gx, gw

    return record("conv2d", inputs, out, backward)


def transposed_conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                      stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution (the adjoint of conv2d with the same stride and
    padding), x (N, Cin, H, W), weight (Cin, Cout, kh, kw)."""
    if x.data.ndim != 4 or weight.data.ndim != 4 or x.data.shape[1] != weight.data.shape[0]:
        raise ShapeError(
            f"transposed_conv2d: input {x.data.shape} incompatible with weight {weight.data.shape}"
        )
    n, cin, h, w = x.data.shape
    _, cout, kh, kw = weight.data.shape
    ho = (h - 1) * stride - 2 * padding + kh
    wo = (w - 1) * stride - 2 * padding + kw
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"transposed_conv2d: empty output {ho}x{wo}")
    wmat = weight.data.reshape(cin, -1)  # (Cin, Cout*kh*kw)
    xmat = x.data.transpose(0, 2, 3, 1)  # (N, H, W, Cin)
    cols = xmat @ wmat                   # (N, H, W, Cout*kh*kw)
    out = _col2im(cols, (n, cout, ho, wo), kh, kw, stride, padding)
    inputs = [x, weight]
    if bias is not None:
        if bias.data.shape != (cout,):
            raise ShapeError(f"transposed_conv2d: bias shape {bias.data.shape}, expected ({cout},)")
        out = out + bias.data[None, :, None, None]
        inputs.append(bias)

    def backward(g):
        gcols = _im2col(g, kh, kw, stride, padding)  # (N, H, W, Cout*kh*kw)
        gx = (gcols @ wmat.T).transpose(0, 3, 1, 2)
        gw = np.tensordot(xmat, gcols, axes=([0, 1, 2], [0, 1, 2])).reshape(weight.data.shape)
        if bias is not None:
            return gx, gw, g.sum(axis=(0, 2, 3))
        return gx, gw

    return record("transposed_conv2d", inputs, out, backward)


# ---------------------------------------------------------------------------
# parameters and optimization

class ParameterStore:
    """Named trainable tensors plus Adam moment state. Shapes are fixed at
    creation; names are unique."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.params:
            raise AutodiffError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(data, dtype=np.float32), requires_grad=True)
        self.params[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params)

    def clear_grads(self):
        for t in self.params.values():
            t.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        """Immutable copy of parameter values (no tape state); safe to share
        across threads for inference."""
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_values(self, values: dict[str, np.ndarray]):
        for name, arr in values.items():
            if name not in self.params:
                raise AutodiffError(f"unknown parameter {name!r} in loaded values")
            if self.params[name].data.shape != arr.shape:
                raise AutodiffError(
                    f"parameter {name!r}: shape {arr.shape} does not match "
                    f"{self.params[name].data.shape}"
                )
            self.params[name].data = arr.astype(np.float32).copy()


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int,
                    negative_slope: float = 0.2) -> np.ndarray:
    gain = np.sqrt(2.0 / (1.0 + negative_slope**2))
    bound = gain * np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def adam_step(store: ParameterStore, lr: float = 1e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """Standard Adam update; advances moments and clears gradients."""
    for name, t in store.params.items():
        if t.grad is None:
            raise AutodiffError(f"adam_step: parameter {name!r} has no gradient")
    store.step_count += 1
    t_step = store.step_count
    bc1 = 1.0 - beta1**t_step
    bc2 = 1.0 - beta2**t_step
    for name, p in store.params.items():
        g = p.grad.astype(np.float32, copy=False)
        m = store._m[name]
        v = store._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data = p.data - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    store.clear_grads()


# ---------------------------------------------------------------------------
# finite-difference verification

def gradcheck(f, x: Tensor, eps: float = 1e-3) -> float:
    """Max relative error between the analytic gradient of scalar-valued f at
    x and central differences, computed in float64.

    relative error per coordinate: |analytic - numeric| / max(1, |numeric|).
    """
    if not (1e-4 <= eps <= 1e-2):
        raise AutodiffError(f"gradcheck eps must be in [1e-4, 1e-2], got {eps}")
    base = x.data.astype(np.float64)
    seed = Tensor(base.copy(), requires_grad=True)
    with Tape() as tape:
        out = f(seed)
        if out.data.size != 1:
            raise AutodiffError("gradcheck requires a scalar-valued function")
        tape.backward(out)
    analytic = (seed.grad if seed.grad is not None else np.zeros_like(base)).reshape(-1)

    flat = base.reshape(-1)
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(f(Tensor(base.copy())).data)
        flat[i] = orig - eps
        lo = float(f(Tensor(base.copy())).data)
        flat[i] = orig
        numeric[i] = (hi - lo) / (2.0 * eps)
    rel = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    return float(rel.max()) if rel.size else 0.0


# ---------------------------------------------------------------------------
# checkpoint format: magic "NVSC", version u32, count u32, then per parameter
# name-length u16 + UTF-8 name, rank u8, dims u32 each, little-endian f32 data

CHECKPOINT_MAGIC = b"NVSC"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, values: dict[str, np.ndarray] | ParameterStore) -> None:
    if isinstance(values, ParameterStore):
        values = values.snapshot()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(values)))
        for name, arr in values.items():
            arr = np.asarray(arr, dtype="<f4")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise AutodiffError(f"bad checkpoint magic {magic!r}")
        version, count = struct.unpack("<II", f.read(8))
        if version != CHECKPOINT_VERSION:
            raise AutodiffError(f"unsupported checkpoint version {version}")
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<B", f.read(1))
            dims = struct.unpack(f"<{rank}I", f.read(4 * rank)) if rank else ()
            n = int(np.prod(dims)) if dims else 1
            data = np.frombuffer(f.read(4 * n), dtype="<f4")
            if data.size != n:
                raise AutodiffError(f"truncated checkpoint payload for {name!r}")
            out[name] = data.reshape(dims).copy()
    return out
