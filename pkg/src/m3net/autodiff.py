"""Dense float64 tensors with reverse-mode automatic differentiation.

Deliberately small: the operations below are exactly what the message
passing model, its heads, and the training losses need. No broadcasting
beyond bias-row addition and per-row scaling; shapes are explicit and
mismatches raise ShapeError.
"""

from __future__ import annotations

import json

import numpy as np

__all__ = [
    "Tensor", "ShapeError", "NumericError", "backward",
    "constant", "parameter",
    "matmul", "add", "add_bias", "sub", "mul", "rowscale", "scale", "cmul",
    "sigmoid", "tanh", "relu", "softplus", "log", "absval",
    "concat", "softmax", "log_softmax", "topk_softmax",
    "gather_rows", "scatter_sum", "slice_cols", "sum_all", "mean_all",
    "gru_cell", "mlp_forward",
    "ParamStore", "glorot", "save_checkpoint", "load_checkpoint",
]


class ShapeError(ValueError):
    pass


class NumericError(ArithmeticError):
    """NaN or Inf produced by a forward operation."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(self.data)):
            raise NumericError("non-finite value in forward computation")
        self.requires_grad = requires_grad
        self.grad = None
        self.parents = parents
        self._backward = backward_fn

    @property
    def shape(self):
        return self.data.shape

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def constant(data) -> Tensor:
    return Tensor(data)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _out(data, parents, backward_fn):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, parents=tuple(parents) if req else (),
                  backward_fn=backward_fn if req else None)


def _need(shape_ok, a, b, op):
    if not shape_ok:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


# ----------------------------------------------------------- arithmetic

def matmul(a: Tensor, b: Tensor) -> Tensor:
    _need(a.data.ndim == 2 and b.data.ndim == 2
          and a.shape[1] == b.shape[0], a, b, "matmul")
    out = _out(a.data @ b.data, (a, b), None)

    def bw():
        g = out.grad
        if a.requires_grad:
            a.accumulate(g @ b.data.T)
        if b.requires_grad:
            b.accumulate(a.data.T @ g)
    out._backward = bw if out.requires_grad else None
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    _need(a.shape == b.shape, a, b, "add")
    out = _out(a.data + b.data, (a, b), None)

    def bw():
        if a.requires_grad:
            a.accumulate(out.grad)
        if b.requires_grad:
            b.accumulate(out.grad)
    out._backward = bw if out.requires_grad else None
    return out


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Matrix plus a bias row (the only sanctioned broadcast)."""
    _need(x.data.ndim == 2 and b.data.ndim == 1
          and x.shape[1] == b.shape[0], x, b, "add_bias")
    out = _out(x.data + b.data[None, :], (x, b), None)

    def bw():
        if x.requires_grad:
            x.accumulate(out.grad)
        if b.requires_grad:
            b.accumulate(out.grad.sum(axis=0))
    out._backward = bw if out.requires_grad else None
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _need(a.shape == b.shape, a, b, "sub")
    out = _out(a.data - b.data, (a, b), None)

    def bw():
        if a.requires_grad:
            a.accumulate(out.grad)
        if b.requires_grad:
            b.accumulate(-out.grad)
    out._backward = bw if out.requires_grad else None
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _need(a.shape == b.shape, a, b, "mul")
    out = _out(a.data * b.data, (a, b), None)

    def bw():
        if a.requires_grad:
            a.accumulate(out.grad * b.data)
        if b.requires_grad:
            b.accumulate(out.grad * a.data)
    out._backward = bw if out.requires_grad else None
    return out


def rowscale(x: Tensor, w: Tensor) -> Tensor:
    """Scale row i of x by scalar w[i, 0]."""
    _need(x.data.ndim == 2 and w.data.ndim == 2 and w.shape[1] == 1
          and x.shape[0] == w.shape[0], x, w, "rowscale")
    out = _out(x.data * w.data, (x, w), None)

    def bw():
        if x.requires_grad:
            x.accumulate(out.grad * w.data)
        if w.requires_grad:
            w.accumulate((out.grad * x.data).sum(axis=1, keepdims=True))
    out._backward = bw if out.requires_grad else None
    return out


def scale(x: Tensor, c: float) -> Tensor:
    out = _out(x.data * c, (x,), None)

    def bw():
        if x.requires_grad:
            x.accumulate(out.grad * c)
    out._backward = bw if out.requires_grad else None
    return out


def cmul(x: Tensor, c) -> Tensor:
    """Elementwise product with a constant array of the same shape."""
    c = np.asarray(c, dtype=np.float64)
    if c.shape != x.shape:
        raise ShapeError(f"cmul: constant shape {c.shape} != tensor shape {x.shape}")
    out = _out(x.data * c, (x,), None)

    def bw():
        if x.requires_grad:
            x.accumulate(out.grad * c)
    out._backward = bw if out.requires_grad else None
    return out


# -------------------------------------------------------- nonlinearities

def sigmoid(x: Tensor) -> Tensor:
    z = np.exp(-np.abs(x.data))
    y = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    out = _out(y, (x,), None)

    def bw():
        if x.requires_grad:
            x.accumulate(out.grad * y * (1.0 - y))
    out._backward = bw if out.requires_grad else None
    return out


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = _out(y, (x,), None)

    def bw():
        if x.requires_grad:
            x.accumulate(out.grad * (1.0 - y * y))
    out._backward = bw if out.requires_grad else None
    return out


def relu(x: Tensor) -> Tensor:
    out = _out(np.maximum(x.data, 0.0), (x,), None)

    def bw():
        if x.requires_grad:
            x.accumulate(out.grad * (x.data > 0))
    out._backward = bw if out.requires_grad else None
    return out


def softplus(x: Tensor) -> Tensor:
    y = np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data)))
    out = _out(y, (x,), None)

    def bw():
        if x.requires_grad:
            z = np.exp(-np.abs(x.data))
            s = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
            x.accumulate(out.grad * s)
    out._backward = bw if out.requires_grad else None
    return out


def log(x: Tensor) -> Tensor:
    out = _out(np.log(x.data), (x,), None)

    def bw():
        if x.requires_grad:
            x.accumulate(out.grad / x.data)
    out._backward = bw if out.requires_grad else None
    return out


def absval(x: Tensor) -> Tensor:
    out = _out(np.abs(x.data), (x,), None)

    def bw():
        if x.requires_grad:
            x.accumulate(out.grad * np.sign(x.data))
    out._backward = bw if out.requires_grad else None
    return out


# ------------------------------------------------------ structure ops

def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    out = _out(np.concatenate([t.data for t in tensors], axis=axis),
               tuple(tensors), None)
    sizes = [t.shape[axis] for t in tensors]
    offs = np.cumsum([0] + sizes)

    def bw():
        for t, a, b in zip(tensors, offs[:-1], offs[1:]):
            if t.requires_grad:
                sl = [slice(None)] * out.grad.ndim
                sl[axis] = slice(a, b)
                t.accumulate(out.grad[tuple(sl)])
    out._backward = bw if out.requires_grad else None
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _out(y, (x,), None)

    def bw():
        if x.requires_grad:
            g = out.grad
            x.accumulate(y * (g - (g * y).sum(axis=axis, keepdims=True)))
    out._backward = bw if out.requires_grad else None
    return out


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse
    out = _out(y, (x,), None)

    def bw():
        if x.requires_grad:
            g = out.grad
            x.accumulate(g - np.exp(y) * g.sum(axis=axis, keepdims=True))
    out._backward = bw if out.requires_grad else None
    return out


def topk_softmax(scores: Tensor, k: int) -> Tensor:
    """Row softmax restricted to each row's top-k entries; the rest are 0.

    Ties break toward the lower column index. Gradient flows only through
    the kept entries (the selection itself is non-differentiable).
    """
    s = scores.data
    if s.ndim != 2:
        raise ShapeError(f"topk_softmax expects a matrix, got {s.shape}")
    n, e = s.shape
    if not 1 <= k <= e:
        raise ShapeError(f"top_k={k} outside [1, {e}]")
    order = np.argsort(-s, axis=1, kind="stable")  # ties -> lower index first
    kept = np.zeros_like(s, dtype=bool)
    np.put_along_axis(kept, order[:, :k], True, axis=1)
    z = np.where(kept, s, -np.inf)
    z = z - z.max(axis=1, keepdims=True)
    ez = np.where(kept, np.exp(z), 0.0)
    y = ez / ez.sum(axis=1, keepdims=True)
    out = _out(y, (scores,), None)

    def bw():
        if scores.requires_grad:
            g = out.grad
            scores.accumulate(y * (g - (g * y).sum(axis=1, keepdims=True)))
    out._backward = bw if out.requires_grad else None
    return out


def gather_rows(x: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    out = _out(x.data[idx], (x,), None)

    def bw():
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            np.add.at(x.grad, idx, out.grad)
    out._backward = bw if out.requires_grad else None
    return out


def scatter_sum(x: Tensor, idx, size: int) -> Tensor:
    """Sum rows of x into an output of `size` rows at positions idx."""
    idx = np.asarray(idx, dtype=np.int64)
    if x.data.ndim != 2 or len(idx) != x.shape[0]:
        raise ShapeError(f"scatter_sum: {len(idx)} indices for shape {x.shape}")
    data = np.zeros((size, x.shape[1]))
    np.add.at(data, idx, x.data)
    out = _out(data, (x,), None)

    def bw():
        if x.requires_grad:
            x.accumulate(out.grad[idx])
    out._backward = bw if out.requires_grad else None
    return out


def slice_cols(x: Tensor, a: int, b: int) -> Tensor:
    out = _out(x.data[:, a:b], (x,), None)

    def bw():
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[:, a:b] += out.grad
    out._backward = bw if out.requires_grad else None
    return out


def sum_all(x: Tensor) -> Tensor:
    out = _out(x.data.sum(), (x,), None)

    def bw():
        if x.requires_grad:
            x.accumulate(np.full_like(x.data, float(out.grad)))
    out._backward = bw if out.requires_grad else None
    return out


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    out = _out(x.data.mean(), (x,), None)

    def bw():
        if x.requires_grad:
            x.accumulate(np.full_like(x.data, float(out.grad) / n))
    out._backward = bw if out.requires_grad else None
    return out


# ----------------------------------------------------------- backward

def backward(loss: Tensor) -> None:
    """Reverse-accumulate dLoss/dt into .grad of every reachable tensor.

    Repeated calls accumulate additively; zero grads between steps.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.accumulate(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward()


# ----------------------------------------------- composites and params

def gru_cell(h_prev: Tensor, x: Tensor, p: dict[str, Tensor]) -> Tensor:
    """Standard GRU update; p holds W_z/U_z/b_z, W_r/U_r/b_r, W_h/U_h/b_h."""
    if h_prev.shape != x.shape:
        raise ShapeError(f"gru_cell: h {h_prev.shape} vs x {x.shape}")
    z = sigmoid(add_bias(add(matmul(x, p["W_z"]), matmul(h_prev, p["U_z"])), p["b_z"]))
    r = sigmoid(add_bias(add(matmul(x, p["W_r"]), matmul(h_prev, p["U_r"])), p["b_r"]))
    hhat = tanh(add_bias(add(matmul(x, p["W_h"]),
                             matmul(mul(r, h_prev), p["U_h"])), p["b_h"]))
    return add(sub(h_prev, mul(z, h_prev)), mul(z, hhat))


def mlp_forward(x: Tensor, layers: tuple[Tensor, Tensor, Tensor, Tensor],
                activation: str | None = None) -> Tensor:
    """affine -> ReLU -> affine, with an optional output activation."""
    w1, b1, w2, b2 = layers
    h = add_bias(matmul(relu(add_bias(matmul(x, w1), b1)), w2), b2)
    if activation is None:
        return h
    if activation == "sigmoid":
        return sigmoid(h)
    if activation == "softmax":
        return softmax(h, axis=-1)
    raise ValueError(f"unknown activation {activation!r}")


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class ParamStore(dict):
    """Named parameter registry (name -> Tensor with requires_grad)."""

    def add(self, name: str, data: np.ndarray) -> Tensor:
        t = parameter(data)
        self[name] = t
        return t

    def add_mlp(self, name: str, rng, d_in: int, d_hidden: int, d_out: int):
        self.add(f"{name}.w1", glorot(rng, d_in, d_hidden))
        self.add(f"{name}.b1", np.zeros(d_hidden))
        self.add(f"{name}.w2", glorot(rng, d_hidden, d_out))
        self.add(f"{name}.b2", np.zeros(d_out))

    def mlp(self, name: str):
        return (self[f"{name}.w1"], self[f"{name}.b1"],
                self[f"{name}.w2"], self[f"{name}.b2"])

    def add_gru(self, name: str, rng, dim: int):
        for gate in ("z", "r", "h"):
            self.add(f"{name}.W_{gate}", glorot(rng, dim, dim))
            self.add(f"{name}.U_{gate}", glorot(rng, dim, dim))
            self.add(f"{name}.b_{gate}", np.zeros(dim))

    def gru(self, name: str) -> dict[str, Tensor]:
        return {k: self[f"{name}.{k}"]
                for k in ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r",
                          "W_h", "U_h", "b_h")}

    def zero_grad(self) -> None:
        for t in self.values():
            t.grad = None

    def n_params(self) -> int:
        return sum(t.data.size for t in self.values())


CHECKPOINT_FORMAT = "m3net-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(params: ParamStore, path: str, header: dict | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "header": header or {},
        "params": {name: {"shape": list(t.shape), "values": t.data.ravel().tolist()}
                   for name, t in params.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_checkpoint(path: str) -> tuple[ParamStore, dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    params = ParamStore()
    for name, rec in doc["params"].items():
        params.add(name, np.array(rec["values"]).reshape(rec["shape"]))
    return params, doc["header"]
