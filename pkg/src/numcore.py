"""
Numeric Core Module
Dense tensors on numpy with a reverse-mode gradient tape and an Adam optimizer
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import ContractError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence]

_TAPE_STACK: List['Tape'] = []


def active_tape() -> Optional['Tape']:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    """
    A numpy array with an optional gradient slot.

    Leaf tensors created with requires_grad=True are parameters; tensors
    produced by recorded ops get requires_grad=True and a transient grad.
    """

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None,
                 dtype=None):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else None)
        if not np.issubdtype(self.data.dtype, np.floating):
            self.data = self.data.astype(np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.is_leaf = True

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float('nan')

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def accumulate(self, grad: np.ndarray):
        if grad.shape != self.data.shape:
            raise ContractError(f"gradient shape {grad.shape} does not match tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad += grad

    def __repr__(self) -> str:
        label = f" '{self.name}'" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar for readability in model code
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return elementwise_mul(self, other)

    def __rmul__(self, other):
        return elementwise_mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def as_tensor(x: Union[Tensor, ArrayLike]) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """
    Ordered record of differentiable ops.

    Use as a context manager; ops whose inputs require grad are recorded on
    the innermost active tape. backward() walks the entries once, in reverse.
    """

    def __init__(self):
        self.entries: List[Tuple[Tensor, Tuple[Tensor, ...], Callable]] = []
        self.consumed = False

    def __enter__(self) -> 'Tape':
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPE_STACK.remove(self)
        return False

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, out: Tensor, inputs: Tuple[Tensor, ...], backward_fn: Callable):
        if self.consumed:
            raise ContractError("tape already consumed by backward()")
        out.requires_grad = True
        out.is_leaf = False
        self.entries.append((out, inputs, backward_fn))

    def backward(self, loss: Tensor):
        """
        Populate grad slots of every tensor that influenced loss

        Args:
            loss: Scalar tensor produced by ops recorded on this tape
        """
        if self.consumed:
            raise ContractError("tape already consumed by backward()")
        if loss.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
        if not loss.requires_grad or loss.is_leaf:
            raise ContractError("loss was not produced on this tape")
        loss.grad = np.ones_like(loss.data)
        for out, inputs, backward_fn in reversed(self.entries):
            if out.grad is None:
                continue
            grads = backward_fn(out.grad)
            for tensor, grad in zip(inputs, grads):
                if grad is not None and tensor.requires_grad:
                    tensor.accumulate(grad)
            # Intermediate gradients are not needed once propagated
            out.grad = None
        self.entries.clear()
        self.consumed = True


def _record(out_data: np.ndarray, inputs: Tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to an operand's shape"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: np.ndarray, b: np.ndarray, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ContractError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


# ----------------------------------------------------------------------
# Primitive ops
# ----------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, 'add')
    return _record(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, 'sub')
    return _record(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def elementwise_mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, 'elementwise_mul')
    return _record(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _record(a.data * c, (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    """Matrix product with numpy batching rules over leading axes"""
    a, b = as_tensor(a), as_tensor(b)
    A, B = a.data, b.data
    if A.ndim == 0 or B.ndim == 0:
        raise ContractError("matmul needs at least 1-d operands")
    if A.shape[-1] != B.shape[-2 if B.ndim > 1 else 0]:
        raise ContractError(f"matmul: shapes {A.shape} and {B.shape} are not aligned")
    try:
        out = np.matmul(A, B)
    except ValueError:
        raise ContractError(f"matmul: cannot batch shapes {A.shape} and {B.shape}")

    def backward(g):
        A2 = A if A.ndim > 1 else A[None, :]
        B2 = B if B.ndim > 1 else B[:, None]
        g2 = g
        if A.ndim == 1:
            g2 = np.expand_dims(g2, -2)
        if B.ndim == 1:
            g2 = np.expand_dims(g2, -1)
        ga = _unbroadcast(g2 @ np.swapaxes(B2, -1, -2), A2.shape).reshape(A.shape)
        gb = _unbroadcast(np.swapaxes(A2, -1, -2) @ g2, B2.shape).reshape(B.shape)
        return ga, gb

    return _record(out, (a, b), backward)


def row_scale(table, scales) -> Tensor:
    """
    Scale each row of an n x d table by a per-row scalar

    Args:
        table: n x d
        scales: ... x n

    Returns:
        ... x n x d tensor with out[..., j, :] = scales[..., j] * table[j]
    """
    table, scales = as_tensor(table), as_tensor(scales)
    if table.ndim != 2 or scales.ndim < 1 or scales.shape[-1] != table.shape[0]:
        raise ContractError(f"row_scale: table {table.shape} does not match scales {scales.shape}")
    s = scales.data[..., None]

    def backward(g):
        g_table = (g * s).reshape(-1, *table.shape).sum(axis=0)
        g_scales = (g * table.data).sum(axis=-1)
        return g_table, g_scales

    return _record(s * table.data, (table, scales), backward)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise ContractError("concat needs at least one tensor")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ContractError(f"concat: {e}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]
    return _record(out, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def lookup(table, index: np.ndarray) -> Tensor:
    """Rows of table gathered by an integer index array of any shape"""
    table = as_tensor(table)
    index = np.asarray(index)
    if not np.issubdtype(index.dtype, np.integer):
        raise ContractError("lookup index must be integer")
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise ContractError(f"lookup index out of range [0, {table.shape[0]})")

    def backward(g):
        g_table = np.zeros_like(table.data)
        np.add.at(g_table, index, g)
        return (g_table,)

    return _record(table.data[index], (table,), backward)


def mask_fill(x, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where mask is True by a constant (no gradient flows there)"""
    x = as_tensor(x)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    return _record(np.where(mask, value, x.data), (x,), lambda g: (np.where(mask, 0.0, g),))


def softmax(x, axis: int = -1) -> Tensor:
    """Softmax along axis; -inf entries receive exactly zero weight"""
    x = as_tensor(x)
    if np.isnan(x.data).any() or np.isposinf(x.data).any():
        raise ContractError("softmax input must be finite or -inf")
    peak = x.data.max(axis=axis, keepdims=True)
    if np.isneginf(peak).any():
        raise ContractError("softmax over an all-masked slice")
    e = np.exp(x.data - peak)
    y = e / e.sum(axis=axis, keepdims=True)
    return _record(y, (x,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    z = np.exp(-np.abs(x.data))
    y = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return _record(y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _record(y, (x,), lambda g: (g * (1.0 - y * y),))


def log(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise ContractError("log of a non-positive value")
    return _record(np.log(x.data), (x,), lambda g: (g / x.data,))


def clip(x, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes only where the value was inside [lo, hi]"""
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)
    return _record(np.clip(x.data, lo, hi), (x,), lambda g: (np.where(inside, g, 0.0),))


def sum(x, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _record(out, (x,), backward)


def mean(x, axis: Optional[int] = None) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    return scale(sum(x, axis=axis), 1.0 / n)


def reshape(x, shape: Tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    return _record(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def broadcast_to(x, shape: Tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise ContractError(f"broadcast_to: cannot broadcast {x.shape} to {shape}")
    return _record(out, (x,), lambda g: (_unbroadcast(g, x.shape),))


def swapaxes(x, axis1: int, axis2: int) -> Tensor:
    x = as_tensor(x)
    return _record(np.swapaxes(x.data, axis1, axis2), (x,),
                   lambda g: (np.swapaxes(g, axis1, axis2),))


def slice_axis(x, start: int, stop: int, axis: int = -1) -> Tensor:
    """x[..., start:stop, ...] along one axis"""
    x = as_tensor(x)
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def backward(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return _record(x.data[index], (x,), backward)


def select(x, i: int, axis: int = 0) -> Tensor:
    """x indexed at position i along axis (the axis is dropped)"""
    x = as_tensor(x)
    index = [slice(None)] * x.ndim
    index[axis] = i
    index = tuple(index)

    def backward(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return _record(x.data[index], (x,), backward)


def dropout(x, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; p = 0 returns x unchanged"""
    if p <= 0.0:
        return as_tensor(x)
    keep = (rng.random(as_tensor(x).shape) >= p) / (1.0 - p)
    return elementwise_mul(x, keep)


# ----------------------------------------------------------------------
# Parameters
# ----------------------------------------------------------------------

class ParamStore:
    """
    Named learnable tensors in creation order, initialized from one generator
    """

    def __init__(self, seed: int = 0, dtype: str = 'float64'):
        self.rng = np.random.default_rng(seed)
        self.dtype = np.dtype(dtype)
        self._params: 'OrderedDict[str, Tensor]' = OrderedDict()

    def create(self, name: str, shape: Tuple[int, ...], fan: Optional[int] = None,
               init: str = 'uniform', value: float = 0.0) -> Tensor:
        """
        Register a new parameter

        Args:
            name: Unique parameter name
            shape: Tensor shape
            fan: Bound denominator for uniform(-1/sqrt(fan), 1/sqrt(fan)); default last dim
            init: 'uniform' or 'constant'
            value: Fill value for constant init
        """
        if name in self._params:
            raise ContractError(f"parameter '{name}' already exists")
        if init == 'uniform':
            bound = 1.0 / np.sqrt(fan if fan is not None else shape[-1])
            data = self.rng.uniform(-bound, bound, size=shape)
        elif init == 'constant':
            data = np.full(shape, value)
        else:
            raise ContractError(f"unknown init '{init}'")
        tensor = Tensor(data.astype(self.dtype), requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> List[str]:
        return list(self._params)

    def num_values(self) -> int:
        return int(np.sum([p.size for p in self._params.values()]))

    def zero_grad(self):
        for p in self._params.values():
            p.zero_grad()

    def state_dict(self) -> 'OrderedDict[str, np.ndarray]':
        return OrderedDict((name, p.data.copy()) for name, p in self._params.items())

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        missing = set(self._params) - set(state)
        unexpected = set(state) - set(self._params)
        if missing or unexpected:
            raise ContractError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for name, p in self._params.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ContractError(f"parameter '{name}': expected shape {p.shape}, got {value.shape}")
            p.data = value.astype(self.dtype).copy()


# ----------------------------------------------------------------------
# Optimizer
# ----------------------------------------------------------------------

@dataclass
class AdamState:
    """Adam moments per parameter name plus the step counter"""
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    grad_clip: Optional[float] = None
    step_count: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    skipped_steps: int = 0


def adam_step(state: AdamState, params: ParamStore) -> bool:
    """
    One bias-corrected Adam update; gradients are zeroed afterwards

    Args:
        state: Optimizer state, updated in place
        params: Parameters whose grad slots are populated

    Returns:
        False when the update was skipped because of a non-finite gradient
    """
    grads = {}
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if state.weight_decay:
            g = g + state.weight_decay * p.data
        grads[name] = g

    if not all(np.all(np.isfinite(g)) for g in grads.values()):
        state.skipped_steps += 1
        logger.warning(f"⚠ Non-finite gradient, skipping update (skipped {state.skipped_steps} so far)")
        params.zero_grad()
        return False

    if state.grad_clip:
        norm = np.sqrt(np.sum([np.sum(g * g) for g in grads.values()]))
        if norm > state.grad_clip:
            grads = {name: g * (state.grad_clip / norm) for name, g in grads.items()}

    state.step_count += 1
    bc1 = 1.0 - state.beta1 ** state.step_count
    bc2 = 1.0 - state.beta2 ** state.step_count
    step_size = state.lr / bc1

    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= step_size * m / (np.sqrt(v / bc2) + state.eps)

    params.zero_grad()
    return True


# ----------------------------------------------------------------------
# Gradient checking
# ----------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_relative_error: float
    worst_param: Optional[str] = None
    worst_index: Optional[int] = None
    checked: int = 0
    finite: bool = True
    message: str = ''

    def passed(self, tolerance: float) -> bool:
        return self.finite and self.max_relative_error < tolerance


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
               max_entries: Optional[int] = None,
               rng: Optional[np.random.Generator] = None, floor: float = 1e-3) -> GradCheckReport:
    """
    Compare tape gradients with central differences

    Args:
        f: Deterministic function of the current parameter values returning a scalar Tensor
        params: Float64 tensors to check
        eps: Finite-difference step
        max_entries: Check at most this many randomly chosen entries per tensor
        rng: Generator for the entry sample
        floor: Smallest denominator, relative to max(1, |loss|)

    Returns:
        GradCheckReport; relative error uses max(|g|, |g_fd|, floor * max(1, |loss|))
        as denominator, so gradients central differences cannot resolve are
        compared absolutely
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
    if not np.all(np.isfinite(loss.data)):
        return GradCheckReport(float('inf'), finite=False, message="loss is not finite")
    if loss.requires_grad and not loss.is_leaf:
        tape.backward(loss)
    scale = floor * max(1.0, abs(float(loss.data)))
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]

    report = GradCheckReport(0.0)
    for p, g in zip(params, analytic):
        flat = p.data.reshape(-1)
        g_flat = g.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        for i in entries:
            original = flat[i]
            flat[i] = original + eps
            f_plus = float(f().data)
            flat[i] = original - eps
            f_minus = float(f().data)
            flat[i] = original
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                return GradCheckReport(float('inf'), p.name, int(i), report.checked, False,
                                       "perturbed loss is not finite")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            error = abs(g_flat[i] - numeric) / max(abs(g_flat[i]), abs(numeric), scale)
            report.checked += 1
            if error > report.max_relative_error:
                report.max_relative_error = float(error)
                report.worst_param = p.name
                report.worst_index = int(i)
    for p in params:
        p.zero_grad()
    return report


def _weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    return sum(elementwise_mul(out, weights))


def primitive_grad_checks(rng: np.random.Generator, trials: int = 1,
                          eps: float = 1e-5) -> Dict[str, float]:
    """
    Gradient check of every differentiable primitive on random inputs

    Each op's output is contracted with fixed random weights so every output
    entry contributes to the scalar.

    Args:
        rng: Generator for inputs and weights
        trials: Independent random draws per op
        eps: Finite-difference step

    Returns:
        op name -> worst relative error over all trials
    """
    def case(name: str):
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True, name='a')
        b = Tensor(rng.normal(size=(3, 4)), requires_grad=True, name='b')
        v = Tensor(rng.normal(size=(4,)), requires_grad=True, name='v')
        m = Tensor(rng.normal(size=(4, 5)), requires_grad=True, name='m')
        batch = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True, name='batch')
        pos = Tensor(rng.uniform(0.5, 2.0, size=(3, 4)), requires_grad=True, name='pos')
        index = rng.integers(0, 3, size=(2, 5))
        mask = rng.random((3, 4)) < 0.4
        mask[:, 0] = False
        ops = {
            'add': (lambda: add(a, v), [a, v]),
            'sub': (lambda: sub(a, b), [a, b]),
            'elementwise_mul': (lambda: elementwise_mul(a, b), [a, b]),
            'scale': (lambda: scale(a, 1.7), [a]),
            'matmul': (lambda: matmul(batch, m), [batch, m]),
            'matmul_vector': (lambda: matmul(a, v), [a, v]),
            'row_scale': (lambda: row_scale(m, b), [m, b]),
            'concat': (lambda: concat([a, b], axis=0), [a, b]),
            'lookup': (lambda: lookup(a, index), [a]),
            'softmax': (lambda: softmax(a, axis=-1), [a]),
            'masked_softmax': (lambda: softmax(mask_fill(a, mask, -np.inf), axis=-1), [a]),
            'mask_fill': (lambda: mask_fill(a, mask, 0.0), [a]),
            'sigmoid': (lambda: sigmoid(a), [a]),
            'tanh': (lambda: tanh(a), [a]),
            'log': (lambda: log(pos), [pos]),
            'sum': (lambda: sum(batch, axis=1), [batch]),
            'mean': (lambda: reshape(mean(a), (1,)), [a]),
            'reshape': (lambda: reshape(batch, (6, 4)), [batch]),
            'broadcast_to': (lambda: broadcast_to(v, (3, 4)), [v]),
            'swapaxes': (lambda: swapaxes(batch, 0, 2), [batch]),
            'slice_axis': (lambda: slice_axis(batch, 1, 3, axis=-1), [batch]),
            'select': (lambda: select(batch, 1, axis=1), [batch]),
        }
        build, params = ops[name]
        weights = rng.normal(size=build().shape)
        return grad_check(lambda: _weighted_sum(build(), weights), params, eps=eps)

    names = ['add', 'sub', 'elementwise_mul', 'scale', 'matmul', 'matmul_vector', 'row_scale',
             'concat', 'lookup', 'softmax', 'masked_softmax', 'mask_fill', 'sigmoid', 'tanh',
             'log', 'sum', 'mean', 'reshape', 'broadcast_to', 'swapaxes', 'slice_axis', 'select']
    results = {}
    for name in names:
        worst = 0.0
        for _ in range(trials):
            report = case(name)
            worst = max(worst, report.max_relative_error if report.finite else float('inf'))
        results[name] = worst
    return results
