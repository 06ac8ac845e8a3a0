"""
Minimal dense-tensor reverse-mode automatic differentiation.
2층 MLP, 가우시안 로그 밀도, GRAC 손실 계산에 필요한 만큼의 역전파 엔진.

그래프는 forward 때마다 새로 만들어집니다 (define-by-run).
노드는 생성 순서대로 tape 에 쌓이므로 위상 정렬이 자동으로 보장됩니다.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import (
    DomainError,
    GracError,
    NonFiniteError,
    NonScalarLossError,
    ShapeMismatchError,
)

ArrayLike = Union[np.ndarray, float, int]
VJP = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """
    그래프 위의 값 노드. 데이터는 float64 dense 배열이며 불변으로 취급합니다.
    """

    __slots__ = ("data", "graph", "node_id", "name")
    __array_priority__ = 100.0

    def __init__(self, data: np.ndarray, graph: "ComputationGraph", node_id: int, name: Optional[str] = None):
        self.data = data
        self.graph = graph
        self.node_id = node_id
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise NonScalarLossError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __add__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return mul(other, self)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"


@dataclass
class Node:
    """tape 에 기록되는 연산 레코드."""
    op: str
    inputs: Tuple[int, ...]
    output: Tensor
    vjp: Optional[VJP]


class ComputationGraph:
    """
    연산 기록(tape) 과 파라미터 leaf 목록을 보관하는 그래프.

    requires_grad=False 로 만들면 노드를 저장하지 않으므로
    CEM 점수 계산처럼 forward 만 필요한 경우에 가볍게 쓸 수 있습니다.
    """

    def __init__(self, requires_grad: bool = True):
        self.requires_grad = requires_grad
        self.nodes: list[Node] = []
        self._parameters: Dict[str, int] = {}
        self._shapes: Dict[str, Tuple[int, ...]] = {}

    # ------------------------------------------------------------------
    # leaf 생성
    # ------------------------------------------------------------------
    def parameter(self, name: str, data: ArrayLike) -> Tensor:
        """학습 대상 leaf 를 등록합니다. 같은 이름은 한 번만 등록할 수 있습니다."""
        if name in self._shapes:
            raise GracError(f"Parameter '{name}' registered twice", context={"name": name})
        array = np.array(data, dtype=np.float64, copy=True)
        tensor = self._append("parameter", (), array, None, name=name)
        self._shapes[name] = array.shape
        if self.requires_grad:
            self._parameters[name] = tensor.node_id
        return tensor

    def constant(self, data: ArrayLike) -> Tensor:
        """그래디언트가 흐르지 않는 상수 leaf."""
        return self._append("constant", (), np.asarray(data, dtype=np.float64), None)

    def lift(self, value: Union[Tensor, ArrayLike]) -> Tensor:
        if isinstance(value, Tensor):
            if value.graph is not self:
                raise GracError("Tensor belongs to a different graph")
            return value
        return self.constant(value)

    # ------------------------------------------------------------------
    # 기록 / 역전파
    # ------------------------------------------------------------------
    def record(self, op: str, inputs: Sequence[Tensor], data: np.ndarray, vjp: VJP) -> Tensor:
        for tensor in inputs:
            if tensor.graph is not self:
                raise GracError(f"{op}: input tensor belongs to a different graph")
        return self._append(op, tuple(t.node_id for t in inputs), data, vjp)

    def _append(self, op: str, inputs: Tuple[int, ...], data: np.ndarray, vjp: Optional[VJP], name: Optional[str] = None) -> Tensor:
        if not self.requires_grad:
            return Tensor(data, self, -1, name)
        tensor = Tensor(data, self, len(self.nodes), name)
        self.nodes.append(Node(op=op, inputs=inputs, output=tensor, vjp=vjp))
        return tensor

    def backward(self, loss: Tensor) -> Dict[str, np.ndarray]:
        """
        스칼라 loss 로부터 모든 파라미터 leaf 의 그래디언트를 계산합니다.

        Args:
            loss: shape [1] (또는 원소 1개) 텐서

        Returns:
            Dict[str, np.ndarray]: 파라미터 이름 -> 그래디언트 (도달하지 않은 leaf 는 0)

        Raises:
            NonScalarLossError: loss 가 스칼라가 아닐 때
        """
        if not self.requires_grad:
            raise GracError("backward() on a graph built without gradient tracking")
        if loss.graph is not self:
            raise GracError("loss tensor belongs to a different graph")
        if loss.data.size != 1:
            raise NonScalarLossError(
                f"backward() requires a scalar loss, got shape {loss.shape}",
                context={"shape": loss.shape},
            )

        parameter_ids = {node_id: name for name, node_id in self._parameters.items()}
        grads: Dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
        leaf_grads: Dict[str, np.ndarray] = {}

        for node_id in range(loss.node_id, -1, -1):
            grad = grads.pop(node_id, None)
            if grad is None:
                continue
            node = self.nodes[node_id]
            if node.vjp is None:
                if node_id in parameter_ids:
                    leaf_grads[parameter_ids[node_id]] = grad
                continue
            for input_id, input_grad in zip(node.inputs, node.vjp(grad)):
                if input_grad is None:
                    continue
                if input_id in grads:
                    grads[input_id] = grads[input_id] + input_grad
                else:
                    grads[input_id] = input_grad

        return {
            name: leaf_grads.get(name, np.zeros(self._shapes[name]))
            for name in self._parameters
        }

    @property
    def parameter_names(self) -> list[str]:
        return list(self._shapes)


# ----------------------------------------------------------------------
# broadcast 규칙: 동일 shape, 원소 1개짜리 스칼라, 또는 batch 축 broadcast 만 허용
# ----------------------------------------------------------------------
def _is_scalar_like(shape: Tuple[int, ...], other: Tuple[int, ...]) -> bool:
    return int(np.prod(shape)) == 1 and len(shape) <= len(other)


def _result_shape(op: str, left: Tuple[int, ...], right: Tuple[int, ...]) -> Tuple[int, ...]:
    if left == right:
        return left
    if _is_scalar_like(right, left):
        return left
    if _is_scalar_like(left, right):
        return right
    if len(left) > len(right) and left[len(left) - len(right):] == right:
        return left
    if len(right) > len(left) and right[len(right) - len(left):] == left:
        return right
    raise ShapeMismatchError(op, left, right)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if int(np.prod(shape)) == 1:
        return np.full(shape, grad.sum())
    lead = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(lead))).reshape(shape)


def _binary_inputs(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tuple[Tensor, Tensor]:
    graph = a.graph if isinstance(a, Tensor) else b.graph
    return graph.lift(a), graph.lift(b)


# ----------------------------------------------------------------------
# 연산
# ----------------------------------------------------------------------
def add(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
    a, b = _binary_inputs(a, b)
    _result_shape("add", a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return a.graph.record(
        "add", (a, b), a.data + b.data,
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def sub(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
    a, b = _binary_inputs(a, b)
    _result_shape("sub", a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return a.graph.record(
        "sub", (a, b), a.data - b.data,
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
    )


def mul(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
    a, b = _binary_inputs(a, b)
    _result_shape("mul", a.shape, b.shape)
    x, y = a.data, b.data
    return a.graph.record(
        "mul", (a, b), x * y,
        lambda g: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)),
    )


def neg(a: Tensor) -> Tensor:
    return a.graph.record("neg", (a,), -a.data, lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _binary_inputs(a, b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    x, y = a.data, b.data
    return a.graph.record("matmul", (a, b), x @ y, lambda g: (g @ y.T, x.T @ g))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0
    return a.graph.record("relu", (a,), np.where(mask, a.data, 0.0), lambda g: (g * mask,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return a.graph.record("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return a.graph.record("exp", (a,), out, lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    x = a.data
    if np.any(x <= 0.0):
        raise DomainError(
            "log requires strictly positive input",
            context={"min_value": float(np.min(x))},
        )
    return a.graph.record("log", (a,), np.log(x), lambda g: (g / x,))


def square(a: Tensor) -> Tensor:
    x = a.data
    return a.graph.record("square", (a,), x * x, lambda g: (2.0 * g * x,))


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^x), 큰 |x| 에서도 안정적."""
    x = a.data
    sigmoid = 0.5 * (1.0 + np.tanh(0.5 * x))
    return a.graph.record("softplus", (a,), np.logaddexp(0.0, x), lambda g: (g * sigmoid,))


def clamp(a: Tensor, low: Optional[float] = None, high: Optional[float] = None) -> Tensor:
    x = a.data
    lo = -np.inf if low is None else low
    hi = np.inf if high is None else high
    inside = (x > lo) & (x < hi)
    return a.graph.record("clamp", (a,), np.clip(x, lo, hi), lambda g: (g * inside,))


def clamp_min_zero(a: Tensor) -> Tensor:
    return clamp(a, low=0.0)


def minimum(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
    """원소별 최솟값. 같은 값이면 그래디언트는 왼쪽 입력으로 흐릅니다."""
    a, b = _binary_inputs(a, b)
    _result_shape("minimum", a.shape, b.shape)
    x, y = a.data, b.data
    pick_left = x <= y
    return a.graph.record(
        "minimum", (a, b), np.where(pick_left, x, y),
        lambda g: (
            _unbroadcast(np.where(pick_left, g, 0.0), x.shape),
            _unbroadcast(np.where(pick_left, 0.0, g), y.shape),
        ),
    )


def sum(a: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    """axis=None 이면 shape [1] 스칼라를 반환합니다."""
    shape = a.shape
    if axis is None:
        return a.graph.record(
            "sum", (a,), np.array([a.data.sum()]),
            lambda g: (np.broadcast_to(g.reshape(()), shape).copy(),),
        )
    out = a.data.sum(axis=axis)
    return a.graph.record(
        "sum", (a,), out,
        lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),),
    )


def mean(a: Tensor, axis: Optional[int] = None) -> Tensor:
    count = a.data.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis), 1.0 / count)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    graph = tensors[0].graph
    parts = [graph.lift(t) for t in tensors]
    leading = [t.shape[:-1] for t in parts]
    if axis not in (-1, parts[0].ndim - 1) or any(s != leading[0] for s in leading):
        raise ShapeMismatchError("concat", parts[0].shape, parts[-1].shape)
    widths = np.cumsum([t.shape[-1] for t in parts])[:-1]
    return graph.record(
        "concat", parts, np.concatenate([t.data for t in parts], axis=-1),
        lambda g: tuple(np.split(g, widths, axis=-1)),
    )


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    original = a.shape
    return a.graph.record("reshape", (a,), a.data.reshape(shape), lambda g: (g.reshape(original),))


def detach(a: Tensor) -> Tensor:
    return a.graph.constant(a.data.copy())


# ----------------------------------------------------------------------
# 유한 차분 검증
# ----------------------------------------------------------------------
def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(1e-8, |a| + |n|)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))


def _scalar_value(loss: Tensor) -> float:
    value = loss.item()
    if not np.isfinite(value):
        raise NonFiniteError("function returned a non-finite value", context={"value": value})
    return value


def grad_check(fn: Callable[[ComputationGraph, Tensor], Tensor], params: ArrayLike, h: float = 1e-5) -> float:
    """
    역전파 그래디언트와 중심 차분 그래디언트의 최대 상대 오차를 반환합니다.

    Args:
        fn: (graph, params 텐서) -> 스칼라 텐서. 결정적이어야 합니다.
        params: 검증할 파라미터 배열
        h: 차분 간격 (> 0)
    """
    return grad_check_parameters(
        lambda graph, tensors: fn(graph, tensors["params"]),
        {"params": np.asarray(params, dtype=np.float64)},
        h=h,
    )


def grad_check_parameters(
    fn: Callable[[ComputationGraph, Dict[str, Tensor]], Tensor],
    params: Dict[str, np.ndarray],
    h: float = 1e-5,
    max_coords: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """
    여러 파라미터 배열에 대한 유한 차분 검증.
    max_coords 가 주어지면 배열마다 그 수만큼의 좌표만 무작위로 검사합니다.
    """
    if h <= 0:
        raise ValueError("h must be positive")

    def evaluate(values: Dict[str, np.ndarray], requires_grad: bool):
        graph = ComputationGraph(requires_grad=requires_grad)
        tensors = {name: graph.parameter(name, value) for name, value in values.items()}
        return graph, fn(graph, tensors)

    base = {name: np.asarray(v, dtype=np.float64) for name, v in params.items()}
    graph, loss = evaluate(base, True)
    _scalar_value(loss)
    analytic = graph.backward(loss)

    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for name, value in base.items():
        flat_size = value.size
        coords = np.arange(flat_size)
        if max_coords is not None and flat_size > max_coords:
            coords = np.sort(rng.choice(flat_size, size=max_coords, replace=False))
        numeric = np.empty(len(coords))
        for k, index in enumerate(coords):
            shifted = dict(base)
            plus = value.copy().reshape(-1)
            minus = value.copy().reshape(-1)
            plus[index] += h
            minus[index] -= h
            shifted[name] = plus.reshape(value.shape)
            f_plus = _scalar_value(evaluate(shifted, False)[1])
            shifted[name] = minus.reshape(value.shape)
            f_minus = _scalar_value(evaluate(shifted, False)[1])
            numeric[k] = (f_plus - f_minus) / (2.0 * h)
        worst = max(worst, max_relative_error(analytic[name].reshape(-1)[coords], numeric))
    return worst
