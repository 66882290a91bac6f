"""
Tensor and op tape.

A Tensor is a named-parameter carrier (data plus optional gradient buffer).
Activations flow between ops as plain numpy arrays; the OpTape records what
each op needs for its backward pass and replays it in reverse order.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from ...errors import ContractViolation, require

logger = logging.getLogger("vesselseg.nn")


@dataclass
class Tensor:
    """Parameter or buffer with an optional same-shape gradient."""

    data: np.ndarray
    grad: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data)
        require(
            self.data.dtype.kind == "f",
            f"tensor data must be floating point, got {self.data.dtype}",
        )
        if self.grad is not None:
            self.grad = np.asarray(self.grad)
            require(
                self.grad.shape == self.data.shape,
                f"gradient shape {self.grad.shape} differs from data shape {self.data.shape}",
            )

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def zero_grad(self) -> None:
        self.grad = None

    def copy(self) -> "Tensor":
        return Tensor(
            self.data.copy(), None if self.grad is None else self.grad.copy()
        )

    def astype(self, dtype: Any) -> "Tensor":
        return Tensor(self.data.astype(dtype))


BackwardFn = Callable[[Any, np.ndarray], Tuple[Optional[np.ndarray], ...]]


@dataclass
class TapeRecord:
    """One executed op: which values it read, which parameters it used, its saved context."""

    op: str
    inputs: Tuple[int, ...]
    params: Tuple[str, ...]
    output: int
    ctx: Any


@dataclass
class OpTape:
    """Ordered record of executed ops for reverse-mode differentiation."""

    records: List[TapeRecord] = field(default_factory=list)
    _next_value: int = 0

    def new_value(self) -> int:
        """Allocate an id for a value produced outside any op (e.g. the network input)."""
        value_id = self._next_value
        self._next_value += 1
        return value_id

    def record(
        self, op: str, inputs: Tuple[int, ...], params: Tuple[str, ...], ctx: Any
    ) -> int:
        """Append an op record and return the id of its output value."""
        output = self.new_value()
        self.records.append(TapeRecord(op, inputs, params, output, ctx))
        return output

    def __len__(self) -> int:
        return len(self.records)

    def backward(
        self,
        output: int,
        grad_output: np.ndarray,
        backward_fns: Dict[str, BackwardFn],
    ) -> Tuple[Dict[str, np.ndarray], Dict[int, np.ndarray]]:
        """
        Propagate ``grad_output`` from value ``output`` back through the tape.

        Each backward function returns gradients for the record's inputs first,
        then for its parameters, in declaration order.

        Returns:
            (parameter gradients by name, value gradients by id)
        """
        if not self.records:
            raise ContractViolation("backward called on an empty tape (run a train-mode forward first)")

        value_grads: Dict[int, np.ndarray] = {output: grad_output}
        param_grads: Dict[str, np.ndarray] = {}

        for rec in reversed(self.records):
            grad = value_grads.pop(rec.output, None)
            if grad is None:
                continue
            fn = backward_fns.get(rec.op)
            if fn is None:
                raise ContractViolation(f"no backward registered for op '{rec.op}'")
            grads = fn(rec.ctx, grad)
            n_in = len(rec.inputs)
            for value_id, g in zip(rec.inputs, grads[:n_in]):
                if g is None:
                    continue
                if value_id in value_grads:
                    value_grads[value_id] = value_grads[value_id] + g
                else:
                    value_grads[value_id] = g
            for name, g in zip(rec.params, grads[n_in:]):
                if g is None:
                    continue
                if name in param_grads:
                    param_grads[name] = param_grads[name] + g
                else:
                    param_grads[name] = g

        return param_grads, value_grads
