"""First-order dual numbers over floats or numpy arrays."""

from typing import Union

import numpy as np
from scipy.special import erf as _erf

from ..common.errors import DifferentiationError

Real = Union[float, np.ndarray]

GELU_C = np.sqrt(2.0 / np.pi)
GELU_A = 0.044715


class Dual:
    """``value + tangent * eps`` with ``eps**2 = 0``."""

    __slots__ = ("value", "tangent")

    def __init__(self, value: Real, tangent: Real = 0.0):
        self.value = value
        self.tangent = tangent

    @classmethod
    def variable(cls, value: Real) -> "Dual":
        return cls(value, np.ones_like(value, dtype=float) if np.ndim(value) else 1.0)

    @classmethod
    def constant(cls, value: Real) -> "Dual":
        return cls(value, np.zeros_like(value, dtype=float) if np.ndim(value) else 0.0)

    def __repr__(self):
        return f"Dual({self.value!r}, {self.tangent!r})"

    def chain_rule(self, f0: Real, f1: Real) -> "Dual":
        return Dual(f0, f1 * self.tangent)

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.tangent + other.tangent)
        return Dual(self.value + other, self.tangent)

    def __neg__(self):
        return Dual(-self.value, -self.tangent)

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.tangent - other.tangent)
        return Dual(self.value - other, self.tangent)

    def __rsub__(self, other):
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.value * other.value,
                self.tangent * other.value + self.value * other.tangent,
            )
        return Dual(self.value * other, self.tangent * other)

    def recip(self) -> "Dual":
        if np.any(np.asarray(self.value) == 0):
            raise DifferentiationError("division by zero in dual arithmetic")
        rec = 1.0 / self.value
        return self.chain_rule(rec, -(rec * rec))

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return self * other.recip()
        if np.any(np.asarray(other) == 0):
            raise DifferentiationError("division by zero in dual arithmetic")
        return Dual(self.value / other, self.tangent / other)

    def __rtruediv__(self, other):
        return other * self.recip()

    def __pow__(self, n: int):
        if not isinstance(n, (int, np.integer)):
            raise DifferentiationError("dual power supports integer exponents only")
        if n < 0:
            return (self ** -n).recip()
        if n == 0:
            return Dual.constant(np.ones_like(self.value) if np.ndim(self.value) else 1.0)
        return self.chain_rule(self.value ** n, n * self.value ** (n - 1))

    def exp(self) -> "Dual":
        e = np.exp(self.value)
        return self.chain_rule(e, e)

    def log(self) -> "Dual":
        if np.any(np.asarray(self.value) <= 0):
            raise DifferentiationError(f"log of non-positive value {self.value!r}")
        return self.chain_rule(np.log(self.value), 1.0 / self.value)

    def sqrt(self) -> "Dual":
        if np.any(np.asarray(self.value) <= 0):
            raise DifferentiationError(f"sqrt derivative undefined at {self.value!r}")
        s = np.sqrt(self.value)
        return self.chain_rule(s, 0.5 / s)

    def tanh(self) -> "Dual":
        th = np.tanh(self.value)
        return self.chain_rule(th, 1.0 - th * th)

    def erf(self) -> "Dual":
        x = self.value
        return self.chain_rule(_erf(x), 2.0 / np.sqrt(np.pi) * np.exp(-x * x))

    def gelu(self) -> "Dual":
        return self.chain_rule(gelu(self.value), gelu_prime(self.value))


Dual.__radd__ = Dual.__add__
Dual.__rmul__ = Dual.__mul__


def gelu(x: Real) -> Real:
    """Tanh approximation 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    return 0.5 * x * (1.0 + np.tanh(GELU_C * (x + GELU_A * x ** 3)))


def gelu_prime(x: Real) -> Real:
    u = GELU_C * (x + GELU_A * x ** 3)
    th = np.tanh(u)
    du = GELU_C * (1.0 + 3.0 * GELU_A * x * x)
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du


def gelu_second(x: Real) -> Real:
    u = GELU_C * (x + GELU_A * x ** 3)
    th = np.tanh(u)
    sech2 = 1.0 - th * th
    du = GELU_C * (1.0 + 3.0 * GELU_A * x * x)
    d2u = GELU_C * 6.0 * GELU_A * x
    return sech2 * du + 0.5 * x * (-2.0 * th * sech2 * du * du + sech2 * d2u)
