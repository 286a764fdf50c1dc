"""Odd coupling functions f with f'(0) > 0."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveSlope

KINDS = ("linear", "sin", "higher_order")


def default_harmonics(order: int = 3) -> tuple[float, ...]:
    """Coefficients c_q = 1/q for q = 1..order."""
    return tuple(1.0 / q for q in range(1, order + 1))


@dataclass(frozen=True)
class CouplingSpec:
    """Coupling function of the interaction.

    ``linear`` is f(x) = x, ``sin`` is f(x) = sin(x) and ``higher_order`` is
    f(x) = sum_q c_q sin(q x) with ``coefficients`` holding c_1, c_2, ...
    """

    kind: str = "linear"
    coefficients: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown coupling kind {self.kind!r}")
        coefs = tuple(float(c) for c in self.coefficients)
        if self.kind == "higher_order" and not coefs:
            coefs = default_harmonics()
        if self.kind != "higher_order":
            coefs = ()
        object.__setattr__(self, "coefficients", coefs)
        if self.slope0 <= 0:
            raise NonPositiveSlope(f"coupling has f'(0) = {self.slope0} <= 0")

    def harmonics(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (q, c) such that f(x) = sum c sin(q x); empty for linear."""
        if self.kind == "linear":
            return np.zeros(0), np.zeros(0)
        if self.kind == "sin":
            return np.ones(1), np.ones(1)
        c = np.asarray(self.coefficients, dtype=float)
        return np.arange(1, c.size + 1, dtype=float), c

    @property
    def slope0(self) -> float:
        """f'(0)."""
        if self.kind == "linear":
            return 1.0
        q, c = self.harmonics()
        return float(np.dot(q, c))

    def f(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            return x.copy() if x.ndim else float(x)
        q, c = self.harmonics()
        out = np.sin(np.multiply.outer(x, q)) @ c
        return out if x.ndim else float(out)

    def df(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            return np.ones_like(x) if x.ndim else 1.0
        q, c = self.harmonics()
        out = np.cos(np.multiply.outer(x, q)) @ (q * c)
        return out if x.ndim else float(out)

    def to_dict(self) -> dict:
        return {"type": self.kind, "coefficients": list(self.coefficients)}

    @classmethod
    def from_dict(cls, data: dict | None) -> "CouplingSpec":
        if not data:
            return cls()
        return cls(data.get("type", "linear"), tuple(data.get("coefficients", ())))
