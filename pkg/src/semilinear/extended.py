"""Tagged extended reals: finite(x), +inf or -inf.

Infinite values never enter linear algebra as floats; they are carried as
tags and only resolved at the boundary (comparisons, serialization).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class ExtendedReal:
    kind: str  # "finite" | "plus_inf" | "minus_inf"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("finite", "plus_inf", "minus_inf"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == "finite" and not math.isfinite(self.value):
            raise ValueError("finite ExtendedReal needs a finite value")

    @classmethod
    def finite(cls, x: float) -> "ExtendedReal":
        return cls("finite", float(x))

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite"

    def sign(self) -> int:
        if self.kind == "plus_inf":
            return 1
        if self.kind == "minus_inf":
            return -1
        return (self.value > 0) - (self.value < 0)

    def __float__(self) -> float:
        if self.kind == "plus_inf":
            return math.inf
        if self.kind == "minus_inf":
            return -math.inf
        return self.value

    def _key(self) -> float:
        return float(self)

    def __lt__(self, other: "Number") -> bool:
        return self._key() < _as_float(other)

    def __le__(self, other: "Number") -> bool:
        return self._key() <= _as_float(other)

    def __gt__(self, other: "Number") -> bool:
        return self._key() > _as_float(other)

    def __ge__(self, other: "Number") -> bool:
        return self._key() >= _as_float(other)

    def to_json(self):
        if self.kind == "plus_inf":
            return "+inf"
        if self.kind == "minus_inf":
            return "-inf"
        return {"finite": self.value}

    @classmethod
    def from_json(cls, obj) -> "ExtendedReal":
        if obj in ("+inf", "inf"):
            return PLUS_INF
        if obj in ("-inf", "−inf"):
            return MINUS_INF
        if isinstance(obj, dict) and "finite" in obj:
            return cls.finite(obj["finite"])
        raise ValueError(f"cannot parse extended real from {obj!r}")

    def __str__(self) -> str:
        if self.kind == "plus_inf":
            return "+inf"
        if self.kind == "minus_inf":
            return "-inf"
        return repr(self.value)


PLUS_INF = ExtendedReal("plus_inf")
MINUS_INF = ExtendedReal("minus_inf")

Number = Union[ExtendedReal, float, int]


def _as_float(x: Number) -> float:
    return float(x)
