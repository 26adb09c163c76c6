"""Per-state nonlinearities ``f(i, y)``, their slopes and hypothesis checks.

Every nonlinearity evaluates vectorized: ``f(y)`` with ``y`` of shape ``(n,)``
(one value per state) or ``(n, m)`` (``m`` sample points per state).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import MissingF3Certificate, NegativeArgument
from .spectral import Potential

SHIFT_EPS = 1e-6


def _per_state(x, n: int) -> np.ndarray:
    a = np.broadcast_to(np.asarray(x, dtype=float), (n,)).copy()
    a.setflags(write=False)
    return a


def _col(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Broadcast a per-state parameter against ``y`` of shape (n,) or (n, m)."""
    return a if y.ndim == 1 else a[:, None]


class Nonlinearity:
    """Base class; subclasses implement ``_eval`` and ``_deriv``."""

    kind = "abstract"
    n: int

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape[0] != self.n:
            raise ValueError(f"expected leading dimension {self.n}, got {y.shape}")
        if np.any(y < 0):
            raise NegativeArgument("nonlinearity evaluated at a negative argument")
        return self._eval(y)

    def derivative(self, y) -> np.ndarray:
        """Right derivative in ``y`` (``+inf`` allowed at 0 for root-type terms)."""
        y = np.asarray(y, dtype=float)
        return self._deriv(y)

    def positive_part(self, y) -> np.ndarray:
        return np.maximum(self(y), 0.0)

    def negative_part(self, y) -> np.ndarray:
        return np.maximum(-self(y), 0.0)

    def slopes(self) -> tuple[Potential, Potential]:
        raise NotImplementedError

    def to_spec(self) -> dict:
        raise NotImplementedError

    def _eval(self, y):
        raise NotImplementedError

    def _deriv(self, y):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class PowerMinusLinear(Nonlinearity):
    """``f(i, y) = y**q - c_i y``."""

    q: float
    c: np.ndarray
    n: int = 1
    kind = "power_minus_linear"

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError("exponent q must be positive")
        object.__setattr__(self, "c", _per_state(self.c, self.n))

    def _eval(self, y):
        return y**self.q - _col(self.c, y) * y

    def _deriv(self, y):
        with np.errstate(divide="ignore"):
            return self.q * y ** (self.q - 1.0) - _col(self.c, y)

    def slopes(self):
        n = self.n
        if self.q < 1:
            return Potential(np.full(n, np.inf)), Potential(-self.c)
        if self.q == 1:
            return Potential(1.0 - self.c), Potential(1.0 - self.c)
        return Potential(-self.c), Potential(np.full(n, np.inf))

    def to_spec(self):
        return {"kind": self.kind, "q": self.q, "c": self.c.tolist()}


@dataclass(frozen=True, eq=False)
class Logistic(Nonlinearity):
    """``f(i, y) = mu_i y - beta_i y**2`` (``beta = 0`` gives a linear map)."""

    mu: np.ndarray
    beta: np.ndarray
    n: int = 1
    kind = "logistic"

    def __post_init__(self):
        object.__setattr__(self, "mu", _per_state(self.mu, self.n))
        object.__setattr__(self, "beta", _per_state(self.beta, self.n))
        if np.any(self.beta < 0):
            raise ValueError("logistic beta must be nonnegative")

    def _eval(self, y):
        return (_col(self.mu, y) - _col(self.beta, y) * y) * y

    def _deriv(self, y):
        return _col(self.mu, y) - 2.0 * _col(self.beta, y) * y

    def slopes(self):
        ainf = np.where(self.beta > 0, -np.inf, self.mu)
        return Potential(self.mu), Potential(ainf)

    def to_spec(self):
        return {"kind": self.kind, "mu": self.mu.tolist(), "beta": self.beta.tolist()}


def linear(c, n: int = 1) -> Logistic:
    """``f(i, y) = c_i y``."""
    return Logistic(c, 0.0, n)


@dataclass(frozen=True, eq=False)
class Saturating(Nonlinearity):
    """``f(i, y) = a_i y / (1 + y)``."""

    a: np.ndarray
    n: int = 1
    kind = "saturating"

    def __post_init__(self):
        object.__setattr__(self, "a", _per_state(self.a, self.n))

    def _eval(self, y):
        return _col(self.a, y) * y / (1.0 + y)

    def _deriv(self, y):
        return _col(self.a, y) / (1.0 + y) ** 2

    def slopes(self):
        return Potential(self.a), Potential(np.zeros(self.n))

    def to_spec(self):
        return {"kind": self.kind, "a": self.a.tolist()}


@dataclass(frozen=True, eq=False)
class Tabulated(Nonlinearity):
    """Per-state piecewise-linear tables starting at ``y = 0``.

    Beyond the last knot the final segment is extended linearly.
    """

    knots: tuple
    values: tuple
    kind = "tabulated"

    def __post_init__(self):
        knots = tuple(np.array(k, dtype=float) for k in self.knots)
        values = tuple(np.array(v, dtype=float) for v in self.values)
        if len(knots) != len(values) or not knots:
            raise ValueError("need one (knots, values) table per state")
        for k, v in zip(knots, values):
            if k.ndim != 1 or k.shape != v.shape or k.size < 2:
                raise ValueError("each table needs >= 2 knots with matching values")
            if k[0] != 0.0:
                raise ValueError("tables must start at y = 0")
            if np.any(np.diff(k) <= 0):
                raise ValueError("knots must be strictly increasing")
            k.setflags(write=False)
            v.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)

    @classmethod
    def shared(cls, knots, values, n: int) -> "Tabulated":
        return cls(tuple([knots] * n), tuple([values] * n))

    @property
    def n(self) -> int:
        return len(self.knots)

    def _row(self, i: int, y: np.ndarray) -> np.ndarray:
        k, v = self.knots[i], self.values[i]
        out = np.interp(y, k, v)
        slope = (v[-1] - v[-2]) / (k[-1] - k[-2])
        beyond = y > k[-1]
        out[beyond] = v[-1] + slope * (y[beyond] - k[-1])
        return out

    def _rowd(self, i: int, y: np.ndarray) -> np.ndarray:
        k, v = self.knots[i], self.values[i]
        s = np.diff(v) / np.diff(k)
        idx = np.clip(np.searchsorted(k, y, side="right") - 1, 0, s.size - 1)
        return s[idx]

    def _apply(self, fn, y):
        y = np.atleast_1d(y)
        if y.ndim == 1:
            return np.array([fn(i, y[i : i + 1])[0] for i in range(self.n)])
        return np.stack([fn(i, y[i]) for i in range(self.n)])

    def _eval(self, y):
        return self._apply(self._row, y)

    def _deriv(self, y):
        return self._apply(self._rowd, y)

    def slopes(self):
        a0 = np.empty(self.n)
        ainf = np.empty(self.n)
        for i, (k, v) in enumerate(zip(self.knots, self.values)):
            if v[0] > 0:
                a0[i] = np.inf
            elif v[0] < 0:
                a0[i] = -np.inf
            else:
                a0[i] = (v[1] - v[0]) / (k[1] - k[0])
            ainf[i] = (v[-1] - v[-2]) / (k[-1] - k[-2])
        if np.any(a0 == -np.inf):
            raise ValueError("f(i, 0) < 0: the lower slope is -inf")
        return Potential(a0), Potential(ainf)

    def to_spec(self):
        return {
            "kind": self.kind,
            "knots": [k.tolist() for k in self.knots],
            "values": [v.tolist() for v in self.values],
        }


@dataclass(frozen=True, eq=False)
class Shifted(Nonlinearity):
    """``f(i, y) + C_i y``."""

    inner: Nonlinearity
    C: np.ndarray
    kind = "shifted"

    def __post_init__(self):
        object.__setattr__(self, "C", _per_state(self.C, self.inner.n))

    @property
    def n(self) -> int:
        return self.inner.n

    def _eval(self, y):
        return self.inner._eval(y) + _col(self.C, y) * y

    def _deriv(self, y):
        return self.inner._deriv(y) + _col(self.C, y)

    def slopes(self):
        a0, ainf = self.inner.slopes()
        return a0.shifted(self.C), ainf.shifted(self.C)

    def to_spec(self):
        return {"kind": self.kind, "C": self.C.tolist(), "inner": self.inner.to_spec()}


def from_spec(spec: dict, n: int) -> Nonlinearity:
    """Build a nonlinearity from its structured-text description."""
    kind = spec.get("kind")
    if kind == "power_minus_linear":
        return PowerMinusLinear(float(spec["q"]), spec.get("c", 0.0), n)
    if kind == "logistic":
        return Logistic(spec["mu"], spec.get("beta", 1.0), n)
    if kind == "linear":
        return linear(spec["c"], n)
    if kind == "saturating":
        return Saturating(spec["a"], n)
    if kind == "tabulated":
        knots, values = spec["knots"], spec["values"]
        if knots and not isinstance(knots[0], (list, tuple)):
            return Tabulated.shared(knots, values, n)
        return Tabulated(tuple(knots), tuple(values))
    if kind == "shifted":
        return Shifted(from_spec(spec["inner"], n), spec["C"])
    raise ValueError(f"unknown nonlinearity kind {kind!r}")


def evaluate(f: Nonlinearity, i: int, y: float) -> float:
    """``f(i, y)`` for a single state."""
    if y < 0:
        raise NegativeArgument(f"y={y!r} < 0")
    if not 0 <= i < f.n:
        raise IndexError(f"state {i} out of range for n={f.n}")
    yy = np.zeros(f.n)
    yy[i] = y
    return float(f(yy)[i])


def split(f: Nonlinearity, i: int, y: float) -> tuple[float, float]:
    """``(f+, f-)`` at ``(i, y)``."""
    v = evaluate(f, i, y)
    return max(v, 0.0), max(-v, 0.0)


def slopes(f: Nonlinearity) -> tuple[Potential, Potential]:
    return f.slopes()


@dataclass(frozen=True)
class SamplingGrid:
    y_min: float = 1e-8
    y_max: float = 1e8
    num: int = 400
    deltas: tuple = (1.0,)
    c_cap: float = 1e3
    h_floor: float = 1e-6

    def points(self) -> np.ndarray:
        return np.geomspace(self.y_min, self.y_max, self.num)

    def describe(self) -> str:
        return (
            f"log-spaced y in [{self.y_min:g}, {self.y_max:g}], {self.num} points per state; "
            f"(F3) deltas {list(self.deltas)}, C_delta cap {self.c_cap:g}"
        )


@dataclass(frozen=True)
class HypothesisCertificate:
    lam: float
    h: np.ndarray
    c_delta: dict
    checked_grid: str
    verdict: str
    failed: str | None = None
    witness: tuple | None = None  # (state, y, violation amount)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "failed": self.failed,
            "witness": list(self.witness) if self.witness else None,
            "F1": {"lambda": self.lam, "h": np.asarray(self.h).tolist()},
            "F3": {str(d): c for d, c in self.c_delta.items()},
            "grid": self.checked_grid,
        }


def _refined_excess(f: Nonlinearity, ys: np.ndarray, excess: np.ndarray, lam: float) -> np.ndarray:
    """Per-state max of ``f(i,y) - lam*y``, polished between grid neighbours."""
    out = excess.max(axis=1)
    for i in range(f.n):
        j = int(np.argmax(excess[i]))
        lo, hi = ys[max(j - 1, 0)], ys[min(j + 1, ys.size - 1)]
        if hi <= lo:
            continue

        def neg(y, i=i):
            yy = np.zeros(f.n)
            yy[i] = y
            return -(f(yy)[i] - lam * y)

        res = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * hi})
        out[i] = max(out[i], -float(res.fun))
    return out


def validate_hypotheses(f: Nonlinearity, grid: SamplingGrid | None = None) -> HypothesisCertificate:
    """Sampled check of the growth bound (F1) and the lower bound near 0 (F3).

    (F1) ``f(i,y) <= h_i + lam*y``: ``lam`` comes from the slope data (the
    bounded ratio ``f/y`` when ``a0`` is finite, else the upper slope ``ainf``)
    and ``h`` is the sampled excess.  (F3) ``f(i,y) >= -C_delta*y`` on
    ``(0, delta]``: ``C_delta`` is the sampled sup of ``-f/y``; a value above
    ``grid.c_cap`` is reported as a failure.
    """
    grid = grid or SamplingGrid()
    n = f.n
    ys = grid.points()
    Y = np.broadcast_to(ys, (n, ys.size))
    F = f(Y)
    a0, ainf = f.slopes()
    ratio = F / Y

    witness = failed = None
    if ainf.plus_inf.any():
        i = int(np.argmax(ainf.plus_inf))
        j = int(np.argmax(ratio[i]))
        witness, failed = (i, float(ys[j]), float(ratio[i, j])), "F1"
        lam = np.inf
    elif a0.is_finite:
        lam = max(0.0, float(ratio.max()), float(a0.values.max()))
    else:
        lam = max(0.0, float(ainf.values[~ainf.minus_inf].max(initial=0.0)))
    if np.isfinite(lam):
        h = np.maximum(grid.h_floor, _refined_excess(f, ys, F - lam * Y, lam))
    else:
        h = np.full(n, np.inf)

    f0 = f(np.zeros(n))
    c_delta = {}
    for delta in grid.deltas:
        mask = ys <= delta
        Yd = np.concatenate([ys[mask], [delta]])
        Fd = f(np.broadcast_to(Yd, (n, Yd.size)))
        neg = np.maximum(-Fd / Yd, 0.0)
        C = float(neg.max())
        c_delta[float(delta)] = C
        if failed is None and np.any(f0 < 0):
            i = int(np.argmin(f0))
            witness, failed = (i, 0.0, float(-f0[i])), "F3"
        elif failed is None and C > grid.c_cap:
            i, j = np.unravel_index(int(np.argmax(neg)), neg.shape)
            y = float(Yd[j])
            witness, failed = (int(i), y, float(-Fd[i, j] - grid.c_cap * y)), "F3"
    return HypothesisCertificate(
        float(lam),
        h,
        c_delta,
        grid.describe(),
        "fail" if failed else "pass",
        failed,
        witness,
    )


def shift_delta(f: Nonlinearity, delta: float, certificate: HypothesisCertificate | None, eps: float = SHIFT_EPS) -> Shifted:
    """Shift ``f`` by ``(C_delta + eps) y`` so it is strictly positive on ``(0, delta]``.

    The generator has to be co-shifted by the same constant; when ``f`` is
    already positive on the sampled ``(0, delta]`` the shift is zero.
    """
    if certificate is None or float(delta) not in certificate.c_delta:
        raise MissingF3Certificate(f"no (F3) constant recorded for delta={delta!r}")
    C = certificate.c_delta[float(delta)]
    if C == 0.0:
        ys = np.geomspace(1e-8 * delta, delta, 200)
        if np.all(f(np.broadcast_to(ys, (f.n, ys.size))) > 0):
            return Shifted(f, 0.0)
    return Shifted(f, C + eps)
