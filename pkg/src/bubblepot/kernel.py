"""Newtonian kernel J, closed-form derivatives up to order four, tail bounds.

J(x) = -log|x| / (2 pi)              for n = 2
J(x) = 1 / ((n - 2) w_n |x|^(n-2))   for n >= 3

with w_n the area of the unit sphere, so that Delta J = -delta.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy import optimize

MAX_ORDER = 4


class SingularPointError(ValueError):
    """Kernel evaluated at its singularity x = 0."""


class UnsupportedOrderError(ValueError):
    pass


class InvalidTruncationError(ValueError):
    pass


@dataclass(frozen=True)
class Dimension:
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"dimension must be >= 2, got {self.n}")

    @property
    def sphere_area(self) -> float:
        return sphere_area(self.n)


def sphere_area(n: int) -> float:
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


@dataclass(frozen=True)
class MultiIndex:
    entries: tuple[int, ...]

    def __post_init__(self):
        entries = tuple(int(e) for e in self.entries)
        object.__setattr__(self, "entries", entries)
        if any(e < 0 for e in entries):
            raise ValueError(f"negative multi-index entry in {entries}")
        if sum(entries) > MAX_ORDER:
            raise UnsupportedOrderError(f"|alpha| = {sum(entries)} > {MAX_ORDER}")

    @property
    def order(self) -> int:
        return sum(self.entries)

    @property
    def n(self) -> int:
        return len(self.entries)

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        return MultiIndex(tuple(a + b for a, b in zip(self.entries, other.entries)))

    def __iter__(self):
        return iter(self.entries)

    def __str__(self):
        return "(" + ",".join(str(e) for e in self.entries) + ")"


def as_tuple(alpha) -> tuple[int, ...]:
    if isinstance(alpha, MultiIndex):
        return alpha.entries
    return MultiIndex(tuple(alpha)).entries


def multi_indices(n: int, order: int) -> list[tuple[int, ...]]:
    """All multi-indices of length n with total order `order`, lexicographically descending."""
    out = [a for a in itertools.product(range(order, -1, -1), repeat=n) if sum(a) == order]
    return out


# Derivatives of radial functions f(x) = g(|x|^2).
# d^alpha f = sum_t c_t * x^m_t * g^(k_t)(|x|^2); terms built by the product rule
# d_i [x^m g^(k)] = m_i x^(m - e_i) g^(k) + 2 x^(m + e_i) g^(k+1).

@lru_cache(maxsize=None)
def radial_terms(alpha: tuple[int, ...]) -> tuple[tuple[float, tuple[int, ...], int], ...]:
    n = len(alpha)
    terms: dict[tuple[tuple[int, ...], int], float] = {((0,) * n, 0): 1.0}
    for i, count in enumerate(alpha):
        for _ in range(count):
            new: dict[tuple[tuple[int, ...], int], float] = {}
            for (m, k), c in terms.items():
                if m[i] > 0:
                    mm = m[:i] + (m[i] - 1,) + m[i + 1:]
                    new[(mm, k)] = new.get((mm, k), 0.0) + c * m[i]
                mp = m[:i] + (m[i] + 1,) + m[i + 1:]
                new[(mp, k + 1)] = new.get((mp, k + 1), 0.0) + 2.0 * c
            terms = new
    return tuple((c, m, k) for (m, k), c in sorted(terms.items()) if c != 0.0)


def radial_derivative(alpha: Sequence[int], x: np.ndarray,
                      g_derivs: Callable[[int, np.ndarray], np.ndarray]) -> np.ndarray:
    """Evaluate d^alpha g(|x|^2) at points x of shape (..., n)."""
    x = np.asarray(x, dtype=float)
    rho = np.sum(x * x, axis=-1)
    out = np.zeros(rho.shape)
    cache: dict[int, np.ndarray] = {}
    for c, m, k in radial_terms(tuple(alpha)):
        if k not in cache:
            cache[k] = g_derivs(k, rho)
        mono = np.ones(rho.shape)
        for i, p in enumerate(m):
            if p:
                mono = mono * x[..., i] ** p
        out = out + c * mono * cache[k]
    return out


def _kernel_g(n: int) -> Callable[[int, np.ndarray], np.ndarray]:
    """k-th derivative of g with J(x) = g(|x|^2)."""
    if n == 2:
        def g(k, rho):
            if k == 0:
                return -np.log(rho) / (4.0 * math.pi)
            return -((-1.0) ** (k - 1)) * math.factorial(k - 1) * rho ** (-k) / (4.0 * math.pi)
        return g
    const = 1.0 / ((n - 2) * sphere_area(n))
    p = (2.0 - n) / 2.0

    def g(k, rho):
        coef = const
        for j in range(k):
            coef *= p - j
        return coef * rho ** (p - k)
    return g


def _check_point(x: np.ndarray) -> None:
    if np.any(np.sum(x * x, axis=-1) == 0.0):
        raise SingularPointError("kernel is singular at x = 0")


def kernel_value(x, n: int | None = None) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    n = x.shape[-1] if n is None else n
    _check_point(x)
    r = np.sqrt(np.sum(x * x, axis=-1))
    if n == 2:
        val = -np.log(r) / (2.0 * math.pi)
    else:
        val = 1.0 / ((n - 2) * sphere_area(n) * r ** (n - 2))
    return float(val) if np.ndim(val) == 0 else val


def kernel_derivative(alpha, x, n: int | None = None) -> np.ndarray | float:
    """Exact partial derivative d^alpha J(x), vectorized over leading axes of x."""
    alpha = as_tuple(alpha)
    x = np.asarray(x, dtype=float)
    n = x.shape[-1] if n is None else n
    if len(alpha) != x.shape[-1]:
        raise ValueError("multi-index length does not match point dimension")
    _check_point(x)
    val = radial_derivative(alpha, x, _kernel_g(n))
    return float(val) if np.ndim(val) == 0 else val


def unit_directions_2d(theta: np.ndarray) -> np.ndarray:
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


@lru_cache(maxsize=None)
def _sphere_max(alpha: tuple[int, ...]) -> tuple[float, tuple[float, ...]]:
    n = len(alpha)
    if n == 2:
        th = np.linspace(0.0, 2 * math.pi, 4097)[:-1]
        vals = np.abs(kernel_derivative(alpha, unit_directions_2d(th)))
        i = int(np.argmax(vals))
        h = th[1] - th[0]
        res = optimize.minimize_scalar(
            lambda t: -abs(kernel_derivative(alpha, np.array([math.cos(t), math.sin(t)]))),
            bounds=(th[i] - h, th[i] + h), method="bounded", options={"xatol": 1e-12})
        best = max(vals[i], -res.fun)
        t = res.x if -res.fun >= vals[i] else th[i]
        return float(best), (math.cos(t), math.sin(t))
    m = 20000
    k = np.arange(m) + 0.5
    z = 1 - 2 * k / m
    ph = math.pi * (1 + 5 ** 0.5) * k
    pts = np.stack([np.sqrt(1 - z * z) * np.cos(ph), np.sqrt(1 - z * z) * np.sin(ph), z], -1)
    if n > 3:
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(m, n))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    vals = np.abs(kernel_derivative(alpha, pts))
    i = int(np.argmax(vals))

    def negabs(v):
        v = np.asarray(v)
        return -abs(kernel_derivative(alpha, v / np.linalg.norm(v)))
    res = optimize.minimize(negabs, pts[i], method="Nelder-Mead",
                            options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
    d = res.x / np.linalg.norm(res.x)
    best = max(vals[i], -res.fun)
    return float(best), tuple(float(v) for v in (d if -res.fun >= vals[i] else pts[i]))


def derivative_sup_on_sphere(alpha) -> float:
    """max over |w| = 1 of |d^alpha J(w)|."""
    return _sphere_max(as_tuple(alpha))[0]


def derivative_argmax_direction(alpha) -> np.ndarray:
    return np.array(_sphere_max(as_tuple(alpha))[1])


def kernel_tail_bound(alpha, R: float, x, n: int | None = None) -> float:
    """Upper bound for |int_{D \\ B_R} d^alpha J(x - y) dy|, unit density, |alpha| = 3.

    |d^alpha J(w)| <= C |w|^-(n+1), so the tail is at most C w_n / (R - |x|).
    The 1% inflation covers the discrete search for C.
    """
    alpha = as_tuple(alpha)
    x = np.asarray(x, dtype=float)
    n = x.shape[-1] if n is None else n
    if sum(alpha) != 3:
        raise UnsupportedOrderError("tail bound is stated for |alpha| = 3")
    rx = float(np.linalg.norm(x))
    if not R > 2.0 * rx or R <= 0:
        raise InvalidTruncationError(f"truncation radius {R} must exceed 2|x| = {2 * rx}")
    return 1.01 * derivative_sup_on_sphere(alpha) * sphere_area(n) / (R - rx)


def iter_third_order(n: int) -> Iterator[tuple[int, ...]]:
    yield from multi_indices(n, 3)
