"""Canonical convex domains: membership, rays, boundary samples, volumes.

Every variant is convex, so a ray from any point meets it in a single
interval [lo, hi] of distances. That interval, in closed form, is the basic
query used by the quadrature and potential modules.

Quadric variants are written as D = {g < 0} with
g(x) = sum_j w_j (x_j - c_j)^2 + l . x + k; polyhedral ones as an
intersection of half-spaces {nu_i . x < d_i}.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from . import quadrature as quad

BAND = 1e-12
SCHEMA = "domain.v1"


class MissingExtentError(ValueError):
    pass


class BoundaryPointError(ValueError):
    """Point expected on the boundary is not there."""


@dataclass(frozen=True)
class BoundarySample:
    point: np.ndarray
    normal: np.ndarray
    patch_weight: float


def _vec(v) -> tuple[float, ...]:
    return tuple(float(x) for x in np.asarray(v, dtype=float).ravel())


def quadric_interval(A, B, C):
    """Distances r >= 0 with A r^2 + B r + C < 0 (A >= 0); nan where empty."""
    A, B, C = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (A, B, C)))
    lo = np.full(A.shape, np.nan)
    hi = np.full(A.shape, np.nan)
    pos = A > 0
    disc = B * B - 4 * A * C
    ok = pos & (disc > 0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        sq = np.sqrt(np.where(ok, disc, 0.0))
        q = -0.5 * (B + np.where(B >= 0, sq, -sq))
        r1 = np.where(ok, q / np.where(pos, A, 1.0), np.nan)
        r2 = np.where(ok, C / np.where(q != 0, q, 1.0), np.nan)
    rmin = np.fmin(r1, r2)
    rmax = np.fmax(r1, r2)
    good = ok & (rmax > 0)
    lo = np.where(good, np.maximum(rmin, 0.0), lo)
    hi = np.where(good, rmax, hi)
    lin = ~pos
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        root = -C / np.where(B != 0, B, 1.0)
    m = lin & (B > 0) & (root > 0)
    lo = np.where(m, 0.0, lo)
    hi = np.where(m, root, hi)
    m = lin & (B < 0)
    lo = np.where(m, np.maximum(root, 0.0), lo)
    hi = np.where(m, np.inf, hi)
    m = lin & (B == 0) & (C < 0)
    lo = np.where(m, 0.0, lo)
    hi = np.where(m, np.inf, hi)
    return lo, hi


def linear_interval(normals: np.ndarray, offsets: np.ndarray, origin: np.ndarray, w: np.ndarray):
    """Distances r >= 0 with nu_i . (o + r w) < d_i for all i; nan where empty."""
    m = w.shape[1]
    lo = np.zeros(m)
    hi = np.full(m, np.inf)
    empty = np.zeros(m, dtype=bool)
    for nu, d in zip(normals, offsets):
        s = nu @ w
        g = float(nu @ origin - d)
        with np.errstate(divide="ignore", invalid="ignore"):
            root = -g / s
        hi = np.where(s > 0, np.minimum(hi, root), hi)
        lo = np.where(s < 0, np.maximum(lo, root), lo)
        empty |= (s == 0) & (g >= 0)
    empty |= ~(hi > lo)
    return np.where(empty, np.nan, lo), np.where(empty, np.nan, hi)


class Domain:
    """Shared behaviour; subclasses define geometry."""

    n: int
    bounded: bool = False
    variant: str = ""

    # geometry hooks
    def level(self, x) -> np.ndarray:
        raise NotImplementedError

    def level_grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def ray_interval(self, origin, w) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def anchor(self) -> np.ndarray:
        raise NotImplementedError

    def within_parallel_hyperplanes(self) -> bool:
        raise NotImplementedError

    def scaled(self, lam: float) -> "Domain":
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    # shared
    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def contains(self, x) -> str:
        g = float(self.level(np.asarray(x, dtype=float)))
        if g < -BAND:
            return "inside"
        if g <= BAND:
            return "boundary"
        return "outside"

    def inside_mask(self, x) -> np.ndarray:
        """Vectorized strict membership for points of shape (..., n)."""
        return self.level(x) < -BAND

    def outward_normal(self, x, tol: float = 1e-9) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if abs(float(self.level(x))) > tol:
            raise BoundaryPointError(f"{_vec(x)} is not on the boundary of {self.variant}")
        g = self.level_grad(x)
        return g / np.linalg.norm(g)

    def polar_axis(self, origin) -> np.ndarray:
        return np.eye(self.n)[-1]

    def sphere_frame(self, origin) -> np.ndarray:
        return quad.sphere_frame(self.polar_axis(origin))

    def ray_breakpoints(self, origin) -> list[float]:
        return []

    def distance_to_boundary(self, x) -> float:
        """Euclidean distance from x to the boundary, by minimizing ray hits."""
        x = np.asarray(x, dtype=float)
        inside = self.contains(x) == "inside"

        def hit(w):
            lo, hi = self.ray_interval(x, w)
            d = hi if inside else lo
            return np.where(np.isfinite(d), d, np.inf)

        if self.n == 2:
            th = np.linspace(0, 2 * math.pi, 1441)[:-1]
            d = hit(quad.directions(th[None, :], 2))
            i = int(np.argmin(d))
            if not np.isfinite(d[i]):
                return math.inf
            h = th[1] - th[0]
            res = optimize.minimize_scalar(
                lambda t: float(hit(np.array([[math.cos(t)], [math.sin(t)]]))[0]),
                bounds=(th[i] - h, th[i] + h), method="bounded", options={"xatol": 1e-12})
            return float(min(d[i], res.fun))
        pts = _fibonacci_sphere(4000)
        d = hit(pts.T)
        i = int(np.argmin(d))
        if not np.isfinite(d[i]):
            return math.inf

        def fun(v):
            v = np.asarray(v) / np.linalg.norm(v)
            return float(hit(v[:, None])[0])
        res = optimize.minimize(fun, pts[i], method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 2000})
        return float(min(d[i], res.fun))

    def volume_in_ball(self, rho: float, rel_tol: float = 1e-7) -> float:
        """Lebesgue measure of D intersected with the ball B(0, rho)."""
        if rho <= 0:
            raise ValueError("rho must be positive")
        n = self.n
        o = np.zeros(n)

        def g(w):
            lo, hi = self.ray_interval(o, w)
            lo = np.clip(np.nan_to_num(lo, nan=0.0), 0, rho)
            hi = np.clip(np.nan_to_num(hi, nan=0.0), 0, rho)
            return np.maximum(hi ** n - lo ** n, 0.0) / n

        frame = self.sphere_frame(o) if n == 3 else None
        return float(quad.integrate_sphere(g, n, frame=frame, breakpoints=self.ray_breakpoints(o),
                                           rel_tol=rel_tol, abs_tol=1e-14 * rho ** n).value)

    def boundary_samples(self, count: int, extent: float | None = None) -> list[BoundarySample]:
        if count < 4:
            raise ValueError("count must be >= 4")
        if not self.bounded and extent is None:
            raise MissingExtentError(f"{self.variant} is unbounded: boundary sampling needs an extent")
        if extent is not None and extent <= 0:
            raise ValueError("extent must be positive")
        if self.n == 2:
            return _sample_curves(self, self._curves(extent), count)
        return _sample_patches(self, self._patches(extent), count)

    def interior_samples(self, count: int, window: float = 2.0, margin: float = 0.05,
                         seed: int = 0) -> np.ndarray:
        """Deterministic quasi-random interior points near the anchor."""
        from scipy.stats import qmc
        a = self.anchor()
        lo, hi = self._sample_box(window)
        eng = qmc.Halton(d=self.n, scramble=True, seed=seed)
        out = []
        while len(out) < count:
            pts = lo + (hi - lo) * eng.random(256)
            for p in pts:
                if self.level(p) < -margin:
                    out.append(p)
                    if len(out) == count:
                        break
        return np.array(out)

    def _sample_box(self, window):
        a = self.anchor()
        return a - window, a + window

    def _curves(self, extent):
        raise NotImplementedError

    def _patches(self, extent):
        raise NotImplementedError


def _fibonacci_sphere(m: int) -> np.ndarray:
    k = np.arange(m) + 0.5
    z = 1 - 2 * k / m
    ph = math.pi * (1 + 5 ** 0.5) * k
    s = np.sqrt(1 - z * z)
    return np.stack([s * np.cos(ph), s * np.sin(ph), z], -1)


class QuadricDomain(Domain):
    """g(x) = sum_j w_j (x_j - c_j)^2 + l . x + k."""

    def _coeffs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
        raise NotImplementedError

    def level(self, x):
        w, c, l, k = self._coeffs()
        x = np.asarray(x, dtype=float)
        return np.sum(w * (x - c) ** 2, axis=-1) + x @ l + k

    def level_grad(self, x):
        w, c, l, _ = self._coeffs()
        return 2 * w * (np.asarray(x, dtype=float) - c) + l

    def ray_interval(self, origin, w):
        wq, c, l, _ = self._coeffs()
        o = np.asarray(origin, dtype=float)
        A = (wq[:, None] * w * w).sum(0)
        B = ((2 * wq * (o - c) + l)[:, None] * w).sum(0)
        C = float(self.level(o))
        return quadric_interval(A, B, C)

    def ray_breakpoints(self, origin):
        if self.n != 2:
            return []
        wq, c, l, _ = self._coeffs()
        o = np.asarray(origin, dtype=float)
        C = float(self.level(o))
        b = 2 * wq * (o - c) + l
        M = np.outer(b, b) - 4 * C * np.diag(wq)
        out = _quadratic_form_zeros(M)
        out += _quadratic_form_zeros(np.diag(wq))
        return sorted({t % (2 * math.pi) for t in out})


def _quadratic_form_zeros(M: np.ndarray) -> list[float]:
    """Angles t with (cos t, sin t) M (cos t, sin t)^T = 0."""
    a, b, c = M[0, 0], M[0, 1] + M[1, 0], M[1, 1]
    scale = abs(a) + abs(b) + abs(c)
    if scale == 0:
        return []
    if abs(c) <= 1e-14 * scale:
        # cos t (a cos t + b sin t) = 0
        out = [math.pi / 2]
        if abs(b) > 1e-14 * scale:
            out.append(math.atan2(-a, b))
    else:
        # c tan^2 + b tan + a = 0
        disc = b * b - 4 * a * c
        if disc < 0:
            return []
        sq = math.sqrt(disc)
        out = [math.atan((-b + sq) / (2 * c)), math.atan((-b - sq) / (2 * c))]
    return [t + k * math.pi for t in out for k in (0, 1)]


@dataclass(frozen=True)
class Ellipsoid(QuadricDomain):
    semiaxes: tuple[float, ...]
    center: tuple[float, ...] | None = None
    variant = "Ellipsoid"
    bounded = True

    def __post_init__(self):
        object.__setattr__(self, "semiaxes", _vec(self.semiaxes))
        c = (0.0,) * len(self.semiaxes) if self.center is None else _vec(self.center)
        object.__setattr__(self, "center", c)
        if any(a <= 0 for a in self.semiaxes):
            raise ValueError("semiaxes must be positive")
        if len(c) != len(self.semiaxes):
            raise ValueError("center and semiaxes dimension mismatch")

    @property
    def n(self):
        return len(self.semiaxes)

    def _coeffs(self):
        a = np.array(self.semiaxes)
        return 1 / a ** 2, np.array(self.center), np.zeros(self.n), -1.0

    def anchor(self):
        return np.array(self.center)

    def polar_axis(self, origin):
        o = np.asarray(origin, dtype=float)
        d = np.array(self.center) - o
        if self.level(o) > 0 and np.linalg.norm(d) > 0:
            return d / np.linalg.norm(d)
        return np.eye(self.n)[int(np.argmax(self.semiaxes))]

    def ray_breakpoints(self, origin):
        if self.n == 3:
            o = np.asarray(origin, dtype=float)
            if self.level(o) > 0:
                dist = np.linalg.norm(np.array(self.center) - o)
                s = min(1.0, max(self.semiaxes) / dist)
                return [math.asin(s)] if s < 1 else []
            return []
        return super().ray_breakpoints(origin)

    def volume(self) -> float:
        return math.pi ** (self.n / 2) / math.gamma(self.n / 2 + 1) * float(np.prod(self.semiaxes))

    def volume_in_ball(self, rho, rel_tol=1e-7):
        if np.linalg.norm(self.center) + max(self.semiaxes) <= rho:
            return self.volume()
        return super().volume_in_ball(rho, rel_tol)

    def within_parallel_hyperplanes(self):
        return True

    def scaled(self, lam):
        return Ellipsoid(tuple(lam * a for a in self.semiaxes), tuple(lam * c for c in self.center))

    def to_dict(self):
        return {"schema": SCHEMA, "variant": self.variant, "semiaxes": list(self.semiaxes),
                "center": list(self.center)}

    def _sample_box(self, window):
        c, a = np.array(self.center), np.array(self.semiaxes)
        return c - a, c + a

    def interior_samples(self, count, window=2.0, margin=0.05, seed=0):
        return super().interior_samples(count, window, margin=0.19, seed=seed)

    def _curves(self, extent):
        a, b = self.semiaxes
        c = np.array(self.center)
        return [(lambda t: c[:, None] + np.stack([a * np.cos(t), b * np.sin(t)]),
                 lambda t: np.stack([-a * np.sin(t), b * np.cos(t)]), 0.0, 2 * math.pi, True)]

    def _patches(self, extent):
        a = np.array(self.semiaxes)
        c = np.array(self.center)

        def f(u, v):
            return c[:, None] + a[:, None] * np.stack([np.sin(u) * np.cos(v), np.sin(u) * np.sin(v), np.cos(u)])
        return [(f, (0.0, math.pi), (0.0, 2 * math.pi))]


@dataclass(frozen=True)
class CylinderOverEllipsoid(QuadricDomain):
    """Ellipsoid in the coordinates `base_axes`, times R along the rest."""
    semiaxes: tuple[float, ...]
    base_axes: tuple[int, ...]
    dim: int
    center: tuple[float, ...] | None = None
    variant = "CylinderOverEllipsoid"

    def __post_init__(self):
        object.__setattr__(self, "semiaxes", _vec(self.semiaxes))
        object.__setattr__(self, "base_axes", tuple(int(i) for i in self.base_axes))
        c = (0.0,) * self.dim if self.center is None else _vec(self.center)
        object.__setattr__(self, "center", c)
        if any(a <= 0 for a in self.semiaxes):
            raise ValueError("semiaxes must be positive")
        k = len(self.base_axes)
        if len(self.semiaxes) != k or not 1 <= k < self.dim:
            raise ValueError("cylinder needs 1 <= k < n base axes with matching semiaxes")

    @property
    def n(self):
        return self.dim

    @property
    def free_axes(self):
        return tuple(i for i in range(self.dim) if i not in self.base_axes)

    def _coeffs(self):
        w = np.zeros(self.dim)
        w[list(self.base_axes)] = 1 / np.array(self.semiaxes) ** 2
        return w, np.array(self.center), np.zeros(self.dim), -1.0

    def anchor(self):
        return np.array(self.center)

    def polar_axis(self, origin):
        return np.eye(self.dim)[self.free_axes[0]] if len(self.free_axes) == 1 else np.eye(self.dim)[self.base_axes[0]]

    def ray_breakpoints(self, origin):
        if self.n == 3:
            return [math.pi / 2] if len(self.free_axes) == 2 else []
        return super().ray_breakpoints(origin)

    def within_parallel_hyperplanes(self):
        return True

    def base(self) -> Ellipsoid:
        c = np.array(self.center)[list(self.base_axes)]
        return Ellipsoid(self.semiaxes, c)

    def scaled(self, lam):
        return CylinderOverEllipsoid(tuple(lam * a for a in self.semiaxes), self.base_axes, self.dim,
                                     tuple(lam * c for c in self.center))

    def to_dict(self):
        return {"schema": SCHEMA, "variant": self.variant, "semiaxes": list(self.semiaxes),
                "base_axes": list(self.base_axes), "n": self.dim, "center": list(self.center)}

    def _sample_box(self, window):
        c = np.array(self.center)
        half = np.full(self.dim, float(window))
        half[list(self.base_axes)] = self.semiaxes
        return c - half, c + half

    def _curves(self, extent):
        (b,), (f,) = self.base_axes, self.free_axes
        a = self.semiaxes[0]
        c = np.array(self.center)
        out = []
        for sgn in (1.0, -1.0):
            def pt(t, sgn=sgn):
                p = np.zeros((2, np.size(t)))
                p[b] = c[b] + sgn * a
                p[f] = c[f] + t
                return p

            def dp(t):
                d = np.zeros((2, np.size(t)))
                d[f] = 1.0
                return d
            out.append((pt, dp, -extent, extent, False))
        return out

    def _patches(self, extent):
        c = np.array(self.center)
        if len(self.base_axes) == 2:
            (b1, b2), (f,) = self.base_axes, self.free_axes
            a1, a2 = self.semiaxes

            def g(u, v):
                p = np.zeros((3, np.size(u)))
                p[b1] = c[b1] + a1 * np.cos(u)
                p[b2] = c[b2] + a2 * np.sin(u)
                p[f] = c[f] + v
                return p
            return [(g, (0.0, 2 * math.pi), (-extent, extent))]
        (b,), (f1, f2) = self.base_axes, self.free_axes
        out = []
        for sgn in (1.0, -1.0):
            def g(u, v, sgn=sgn):
                p = np.zeros((3, np.size(u)))
                p[b] = c[b] + sgn * self.semiaxes[0]
                p[f1] = c[f1] + u
                p[f2] = c[f2] + v
                return p
            out.append((g, (-extent, extent), (-extent, extent)))
        return out


@dataclass(frozen=True)
class Paraboloid(QuadricDomain):
    """{x : x_axis - vertex_offset > sum_j (x_j / a_j)^2} over the base axes.

    With `dim` unset the base axes are all coordinates except `axis`;
    otherwise remaining coordinates are free (a cylinder over a paraboloid).
    """
    semiaxes: tuple[float, ...]
    axis: int = -1
    vertex_offset: float = 0.0
    dim: int | None = None
    base_axes: tuple[int, ...] | None = None
    variant = "Paraboloid"

    def __post_init__(self):
        object.__setattr__(self, "semiaxes", _vec(self.semiaxes))
        n = self.dim if self.dim is not None else len(self.semiaxes) + 1
        object.__setattr__(self, "dim", n)
        ax = self.axis % n
        object.__setattr__(self, "axis", ax)
        if self.base_axes is None:
            base = tuple(i for i in range(n) if i != ax)
        else:
            base = tuple(int(i) for i in self.base_axes)
        object.__setattr__(self, "base_axes", base)
        if any(a <= 0 for a in self.semiaxes):
            raise ValueError("semiaxes must be positive")
        if len(base) != len(self.semiaxes) or ax in base or not base:
            raise ValueError("paraboloid base axes must match semiaxes and exclude the axis")

    @property
    def n(self):
        return self.dim

    @property
    def free_axes(self):
        return tuple(i for i in range(self.dim) if i != self.axis and i not in self.base_axes)

    def _coeffs(self):
        w = np.zeros(self.dim)
        w[list(self.base_axes)] = 1 / np.array(self.semiaxes) ** 2
        l = np.zeros(self.dim)
        l[self.axis] = -1.0
        return w, np.zeros(self.dim), l, float(self.vertex_offset)

    def anchor(self):
        p = np.zeros(self.dim)
        p[self.axis] = self.vertex_offset + max(self.semiaxes)
        return p

    def polar_axis(self, origin):
        return np.eye(self.dim)[self.axis]

    def ray_breakpoints(self, origin):
        if self.n == 3:
            return [math.pi / 2] if self.free_axes else []
        return super().ray_breakpoints(origin)

    def within_parallel_hyperplanes(self):
        return False

    def scaled(self, lam):
        return type(self)(**{**self._fields(), "semiaxes": tuple(a * math.sqrt(lam) for a in self.semiaxes),
                             "vertex_offset": lam * self.vertex_offset})

    def _fields(self):
        return dict(semiaxes=self.semiaxes, axis=self.axis, vertex_offset=self.vertex_offset,
                    dim=self.dim, base_axes=self.base_axes)

    def to_dict(self):
        return {"schema": SCHEMA, "variant": self.variant, "semiaxes": list(self.semiaxes), "axis": self.axis,
                "vertex_offset": self.vertex_offset, "n": self.dim, "base_axes": list(self.base_axes)}

    def height(self, base_coords: np.ndarray) -> np.ndarray:
        a = np.array(self.semiaxes)[:, None]
        return np.sum((base_coords / a) ** 2, axis=0) + self.vertex_offset

    def _curves(self, extent):
        (b,) = self.base_axes
        a = self.semiaxes[0]
        ax = self.axis

        def pt(t):
            p = np.zeros((2, np.size(t)))
            p[b] = t
            p[ax] = (t / a) ** 2 + self.vertex_offset
            return p

        def dp(t):
            d = np.zeros((2, np.size(t)))
            d[b] = 1.0
            d[ax] = 2 * t / a ** 2
            return d
        return [(pt, dp, -extent, extent, False)]

    def _patches(self, extent):
        ax = self.axis
        if not self.free_axes:
            b1, b2 = self.base_axes

            def g(u, v):
                p = np.zeros((3, np.size(u)))
                p[b1], p[b2] = u, v
                p[ax] = self.height(np.stack([u, v]))
                return p
            return [(g, (-extent, extent), (-extent, extent))]
        (b,), (f,) = self.base_axes, self.free_axes

        def g(u, v):
            p = np.zeros((3, np.size(u)))
            p[b], p[f] = u, v
            p[ax] = self.height(np.atleast_2d(u))
            return p
        return [(g, (-extent, extent), (-extent, extent))]


@dataclass(frozen=True)
class CylinderOverParaboloid(Paraboloid):
    variant = "CylinderOverParaboloid"

    def __post_init__(self):
        super().__post_init__()
        if not self.free_axes:
            raise ValueError("cylinder over a paraboloid needs at least one free axis")


class _Polyhedral(Domain):
    def _constraints(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def level(self, x):
        nu, d = self._constraints()
        x = np.asarray(x, dtype=float)
        return np.max(x @ nu.T - d, axis=-1)

    def level_grad(self, x):
        nu, d = self._constraints()
        x = np.asarray(x, dtype=float)
        return nu[int(np.argmax(nu @ x - d))]

    def ray_interval(self, origin, w):
        nu, d = self._constraints()
        return linear_interval(nu, d, np.asarray(origin, dtype=float), w)

    def distance_to_boundary(self, x):
        nu, d = self._constraints()
        x = np.asarray(x, dtype=float)
        g = nu @ x - d
        if np.all(g < 0):
            return float(np.min(-g))
        if len(d) <= 2:
            return float(np.max(g))
        return super().distance_to_boundary(x)

    def ray_breakpoints(self, origin):
        if self.n != 2:
            # polar axis is the first normal; faces parallel to it sit at the equator
            return [math.pi / 2]
        nu, _ = self._constraints()
        out = []
        for v in nu:
            t = math.atan2(v[1], v[0]) + math.pi / 2
            out += [t % (2 * math.pi), (t + math.pi) % (2 * math.pi)]
        return sorted(set(out))

    def polar_axis(self, origin):
        nu, _ = self._constraints()
        return nu[0]


def _unit(v) -> tuple[float, ...]:
    v = _vec(v)
    if abs(math.sqrt(sum(x * x for x in v)) - 1.0) > 1e-12:
        raise ValueError(f"normal {v} must have unit length")
    return v


@dataclass(frozen=True)
class HalfSpace(_Polyhedral):
    """{x : normal . x < offset}; `normal` is the outward unit normal."""
    normal: tuple[float, ...]
    offset: float = 0.0
    variant = "HalfSpace"

    def __post_init__(self):
        object.__setattr__(self, "normal", _unit(self.normal))
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def n(self):
        return len(self.normal)

    def _constraints(self):
        return np.array([self.normal]), np.array([self.offset])

    def anchor(self):
        return (self.offset - 1.0) * np.array(self.normal)

    def within_parallel_hyperplanes(self):
        return False

    def scaled(self, lam):
        return HalfSpace(self.normal, lam * self.offset)

    def volume_in_ball(self, rho, rel_tol=1e-7):
        h = self.offset
        n = self.n
        vb = math.pi ** (n / 2) / math.gamma(n / 2 + 1) * rho ** n
        if h >= rho:
            return vb
        if h <= -rho:
            return 0.0
        # cap {nu . x > h} of the ball, by 1D slices
        k = math.pi ** ((n - 1) / 2) / math.gamma((n - 1) / 2 + 1)
        cap = quad.adaptive_1d(lambda s: k * np.maximum(rho ** 2 - s ** 2, 0) ** ((n - 1) / 2),
                               h, rho, rel_tol=1e-13, abs_tol=1e-15 * vb).value
        return vb - cap

    def to_dict(self):
        return {"schema": SCHEMA, "variant": self.variant, "normal": list(self.normal), "offset": self.offset}

    def _curves(self, extent):
        nu = np.array(self.normal)
        tau = np.array([-nu[1], nu[0]])
        p0 = self.offset * nu
        return [(lambda t: p0[:, None] + tau[:, None] * t, lambda t: np.repeat(tau[:, None], np.size(t), 1),
                 -extent, extent, False)]

    def _patches(self, extent):
        nu = np.array(self.normal)
        e1, e2 = quad.sphere_frame(nu)[:2]
        p0 = self.offset * nu
        return [(lambda u, v: p0[:, None] + e1[:, None] * u + e2[:, None] * v, (-extent, extent), (-extent, extent))]


@dataclass(frozen=True)
class Strip(_Polyhedral):
    """{x : lower < normal . x < upper}."""
    normal: tuple[float, ...]
    lower: float
    upper: float
    variant = "Strip"

    def __post_init__(self):
        object.__setattr__(self, "normal", _unit(self.normal))
        if not self.lower < self.upper:
            raise ValueError("strip needs lower < upper")

    @property
    def n(self):
        return len(self.normal)

    def _constraints(self):
        nu = np.array(self.normal)
        return np.array([nu, -nu]), np.array([self.upper, -self.lower])

    def anchor(self):
        return 0.5 * (self.lower + self.upper) * np.array(self.normal)

    def within_parallel_hyperplanes(self):
        return True

    def scaled(self, lam):
        return Strip(self.normal, lam * self.lower, lam * self.upper)

    def to_dict(self):
        return {"schema": SCHEMA, "variant": self.variant, "normal": list(self.normal),
                "lower": self.lower, "upper": self.upper}

    def _curves(self, extent):
        nu = np.array(self.normal)
        tau = np.array([-nu[1], nu[0]])
        out = []
        for h in (self.upper, self.lower):
            p0 = h * nu
            out.append((lambda t, p0=p0: p0[:, None] + tau[:, None] * t,
                        lambda t: np.repeat(tau[:, None], np.size(t), 1), -extent, extent, False))
        return out

    def _patches(self, extent):
        nu = np.array(self.normal)
        e1, e2 = quad.sphere_frame(nu)[:2]
        return [(lambda u, v, p0=h * nu: p0[:, None] + e1[:, None] * u + e2[:, None] * v,
                 (-extent, extent), (-extent, extent)) for h in (self.upper, self.lower)]

    def _sample_box(self, window):
        a = self.anchor()
        half = np.full(self.n, float(window))
        return a - half, a + half


@dataclass(frozen=True)
class Box(_Polyhedral):
    """Axis-aligned box. Not a quadratic-potential domain; used as a control."""
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    variant = "Box"
    bounded = True

    def __post_init__(self):
        object.__setattr__(self, "lower", _vec(self.lower))
        object.__setattr__(self, "upper", _vec(self.upper))
        if not all(a < b for a, b in zip(self.lower, self.upper)) or len(self.lower) != len(self.upper):
            raise ValueError("box needs lower < upper in every coordinate")

    @property
    def n(self):
        return len(self.lower)

    def _constraints(self):
        e = np.eye(self.n)
        return np.concatenate([e, -e]), np.concatenate([np.array(self.upper), -np.array(self.lower)])

    def anchor(self):
        return 0.5 * (np.array(self.lower) + np.array(self.upper))

    def ray_breakpoints(self, origin):
        if self.n != 2:
            return []
        o = np.asarray(origin, dtype=float)
        out = list(super().ray_breakpoints(origin))
        for x in (self.lower[0], self.upper[0]):
            for y in (self.lower[1], self.upper[1]):
                out.append(math.atan2(y - o[1], x - o[0]) % (2 * math.pi))
        return sorted(set(out))

    def within_parallel_hyperplanes(self):
        return True

    def scaled(self, lam):
        return Box(tuple(lam * a for a in self.lower), tuple(lam * b for b in self.upper))

    def to_dict(self):
        return {"schema": SCHEMA, "variant": self.variant, "lower": list(self.lower), "upper": list(self.upper)}

    def _sample_box(self, window):
        return np.array(self.lower), np.array(self.upper)

    def _curves(self, extent):
        (x0, y0), (x1, y1) = self.lower, self.upper
        corners = [np.array(p) for p in ((x0, y0), (x1, y0), (x1, y1), (x0, y1))]
        out = []
        for i in range(4):
            p, q = corners[i], corners[(i + 1) % 4]
            L = float(np.linalg.norm(q - p))
            out.append((lambda t, p=p, q=q, L=L: p[:, None] + (q - p)[:, None] * (t / L),
                        lambda t, p=p, q=q, L=L: np.repeat(((q - p) / L)[:, None], np.size(t), 1), 0.0, L, False))
        return out

    def _patches(self, extent):
        lo, hi = np.array(self.lower), np.array(self.upper)
        out = []
        for ax in range(3):
            o1, o2 = [i for i in range(3) if i != ax]
            for val in (lo[ax], hi[ax]):
                def g(u, v, ax=ax, o1=o1, o2=o2, val=val):
                    p = np.zeros((3, np.size(u)))
                    p[ax], p[o1], p[o2] = val, u, v
                    return p
                out.append((g, (lo[o1], hi[o1]), (lo[o2], hi[o2])))
        return out


@dataclass(frozen=True)
class WholeSpace(Domain):
    dim: int = 2
    variant = "WholeSpace"

    @property
    def n(self):
        return self.dim

    def level(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], -1.0) if x.ndim > 1 else -1.0

    def level_grad(self, x):
        raise BoundaryPointError("the whole space has no boundary")

    def ray_interval(self, origin, w):
        m = w.shape[1]
        return np.zeros(m), np.full(m, np.inf)

    def anchor(self):
        return np.zeros(self.dim)

    def distance_to_boundary(self, x):
        return math.inf

    def within_parallel_hyperplanes(self):
        return False

    def scaled(self, lam):
        return self

    def volume_in_ball(self, rho, rel_tol=1e-7):
        return math.pi ** (self.n / 2) / math.gamma(self.n / 2 + 1) * rho ** self.n

    def boundary_samples(self, count, extent=None):
        return []

    def to_dict(self):
        return {"schema": SCHEMA, "variant": self.variant, "n": self.dim}


VARIANTS = {cls.variant: cls for cls in (Ellipsoid, CylinderOverEllipsoid, Paraboloid, CylinderOverParaboloid,
                                         HalfSpace, Strip, Box, WholeSpace)}


def from_dict(d: dict) -> Domain:
    d = dict(d)
    schema = d.pop("schema", SCHEMA)
    if schema != SCHEMA:
        raise ValueError(f"unsupported domain schema {schema!r}")
    try:
        variant = d.pop("variant")
        cls = VARIANTS[variant]
    except KeyError as exc:
        raise ValueError(f"unknown or missing domain variant: {exc}") from None
    if "n" in d:
        d["dim"] = d.pop("n")
    for key in ("semiaxes", "center", "normal", "lower", "upper", "base_axes"):
        if isinstance(d.get(key), list):
            d[key] = tuple(d[key])
    return cls(**d)


def from_json(text: str) -> Domain:
    return from_dict(json.loads(text))


# boundary sampling

def _sample_curves(D: Domain, curves, count: int) -> list[BoundarySample]:
    lengths, tables = [], []
    for pt, dp, t0, t1, closed in curves:
        speed = lambda t: np.linalg.norm(dp(t), axis=0)
        L = quad.adaptive_1d(speed, t0, t1, rel_tol=1e-13, abs_tol=1e-14).value
        grid = np.linspace(t0, t1, 8001)
        sp = speed(grid)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (sp[1:] + sp[:-1]) * np.diff(grid))])
        cum *= L / cum[-1]
        lengths.append(L)
        tables.append((grid, cum))
    total = sum(lengths)
    counts = [max(1, int(round(count * L / total))) for L in lengths]
    counts[-1] = max(1, count - sum(counts[:-1]))
    out = []
    for (pt, dp, t0, t1, closed), L, (grid, cum), m in zip(curves, lengths, tables, counts):
        s = (np.arange(m) + (0.0 if closed else 0.5)) * L / m
        t = np.interp(s, cum, grid)
        P = pt(t)
        for j in range(m):
            p = P[:, j]
            g = D.level_grad(p)
            out.append(BoundarySample(p, g / np.linalg.norm(g), L / m))
    return out


def _sample_patches(D: Domain, patches, count: int) -> list[BoundarySample]:
    out = []
    per = max(4, count // len(patches))
    for f, (u0, u1), (v0, v1) in patches:
        mu = max(2, int(round(math.sqrt(per))))
        mv = max(2, int(math.ceil(per / mu)))
        xu, wu = np.polynomial.legendre.leggauss(mu)
        xv, wv = np.polynomial.legendre.leggauss(mv)
        u = u0 + (u1 - u0) * (xu + 1) / 2
        v = v0 + (v1 - v0) * (xv + 1) / 2
        U, V = np.meshgrid(u, v, indexing="ij")
        W = np.outer(wu, wv) * (u1 - u0) * (v1 - v0) / 4
        U, V, W = U.ravel(), V.ravel(), W.ravel()
        hu = 1e-6 * max(1.0, abs(u1 - u0))
        hv = 1e-6 * max(1.0, abs(v1 - v0))
        du = (f(U + hu, V) - f(U - hu, V)) / (2 * hu)
        dv = (f(U, V + hv) - f(U, V - hv)) / (2 * hv)
        jac = np.linalg.norm(np.cross(du.T, dv.T), axis=1)
        P = f(U, V)
        for j in range(P.shape[1]):
            p = P[:, j]
            g = D.level_grad(p)
            out.append(BoundarySample(p, g / np.linalg.norm(g), float(W[j] * jac[j])))
    return out
