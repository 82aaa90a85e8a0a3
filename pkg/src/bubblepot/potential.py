"""Newtonian potentials of characteristic functions and of test bumps.

Volume integrals over a convex domain D use rays from the evaluation point.
Along a ray y = x + r w the kernel derivative is homogeneous in r,

    d^a J(x - y) = (-1)^k d^a J(w) r^-(n-2+k),   k = |a|,

so the radial integral has a closed-form primitive and only the angular
integral is done numerically. Interior points with k >= 2 excise a ball of
radius dist/2; the ball contributes 0 for k >= 3 and -delta_ij/n for k = 2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import special

from . import domains as dom
from . import kernel as ker
from . import quadrature as quad
from .parallel import pmap


class UnboundedDomainError(ValueError):
    """The ordinary potential (or a low derivative) diverges on this domain."""


class BoundaryEvaluationError(ValueError):
    pass


# -- quadratic forms ---------------------------------------------------------

@dataclass(frozen=True)
class QuadraticForm:
    """q(x) = x^T A x + b . x + c."""
    A: np.ndarray
    b: np.ndarray | None = None
    c: float = 0.0
    modulo_harmonic: bool = False

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        object.__setattr__(self, "A", 0.5 * (A + A.T))
        b = np.zeros(A.shape[0]) if self.b is None else np.asarray(self.b, dtype=float)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def poisson_trace(self) -> float:
        """Laplacian of q, 2 tr(A)."""
        return 2.0 * float(np.trace(self.A))

    def __call__(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        v = np.einsum("...i,ij,...j->...", x, self.A, x) + x @ self.b + self.c
        return float(v) if np.ndim(v) == 0 else v

    def harmonic_split(self, axis: int = -1) -> tuple["QuadraticForm", "QuadraticForm"]:
        """Split q = -x_axis^2/2 + const + h with h a harmonic quadratic.

        Needs 2 tr(A) = -1. Returns (normalized part, h).
        """
        if abs(self.poisson_trace + 1.0) > 1e-8:
            raise ValueError(f"Laplacian of q is {self.poisson_trace}, not -1")
        e = np.zeros((self.n, self.n))
        e[axis, axis] = -0.5
        base = QuadraticForm(e, None, self.c, self.modulo_harmonic)
        return base, QuadraticForm(self.A - e, self.b, 0.0, self.modulo_harmonic)

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist(), "c": self.c,
                "poisson_trace": self.poisson_trace, "modulo_harmonic": self.modulo_harmonic}

    @classmethod
    def from_dict(cls, d: dict) -> "QuadraticForm":
        return cls(np.array(d["A"]), np.array(d["b"]), d["c"], bool(d.get("modulo_harmonic", False)))


@dataclass(frozen=True)
class DensityClassCertificate:
    l_norm: float
    converged: bool
    error_estimate: float = 0.0

    def to_dict(self) -> dict:
        return {"l_norm": self.l_norm, "converged": self.converged, "error_estimate": self.error_estimate}


@dataclass(frozen=True)
class FitResult:
    form: QuadraticForm
    residual: float
    passed: bool
    tolerance: float
    samples: int
    note: str = ""

    def to_dict(self) -> dict:
        return {"form": self.form.to_dict(), "residual": self.residual, "passed": self.passed,
                "tolerance": self.tolerance, "samples": self.samples, "note": self.note}


# -- test bumps --------------------------------------------------------------

@lru_cache(maxsize=None)
def _bump_poly(k: int) -> np.ndarray:
    p = np.array([1.0])
    for _ in range(k):
        p = P.polymul([0.0, 0.0, 1.0], P.polysub(P.polyder(p), p))
    return p


@dataclass(frozen=True)
class TestBump:
    """phi(x) = exp(-1 / (1 - |x - c|^2 / rho^2)) on B(c, rho), 0 outside."""
    __test__ = False  # not a pytest class

    center: tuple[float, ...]
    radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if not self.radius > 0:
            raise ValueError("bump radius must be positive")

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def c(self) -> np.ndarray:
        return np.array(self.center)

    def _g(self, k, s):
        u = s / self.radius ** 2
        inside = u < 1.0
        w = 1.0 / (1.0 - np.where(inside, u, 0.0))
        val = P.polyval(w, _bump_poly(k)) * np.exp(-w) / self.radius ** (2 * k)
        return np.where(inside, val, 0.0)

    def value(self, x) -> np.ndarray:
        return self.derivative((0,) * self.n, x)

    def derivative(self, alpha, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return ker.radial_derivative(ker.as_tuple(alpha), x - self.c, self._g)

    @property
    def mass(self) -> float:
        return _bump_mass(self.n) * self.radius ** self.n

    def support(self) -> dom.Ellipsoid:
        return dom.Ellipsoid((self.radius,) * self.n, self.center)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "radius": self.radius}


@lru_cache(maxsize=None)
def _bump_mass(n: int) -> float:
    f = lambda r: np.where(r < 1, np.exp(-1 / (1 - np.minimum(r * r, 1 - 1e-300))), 0.0) * r ** (n - 1)
    return ker.sphere_area(n) * quad.adaptive_1d(f, 0.0, 1.0, rel_tol=1e-14, abs_tol=1e-16).value


@lru_cache(maxsize=None)
def _polar_rule(n: int, nr: int, na: int):
    """Fixed rule on the unit ball: (nodes (m, n), weights (m,))."""
    xr, wr = np.polynomial.legendre.leggauss(nr)
    r = 0.5 * (xr + 1)
    wr = 0.5 * wr
    if n == 2:
        th = 2 * math.pi * np.arange(na) / na
        R, T = np.meshgrid(r, th, indexing="ij")
        W = np.outer(wr * r, np.full(na, 2 * math.pi / na))
        pts = np.stack([R * np.cos(T), R * np.sin(T)], -1)
        return pts.reshape(-1, 2), W.ravel()
    xc, wc = np.polynomial.legendre.leggauss(na // 2)
    ph = 2 * math.pi * np.arange(na) / na
    R, C, F = np.meshgrid(r, xc, ph, indexing="ij")
    S = np.sqrt(1 - C * C)
    W = (wr * r * r)[:, None, None] * wc[None, :, None] * np.full(na, 2 * math.pi / na)[None, None, :]
    pts = np.stack([R * S * np.cos(F), R * S * np.sin(F), R * C], -1)
    return pts.reshape(-1, 3), W.ravel()


FAR_FACTOR = 2.0


def _far_field(phi: TestBump, alpha, pts: np.ndarray, chunk: int = 2_000_000) -> np.ndarray:
    """d^a V(phi) at points >= 2 rho from the bump center: int d^a J(x - z) phi(z) dz."""
    n = phi.n
    d = np.linalg.norm(pts - phi.c, axis=-1)
    ratio = float(np.min(d)) / phi.radius if len(d) else np.inf
    if n == 2:
        nr, na = (64, 96) if ratio < 4 else (40, 56)
    else:
        nr, na = (40, 64) if ratio < 4 else (24, 36)
    z, w = _polar_rule(n, nr, na)
    z = phi.c + phi.radius * z
    w = w * phi.radius ** n * phi.value(z)
    keep = w != 0
    z, w = z[keep], w[keep]
    out = np.empty(len(pts))
    step = max(1, chunk // len(z))
    for i in range(0, len(pts), step):
        diff = pts[i:i + step, None, :] - z[None, :, :]
        out[i:i + step] = ker.kernel_derivative(alpha, diff) @ w
    return out


def _newton_field(phi: TestBump, alpha, pts: np.ndarray) -> np.ndarray:
    """d^a V(phi) outside supp phi: the bump is radial, so V(phi) = mass * J(x - c) there."""
    return phi.mass * ker.kernel_derivative(alpha, pts - phi.c)


def _near_field(phi: TestBump, alpha, x: np.ndarray, cfg: quad.QuadratureConfig) -> float:
    """d^a V(phi)(x) = int J(x - y) d^a phi(y) dy by polar quadrature about x."""
    ball = phi.support()
    n = phi.n

    def f(y):
        diff = x[:, None] - y
        r2 = np.sum(diff * diff, axis=0)
        safe = np.where(r2 > 0, diff, 1.0)
        j = ker.kernel_value(safe.T, n)
        return np.where(r2 > 0, j, 0.0) * phi.derivative(alpha, y.T)

    scale = phi.radius ** (2 - sum(alpha))
    res = quad.integrate(f, ball, cfg.with_(abs_tol=max(cfg.abs_tol, 1e-13 * scale)), center=x)
    return float(res.value)


FAR_METHODS = ("newton", "quadrature")


def _far(phi, alpha, pts, far_method):
    if far_method == "newton":
        return _newton_field(phi, alpha, pts)
    if far_method == "quadrature":
        return _far_field(phi, alpha, pts)
    raise ValueError(f"far_method must be one of {FAR_METHODS}")


def schwartz_potential_derivative(phi: TestBump, alpha, x, cfg: quad.QuadratureConfig | None = None,
                                  far_method: str = "newton") -> float:
    """d^a V(phi)(x) for a test bump phi."""
    alpha = ker.as_tuple(alpha)
    x = np.asarray(x, dtype=float)
    cfg = cfg or quad.QuadratureConfig(rel_tol=1e-10, abs_tol=1e-14)
    if np.linalg.norm(x - phi.c) >= FAR_FACTOR * phi.radius:
        return float(_far(phi, alpha, x[None, :], far_method)[0])
    return _near_field(phi, alpha, x, cfg)


def bump_potential_derivative(phi: TestBump, alpha, pts, cfg: quad.QuadratureConfig | None = None,
                              far_method: str = "newton") -> np.ndarray:
    """Vectorized d^a V(phi) at points (m, n); near points fall back to adaptive quadrature.

    far_method "quadrature" integrates the kernel against phi with a fixed
    polar rule instead of using the exterior closed form.
    """
    alpha = ker.as_tuple(alpha)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    far = np.linalg.norm(pts - phi.c, axis=-1) >= FAR_FACTOR * phi.radius
    out = np.empty(len(pts))
    if far.any():
        out[far] = _far(phi, alpha, pts[far], far_method)
    for i in np.flatnonzero(~far):
        out[i] = schwartz_potential_derivative(phi, alpha, pts[i], cfg)
    return out


@dataclass(frozen=True)
class DecayFit:
    slope: float
    radii: tuple[float, ...]
    values: tuple[float, ...]
    direction: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"slope": self.slope, "radii": list(self.radii), "values": list(self.values),
                "direction": list(self.direction)}


def decay_check(phi: TestBump, alpha, beta, radii: Sequence[float]) -> DecayFit:
    """Log-log slope of |d^(a+b) V(phi)| along the direction where d^(a+b) J peaks."""
    alpha, beta = ker.as_tuple(alpha), ker.as_tuple(beta)
    if sum(alpha) != 3:
        raise ValueError("decay check needs |alpha| = 3")
    if sum(alpha) + sum(beta) > ker.MAX_ORDER:
        raise ker.UnsupportedOrderError("|alpha| + |beta| must be <= 4")
    radii = np.asarray(radii, dtype=float)
    if len(radii) < 4:
        raise ValueError("decay check needs at least 4 radii")
    if np.any(np.diff(radii) <= 0) or radii[0] <= FAR_FACTOR * phi.radius:
        raise ValueError("radii must increase and stay outside 2 * bump radius")
    ab = tuple(a + b for a, b in zip(alpha, beta))
    d = ker.derivative_argmax_direction(ab)
    pts = phi.c + radii[:, None] * d
    vals = np.abs(_far_field(phi, ab, pts))
    slope = float(np.polyfit(np.log(radii), np.log(vals), 1)[0])
    return DecayFit(slope, tuple(radii.tolist()), tuple(vals.tolist()), tuple(d.tolist()))


# -- domain integrals of kernel derivatives ----------------------------------

def _primitive(k: int, n: int, r: np.ndarray) -> np.ndarray:
    """int r^(1-k) dr (k >= 1), or the full radial factor for k = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        if k == 0:
            if n == 2:
                rr = np.where(r > 0, r, 1.0)
                return np.where(r > 0, -(rr * rr * np.log(rr) / 2 - rr * rr / 4) / (2 * math.pi), 0.0)
            return r * r / 2
        if k == 1:
            return r
        if k == 2:
            return np.log(r)
        return -(r ** (2.0 - k)) / (k - 2)


def kernel_integral(D: dom.Domain, x, alphas: Sequence, cfg: quad.QuadratureConfig | None = None) -> quad.QuadResult:
    """int_D d^a J(x - y) dy for each alpha (all of one order k); values in order.

    k = 0, 1 need a bounded domain. For k = 2 on unbounded domains, infinite
    rays are cut at unit distance: the cut-off term integrates d_ij J over the
    set of unbounded directions, which is zero for every canonical domain
    (a half-sphere or a null set), so the value is a fixed gauge.
    """
    x = np.asarray(x, dtype=float)
    n = D.n
    alphas = [ker.as_tuple(a) for a in alphas]
    k = sum(alphas[0])
    if any(sum(a) != k for a in alphas):
        raise ValueError("all multi-indices must share one order")
    cfg = cfg or quad.default_config(n)
    where = D.contains(x)
    if where == "boundary":
        raise BoundaryEvaluationError("evaluation on the boundary is not supported")
    if k <= 1 and not D.bounded:
        raise UnboundedDomainError(f"order-{k} potential diverges on unbounded {D.variant}")
    r0 = None
    if where == "inside" and k >= 2:
        r0 = 0.5 * D.distance_to_boundary(x)
        if cfg.excision_radius is not None:
            if cfg.excision_radius > r0 * (1 + 1e-9):
                raise quad.DomainError("excision radius exceeds half the distance to the boundary")
            r0 = cfg.excision_radius
    sign = (-1.0) ** k

    def g(w):
        lo, hi = D.ray_interval(x, w)
        miss = ~(np.isfinite(lo) & (hi > lo))
        if r0 is not None:
            lo = np.where(miss, r0, np.maximum(lo, r0))
            hi = np.where(miss, r0, hi)
        else:
            lo = np.where(miss, 1.0, lo)
            hi = np.where(miss, 1.0, hi)
        inf = ~np.isfinite(hi)
        top = np.where(inf, 0.0, _primitive(k, n, np.where(inf, 1.0, hi)))
        radial = top - _primitive(k, n, lo)
        if k == 0 and n == 2:
            return radial[None, :]
        ang = np.stack([ker.kernel_derivative(a, w.T) for a in alphas])
        return sign * ang * radial

    frame = D.sphere_frame(x) if n == 3 else None
    res = quad.integrate_sphere(g, n, frame=frame, breakpoints=D.ray_breakpoints(x),
                                rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol,
                                max_cells=cfg.max_subdivisions)
    val = np.atleast_1d(np.asarray(res.value, dtype=float))
    if k == 0 and n == 2:
        val = np.repeat(val, len(alphas))
    if k == 2 and where == "inside":
        for i, a in enumerate(alphas):
            if max(a) == 2:
                val[i] -= 1.0 / n
    return quad.QuadResult(val, res.error_estimate, res.cells)


def third_derivatives(D: dom.Domain, x, cfg: quad.QuadratureConfig | None = None) -> dict:
    """All |alpha| = 3 derivatives of any representative of the potential of D at x."""
    alphas = ker.multi_indices(D.n, 3)
    res = kernel_integral(D, x, alphas, cfg)
    return {a: float(v) for a, v in zip(alphas, res.value)}


def third_derivative(D: dom.Domain, x, alpha, cfg: quad.QuadratureConfig | None = None) -> float:
    alpha = ker.as_tuple(alpha)
    if sum(alpha) != 3:
        raise ValueError("third_derivative needs |alpha| = 3")
    return float(kernel_integral(D, x, [alpha], cfg).value[0])


def second_derivatives(D: dom.Domain, x, cfg: quad.QuadratureConfig | None = None) -> np.ndarray:
    """Hessian of the potential at x; for unbounded D in the unit-cutoff gauge."""
    n = D.n
    alphas = ker.multi_indices(n, 2)
    vals = kernel_integral(D, x, alphas, cfg).value
    H = np.zeros((n, n))
    for a, v in zip(alphas, vals):
        idx = [i for i in range(n) for _ in range(a[i])]
        H[idx[0], idx[1]] = H[idx[1], idx[0]] = v
    return H


# -- closed forms ------------------------------------------------------------

def interval_potential(a: float, x) -> np.ndarray:
    """1D potential of (-a, a) with kernel -|s|/2."""
    x = np.abs(np.asarray(x, dtype=float))
    return np.where(x <= a, -(x * x + a * a) / 2, -a * x)


def _ellipse_lambda(a, b, x1, x2):
    s = x1 * x1 + x2 * x2
    B = a * a + b * b - s
    C = a * a * b * b - x1 * x1 * b * b - x2 * x2 * a * a
    outside = x1 * x1 / (a * a) + x2 * x2 / (b * b) > 1
    disc = np.sqrt(np.maximum(B * B - 4 * C, 0.0))
    # larger root of l^2 + B l + C, in a cancellation-free form
    lam = np.where(B < 0, (-B + disc) / 2, -2 * C / np.where(B + disc > 0, B + disc, 1.0))
    return np.where(outside, np.maximum(lam, 0.0), 0.0)


def ellipse_potential(semiaxes, x, center=None) -> np.ndarray:
    a, b = (float(v) for v in semiaxes)
    x = np.asarray(x, dtype=float)
    if center is not None:
        x = x - np.asarray(center, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    lam = _ellipse_lambda(a, b, x1, x2)
    p, q = np.sqrt(a * a + lam), np.sqrt(b * b + lam)
    return -(a * b / 2) * (np.log((p + q) / 2) + x1 * x1 / (p * (p + q)) + x2 * x2 / (q * (p + q)) - 0.5)


def ellipse_potential_gradient(semiaxes, x, center=None) -> np.ndarray:
    a, b = (float(v) for v in semiaxes)
    x = np.asarray(x, dtype=float)
    if center is not None:
        x = x - np.asarray(center, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    lam = _ellipse_lambda(a, b, x1, x2)
    p, q = np.sqrt(a * a + lam), np.sqrt(b * b + lam)
    return np.stack([-a * b * x1 / (p * (p + q)), -a * b * x2 / (q * (p + q))], -1)


def _ellipsoid_lambda(ax, x):
    a2 = ax ** 2
    x2 = x * x
    outside = np.sum(x2 / a2, axis=-1) > 1
    lam = np.maximum(np.max(x2 - a2, axis=-1), 0.0)
    for _ in range(200):
        d = a2 + lam[..., None]
        g = np.sum(x2 / d, axis=-1) - 1
        dg = -np.sum(x2 / d ** 2, axis=-1)
        step = np.where(outside & (dg < 0), -g / np.where(dg < 0, dg, -1.0), 0.0)
        lam = lam + step
        if np.all(np.abs(step) <= 1e-15 * (1 + lam)):
            break
    return np.where(outside, lam, 0.0)


def ellipsoid_potential(semiaxes, x, center=None) -> np.ndarray:
    """3D potential of a solid ellipsoid, through Carlson's symmetric integrals."""
    ax = np.asarray(semiaxes, dtype=float)
    x = np.asarray(x, dtype=float)
    if center is not None:
        x = x - np.asarray(center, dtype=float)
    lam = _ellipsoid_lambda(ax, x)
    d = ax ** 2 + lam[..., None]
    rf = special.elliprf(d[..., 0], d[..., 1], d[..., 2])
    tot = 2 * rf
    for i in range(3):
        j, k = [m for m in range(3) if m != i]
        tot = tot - x[..., i] ** 2 * (2.0 / 3.0) * special.elliprd(d[..., j], d[..., k], d[..., i])
    return float(np.prod(ax)) / 4 * tot


def ellipsoid_potential_gradient(semiaxes, x, center=None) -> np.ndarray:
    ax = np.asarray(semiaxes, dtype=float)
    x = np.asarray(x, dtype=float)
    if center is not None:
        x = x - np.asarray(center, dtype=float)
    lam = _ellipsoid_lambda(ax, x)
    d = ax ** 2 + lam[..., None]
    out = []
    for i in range(3):
        j, k = [m for m in range(3) if m != i]
        out.append(-float(np.prod(ax)) / 4 * 2 * x[..., i] * (2.0 / 3.0) * special.elliprd(d[..., j], d[..., k], d[..., i]))
    return np.stack(out, -1)


def closed_form_potential(D: dom.Domain, x) -> np.ndarray:
    """Closed-form potential for ellipses, ellipsoids and cylinders over them.

    For a cylinder the base-dimensional potential is returned; it has the
    same Laplacian (-1 inside) and is one representative of the class.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(D, dom.Ellipsoid):
        if D.n == 2:
            return ellipse_potential(D.semiaxes, x, D.center)
        if D.n == 3:
            return ellipsoid_potential(D.semiaxes, x, D.center)
    if isinstance(D, dom.CylinderOverEllipsoid):
        base = list(D.base_axes)
        xb = x[..., base] - np.array(D.center)[base]
        if len(base) == 1:
            return interval_potential(D.semiaxes[0], xb[..., 0])
        if len(base) == 2:
            return ellipse_potential(D.semiaxes, xb)
        return ellipsoid_potential(D.semiaxes, xb)
    raise NotImplementedError(f"no closed form for {D.variant}")


def closed_form_gradient(D: dom.Domain, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if isinstance(D, dom.Ellipsoid):
        if D.n == 2:
            return ellipse_potential_gradient(D.semiaxes, x, D.center)
        return ellipsoid_potential_gradient(D.semiaxes, x, D.center)
    if isinstance(D, dom.CylinderOverEllipsoid):
        base = list(D.base_axes)
        xb = x[..., base] - np.array(D.center)[base]
        out = np.zeros(x.shape)
        if len(base) == 1:
            a = D.semiaxes[0]
            s = xb[..., 0]
            out[..., base[0]] = np.where(np.abs(s) <= a, -s, -a * np.sign(s))
        elif len(base) == 2:
            out[..., base] = ellipse_potential_gradient(D.semiaxes, xb)
        else:
            out[..., base] = ellipsoid_potential_gradient(D.semiaxes, xb)
        return out
    raise NotImplementedError(f"no closed form for {D.variant}")


def potential_bounded(D: dom.Domain, x, cfg: quad.QuadratureConfig | None = None, method: str = "rays"):
    """V(chi_D)(x) for bounded D; method 'rays' (quadrature) or 'closed_form'."""
    if not D.bounded:
        raise UnboundedDomainError(f"{D.variant} is unbounded; use third_derivative instead")
    x = np.asarray(x, dtype=float)
    if method == "closed_form":
        v = closed_form_potential(D, x)
        return float(v) if np.ndim(v) == 0 else v
    if method != "rays":
        raise ValueError(f"unknown method {method!r}")
    zero = (0,) * D.n
    if x.ndim == 1:
        return float(kernel_integral(D, x, [zero], cfg).value[0])
    return np.array(pmap(lambda p: float(kernel_integral(D, p, [zero], cfg).value[0]), list(x)))


# -- internal quadratic potentials -------------------------------------------

def ellipsoid_internal_coefficients(semiaxes: Sequence[float]) -> QuadraticForm:
    """Pure quadratic part of the potential inside an ellipsoid centered at 0.

    A_ii = -(prod a / 4) int_0^inf ds / ((a_i^2 + s) sqrt(prod (a_j^2 + s))).
    """
    ax = np.asarray(semiaxes, dtype=float)
    if np.any(ax <= 0):
        raise ValueError("semiaxes must be positive")
    a2 = ax ** 2
    scale = float(np.max(a2))
    diag = []
    for i in range(len(ax)):
        f = lambda s, i=i: 1.0 / ((a2[i] + s) * np.sqrt(np.prod(a2[:, None] + s[None, :], axis=0)))
        res = quad.semi_infinite_1d(f, 0.0, scale, rel_tol=1e-12, abs_tol=1e-15)
        diag.append(-float(np.prod(ax)) / 4 * res.value)
    return QuadraticForm(np.diag(diag))


def _fit_quadratic(pts: np.ndarray, vals: np.ndarray) -> QuadraticForm:
    """Least squares through the normal equations, with column scaling."""
    m, n = pts.shape
    shift = pts.mean(0)
    y = pts - shift
    cols, idx = [], []
    for i in range(n):
        for j in range(i, n):
            cols.append(y[:, i] * y[:, j])
            idx.append((i, j))
    cols += [y[:, i] for i in range(n)] + [np.ones(m)]
    X = np.stack(cols, 1)
    s = np.linalg.norm(X, axis=0)
    s[s == 0] = 1
    Xs = X / s
    coef = np.linalg.solve(Xs.T @ Xs, Xs.T @ vals) / s
    A = np.zeros((n, n))
    for c, (i, j) in zip(coef, idx):
        if i == j:
            A[i, i] = c
        else:
            A[i, j] = A[j, i] = c / 2
    bb = coef[len(idx):len(idx) + n]
    cc = coef[-1]
    # back to unshifted coordinates
    b = bb - 2 * A @ shift
    c = cc - bb @ shift + shift @ A @ shift
    return QuadraticForm(A, b, c)


def internal_quadratic_fit(D: dom.Domain, sample_count: int = 30, cfg: quad.QuadratureConfig | None = None,
                           tol: float = 1e-6, seed: int = 0) -> FitResult:
    """Fit or certify a quadratic internal potential.

    Bounded D: least-squares quadratic fit of the quadrature potential at
    interior samples; residual = max |V - q| / (max V - min V).
    Unbounded D: residual = max |third derivative| over the samples and all
    |alpha| = 3; A is half the Hessian at the anchor (unit-cutoff gauge).
    """
    n = D.n
    need = n * (n + 1) // 2 + n + 1 + 5
    if sample_count < need:
        raise ValueError(f"sample_count must be >= {need}")
    cfg = cfg or quad.default_config(n)
    if D.bounded:
        pts = D.interior_samples(sample_count, seed=seed)
        vals = potential_bounded(D, pts, cfg)
        form = _fit_quadratic(pts, vals)
        span = float(np.max(vals) - np.min(vals))
        residual = float(np.max(np.abs(form(pts) - vals))) / span
        return FitResult(form, residual, residual <= tol, tol, len(pts))
    pts = D.interior_samples(20, seed=seed)
    residual = third_derivative_max(D, pts, cfg)
    H = second_derivatives(D, D.anchor(), cfg)
    form = QuadraticForm(H / 2, None, 0.0, modulo_harmonic=True)
    return FitResult(form, residual, residual <= tol, tol, len(pts),
                     note="pure second-order part only; linear and constant terms are defined modulo harmonic quadratics")


def third_derivative_max(D: dom.Domain, pts, cfg: quad.QuadratureConfig | None = None) -> float:
    vals = pmap(lambda p: max(abs(v) for v in third_derivatives(D, p, cfg).values()), list(pts))
    return float(max(vals))


# -- class L norm and pairings -----------------------------------------------

def l_norm(D: dom.Domain, cfg: quad.QuadratureConfig | None = None) -> DensityClassCertificate:
    """int_D dx / (1 + |x|^(n+1))."""
    n = D.n
    cfg = cfg or quad.QuadratureConfig(rel_tol=1e-10, abs_tol=1e-13)
    o = np.zeros(n)
    f = lambda y: 1.0 / (1.0 + np.sum(y * y, axis=0) ** ((n + 1) / 2))
    frame = D.sphere_frame(o) if n == 3 else None
    try:
        res = quad.integrate_rays(f, o, lambda w: D.ray_interval(o, w), n, rel_tol=cfg.rel_tol,
                                  abs_tol=cfg.abs_tol, max_cells=cfg.max_subdivisions, frame=frame,
                                  breakpoints=D.ray_breakpoints(o))
    except quad.NonConvergenceError as exc:
        return DensityClassCertificate(float(exc.value), False, exc.error_estimate)
    return DensityClassCertificate(float(res.value), True, res.error_estimate)


def pairing(D: dom.Domain, phi: TestBump, alpha, cfg: quad.QuadratureConfig | None = None) -> quad.QuadResult:
    """<V^a(chi_D), phi> = -int_D d^a V(phi)(y) dy, |alpha| = 3.

    When the bump sits inside D the ball B(c, 2 rho) is removed: the
    potential of a ball is quadratic inside it, so its third derivatives
    integrate to zero against phi. Either way the boundary of D must stay
    2 rho away from the bump center, so the far-field form applies.
    """
    alpha = ker.as_tuple(alpha)
    if sum(alpha) != 3:
        raise ValueError("pairing is defined here for |alpha| = 3")
    c = phi.c
    R0 = FAR_FACTOR * phi.radius
    if D.distance_to_boundary(c) < R0:
        raise ValueError("domain boundary within 2 bump radii of the bump center")
    if D.contains(c) == "inside":
        o = c
        intervals = lambda w: _clip(D.ray_interval(c, w), R0)
    else:
        # rays from an interior point keep the ray lengths smooth in the angle
        o = D.anchor()
        intervals = lambda w: D.ray_interval(o, w)
    res = region_integral(phi, alpha, o, intervals, D.n, cfg, frame=D.sphere_frame(o) if D.n == 3 else None,
                          breakpoints=D.ray_breakpoints(o))
    return quad.QuadResult(-res.value, res.error_estimate, res.cells)


def _clip(iv, r0):
    lo, hi = iv
    return np.maximum(lo, r0), hi


def region_integral(phi: TestBump, alpha, origin, intervals, n, cfg=None, *, frame=None,
                    breakpoints=(), scale: float | None = None, absolute: bool = False) -> quad.QuadResult:
    """int of d^a V(phi) over a ray-described region; optionally also of its modulus."""
    cfg = cfg or quad.QuadratureConfig(rel_tol=1e-8, abs_tol=1e-14)

    def f(y):
        v = bump_potential_derivative(phi, alpha, y.T, cfg)
        return np.stack([v, np.abs(v)]) if absolute else v

    return quad.integrate_rays(f, origin, intervals, n, rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol,
                               max_cells=cfg.max_subdivisions, frame=frame, breakpoints=breakpoints,
                               unbounded_scale=scale or phi.radius)


def result_record(D: dom.Domain, alpha, x, value, error_estimate) -> dict:
    return {"domain": D.to_dict(), "alpha": list(ker.as_tuple(alpha)) if alpha is not None else None,
            "x": [float(v) for v in np.asarray(x, dtype=float)], "value": value,
            "error_estimate": float(error_estimate)}
