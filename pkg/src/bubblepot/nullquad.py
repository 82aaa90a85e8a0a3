"""Null-quadrature tests and the classification of quadratic-potential domains."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import domains as dom
from . import kernel as ker
from . import potential as pot
from . import quadrature as quad
from .parallel import pmap

LABELS = ("HalfSpaceLike", "EllipsoidOrCylinder", "ConvexEpigraphLike", "NotQuadratic")
DENSITY_FLOOR = 1e-3


@dataclass(frozen=True)
class DensityResult:
    radii: tuple[float, ...]
    ratios: tuple[float, ...]
    limit: float
    error_estimate: float
    exponent: float
    converged: bool

    def to_dict(self) -> dict:
        return {"radii": list(self.radii), "ratios": list(self.ratios), "limit": self.limit,
                "error_estimate": self.error_estimate, "exponent": self.exponent, "converged": self.converged}


def volume_density(D: dom.Domain, radii: Sequence[float]) -> DensityResult:
    """Vol(D & B_rho) / Vol(B_rho) per radius, extrapolated as c0 + c1 rho^-s (+ c2 rho^-2s).

    The second correction term is used once there are at least 6 radii.
    """
    radii = np.asarray(radii, dtype=float)
    if len(radii) < 4 or np.any(np.diff(radii) <= 0) or radii[0] <= 0:
        raise ValueError("need at least 4 increasing positive radii")
    n = D.n
    unit = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    ratios = np.array(pmap(lambda r: D.volume_in_ball(float(r)) / (unit * r ** n), list(radii)))
    best = None
    for s in (0.5, 1.0, 2.0):
        cols = [np.ones_like(radii), radii ** -s] + ([radii ** (-2 * s)] if len(radii) >= 6 else [])
        X = np.stack(cols, 1)
        coef, *_ = np.linalg.lstsq(X, ratios, rcond=None)
        res = float(np.max(np.abs(X @ coef - ratios)))
        if best is None or res < best[0]:
            best = (res, s, coef)
    res, s, coef = best
    limit = float(min(1.0, max(0.0, coef[0])))
    return DensityResult(tuple(radii.tolist()), tuple(ratios.tolist()), limit, res, s, res <= 1e-3)


@dataclass(frozen=True)
class QuadraticCheck:
    quadratic: bool
    max_residual: float
    form: pot.QuadraticForm

    def to_dict(self) -> dict:
        return {"quadratic": self.quadratic, "max_residual": self.max_residual, "form": self.form.to_dict()}


def is_internal_quadratic(D: dom.Domain, tol: float = 1e-4, cfg: quad.QuadratureConfig | None = None,
                          sample_count: int | None = None) -> QuadraticCheck:
    if not tol > 0:
        raise ValueError("tol must be positive")
    if isinstance(D, dom.WholeSpace):
        # potential -|x|^2 / (2n) everywhere
        return QuadraticCheck(True, 0.0, pot.QuadraticForm(-np.eye(D.n) / (2 * D.n)))
    need = D.n * (D.n + 1) // 2 + D.n + 1 + 5
    fit = pot.internal_quadratic_fit(D, max(sample_count or 0, need, 30), cfg, tol=tol)
    return QuadraticCheck(fit.residual <= tol, fit.residual, fit.form)


@dataclass(frozen=True)
class NullQuadratureResult:
    max_abs: float
    max_relative: float
    l1_scale: float
    values: tuple[tuple[tuple[float, ...], tuple[int, ...], float, float], ...]
    truncation_radius: float
    tail_bound: float

    def to_dict(self) -> dict:
        return {"max_abs": self.max_abs, "max_relative": self.max_relative, "l1_scale": self.l1_scale,
                "truncation_radius": self.truncation_radius, "tail_bound": self.tail_bound,
                "values": [{"center": list(c), "alpha": list(a), "value": v, "l1": s} for c, a, v, s in self.values]}


def _complement_integral(D: dom.Domain, x0: np.ndarray, alphas, R: float, rel_tol: float, abs_tol: float):
    """int over (R^n \\ D) & B(x0, R) of [d^a J(y - x0), |d^a J(y - x0)|] per alpha.

    Cells in (angles, s) with a logarithmic radial map r = r_in (R / r_in)^s,
    starting where each ray from x0 leaves D.
    """
    n = D.n
    frame = D.sphere_frame(x0) if n == 3 else None

    def f(pts):
        ang, s = pts[:-1], pts[-1]
        w = quad.directions(ang, n, frame)
        lo, hi = D.ray_interval(x0, w)
        # x0 is interior, so each ray meets D in [0, hi)
        r_in = np.where(np.isfinite(hi), hi, R)
        r_in = np.minimum(r_in, R)
        L = np.log(R / r_in)
        r = r_in * np.exp(s * L)
        y = r * w
        jac = r * L * r ** (n - 1) * quad.angular_jacobian(ang, n)
        out = []
        for a in alphas:
            v = ker.kernel_derivative(a, y.T) * jac
            out += [v, np.abs(v)]
        return np.stack(out)

    cells = [(list(a) + [0.0], list(b) + [1.0]) for a, b in quad.angular_cells(n, D.ray_breakpoints(x0))]
    res = quad.adaptive_cells(f, cells, rel_tol=rel_tol, abs_tol=abs_tol, max_cells=400_000)
    v = np.asarray(res.value)
    return v[0::2], v[1::2], res.error_estimate


def null_quadrature_test(D: dom.Domain, centers, tol: float = 1e-5, truncation_radius: float | None = None,
                         rel_tol: float | None = None) -> NullQuadratureResult:
    """max |int_Omega d^a J(. - x0)| over |alpha| = 3 and the given centers, Omega = R^n \\ D.

    The integral is truncated at |y - x0| = R with a rigorous tail bound; R
    defaults to the radius at which the worst tail bound is tol / 20.
    """
    n = D.n
    if rel_tol is None:
        rel_tol = 1e-9 if n == 2 else 1e-6
    alphas = ker.multi_indices(n, 3)
    centers = [np.asarray(c, dtype=float) for c in centers]
    for c in centers:
        if D.contains(c) != "inside":
            raise quad.DomainError(f"center {c.tolist()} is not interior to the domain")
    cmax = max(ker.derivative_sup_on_sphere(a) for a in alphas)
    if truncation_radius is None:
        truncation_radius = 1.01 * cmax * ker.sphere_area(n) / (tol / 20)
    R = float(truncation_radius)
    tail = max(ker.kernel_tail_bound(a, R, np.zeros(n)) for a in alphas)

    def one(c):
        vals, l1, err = _complement_integral(D, c, alphas, R, rel_tol, 1e-3 * tol)
        return vals, l1

    rows = []
    worst_abs = worst_rel = 0.0
    scale = 0.0
    for c, (vals, l1) in zip(centers, pmap(one, centers)):
        for a, v, s in zip(alphas, vals, l1):
            rows.append((tuple(c.tolist()), a, float(v), float(s)))
            worst_abs = max(worst_abs, abs(v))
            scale = max(scale, s)
    worst_rel = worst_abs / scale if scale > 0 else 0.0
    return NullQuadratureResult(worst_abs, worst_rel, scale, tuple(rows), R, tail)


@dataclass(frozen=True)
class ClassificationResult:
    label: str
    density_limit: float
    density_converged: bool
    quadratic_residual: float
    tolerance: float
    density: DensityResult | None = None
    form: pot.QuadraticForm | None = None
    evidence: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label}")

    def to_dict(self) -> dict:
        return {"schema": "classification.v1", "label": self.label, "density_limit": self.density_limit,
                "density_converged": self.density_converged, "quadratic_residual": self.quadratic_residual,
                "tolerance": self.tolerance, "density": self.density.to_dict() if self.density else None,
                "form": self.form.to_dict() if self.form else None, "evidence": self.evidence}


DEFAULT_RADII = (8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0)


def classify(D: dom.Domain, tol: float = 1e-4, radii: Sequence[float] = DEFAULT_RADII,
             cfg: quad.QuadratureConfig | None = None) -> ClassificationResult:
    """Half-space-like / ellipsoid-or-cylinder / convex-epigraph-like / not quadratic."""
    check = is_internal_quadratic(D, tol, cfg)
    evidence = {"variant": D.variant, "within_parallel_hyperplanes": D.within_parallel_hyperplanes()}
    if not check.quadratic:
        return ClassificationResult("NotQuadratic", float("nan"), False, check.max_residual, tol,
                                    None, check.form, evidence)
    scale = max(1.0, float(np.linalg.norm(D.anchor())))
    dens = volume_density(D, [r * scale for r in radii])
    if dens.limit > DENSITY_FLOOR:
        label = "HalfSpaceLike"
    elif D.within_parallel_hyperplanes():
        label = "EllipsoidOrCylinder"
    else:
        label = "ConvexEpigraphLike"
    return ClassificationResult(label, dens.limit, dens.converged, check.max_residual, tol, dens,
                                check.form, evidence)
