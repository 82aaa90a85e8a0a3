"""Adaptive cell-tree quadrature.

Cells are boxes in a parameter space. Each cell carries a tensor-product
15-point Kronrod rule; the embedded 7-point Gauss rule gives the error
estimate, and per-axis estimates pick the split direction. Domain integrals
run in polar/spherical coordinates about a marked point, so integrable
singularities there are absorbed by the Jacobian and excision is a lower
radial limit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

KRONROD_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])


class NonConvergenceError(RuntimeError):
    """Cell budget exhausted before the tolerance was met."""

    def __init__(self, message: str, value, error_estimate: float):
        super().__init__(message)
        self.value = value
        self.error_estimate = error_estimate


class DomainError(ValueError):
    pass


class SingularIntegrandError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    max_subdivisions: int = 1_000_000
    truncation_radius: float | None = None
    excision_radius: float | None = None

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")

    def with_(self, **kw) -> "QuadratureConfig":
        return replace(self, **kw)


def default_config(n: int) -> QuadratureConfig:
    return QuadratureConfig(rel_tol=1e-8 if n == 2 else 1e-6)


@dataclass
class QuadResult:
    value: float | np.ndarray
    error_estimate: float
    cells: int = 0
    tail_bound: float = 0.0


def _tensor_weights(d: int):
    """Kronrod tensor weights and, per axis, weights with Gauss along that axis."""
    k = KRONROD_WEIGHTS
    g = GAUSS_WEIGHTS
    full = k
    for _ in range(d - 1):
        full = np.multiply.outer(full, k)
    per_axis = []
    for a in range(d):
        w = np.array([1.0])
        for b in range(d):
            w = np.multiply.outer(w, g if a == b else k)
        per_axis.append(w.reshape(-1))
    return full.reshape(-1), per_axis


def _cell_nodes(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Nodes of a batch of cells: (cells, d) -> (d, cells * 15^d)."""
    c, d = lo.shape
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    axes = [mid[:, a, None] + half[:, a, None] * KRONROD_NODES[None, :] for a in range(d)]
    grids = []
    for a in range(d):
        shape = [c] + [1] * d
        shape[a + 1] = 15
        g = axes[a].reshape(shape)
        grids.append(np.broadcast_to(g, [c] + [15] * d).reshape(c, -1))
    return np.stack(grids, axis=0).reshape(d, -1)


# cap on integrand points per call, to bound memory for vector-valued 3D integrands
EVAL_POINTS = 200_000


def adaptive_cells(f: Callable[[np.ndarray], np.ndarray], cells: Sequence[tuple[Sequence[float], Sequence[float]]],
                   rel_tol: float = 1e-10, abs_tol: float = 1e-13,
                   max_cells: int = 200_000) -> QuadResult:
    """Integrate f over a union of boxes by global adaptive subdivision.

    f maps points of shape (d, m) to values of shape (m,) or (k, m). Results
    are independent of evaluation batching: cell values are summed in cell
    creation order with compensated summation.
    """
    lo = np.array([c[0] for c in cells], dtype=float)
    hi = np.array([c[1] for c in cells], dtype=float)
    if lo.ndim == 1:
        lo, hi = lo[:, None], hi[:, None]
    d = lo.shape[1]
    wk, wax = _tensor_weights(d)
    npc = 15 ** d

    per_call = max(1, EVAL_POINTS // npc)

    def evaluate_chunk(lo_b, hi_b):
        vals = np.asarray(f(_cell_nodes(lo_b, hi_b)), dtype=float)
        scalar = vals.ndim == 1
        vals = vals.reshape((1 if scalar else vals.shape[0], lo_b.shape[0], npc))
        vol = np.prod(hi_b - lo_b, axis=1) / 2 ** d
        k = np.einsum("scp,p->sc", vals, wk) * vol
        absk = np.einsum("scp,p->sc", np.abs(vals), wk) * vol
        errs = np.stack([np.max(np.abs(np.einsum("scp,p->sc", vals, w) * vol - k), axis=0) for w in wax])
        return k, absk, errs, scalar

    def evaluate(lo_b, hi_b):
        parts = [evaluate_chunk(lo_b[i:i + per_call], hi_b[i:i + per_call])
                 for i in range(0, lo_b.shape[0], per_call)]
        return (np.concatenate([p[0] for p in parts], 1), np.concatenate([p[1] for p in parts], 1),
                np.concatenate([p[2] for p in parts], 1), parts[0][3])

    k, absk, errs, scalar = evaluate(lo, hi)
    # per-cell arrays in creation order; dead cells are masked out
    vals, absv, err_axis = k, np.max(absk, axis=0), errs
    cell_lo, cell_hi = lo, hi
    alive = np.ones(lo.shape[0], dtype=bool)
    eps = np.finfo(float).eps

    while True:
        idx = np.flatnonzero(alive)
        total = np.array([math.fsum(vals[s, idx]) for s in range(vals.shape[0])])
        cell_err = np.sum(err_axis[:, idx], axis=0)
        toterr = math.fsum(cell_err)
        resabs = math.fsum(absv[idx])
        target = max(abs_tol, rel_tol * float(np.max(np.abs(total))), 50 * eps * resabs)
        if toterr <= target:
            break
        if vals.shape[1] >= max_cells:
            value = float(total[0]) if scalar else total
            raise NonConvergenceError(
                f"quadrature budget of {max_cells} cells exhausted (error {toterr:.3e} > {target:.3e})",
                value, toterr)
        order = np.argsort(-cell_err, kind="stable")
        # the batch depends only on the tree, so tighter tolerances extend the same refinement path
        need = np.cumsum(cell_err[order]) >= 0.5 * toterr
        m = min(int(np.argmax(need)) + 1 if need.any() else len(order), 2048)
        chosen = idx[order[:m]]
        ax = np.argmax(err_axis[:, chosen], axis=0)
        a, b = cell_lo[chosen].copy(), cell_hi[chosen].copy()
        rows = np.arange(m)
        mid = 0.5 * (a[rows, ax] + b[rows, ax])
        b1, a2 = b.copy(), a.copy()
        b1[rows, ax] = mid
        a2[rows, ax] = mid
        new_lo = np.stack([a, a2], 1).reshape(-1, d)
        new_hi = np.stack([b1, b], 1).reshape(-1, d)
        alive[chosen] = False
        k2, absk2, errs2, _ = evaluate(new_lo, new_hi)
        vals = np.concatenate([vals, k2], 1)
        absv = np.concatenate([absv, np.max(absk2, axis=0)])
        err_axis = np.concatenate([err_axis, errs2], 1)
        cell_lo = np.concatenate([cell_lo, new_lo])
        cell_hi = np.concatenate([cell_hi, new_hi])
        alive = np.concatenate([alive, np.ones(len(new_lo), dtype=bool)])

    value = float(total[0]) if scalar else total
    return QuadResult(value=value, error_estimate=toterr, cells=int(alive.sum()))


def adaptive_1d(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                breakpoints: Sequence[float] = (), rel_tol: float = 1e-10,
                abs_tol: float = 1e-13, max_cells: int = 200_000) -> QuadResult:
    """1D adaptive integral over [a, b]; f receives a flat array of nodes."""
    pts = sorted({a, b, *[p for p in breakpoints if a < p < b]})
    cells = [([pts[i]], [pts[i + 1]]) for i in range(len(pts) - 1)]
    return adaptive_cells(lambda x: f(x[0]), cells, rel_tol, abs_tol, max_cells)


def semi_infinite_1d(f: Callable[[np.ndarray], np.ndarray], a: float, scale: float = 1.0,
                     rel_tol: float = 1e-10, abs_tol: float = 1e-13) -> QuadResult:
    """Integral of f over [a, inf) through s -> a + scale * s / (1 - s)."""
    def g(s):
        r = a + scale * s / (1.0 - s)
        return f(r) * scale / (1.0 - s) ** 2
    return adaptive_1d(g, 0.0, 1.0, rel_tol=rel_tol, abs_tol=abs_tol)


# Directions on the unit circle / sphere.

def sphere_frame(axis: np.ndarray) -> np.ndarray:
    """Orthonormal frame (e1, e2, axis) as rows, for spherical angles about `axis`."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    trial = np.eye(3)[int(np.argmin(np.abs(axis)))]
    e1 = trial - axis * (trial @ axis)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return np.stack([e1, e2, axis])


def directions(angles: np.ndarray, n: int, frame: np.ndarray | None = None) -> np.ndarray:
    """Unit vectors (n, m) for angle arrays of shape (n - 1, m)."""
    if n == 2:
        return np.stack([np.cos(angles[0]), np.sin(angles[0])])
    th, ph = angles[0], angles[1]
    local = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
    if frame is None:
        return local
    return frame.T @ local


def angular_jacobian(angles: np.ndarray, n: int) -> np.ndarray:
    if n == 2:
        return np.ones(angles.shape[1])
    return np.sin(angles[0])


def angular_cells(n: int, breakpoints: Sequence[float] = ()) -> list:
    if n == 2:
        pts = sorted({0.0, 2 * math.pi, *[p % (2 * math.pi) for p in breakpoints]})
        return [([pts[i]], [pts[i + 1]]) for i in range(len(pts) - 1)]
    cells = []
    ths = sorted({0.0, math.pi, *[p for p in breakpoints if 0 < p < math.pi]})
    for i in range(len(ths) - 1):
        for j in range(4):
            cells.append(([ths[i], j * math.pi / 2], [ths[i + 1], (j + 1) * math.pi / 2]))
    return cells


def integrate_sphere(g: Callable[[np.ndarray], np.ndarray], n: int, *, frame=None,
                     breakpoints: Sequence[float] = (), rel_tol=1e-10, abs_tol=1e-13,
                     max_cells=200_000) -> QuadResult:
    """Integral of g(omega) over the unit sphere; g takes directions (n, m)."""
    def h(ang):
        return g(directions(ang, n, frame)) * angular_jacobian(ang, n)
    return adaptive_cells(h, angular_cells(n, breakpoints), rel_tol, abs_tol, max_cells)


RayFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


def integrate_rays(f: Callable[[np.ndarray], np.ndarray], origin: np.ndarray, intervals: RayFn,
                   n: int, *, rel_tol=1e-10, abs_tol=1e-13, max_cells=200_000,
                   frame=None, breakpoints: Sequence[float] = (), unbounded_scale: float = 1.0) -> QuadResult:
    """Integral of f over {origin + r w : lo(w) <= r <= hi(w)}.

    `intervals(w)` returns (lo, hi) per direction; nan marks a miss and
    hi = inf an unbounded ray, compactified by r = lo + L s / (1 - s). For
    unbounded rays f must decay faster than r^-n.
    """
    origin = np.asarray(origin, dtype=float)

    def h(pts):
        ang, s = pts[:-1], pts[-1]
        w = directions(ang, n, frame)
        lo, hi = intervals(w)
        miss = ~(np.isfinite(lo) & (hi > lo))
        lo = np.where(miss, 0.0, lo)
        hi = np.where(miss, 1.0, hi)
        inf = ~np.isfinite(hi)
        L = unbounded_scale
        span = np.where(inf, 0.0, hi - lo)
        # linear map for finite rays, rational map for unbounded ones
        r_fin = lo + s * span
        s_c = np.minimum(s, 1.0 - 1e-300)
        r_inf = lo + L * s_c / (1.0 - s_c)
        r = np.where(inf, r_inf, r_fin)
        dr = np.where(inf, L / (1.0 - s_c) ** 2, span)
        y = origin[:, None] + r * w
        vals = np.asarray(f(y), dtype=float)
        weight = np.where(miss, 0.0, dr * r ** (n - 1) * angular_jacobian(ang, n))
        vals = np.where(miss, 0.0, vals)
        return vals * weight

    cells = [(list(a) + [0.0], list(b) + [1.0]) for a, b in angular_cells(n, breakpoints)]
    return adaptive_cells(h, cells, rel_tol, abs_tol, max_cells)


def _tolerances(cfg: QuadratureConfig):
    return dict(rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol, max_cells=cfg.max_subdivisions)


def integrate(f: Callable[[np.ndarray], np.ndarray], D, cfg: QuadratureConfig | None = None, *,
              center=None, tail_bound: float = 0.0, singular_nonintegrable: bool = False) -> QuadResult:
    """Integral of f over domain D in polar coordinates about `center`.

    f receives points (n, m). With a finite `cfg.truncation_radius` rays are
    cut at that distance from the center and `tail_bound` (supplied by the
    caller) is added to the reported error; without one, unbounded rays are
    compactified. Integrands that are not integrable at `center` must go
    through integrate_with_excision.
    """
    if singular_nonintegrable:
        raise SingularIntegrandError("non-integrable singularity: use integrate_with_excision")
    cfg = cfg or default_config(D.n)
    c = np.asarray(D.anchor() if center is None else center, dtype=float)
    return _integrate_domain(f, D, c, cfg, r0=None, tail_bound=tail_bound)


def integrate_with_excision(f: Callable[[np.ndarray], np.ndarray], D, x0, cfg: QuadratureConfig | None = None,
                            *, tail_bound: float = 0.0) -> QuadResult:
    """Integral of f over D minus the ball B(x0, r0), r0 = cfg.excision_radius."""
    cfg = cfg or default_config(D.n)
    x0 = np.asarray(x0, dtype=float)
    if D.contains(x0) != "inside":
        raise DomainError("excision point must be interior to the domain")
    dist = D.distance_to_boundary(x0)
    r0 = cfg.excision_radius if cfg.excision_radius is not None else 0.5 * dist
    if r0 > 0.5 * dist * (1 + 1e-9):
        raise DomainError(f"excision radius {r0} exceeds half the distance {dist} to the boundary")
    return _integrate_domain(f, D, x0, cfg, r0=r0, tail_bound=tail_bound)


def _integrate_domain(f, D, c, cfg, r0, tail_bound):
    R = cfg.truncation_radius

    def intervals(w):
        lo, hi = D.ray_interval(c, w)
        if r0 is not None:
            lo = np.maximum(lo, r0)
        if R is not None:
            hi = np.minimum(hi, R)
        return lo, hi

    frame = D.sphere_frame(c) if D.n == 3 else None
    res = integrate_rays(f, c, intervals, D.n, frame=frame, breakpoints=D.ray_breakpoints(c),
                         **_tolerances(cfg))
    res.tail_bound = tail_bound
    res.error_estimate += tail_bound
    return res
