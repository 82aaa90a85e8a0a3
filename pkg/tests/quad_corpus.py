"""Closed-form integrand corpus shared by the quadrature tests and the acceptance suite."""
import math

import numpy as np

from bubblepot import domains as dom
from bubblepot import kernel as ker
from bubblepot import quadrature as quad


def _kernel_at(x):
    x = np.asarray(x, dtype=float)
    return lambda y: ker.kernel_value((x[:, None] - y).T)


def _on(D, f, center=None):
    def run(rel_tol):
        cfg = quad.QuadratureConfig(rel_tol=rel_tol, abs_tol=1e-14)
        return quad.integrate(f, D, cfg, center=center)
    return run


def _one_d(f, a, b):
    return lambda rel_tol: quad.adaptive_1d(f, a, b, rel_tol=rel_tol, abs_tol=1e-14)


disk = dom.Ellipsoid((1.0, 1.0))
ball = dom.Ellipsoid((1.0, 1.0, 1.0))
ellipse = dom.Ellipsoid((2.0, 1.0))

# (name, run(rel_tol) -> QuadResult, exact value)
CORPUS = [
    ("disk_area", _on(disk, lambda y: np.ones(y.shape[1])), math.pi),
    ("ellipse_area", _on(ellipse, lambda y: np.ones(y.shape[1])), 2 * math.pi),
    ("ellipse_second_moment", _on(ellipse, lambda y: y[0] ** 2), 2 * math.pi),
    ("shifted_disk_first_moment", _on(dom.Ellipsoid((1.0, 1.0), center=(0.5, 0.3)), lambda y: y[0]),
     0.5 * math.pi),
    ("ball_volume", _on(ball, lambda y: np.ones(y.shape[1])), 4 * math.pi / 3),
    ("ball_second_moment", _on(ball, lambda y: y[2] ** 2), 4 * math.pi / 15),
    ("disk_kernel_center", _on(disk, _kernel_at([0.0, 0.0])), 0.25),
    ("disk_kernel_exterior", _on(disk, _kernel_at([2.0, 0.0])), -0.5 * math.log(2.0)),
    ("disk_kernel_offcenter", _on(disk, _kernel_at([0.5, 0.0]), center=(0.5, 0.0)), 0.1875),
    ("ball_kernel_center", _on(ball, _kernel_at([0.0, 0.0, 0.0])), 0.5),
    ("ball_kernel_offcenter", _on(ball, _kernel_at([0.5, 0.0, 0.0]), center=(0.5, 0.0, 0.0)), 11 / 24),
    ("halfplane_gaussian", _on(dom.HalfSpace((0.0, -1.0), 0.0), lambda y: np.exp(-np.sum(y * y, 0)),
                               center=(0.0, 1.0)), math.pi / 2),
    ("paraboloid_exponential", _on(dom.Paraboloid((1.0,)), lambda y: np.exp(-y[1])), math.sqrt(math.pi)),
    ("strip_gaussian", _on(dom.Strip((0.0, 1.0), -1.0, 1.0), lambda y: np.exp(-np.sum(y * y, 0))),
     math.pi * math.erf(1.0)),
    ("sqrt_unit", _one_d(np.sqrt, 0.0, 1.0), 2 / 3),
    ("log_unit", _one_d(np.log, 0.0, 1.0), -1.0),
    ("oscillatory_sine", _one_d(lambda x: np.sin(50 * x), 0.0, 1.0), (1 - math.cos(50.0)) / 50),
    ("gaussian_half_line", lambda rel_tol: quad.semi_infinite_1d(lambda x: np.exp(-x * x), 0.0,
                                                                 rel_tol=rel_tol, abs_tol=1e-14),
     math.sqrt(math.pi) / 2),
    ("inverse_radius_square", lambda rel_tol: quad.adaptive_cells(
        lambda p: 1 / np.hypot(p[0], p[1]), [([0.0, 0.0], [1.0, 1.0])], rel_tol=rel_tol, abs_tol=1e-14),
     2 * math.log(1 + math.sqrt(2))),
    ("sphere_axis_moment", lambda rel_tol: quad.integrate_sphere(lambda w: w[0] ** 2, 3, rel_tol=rel_tol,
                                                                 abs_tol=1e-14), 4 * math.pi / 3),
]

# slack for rounding in the reference constant and the summation itself
ROUNDING = 16 * np.finfo(float).eps


def bound_holds(res, exact) -> bool:
    return abs(res.value - exact) <= res.error_estimate + ROUNDING * max(1.0, abs(exact))
