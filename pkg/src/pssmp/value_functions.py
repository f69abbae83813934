"""Value functions of the prediction problems.

The one-dimensional values live on the reflected coordinate ``y``; the
two-dimensional pssMp values follow by the exact change of variables
``v(x, s) = x^alpha V*(log(s/x))`` (maximum) and
``v(x, i) = x^alpha V*(log(x/i))`` (minimum).  The direct integrals over the
pssMp coordinate are kept as an independent cross-check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .levy_model import Direction, Family, GateError, PredictionProblem, check_gate
from .scale_functions import ScaleFunction, scale_w_origin, tilted_kernel
from .threshold_solver import (
    LOG_CASE_TOL,
    ThresholdSolution,
    _HIntegrand,
    checked_quad,
    solve_kstar,
)

__all__ = [
    "ValueQuery",
    "continuous_fit_residual",
    "smooth_fit_slope",
    "v_bm_closed_form",
    "v_k_1d",
    "v_max",
    "v_min",
    "v_star_1d",
    "v_star_1d_prime",
]


@dataclass(frozen=True)
class ValueQuery:
    """A pssMp state: position ``x`` and running extremum ``s`` (max) or ``i`` (min)."""

    problem: PredictionProblem
    x: float
    extremum: float

    def __post_init__(self):
        if not self.x > 0:
            raise ValueError(f"x must be > 0, got {self.x}")
        if self.problem.direction is Direction.MAX and self.extremum < self.x:
            raise ValueError(f"running maximum {self.extremum} below x = {self.x}")
        if self.problem.direction is Direction.MIN and not 0 < self.extremum <= self.x:
            raise ValueError(f"running minimum {self.extremum} must lie in (0, x]")

    @property
    def y(self) -> float:
        if self.problem.direction is Direction.MAX:
            return math.log(self.extremum / self.x)
        return math.log(self.x / self.extremum)

    def value(self, solution: ThresholdSolution | None = None) -> float:
        if self.problem.direction is Direction.MAX:
            return v_max(self.problem, self.x, self.extremum, solution)
        return v_min(self.problem, self.x, self.extremum, solution)


class _Kernel:
    def __init__(self, problem: PredictionProblem):
        self.base = _HIntegrand(problem)
        self.w, self.w_prime = tilted_kernel(problem.model, problem.beta, problem.q)

    def f(self, z: float) -> float:
        return 1.0 - 2.0 * math.exp(-self.base.phi_q * z)

    def running_integral(self, y: float, k: float) -> float:
        """``int_y^k f(z) W_beta(z - y) dz``."""
        if y >= k:
            return 0.0
        pts = [self.base.k0] if y < self.base.k0 < k else None
        return checked_quad(lambda z: self.f(z) * self.w(z - y), y, k, points=pts)


def _solution(problem, solution):
    if solution is None:
        return solve_kstar(problem)
    if solution.direction is not problem.direction:
        raise ValueError("threshold solution belongs to the other direction")
    return solution


def v_k_1d(problem: PredictionProblem, k: float, y: float) -> float:
    """Value ``V_k(y)`` of stopping the reflected process at the first passage above ``k``."""
    check_gate(problem)
    if not k > 0:
        raise ValueError(f"k must be > 0, got {k}")
    if y < 0:
        raise ValueError(f"y must be >= 0, got {y}")
    if y >= k:
        return 0.0
    ker = _Kernel(problem)
    boundary = ker.w(k - y) / ker.w_prime(k) * ker.base.h(k)
    return -ker.running_integral(y, k) + boundary


def v_star_1d(problem: PredictionProblem, y: float,
              solution: ThresholdSolution | None = None) -> float:
    """Optimal one-dimensional value ``V*(y)``; zero on ``[k*, inf)``."""
    if y < 0:
        raise ValueError(f"y must be >= 0, got {y}")
    check_gate(problem)
    sol = _solution(problem, solution)
    if y >= sol.k_star:
        return 0.0
    return -_Kernel(problem).running_integral(y, sol.k_star)


def v_star_1d_prime(problem: PredictionProblem, y: float,
                    solution: ThresholdSolution | None = None) -> float:
    """Left derivative of ``V*`` at ``y`` (zero beyond ``k*``)."""
    check_gate(problem)
    sol = _solution(problem, solution)
    k = sol.k_star
    if y >= k:
        return 0.0
    ker = _Kernel(problem)
    w0 = scale_w_origin(ScaleFunction(problem.model, problem.q))
    pts = [ker.base.k0] if y < ker.base.k0 < k else None
    tail = checked_quad(lambda z: ker.f(z) * ker.w_prime(z - y), y, k, points=pts)
    return ker.f(y) * w0 + tail


def _direct_max(problem, x, s, sol) -> float:
    lower = sol.K_star * s
    if x <= lower:
        return 0.0
    a, phi = problem.alpha, sol.Phi_q
    w, _ = tilted_kernel(problem.model, 0.0, problem.q)

    def integrand(z):
        return z ** (a - 1) * (1 - 2 * (z / s) ** phi) * w(math.log(x / z))

    return -checked_quad(integrand, lower, x)


def _direct_min(problem, x, i, sol) -> float:
    upper = sol.K_star * i
    if x >= upper:
        return 0.0
    a, phi = problem.alpha, sol.Phi_q
    w, _ = tilted_kernel(problem.model, 0.0, problem.q)

    def integrand(z):
        return z ** (a - 1) * (1 - 2 * (i / z) ** phi) * w(math.log(z / x))

    return -checked_quad(integrand, x, upper)


def v_max(problem: PredictionProblem, x: float, s: float,
          solution: ThresholdSolution | None = None, method: str = "1d") -> float:
    """Value ``v(x, s)`` of predicting the time of the ultimate maximum.

    ``method="1d"`` rescales the one-dimensional value; ``method="direct"``
    integrates over the pssMp coordinate instead.
    """
    if problem.direction is not Direction.MAX:
        raise ValueError("v_max needs a maximum-prediction problem")
    ValueQuery(problem, x, s)
    check_gate(problem)
    sol = _solution(problem, solution)
    if method == "direct":
        return _direct_max(problem, x, s, sol)
    return x**problem.alpha * v_star_1d(problem, math.log(s / x), sol)


def v_min(problem: PredictionProblem, x: float, i: float,
          solution: ThresholdSolution | None = None, method: str = "1d") -> float:
    """Value ``v(x, i)`` of predicting the time of the minimum before absorption."""
    if problem.direction is not Direction.MIN:
        raise ValueError("v_min needs a minimum-prediction problem")
    ValueQuery(problem, x, i)
    check_gate(problem)
    sol = _solution(problem, solution)
    if method == "direct":
        return _direct_min(problem, x, i, sol)
    return x**problem.alpha * v_star_1d(problem, math.log(x / i), sol)


def v_bm_closed_form(problem: PredictionProblem, x: float, s_or_i: float,
                     K: float | None = None) -> float:
    """Explicit value for Brownian drift without killing.

    ``K`` defaults to the closed-form threshold.  Returns 0 in the stopping
    region.
    """
    from .threshold_solver import kstar_closed_form_bm

    model = problem.model
    if model.family is not Family.BROWNIAN or model.q != 0:
        raise GateError("closed form requires a Brownian-drift model with q = 0")
    ValueQuery(problem, x, s_or_i)
    if K is None:
        K = kstar_closed_form_bm(problem).K_star
    a, mu = problem.alpha, model.mu
    p = 2.0 * mu / model.sigma**2

    if problem.direction is Direction.MAX:
        if not a < p:
            raise GateError(f"closed form needs alpha < 2*mu/sigma^2 = {p:.6g}")
        s = s_or_i
        r = K * s / x
        if r >= 1:
            return 0.0
        val = (x**a * (1 - r**a) * (1 / a + 2 / a * (x / s) ** p)
               - x**a / (a - p) * (1 - r ** (a - p))
               + 2 * s**a * K ** (a + p) / (a + p) * (1 - r ** (-p - a)))
        return val / mu

    i = s_or_i
    r = K * i / x
    if r <= 1:
        return 0.0
    if abs(a - p) < LOG_CASE_TOL:
        val = (x**a * (1 / a + 2 / a * (i / x) ** a) * (r**a - 1)
               - x**a / (2 * a) * (r ** (2 * a) - 1)
               - 2 * i**a * math.log(r))
        return val / mu
    val = (x**a * (r**a - 1) * (1 / a + 2 / a * (i / x) ** p)
           - x**a / (a + p) * (r ** (a + p) - 1)
           - 2 * i**a * K ** (a - p) / (p - a) * (r ** (p - a) - 1))
    return val / mu


def smooth_fit_slope(problem: PredictionProblem, solution: ThresholdSolution | None = None,
                     step: float = 1e-4) -> float:
    """One-sided slope of ``V*`` at ``k*-`` by second-order backward differences.

    The stencil ``(3 V(k) - 4 V(k - h) + V(k - 2h)) / (2h)`` is exact for
    quadratics, so the truncation error is ``O(h^2)`` and quadrature noise is
    amplified only by ``1 / h``.
    """
    sol = _solution(problem, solution)
    k = sol.k_star
    v1 = v_star_1d(problem, k - step, sol)
    v2 = v_star_1d(problem, k - 2.0 * step, sol)
    # V*(k*) = 0
    return (v2 - 4.0 * v1) / (2.0 * step)


def continuous_fit_residual(problem: PredictionProblem,
                            solution: ThresholdSolution | None = None) -> float:
    """``|int_0^k* f(z) W_beta'(z) dz - W(0)|`` with a fresh quadrature."""
    sol = _solution(problem, solution)
    ker = _Kernel(problem)
    k = sol.k_star
    pts = [ker.base.k0] if ker.base.k0 < k else None
    total = checked_quad(lambda z: ker.f(z) * ker.w_prime(z), 0.0, k, points=pts)
    return abs(total - ker.base.w_origin)
