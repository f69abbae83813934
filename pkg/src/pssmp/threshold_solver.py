"""Optimal thresholds for the reduced one-dimensional stopping problem.

The reflected process ``Y = max(y, running max) - Xi`` is stopped the first
time it reaches ``k``.  The optimal level ``k*`` is the unique root of::

    h(k) = int_0^k f(z) exp(-beta z) (W'(z) - beta W(z)) dz - W(0)

with ``W = W^(q)`` of the unkilled model and ``f(z) = 1 - 2 exp(-Phi(q) z)``.
In pssMp coordinates the rule is ``X <= K* max`` with ``K* = exp(-k*)`` when
predicting the maximum, and ``X >= K* min`` with ``K* = exp(k*)`` for the
minimum.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq

from .levy_model import (
    Direction,
    Family,
    GateError,
    PredictionProblem,
    check_gate,
    right_inverse_phi,
)
from .scale_functions import ScaleFunction, scale_w_origin, tilted_kernel

__all__ = [
    "SolverError",
    "checked_quad",
    "ThresholdSolution",
    "h_function",
    "kstar_closed_form_bm",
    "log_to_ratio",
    "payoff_f",
    "payoff_ratio",
    "solve_kstar",
]

QUAD_EPSABS = 1e-12
QUAD_MAX_ERR = 1e-10
RESIDUAL_TOL = 1e-10
LOG_CASE_TOL = 1e-9


class SolverError(RuntimeError):
    """Numerical failure while locating a threshold."""


@dataclass(frozen=True)
class ThresholdSolution:
    direction: Direction
    k_star: float
    K_star: float
    k0: float
    Phi_q: float
    method: str
    residual: float = 0.0
    iterations: int = 0
    bracket: tuple[float, float] = (math.nan, math.nan)
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def K_bound(self) -> float:
        """``2^(-1/Phi(q))`` (max) or ``2^(1/Phi(q))`` (min)."""
        return log_to_ratio(self.direction, self.k0)

    @property
    def within_bounds(self) -> bool:
        if self.k_star <= self.k0:
            return False
        if self.direction is Direction.MAX:
            return 0.0 < self.K_star < self.K_bound
        return self.K_star > self.K_bound

    def as_record(self) -> dict:
        return {
            "direction": self.direction.value,
            "k_star": self.k_star,
            "K_star": self.K_star,
            "k0": self.k0,
            "Phi_q": self.Phi_q,
            "K_bound": self.K_bound,
            "within_bounds": self.within_bounds,
            "residual": self.residual,
            "iterations": self.iterations,
            "method": self.method,
        }


def log_to_ratio(direction: Direction, k: float) -> float:
    return math.exp(-k) if Direction(direction) is Direction.MAX else math.exp(k)


def _phi_q(problem: PredictionProblem) -> float:
    return right_inverse_phi(problem.model, problem.q)


def payoff_f(problem: PredictionProblem, z: float) -> float:
    """``f(z) = 1 - 2 exp(-Phi(q) z)`` on the log scale, ``z >= 0``."""
    return 1.0 - 2.0 * math.exp(-_phi_q(problem) * z)


def payoff_ratio(problem: PredictionProblem, y: float) -> float:
    """``F(y) = 1 - 2 y^(-Phi(q))`` on the ratio scale, ``y >= 1``."""
    if y < 1:
        raise ValueError(f"ratio-scale payoff needs y >= 1, got {y}")
    return 1.0 - 2.0 * y ** (-_phi_q(problem))


def checked_quad(fn, a: float, b: float, points=None) -> float:
    """Adaptive Gauss-Kronrod quadrature with an absolute error budget.

    Roundoff warnings are tolerated when the result is near zero (the
    requested relative accuracy is then meaningless); the error estimate
    itself must stay below ``QUAD_MAX_ERR``.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        val, err = quad(fn, a, b, epsabs=QUAD_EPSABS, epsrel=1e-12, limit=200,
                        points=points)
    if not err <= QUAD_MAX_ERR * max(1.0, abs(val)):
        raise SolverError(f"quadrature on [{a}, {b}] did not converge (error {err:.3g})")
    return val


class _HIntegrand:
    """Precomputed pieces of ``h`` for one problem."""

    def __init__(self, problem: PredictionProblem):
        model = problem.model.unkilled()
        self.phi_q = right_inverse_phi(model, problem.q)
        self.k0 = math.log(2.0) / self.phi_q
        self.w_origin = scale_w_origin(ScaleFunction(model, problem.q))
        _, self.wt_prime = tilted_kernel(model, problem.beta, problem.q)

    def integrand(self, z: float) -> float:
        return (1.0 - 2.0 * math.exp(-self.phi_q * z)) * self.wt_prime(z)

    def integral(self, a: float, b: float) -> float:
        # f changes sign at k0; split there so quad sees smooth pieces
        pts = [self.k0] if a < self.k0 < b else None
        return checked_quad(self.integrand, a, b, points=pts)

    def h(self, k: float) -> float:
        return self.integral(0.0, k) - self.w_origin


def h_function(problem: PredictionProblem, k: float) -> float:
    """``h(k)``; its unique positive root is the optimal log-threshold."""
    if not k > 0:
        raise ValueError(f"k must be > 0, got {k}")
    check_gate(problem)
    return _HIntegrand(problem).h(k)


def solve_kstar(problem: PredictionProblem) -> ThresholdSolution:
    """Root of ``h`` on ``(k0, inf)`` by bracketing.

    ``h`` is decreasing on ``(0, k0)`` and increasing afterwards with a
    positive limit, so the bracket ``[k0, k_hi]`` with ``k_hi`` doubled from
    ``2 k0`` until ``h(k_hi) > 0`` contains exactly one root.
    """
    check_gate(problem)
    hi_ = _HIntegrand(problem)
    k0 = hi_.k0
    h0 = hi_.h(k0)
    if not h0 < 0:
        raise SolverError(f"h(k0) = {h0} is not negative")
    # h on the bracket as h(k0) + integral from k0: avoids re-integrating (0, k0)
    g = lambda k: h0 + hi_.integral(k0, k)  # noqa: E731
    k_hi = 2.0 * k0
    for _ in range(200):
        if g(k_hi) > 0:
            break
        k_hi *= 2.0
    else:
        raise SolverError("could not bracket the root of h")
    k_star, info = brentq(g, k0, k_hi, xtol=1e-15, rtol=1e-15, maxiter=500,
                          full_output=True)
    if not info.converged:
        raise SolverError(f"root search did not converge: {info.flag}")
    residual = abs(hi_.h(k_star)) / max(1.0, abs(hi_.h(2.0 * k_star)))
    if residual >= RESIDUAL_TOL:
        raise SolverError(f"residual {residual:.3g} above tolerance")
    return ThresholdSolution(
        direction=problem.direction,
        k_star=k_star,
        K_star=log_to_ratio(problem.direction, k_star),
        k0=k0,
        Phi_q=hi_.phi_q,
        method="quadrature",
        residual=residual,
        iterations=info.iterations,
        bracket=(k0, k_hi),
    )


def _bm_equation(problem: PredictionProblem):
    """Scalar equation in ``K`` solved by the Brownian closed form, plus a label."""
    a = problem.alpha
    p = 2.0 * problem.model.mu / problem.model.sigma**2
    if problem.direction is Direction.MAX:
        if not a < p:
            raise GateError(f"closed form needs alpha < 2*mu/sigma^2 = {p:.6g}")

        def g(K):
            return (K ** (a - p) + (2 * p - 3 * a) / a * K**a
                    + 2 * a / (a + p) * K ** (a + p) - 2 * p * p / (a * (a + p)))

        return g, "bm-max"
    if abs(a - p) < LOG_CASE_TOL:
        def g(K):
            return K ** (2 * a) - 5 * K**a + 2 * a * math.log(K) + 4

        return g, "bm-min-log"

    def g(K):
        return (K ** (p + a) - (3 * a + 2 * p) / a * K**a
                + 2 * a / (a - p) * K ** (a - p) - 2 * p * p / (a * (a - p)))

    return g, "bm-min"


def kstar_closed_form_bm(problem: PredictionProblem) -> ThresholdSolution:
    """Threshold from the explicit Brownian-drift equations (``q = 0``).

    ``K = 1`` always solves these equations; the wanted root lies strictly
    beyond the bound ``2^(-+1/Phi(0))``.
    """
    model = problem.model
    if model.family is not Family.BROWNIAN or model.q != 0:
        raise GateError("closed form requires a Brownian-drift model with q = 0")
    check_gate(problem)
    g, label = _bm_equation(problem)
    p = 2.0 * model.mu / model.sigma**2
    k0 = math.log(2.0) / p
    if problem.direction is Direction.MAX:
        hi = math.exp(-k0)
        lo = hi
        g_hi = g(hi)
        while math.copysign(1.0, g(lo)) == math.copysign(1.0, g_hi):
            lo *= 0.5
            if lo < 1e-300:
                raise SolverError("could not bracket the closed-form root")
    else:
        lo = math.exp(k0)
        hi = lo
        g_lo = g(lo)
        while math.copysign(1.0, g(hi)) == math.copysign(1.0, g_lo):
            hi *= 2.0
            if hi > 1e300:
                raise SolverError("could not bracket the closed-form root")
    K, info = brentq(g, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500, full_output=True)
    k_star = -math.log(K) if problem.direction is Direction.MAX else math.log(K)
    return ThresholdSolution(
        direction=problem.direction,
        k_star=k_star,
        K_star=K,
        k0=k0,
        Phi_q=p,
        method=label,
        residual=abs(g(K)),
        iterations=info.iterations,
        bracket=(lo, hi),
    )
